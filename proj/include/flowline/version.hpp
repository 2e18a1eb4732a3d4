#pragma once

namespace flowline {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace flowline
