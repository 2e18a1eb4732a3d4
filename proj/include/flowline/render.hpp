#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/fdog.hpp"

// The single rendering path behind both the command line and the HTTP
// service, so both emit identical PNG bytes for identical inputs.

namespace flowline {

inline constexpr int kMaxPasses = 8;

/// Thrown for a control value outside [0,1] or an out-of-range pass count.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void check_render_args(double alpha, int passes) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0,1]");
  if (passes < 1 || passes > kMaxPasses)
    throw ParameterError("passes must lie in [1," + std::to_string(kMaxPasses) + "]");
}

inline Bytes render_png(const ImageBuf& img, const FlowField& field, double alpha, int passes = 2) {
  check_render_args(alpha, passes);
  return encode_png(render_line_drawing(img, field, alpha, passes));
}

inline Bytes render_png(const ImageBuf& img, const FlowField& field, const LineControlMatrix& lcm, int passes = 2) {
  check_render_args(0.5, passes);
  return encode_png(render_with_lcm(img, field, lcm, passes));
}

}  // namespace flowline
