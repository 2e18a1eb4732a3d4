#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowline/core/error.hpp"
#include "flowline/core/flo_io.hpp"
#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/core/parallel.hpp"
#include "flowline/etf.hpp"
#include "flowline/fdog.hpp"
#include "flowline/metrics.hpp"

// Layout under the output root:
//   images/<stem>.png            8-bit copy of the resized source
//   etf/<stem>.flo (+ .flo.mag)  edge tangent flow of that copy
//   drawings/<stem>_a<alpha>.png one FDoG drawing per level, alpha to 2 decimals
//   manifest.json

namespace flowline {

inline constexpr const char* kManifestVersion = "flowline-dataset/1";

enum class Split { Train, Test };

inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct DrawingRecord {
  std::string path;  ///< relative to the dataset root
  double alpha = 0.0;
};

struct ManifestEntry {
  std::string image_path;
  std::string etf_path;
  std::vector<DrawingRecord> drawings;
  Split split = Split::Train;
};

struct DatasetParams {
  EtfParams etf;
  int fdog_passes = 2;
  std::vector<double> anchor_levels{kAnchorLevels.begin(), kAnchorLevels.end()};
  int size = 1024;
  double split_ratio = 0.76;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::string version = kManifestVersion;
  DatasetParams params;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  ///< directory holding manifest.json; not serialized
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string alpha_tag(double alpha) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", alpha);
  return buf;
}

inline void check_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw std::invalid_argument("at least one control level is required");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] >= 0.0 && levels[i] <= 1.0)) throw std::invalid_argument("control levels must lie in [0,1]");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw std::invalid_argument("control levels must be strictly increasing");
    if (i > 0 && alpha_tag(levels[i]) == alpha_tag(levels[i - 1]))
      throw std::invalid_argument("control levels " + alpha_tag(levels[i]) + " collide at two-decimal file naming");
  }
}

}  // namespace detail

/// Hash of (seed, file name) mapped to [0,1); train iff below the ratio.
/// Independent of the other files, so adding images never moves existing ones.
inline Split split_for(const std::string& filename, double ratio, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull;
  unsigned char seed_bytes[8];
  for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<unsigned char>(seed >> (8 * i));
  h = detail::fnv1a(h, seed_bytes, 8);
  h = detail::fnv1a(h, filename.data(), filename.size());
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < ratio ? Split::Train : Split::Test;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json drawings = nlohmann::json::array();
    for (const auto& d : e.drawings) drawings.push_back({{"path", d.path}, {"alpha", d.alpha}});
    entries.push_back(
        {{"image_path", e.image_path}, {"etf_path", e.etf_path}, {"drawings", drawings}, {"split", to_string(e.split)}});
  }
  const auto& p = m.params;
  return {{"version", m.version},
          {"params",
           {{"etf", {{"kernel_radius", p.etf.kernel_radius}, {"eta", p.etf.eta}, {"iterations", p.etf.iterations}}},
            {"fdog_passes", p.fdog_passes},
            {"anchor_levels", p.anchor_levels},
            {"size", p.size},
            {"split_ratio", p.split_ratio},
            {"seed", p.seed}}},
          {"entries", entries}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, std::filesystem::path root = {}) {
  try {
    DatasetManifest m;
    m.root = std::move(root);
    m.version = j.at("version").get<std::string>();
    const auto& p = j.at("params");
    m.params.etf.kernel_radius = p.at("etf").at("kernel_radius").get<int>();
    m.params.etf.eta = p.at("etf").at("eta").get<float>();
    m.params.etf.iterations = p.at("etf").at("iterations").get<int>();
    m.params.fdog_passes = p.at("fdog_passes").get<int>();
    m.params.anchor_levels = p.at("anchor_levels").get<std::vector<double>>();
    m.params.size = p.value("size", 0);
    m.params.split_ratio = p.value("split_ratio", 0.0);
    m.params.seed = p.value("seed", std::uint64_t{0});
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.image_path = je.at("image_path").get<std::string>();
      e.etf_path = je.at("etf_path").get<std::string>();
      const auto split = je.at("split").get<std::string>();
      if (split != "train" && split != "test") throw FormatError("manifest: unknown split '" + split + "'");
      e.split = split == "train" ? Split::Train : Split::Test;
      for (const auto& jd : je.at("drawings"))
        e.drawings.push_back({jd.at("path").get<std::string>(), jd.at("alpha").get<double>()});
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

struct BuildOptions {
  std::vector<double> levels{kAnchorLevels.begin(), kAnchorLevels.end()};
  int size = 1024;
  double split_ratio = 0.76;
  std::uint64_t seed = 0;
  EtfParams etf;
  int passes = 2;
};

/// Source images are resized, quantized to 8 bits and stored first, so every
/// ETF and drawing is computed from exactly the bytes written to images/.
/// Undecodable files are skipped.
inline DatasetManifest build_dataset(const std::filesystem::path& src_dir, const std::filesystem::path& out_dir,
                                     const BuildOptions& opts = {}) {
  namespace fs = std::filesystem;
  detail::check_levels(opts.levels);
  opts.etf.validate();
  if (opts.size < 3) throw std::invalid_argument("dataset image size must be >= 3");
  if (!(opts.split_ratio >= 0.0 && opts.split_ratio <= 1.0)) throw std::invalid_argument("split ratio must lie in [0,1]");
  if (opts.passes < 1) throw std::invalid_argument("FDoG passes must be >= 1");
  if (!fs::is_directory(src_dir)) throw IoError("source directory does not exist: " + src_dir.string());

  std::vector<fs::path> sources;
  for (const auto& e : fs::directory_iterator(src_dir))
    if (e.is_regular_file() && detail::has_image_extension(e.path())) sources.push_back(e.path());
  std::sort(sources.begin(), sources.end());

  std::set<std::string> stems;
  for (const auto& s : sources)
    if (!stems.insert(s.stem().string()).second)
      throw Error("two source images share the stem '" + s.stem().string() + "'");

  std::error_code ec;
  for (const char* sub : {"images", "etf", "drawings"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  std::vector<std::optional<ManifestEntry>> built(sources.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(sources.size()), [&](std::ptrdiff_t i) {
    ImageBuf src;
    try {
      src = load_image(sources[i]);
    } catch (const DecodeError&) {
      return;
    }
    const std::string stem = sources[i].stem().string();
    const ImageBuf img = quantize8(resize(src, opts.size, opts.size));
    ManifestEntry entry;
    entry.image_path = "images/" + stem + ".png";
    entry.etf_path = "etf/" + stem + ".flo";
    entry.split = split_for(sources[i].filename().string(), opts.split_ratio, opts.seed);
    save_image(img, out_dir / entry.image_path);
    const FlowField field = compute_etf(img, opts.etf);
    write_flo(field, out_dir / entry.etf_path);
    for (double a : opts.levels) {
      DrawingRecord rec{"drawings/" + stem + "_a" + detail::alpha_tag(a) + ".png", a};
      save_image(render_line_drawing(img, field, a, opts.passes), out_dir / rec.path);
      entry.drawings.push_back(std::move(rec));
    }
    built[i] = std::move(entry);
  });

  DatasetManifest m;
  m.root = out_dir;
  m.params.etf = opts.etf;
  m.params.fdog_passes = opts.passes;
  m.params.anchor_levels = opts.levels;
  m.params.size = opts.size;
  m.params.split_ratio = opts.split_ratio;
  m.params.seed = opts.seed;
  for (auto& e : built)
    if (e) m.entries.push_back(std::move(*e));
  if (m.entries.empty()) throw Error("no decodable images in " + src_dir.string());

  const std::string text = to_json(m).dump(2) + "\n";
  write_file(out_dir / "manifest.json", {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  return m;
}

/// Every invariant violation as a human-readable line; empty means valid.
/// Throws FormatError when the file does not parse as a manifest.
inline std::vector<std::string> validate_manifest(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const DatasetManifest m = load_manifest(path);
  std::vector<std::string> issues;
  if (m.version != kManifestVersion) issues.push_back("unsupported version '" + m.version + "'");
  const auto& levels = m.params.anchor_levels;
  if (levels.empty()) issues.push_back("params.anchor_levels is empty");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (!(levels[i] > levels[i - 1])) {
      issues.push_back("params.anchor_levels not strictly increasing");
      break;
    }
  if (m.params.fdog_passes < 1) issues.push_back("params.fdog_passes must be >= 1");
  try {
    m.params.etf.validate();
  } catch (const std::exception& e) {
    issues.push_back(std::string("params.etf: ") + e.what());
  }

  std::set<std::string> seen_images;
  for (const auto& e : m.entries) {
    const std::string who = "entry " + e.image_path;
    if (!seen_images.insert(e.image_path).second) issues.push_back(who + ": duplicate entry");
    if (e.drawings.size() != levels.size())
      issues.push_back(who + ": expected " + std::to_string(levels.size()) + " drawings, found " +
                       std::to_string(e.drawings.size()));
    for (std::size_t i = 1; i < e.drawings.size(); ++i)
      if (!(e.drawings[i].alpha > e.drawings[i - 1].alpha)) {
        issues.push_back(who + ": alphas not strictly increasing");
        break;
      }
    for (const auto& d : e.drawings)
      if (!(d.alpha >= 0.0 && d.alpha <= 1.0)) issues.push_back(who + ": alpha outside [0,1] for " + d.path);

    std::optional<std::pair<int, int>> image_dims;
    if (!fs::exists(m.root / e.image_path)) {
      issues.push_back("missing file: " + e.image_path);
    } else {
      try {
        const ImageBuf img = load_image(m.root / e.image_path);
        image_dims = {img.width(), img.height()};
      } catch (const std::exception& ex) {
        issues.push_back("unreadable image " + e.image_path + ": " + ex.what());
      }
    }
    if (!fs::exists(m.root / e.etf_path)) {
      issues.push_back("missing file: " + e.etf_path);
    } else {
      try {
        const auto dims = read_flo_dims(m.root / e.etf_path);
        if (image_dims && dims != *image_dims)
          issues.push_back(e.etf_path + ": header dimensions " + std::to_string(dims.first) + "x" +
                           std::to_string(dims.second) + " differ from the image");
      } catch (const std::exception& ex) {
        issues.push_back("bad flow file " + e.etf_path + ": " + ex.what());
      }
      if (!fs::exists(magnitude_path(m.root / e.etf_path)))
        issues.push_back("missing file: " + magnitude_path(e.etf_path).string());
    }
    for (const auto& d : e.drawings)
      if (!fs::exists(m.root / d.path)) issues.push_back("missing file: " + d.path);
  }
  return issues;
}

enum class PairMode { Etf, Drawing };

/// Paths of one training sample; `drawing` is set in drawing mode only.
struct SampleRef {
  std::filesystem::path image;
  std::filesystem::path etf;
  std::optional<std::filesystem::path> drawing;
  double alpha = 0.0;
};

/// All samples of a split in a seeded pseudo-random order.
inline std::vector<SampleRef> iter_pairs(const DatasetManifest& m, Split split, PairMode mode, std::uint64_t seed) {
  std::vector<SampleRef> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    if (mode == PairMode::Etf) {
      out.push_back({m.root / e.image_path, m.root / e.etf_path, std::nullopt, 0.0});
    } else {
      for (const auto& d : e.drawings) out.push_back({m.root / e.image_path, m.root / e.etf_path, m.root / d.path, d.alpha});
    }
  }
  if (out.empty()) throw Error(std::string("the ") + to_string(split) + " split is empty");
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

struct Sample {
  ImageBuf image;
  FlowField etf;
  std::optional<LineDrawing> drawing;
  double alpha = 0.0;
};

inline Sample load_sample(const SampleRef& ref) {
  Sample s{load_image(ref.image), read_flo(ref.etf), std::nullopt, ref.alpha};
  if (ref.drawing) s.drawing = to_drawing(load_image(*ref.drawing));
  return s;
}

}  // namespace flowline
