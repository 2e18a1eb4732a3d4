#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "flowline/core/error.hpp"
#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/core/parallel.hpp"

namespace flowline {

struct MetricReport {
  std::string file;
  double ssim = 0.0;
  double psnr = 0.0;  ///< +inf for identical inputs
  double fft_distance = 0.0;
};

namespace detail {

inline void require_same_gray(const ImageBuf& a, const ImageBuf& b, const char* what) {
  if (a.channels() != 1 || b.channels() != 1) throw std::invalid_argument(std::string(what) + " expects 1-channel images");
  if (a.width() != b.width() || a.height() != b.height())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace detail

/// Mean SSIM over all valid 11x11 windows (Gaussian sigma 1.5, K1 0.01,
/// K2 0.03, dynamic range 1).
inline double ssim(const ImageBuf& a, const ImageBuf& b) {
  detail::require_same_gray(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const int w = a.width(), h = a.height();
  if (w < kWin || h < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  std::array<double, kWin> g{};
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  // Horizontal valid pass on the five moment maps, then vertical.
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::array<std::vector<double>, 5> rows;
  for (auto& r : rows) r.assign(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int k = 0; k < kWin; ++k) {
        const double va = a.at(x + k, y), vb = b.at(x + k, y);
        sa += g[k] * va;
        sb += g[k] * vb;
        saa += g[k] * va * va;
        sbb += g[k] * vb * vb;
        sab += g[k] * va * vb;
      }
      const std::size_t i = static_cast<std::size_t>(y) * ow + x;
      rows[0][i] = sa, rows[1][i] = sb, rows[2][i] = saa, rows[3][i] = sbb, rows[4][i] = sab;
    }
  double total = 0.0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double m[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWin; ++k) {
        const std::size_t i = static_cast<std::size_t>(y + k) * ow + x;
        for (int c = 0; c < 5; ++c) m[c] += g[k] * rows[c][i];
      }
      const double mu_a = m[0], mu_b = m[1];
      const double var_a = m[2] - mu_a * mu_a, var_b = m[3] - mu_b * mu_b, cov = m[4] - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
    }
  return total / (static_cast<double>(ow) * oh);
}

/// 10 log10(1 / MSE) at unit dynamic range; +inf when the inputs are identical.
inline double psnr(const ImageBuf& a, const ImageBuf& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels())
    throw std::invalid_argument("psnr: dimension mismatch");
  double se = 0.0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(da.size());
  return 10.0 * std::log10(1.0 / mse);
}

/// Unnormalized forward 2-D DFT, bins in row-major (ky, kx) order.
struct ComplexMap {
  int width = 0;
  int height = 0;
  std::vector<std::complex<double>> bins;

  const std::complex<double>& at(int kx, int ky) const { return bins[static_cast<std::size_t>(ky) * width + kx]; }
};

namespace detail {

// The FFTW planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline ComplexMap fft2d_values(int w, int h, const std::vector<double>& values) {
  ComplexMap out{w, h, std::vector<std::complex<double>>(values.size())};
  if (values.empty()) return out;
  std::vector<std::complex<double>> in(values.begin(), values.end());
  auto* src = reinterpret_cast<fftw_complex*>(in.data());
  auto* dst = reinterpret_cast<fftw_complex*>(out.bins.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(h, w, src, dst, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace detail

inline ComplexMap fft2d(const ImageBuf& x) {
  if (x.channels() != 1) throw std::invalid_argument("fft2d expects a 1-channel image");
  return detail::fft2d_values(x.width(), x.height(), std::vector<double>(x.data().begin(), x.data().end()));
}

/// Per-bin |dRe| + |dIm| summed over the spectrum of (a - b), divided by H*W.
inline double fft_distance(const ImageBuf& a, const ImageBuf& b) {
  detail::require_same_gray(a, b, "fft_distance");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = static_cast<double>(a.data()[i]) - b.data()[i];
  const ComplexMap X = detail::fft2d_values(a.width(), a.height(), diff);
  double sum = 0.0;
  for (const auto& c : X.bins) sum += std::abs(c.real()) + std::abs(c.imag());
  return sum / static_cast<double>(a.pixel_count());
}

/// log(1 + |X|), DC moved to (W/2, H/2), scaled so the maximum is 1.
inline ImageBuf spectrum_image(const ImageBuf& x) {
  const ComplexMap X = fft2d(x);
  const int w = x.width(), h = x.height();
  ImageBuf out(w, h, 1);
  double max_v = 0.0;
  std::vector<double> logmag(X.bins.size());
  for (std::size_t i = 0; i < logmag.size(); ++i) {
    logmag[i] = std::log1p(std::abs(X.bins[i]));
    max_v = std::max(max_v, logmag[i]);
  }
  for (int ky = 0; ky < h; ++ky)
    for (int kx = 0; kx < w; ++kx) {
      const double v = logmag[static_cast<std::size_t>(ky) * w + kx];
      out.at((kx + w / 2) % w, (ky + h / 2) % h) = max_v > 0.0 ? static_cast<float>(v / max_v) : 0.0f;
    }
  return out;
}

/// Red: ink in gt missing from pred. Blue: ink in pred absent from gt. White elsewhere.
inline ImageBuf diff_map(const LineDrawing& gt, const LineDrawing& pred) {
  if (!gt.same_size(pred)) throw std::invalid_argument("diff_map: dimension mismatch");
  if (!gt.is_binary() || !pred.is_binary()) throw std::invalid_argument("diff_map: inputs must be binary drawings");
  ImageBuf out(gt.width(), gt.height(), 3, 1.0f);
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      const bool g = gt.at(x, y) == 0.0f, p = pred.at(x, y) == 0.0f;
      if (g && !p) out.at(x, y, 1) = out.at(x, y, 2) = 0.0f;
      if (p && !g) out.at(x, y, 0) = out.at(x, y, 1) = 0.0f;
    }
  return out;
}

inline MetricReport evaluate_pair(const ImageBuf& pred, const ImageBuf& gt, std::string file = {}) {
  const ImageBuf p = to_grayscale(pred), g = to_grayscale(gt);
  return {std::move(file), ssim(p, g), psnr(p, g), fft_distance(p, g)};
}

struct BatchReport {
  std::vector<MetricReport> pairs;
  MetricReport mean;
};

namespace detail {

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::set<std::string> image_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && has_image_extension(e.path())) names.insert(e.path().filename().string());
  return names;
}

}  // namespace detail

/// Pairs same-named files, ordered by filename.
inline BatchReport evaluate_batch(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  const auto pred_names = detail::image_names(pred_dir);
  const auto gt_names = detail::image_names(gt_dir);
  for (const auto& n : pred_names)
    if (!gt_names.count(n)) throw Error("no ground-truth counterpart for " + (pred_dir / n).string());
  for (const auto& n : gt_names)
    if (!pred_names.count(n)) throw Error("no prediction counterpart for " + (gt_dir / n).string());
  if (pred_names.empty()) throw Error("no images found in " + pred_dir.string());

  const std::vector<std::string> names(pred_names.begin(), pred_names.end());
  BatchReport report;
  report.pairs.resize(names.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(names.size()), [&](std::ptrdiff_t i) {
    const ImageBuf p = load_image(pred_dir / names[i]);
    const ImageBuf g = load_image(gt_dir / names[i]);
    if (p.width() != g.width() || p.height() != g.height())
      throw Error("dimension mismatch for " + names[i]);
    report.pairs[i] = evaluate_pair(p, g, names[i]);
  });

  report.mean.file = "mean";
  for (const auto& r : report.pairs) {
    report.mean.ssim += r.ssim;
    report.mean.psnr += r.psnr;
    report.mean.fft_distance += r.fft_distance;
  }
  const double n = static_cast<double>(report.pairs.size());
  report.mean.ssim /= n;
  report.mean.psnr /= n;
  report.mean.fft_distance /= n;
  return report;
}

inline nlohmann::json psnr_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline nlohmann::json to_json(const BatchReport& report) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& r : report.pairs)
    pairs.push_back({{"file", r.file}, {"ssim", r.ssim}, {"psnr", psnr_json(r.psnr)}, {"fftd", r.fft_distance}});
  return {{"pairs", pairs},
          {"aggregate",
           {{"count", report.pairs.size()},
            {"ssim", report.mean.ssim},
            {"psnr", psnr_json(report.mean.psnr)},
            {"fftd", report.mean.fft_distance}}},
          {"fid", "not supported"}};
}

inline std::string format_table(const BatchReport& report) {
  std::string out;
  char line[256];
  auto row = [&](const MetricReport& r) {
    char psnr_text[32];
    if (std::isinf(r.psnr))
      std::snprintf(psnr_text, sizeof psnr_text, "inf");
    else
      std::snprintf(psnr_text, sizeof psnr_text, "%.4f", r.psnr);
    std::snprintf(line, sizeof line, "%-32.32s %10.4f %12s %12.6f\n", r.file.c_str(), r.ssim, psnr_text, r.fft_distance);
    out += line;
  };
  std::snprintf(line, sizeof line, "%-32s %10s %12s %12s\n", "file", "SSIM", "PSNR", "FFT-L1");
  out += line;
  for (const auto& r : report.pairs) row(r);
  out += std::string(69, '-') + "\n";
  row(report.mean);
  out += "FID: not supported\n";
  return out;
}

}  // namespace flowline
