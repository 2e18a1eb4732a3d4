// Acceptance gate: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flowline/flowline.hpp"
#include "flowline/nn/grad_check.hpp"
#include "flowline/nn/losses.hpp"
#include "flowline/service/http_api.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/toy.hpp"

using namespace flowline;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a sub-check; the first failure's description is kept up front.
  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail.str("failed: " + what + "; " + detail.str());
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

void etf_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 16 + static_cast<int>(rng() % 17), h = 16 + static_cast<int>(rng() % 17);
    const ImageBuf img = fixtures::random_image(rng, w, h);
    const Gradients g = sobel_gradients(to_grayscale(img));
    const FlowField f0 = etf_init(g.gradient, g.magnitude);
    const EtfParams p;
    const FlowField fast = etf_refine(f0, p);
    const FlowField slow = oracles::etf_refine(f0, p.kernel_radius, p.eta);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        worst = std::max(worst, static_cast<double>(std::abs(fast.tangent(x, y).x - slow.tangent(x, y).x)));
        worst = std::max(worst, static_cast<double>(std::abs(fast.tangent(x, y).y - slow.tangent(x, y).y)));
      }
  }
  const double secs = seconds_since(t0);
  o.require(worst <= 1e-5, "max component difference " + fmt(worst));
  o.require(secs < 10.0, "runtime " + fmt(secs) + " s");
  o.detail << "max |dt| " << fmt(worst) << " over 20 instances, " << fmt(secs, 3) << " s";
}

void etf_geometry(Outcome& o) {
  const FlowField step = compute_etf(fixtures::step_edge(32, 32));
  double min_ty = 1.0;
  for (int y = 0; y < 32; ++y)
    for (int x = 14; x <= 17; ++x) min_ty = std::min(min_ty, static_cast<double>(std::abs(step.tangent(x, y).y)));
  o.require(min_ty > 0.99, "step min |t_y| " + fmt(min_ty));

  const int n = 64;
  const double r = 20.0, c = (n - 1) / 2.0;
  const FlowField disk = compute_etf(fixtures::disk(n, r));
  double worst_radial = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dx = x - c, dy = y - c, d = std::hypot(dx, dy);
      if (std::abs(d - r) > 1.0) continue;
      const Vec2 t = disk.tangent(x, y);
      worst_radial = std::max(worst_radial, std::abs(t.x * dx / d + t.y * dy / d));
    }
  o.require(worst_radial < 0.1, "disk max |t.r| " + fmt(worst_radial));

  const int m = 40;
  const ImageBuf img = fixtures::synthetic_scene(7, m);
  ImageBuf rot(m, m, 3);
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x)
      for (int ch = 0; ch < 3; ++ch) rot.at(y, m - 1 - x, ch) = img.at(x, y, ch);
  const FlowField a = compute_etf(img), b = compute_etf(rot);
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      if (a.magnitude(x, y) <= 0.1f) continue;
      const Vec2 ta = a.tangent(x, y), tb = b.tangent(y, m - 1 - x);
      sum += std::abs(ta.y * tb.x - ta.x * tb.y);
      ++count;
    }
  const double align = count ? sum / count : 0.0;
  o.require(count > 0 && align > 0.99, "rotation alignment " + fmt(align, 6));
  o.detail << "step min |t_y| " << fmt(min_ty) << ", disk max |t.r| " << fmt(worst_radial) << ", rotation alignment "
           << fmt(align, 6);
}

void fdog_correctness(Outcome& o) {
  std::size_t constant_ink = 0;
  for (float v : {0.0f, 0.35f, 1.0f}) {
    const ImageBuf img = fixtures::constant(24, 24, v);
    const FlowField f = compute_etf(img);
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) constant_ink += render_line_drawing(img, f, a).ink_count();
  }
  o.require(constant_ink == 0, "constant images produced " + std::to_string(constant_ink) + " ink pixels");

  const ImageBuf step = fixtures::step_edge(48, 48);
  const FlowField sf = compute_etf(step);
  double min_cover = 1.0;
  for (double a : kAnchorLevels) {
    const LineDrawing d = render_line_drawing(step, sf, a);
    int covered = 0;
    for (int y = 0; y < 48; ++y) covered += d.at(23, y) == 0.0f;
    min_cover = std::min(min_cover, covered / 48.0);
  }
  o.require(min_cover >= 0.95, "step edge coverage " + fmt(min_cover));

  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const ImageBuf img = fixtures::random_image(rng, 16, 16);
    const FlowField f = compute_etf(img);
    const FdogParams p = alpha_to_params(0.25 * trial);
    const Plane<float> fast = fdog_response(img, f, p);
    const Plane<float> slow = oracles::fdog_response(img, f, p);
    for (std::size_t i = 0; i < fast.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(fast.data()[i]) - slow.data()[i]));
  }
  o.require(worst < 1e-3, "dense oracle max |dH| " + fmt(worst));
  o.detail << "constant ink 0, step coverage " << fmt(min_cover) << ", oracle max |dH| " << fmt(worst);
}

void monotonicity(Outcome& o) {
  const ImageBuf step = fixtures::step_edge(48, 48);
  const FlowField sf = compute_etf(step);
  std::vector<double> widths;
  for (double a : kAnchorLevels) widths.push_back(fixtures::mean_stroke_width(render_line_drawing(step, sf, a)));
  for (std::size_t i = 1; i < widths.size(); ++i)
    o.require(widths[i] >= widths[i - 1], "stroke width decreased at alpha " + fmt(kAnchorLevels[i]));

  const ImageBuf tex = fixtures::checker_texture();
  const FlowField tf = compute_etf(tex);
  std::vector<int> comps;
  for (double a : kAnchorLevels) comps.push_back(fixtures::ink_components(render_line_drawing(tex, tf, a)));
  int inversions = 0;
  for (std::size_t i = 1; i < comps.size(); ++i) inversions += comps[i] > comps[i - 1];
  o.require(inversions <= 1, std::to_string(inversions) + " component-count inversions");
  o.detail << "widths";
  for (double w : widths) o.detail << " " << fmt(w);
  o.detail << "; components";
  for (int c : comps) o.detail << " " << c;
}

void lcm_control(Outcome& o) {
  const ImageBuf img = fixtures::two_edges(64, 48);
  const FlowField f = compute_etf(img);
  Plane<float> split(64, 48, 0.9f);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 32; ++x) split.at(x, y) = 0.1f;
  const LineDrawing d = render_with_lcm(img, f, LineControlMatrix(split));
  const double left = fixtures::mean_stroke_width(d, 0, 32), right = fixtures::mean_stroke_width(d, 32, 64);
  o.require(left < right, "left width " + fmt(left) + " not below right " + fmt(right));

  const ImageBuf scene = fixtures::synthetic_scene(5, 48);
  const FlowField sf = compute_etf(scene);
  for (double a : kAnchorLevels)
    o.require(render_with_lcm(scene, sf, LineControlMatrix(48, 48, static_cast<float>(a))).values() ==
                  render_line_drawing(scene, sf, a).values(),
              "constant LCM differs from global render at alpha " + fmt(a));
  o.detail << "split widths " << fmt(left) << " | " << fmt(right) << ", constant LCM bit-equal at all anchors";
}

void metric_fixtures(Outcome& o) {
  std::mt19937_64 rng(5);
  const ImageBuf x = fixtures::random_image(rng, 32, 24);
  const double self = ssim(x, x);
  o.require(std::abs(self - 1.0) <= 1e-9, "SSIM(x,x) = " + fmt(self, 12));
  const double bw = ssim(fixtures::constant(16, 16, 0.0f), fixtures::constant(16, 16, 1.0f));
  o.require(std::abs(bw - 9.999e-5) <= 1e-7, "SSIM(0,1) = " + fmt(bw, 8));

  const ImageBuf a = fixtures::constant(16, 16, 0.5f);
  ImageBuf b = a;
  for (float& v : b.data()) v += 1.0f / 255.0f;
  const double p = psnr(a, b);
  o.require(std::abs(p - 48.1308) <= 1e-3, "PSNR = " + fmt(p, 8));

  ImageBuf base = fixtures::random_image(rng, 16, 16);
  for (float& v : base.data()) v = std::round(v * 128.0f) / 256.0f;  // dyadic, so base + k is exact
  double worst_k = 0.0;
  for (float k : {0.125f, -0.25f, 0.5f}) {
    ImageBuf y = base;
    for (float& v : y.data()) v += k;
    worst_k = std::max(worst_k, std::abs(fft_distance(base, y) - std::abs(k)));
  }
  o.require(worst_k <= 1e-9, "fft_distance offset error " + fmt(worst_k));

  int violations = 0;
  for (int t = 0; t < 100; ++t) {
    const ImageBuf u = fixtures::random_image(rng, 12, 10), v = fixtures::random_image(rng, 12, 10),
                   w = fixtures::random_image(rng, 12, 10);
    violations += fft_distance(u, w) > fft_distance(u, v) + fft_distance(v, w) + 1e-12;
  }
  o.require(violations == 0, std::to_string(violations) + " triangle violations");
  o.detail << "SSIM(x,x) " << fmt(self, 12) << ", SSIM(0,1) " << fmt(bw, 6) << ", PSNR " << fmt(p, 8)
           << ", offset err " << fmt(worst_k) << ", triangle 100/100";
}

void loss_weights(Outcome& o) {
  const nn::LossWeights w;
  const double scalar = nn::loss_total(1.0, 1.0, 1.0, 1.0, w);
  const auto one = nn::Tensor<double>::scalar(1.0);
  const double tensor = nn::loss_total<double>({one, one, one, one}, w).item();
  o.require(scalar == 102.05 && tensor == 102.05, "got " + fmt(scalar, 17) + " / " + fmt(tensor, 17));
  o.detail << "loss_total(1,1,1,1) = " << fmt(scalar, 17);
}

void gradient_checks(Outcome& o) {
  using TD = nn::Tensor<double>;
  using nn::Role;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  auto randn = [&](nn::Shape s) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(s.size());
    for (double& x : v) x = d(rng);
    return TD::from(s, std::move(v));
  };
  TD p = randn({2, 1, 8, 8}), t = randn({2, 1, 8, 8}), r = randn({2, 1, 3, 3}), f = randn({2, 1, 3, 3});
  const nn::LossWeights w;
  auto check = [&](const char* name, const std::function<TD()>& fn, const std::vector<TD>& wrt) {
    const double e = nn::grad_check(fn, wrt, 1e-6, 200, 7).max_rel_error;
    o.require(e < 1e-6, std::string(name) + " rel err " + fmt(e));
    return e;
  };
  double worst = 0.0;
  worst = std::max(worst, check("pixel", [&] { return nn::loss_pixel(p, t); }, {p, t}));
  worst = std::max(worst, check("control", [&] { return nn::loss_control(p, t); }, {p, t}));
  worst = std::max(worst, check("fft", [&] { return nn::loss_fft(p, t); }, {p, t}));
  worst = std::max(worst, check("adv-D", [&] { return nn::loss_adversarial(r, f, Role::Discriminator); }, {r, f}));
  worst = std::max(worst, check("adv-G", [&] { return nn::loss_adversarial(TD{}, f, Role::Generator); }, {f}));
  worst = std::max(worst, check("total",
                                [&] {
                                  return nn::loss_total<double>({nn::loss_adversarial(TD{}, f, Role::Generator),
                                                                 nn::loss_pixel(p, t), nn::loss_control(r, f),
                                                                 nn::loss_fft(p, t)},
                                                                w);
                                },
                                {p, t, r, f}));
  const double toy_err = toy::dfg_objective_grad_error(1e-6, 100000);
  o.require(toy_err < 1e-3, "toy DFG objective rel err " + fmt(toy_err));
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  o.detail << "loss ops max rel err " << fmt(worst) << ", toy DFG objective " << fmt(toy_err) << ", " << fmt(secs, 3)
           << " s";
}

void shapes(Outcome& o) {
  std::mt19937_64 rng(3);
  auto uniform = [&](nn::Shape s) {
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    std::vector<float> v(s.size());
    for (float& x : v) x = d(rng);
    return nn::Tensor<float>::from(s, std::move(v));
  };
  const nn::DoubleFlowGenerator<float> dfg(8);
  const auto out = dfg.forward(uniform({1, 3, 64, 64}), uniform({1, 2, 64, 64}), nn::Tensor<float>::full({1, 1, 64, 64}, 0.5f));
  o.require(out.shape() == nn::Shape{1, 1, 64, 64}, "DFG output " + out.shape().str());
  const nn::DiscriminatorConfig dc;
  o.require(dc.receptive_field() == 94, "receptive field " + std::to_string(dc.receptive_field()));
  o.require(dc.output_size(64) == 5 && dc.output_size(1024) == 125,
            "patch maps " + std::to_string(dc.output_size(64)) + ", " + std::to_string(dc.output_size(1024)));
  nn::DiscriminatorConfig narrow = dc;
  narrow.base_ch = 2;
  const nn::PatchDiscriminator<float> d(narrow, 1);
  const auto patch = d.forward(uniform({1, 4, 64, 64}));
  o.require(patch.shape() == nn::Shape{1, 1, 5, 5}, "64x64 patch map " + patch.shape().str());
  o.detail << "DFG (3+2+1)x64x64 -> " << out.shape().str() << ", receptive field " << dc.receptive_field()
           << ", patch maps " << dc.output_size(64) << "x" << dc.output_size(64) << " / " << dc.output_size(1024) << "x"
           << dc.output_size(1024);
}

void toy_training(Outcome& o) {
  const auto t0 = Clock::now();
  const toy::ToySet set = toy::build("acceptance_toy", 10, 3, 64);
  const auto etf_train = toy::etf_examples<float>(set, Split::Train);
  const auto drawing_train = toy::drawing_examples<float>(set, Split::Train);
  const auto drawing_test = toy::drawing_examples<float>(set, Split::Test);
  o.require(etf_train.size() == 10, "training split has " + std::to_string(etf_train.size()) + " images");

  nn::TrainConfig cfg;
  cfg.base_ch = 8;
  cfg.max_steps = 200;
  const auto i2f = nn::train_i2fnet(etf_train, cfg);
  const auto lcr = nn::train_lcr(drawing_train, cfg, nn::LcrConfig{8, 4, false});
  nn::TrainConfig dfg_cfg = cfg;
  dfg_cfg.batch_size = 2;
  const auto dfg = nn::train_dfg(drawing_train, dfg_cfg, &i2f.generator, &lcr.regressor);

  auto pixel = [](const nn::StepLog& s) { return s.pixel; };
  const auto& hi = i2f.history;
  const auto& hd = dfg.history;
  const double i2f_first = toy::window_mean(hi, 0, 10, pixel), i2f_last = toy::window_mean(hi, hi.size() - 10, hi.size(), pixel);
  const double dfg_first = toy::window_mean(hd, 0, 10, pixel), dfg_last = toy::window_mean(hd, hd.size() - 10, hd.size(), pixel);
  o.require(hi.size() == 200 && hd.size() == 200, "histories hold " + std::to_string(hi.size()) + " / " + std::to_string(hd.size()) + " steps");
  o.require(i2f_last <= 0.5 * i2f_first, "I2F L1 ratio " + fmt(i2f_last / i2f_first));
  o.require(dfg_last <= 0.5 * dfg_first, "DFG pixel ratio " + fmt(dfg_last / dfg_first));

  const nn::DoubleFlowGenerator<float> twin(dfg_cfg.base_ch, dfg_cfg.generator_seed());
  double trained_ssim = 0.0, twin_ssim = 0.0;
  {
    nn::NoGradGuard guard;
    for (const auto& ex : drawing_test) {
      const auto field = i2f.generator.predict_field(ex.image);
      const auto lcm = nn::Tensor<float>::full(ex.drawing.shape(), ex.alpha);
      const ImageBuf gt = nn::image_from_tensor(ex.drawing);
      trained_ssim += ssim(nn::image_from_tensor(dfg.generator.forward(ex.image, field, lcm)), gt);
      twin_ssim += ssim(nn::image_from_tensor(twin.forward(ex.image, field, lcm)), gt);
    }
  }
  trained_ssim /= static_cast<double>(drawing_test.size());
  twin_ssim /= static_cast<double>(drawing_test.size());
  o.require(trained_ssim > twin_ssim, "trained SSIM " + fmt(trained_ssim) + " vs twin " + fmt(twin_ssim));
  const double secs = seconds_since(t0);
  o.require(secs < 900.0, "runtime " + fmt(secs) + " s");
  o.detail << "I2F L1 " << fmt(i2f_first) << " -> " << fmt(i2f_last) << ", DFG pixel " << fmt(dfg_first) << " -> "
           << fmt(dfg_last) << ", test SSIM " << fmt(trained_ssim) << " vs twin " << fmt(twin_ssim) << " ("
           << drawing_test.size() << " drawings), " << fmt(secs, 3) << " s";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dataset_reproduction(Outcome& o) {
  const auto root = fixtures::temp_dir("acceptance_dataset");
  fs::create_directories(root / "src");
  for (int i = 0; i < 3; ++i) save_image(fixtures::synthetic_scene(40 + i, 80), root / "src" / ("photo" + std::to_string(i) + ".png"));
  BuildOptions opts;
  opts.size = 64;
  opts.seed = 3;
  const DatasetManifest m = build_dataset(root / "src", root / "a", opts);
  o.require(m.entries.size() == 3, std::to_string(m.entries.size()) + " entries");
  for (const auto& e : m.entries) {
    o.require(e.drawings.size() == 5, e.image_path + " has " + std::to_string(e.drawings.size()) + " drawings");
    for (std::size_t i = 0; i < e.drawings.size() && i < kAnchorLevels.size(); ++i)
      o.require(e.drawings[i].alpha == kAnchorLevels[i], e.drawings[i].path + " records alpha " + fmt(e.drawings[i].alpha));
  }
  const auto issues = validate_manifest(root / "a" / "manifest.json");
  o.require(issues.empty(), issues.empty() ? "" : issues.front());
  build_dataset(root / "src", root / "b", opts);
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    differing += slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"));
  }
  o.require(differing == 0, std::to_string(differing) + " files differ on rebuild");
  o.detail << "3 entries x 5 drawings, validation clean, " << files << " files byte-identical on rebuild";
}

void cli_service_parity(Outcome& o) {
  const auto root = fixtures::temp_dir("acceptance_parity");
  const ImageBuf img = fixtures::synthetic_scene(77, 64);
  save_image(img, root / "in.png");
  const std::string cmd = std::string("\"") + FLOWLINE_CLI_PATH + "\" draw -i \"" + (root / "in.png").string() +
                          "\" --alpha 0.5 -o \"" + (root / "cli.png").string() + "\"";
  const int rc = std::system(cmd.c_str());
  o.require(rc == 0, "CLI exit status " + std::to_string(rc));

  service::HttpServer server(service::ServiceConfig{});
  const int port = server.bind_any("127.0.0.1");
  std::thread serve([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(120, 0);
  const std::string upload = slurp(root / "in.png");
  auto up = client.Post("/api/images", upload, "image/png");
  std::string http_png;
  int bad_status = 0;
  if (up && up->status == 200) {
    const std::string id = nlohmann::json::parse(up->body)["image_id"];
    auto r = client.Post("/api/render", nlohmann::json{{"image_id", id}, {"alpha", 0.5}}.dump(), "application/json");
    if (r && r->status == 200) http_png = r->body;
    auto bad = client.Post("/api/render", nlohmann::json{{"image_id", id}, {"alpha", 1.5}}.dump(), "application/json");
    bad_status = bad ? bad->status : 0;
  }
  server.stop();
  serve.join();
  const std::string cli_png = slurp(root / "cli.png");
  o.require(!http_png.empty(), "service render failed");
  o.require(!cli_png.empty() && cli_png == http_png, "CLI and service PNGs differ");
  o.require(bad_status == 422, "alpha 1.5 returned " + std::to_string(bad_status));
  o.detail << "PNG " << cli_png.size() << " bytes identical, alpha 1.5 -> " << bad_status;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"etf-oracle-equivalence", etf_oracle},
      {"etf-geometry", etf_geometry},
      {"fdog-correctness", fdog_correctness},
      {"controllability-monotonicity", monotonicity},
      {"lcm-spatial-control", lcm_control},
      {"metric-fixtures", metric_fixtures},
      {"loss-weights", loss_weights},
      {"gradient-checks", gradient_checks},
      {"shapes-architecture", shapes},
      {"toy-training", toy_training},
      {"dataset-reproduction", dataset_reproduction},
      {"cli-service-parity", cli_service_parity},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
