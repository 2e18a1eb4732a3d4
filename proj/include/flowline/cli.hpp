#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowline/core/error.hpp"
#include "flowline/core/flo_io.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/dataset.hpp"
#include "flowline/etf.hpp"
#include "flowline/fdog.hpp"
#include "flowline/metrics.hpp"
#include "flowline/nn/checkpoint.hpp"
#include "flowline/nn/convert.hpp"
#include "flowline/nn/train.hpp"
#include "flowline/render.hpp"
#include "flowline/service/http_api.hpp"
#include "flowline/version.hpp"

namespace flowline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Thrown for flag combinations the parser cannot express.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cli {

inline std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("cannot parse level '" + item + "'");
    }
  }
  return out;
}

struct TrainArgs {
  std::string kind;
  std::string data;
  int size = 64;
  int epochs = 200;
  std::uint64_t seed = 0;
  int base_ch = 8;
  int disc_base_ch = 64;
  int batch = 0;  // 0 picks the per-network default
  std::int64_t steps = 0;
  std::string out;
  std::string log;
  std::string i2f;
  std::string lcr;
};

/// Field resampled to (size, size) and re-normalized to unit-or-zero tangents.
inline nn::Tensor<float> resized_field(const FlowField& f, int size) {
  nn::Tensor<float> t = nn::etf_tensor<float>(f);
  if (f.width() == size && f.height() == size) return t;
  nn::NoGradGuard guard;
  return nn::I2FGenerator<float>::normalize_tangents(nn::resize_bilinear(t, size, size));
}

inline ImageBuf resized(const ImageBuf& img, int size) {
  return img.width() == size && img.height() == size ? img : resize(img, size, size);
}

inline int run_train(const TrainArgs& a) {
  const DatasetManifest manifest = load_manifest(std::filesystem::path(a.data) / "manifest.json");
  nn::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.base_ch = a.base_ch;
  cfg.disc_base_ch = a.disc_base_ch;
  cfg.image_size = a.size;
  cfg.max_steps = a.steps;
  cfg.batch_size = a.batch > 0 ? a.batch : (a.kind == "dfg" ? 2 : 1);
  if (a.size < 64 || a.size % 32 != 0) throw UsageError("--size must be a multiple of 32 and at least 64");

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw IoError("cannot open log file " + a.log);
  }
  std::ostream& log_out = a.log.empty() ? std::cout : log_file;
  auto on_step = [&](const nn::StepLog& s) { log_out << nn::to_json(s).dump() << "\n" << std::flush; };
  const std::string out = a.out.empty() ? a.kind + ".ckpt" : a.out;

  if (a.kind == "i2f") {
    std::vector<nn::EtfExample<float>> data;
    for (const auto& ref : iter_pairs(manifest, Split::Train, PairMode::Etf, a.seed)) {
      const Sample s = load_sample(ref);
      data.push_back({nn::image_tensor<float>(resized(s.image, a.size)), resized_field(s.etf, a.size)});
    }
    auto result = nn::train_i2fnet(data, cfg, on_step);
    nn::save_checkpoint(out, result.generator);
    return kExitOk;
  }

  std::vector<nn::DrawingExample<float>> data;
  for (const auto& ref : iter_pairs(manifest, Split::Train, PairMode::Drawing, a.seed)) {
    const Sample s = load_sample(ref);
    data.push_back({nn::image_tensor<float>(resized(s.image, a.size)), resized_field(s.etf, a.size),
                    nn::plane_tensor<float>(to_drawing(resized(to_image(*s.drawing), a.size))),
                    static_cast<float>(s.alpha)});
  }
  if (a.kind == "lcr") {
    auto result = nn::train_lcr(data, cfg, nn::LcrConfig{a.base_ch, 4, false}, on_step);
    nn::save_checkpoint(out, result.regressor);
    return kExitOk;
  }
  if (a.i2f.empty() || a.lcr.empty()) throw UsageError("train dfg requires --i2f and --lcr checkpoints");
  const auto i2f = nn::load_i2f<float>(nn::read_checkpoint(a.i2f));
  const auto lcr = nn::load_lcr<float>(nn::read_checkpoint(a.lcr));
  auto result = nn::train_dfg(data, cfg, &i2f, &lcr, on_step);
  nn::save_checkpoint(out, result.generator);
  return kExitOk;
}

}  // namespace cli

/// Entry point of the `flowline` tool. Exit 0 on success, 1 on usage errors,
/// 2 on runtime failures.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Controllable character line drawing from photographs", "flowline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // etf
  std::string etf_in, etf_out, etf_viz;
  EtfParams etf_params;
  auto* etf_cmd = app.add_subcommand("etf", "Compute an edge tangent flow field");
  etf_cmd->add_option("-i,--input", etf_in, "Input image (PNG/JPEG)")->required();
  etf_cmd->add_option("-o,--output", etf_out, "Output .flo path")->required();
  etf_cmd->add_option("--radius", etf_params.kernel_radius, "Neighbourhood radius")->capture_default_str();
  etf_cmd->add_option("--iterations", etf_params.iterations, "Refinement passes")->capture_default_str();
  etf_cmd->add_option("--eta", etf_params.eta, "Magnitude weight sharpness")->capture_default_str();
  etf_cmd->add_option("--viz", etf_viz, "Also write a colour visualization PNG");

  // draw
  std::string draw_in, draw_out, draw_lcm, draw_etf;
  std::optional<double> draw_alpha;
  int draw_passes = 2;
  auto* draw_cmd = app.add_subcommand("draw", "Render a line drawing");
  draw_cmd->add_option("-i,--input", draw_in, "Input image")->required();
  draw_cmd->add_option("-o,--output", draw_out, "Output PNG")->required();
  auto* alpha_opt = draw_cmd->add_option("--alpha", draw_alpha, "Global control value in [0,1]");
  auto* lcm_opt = draw_cmd->add_option("--lcm", draw_lcm, "Line control matrix (grayscale PNG, value/255)");
  alpha_opt->excludes(lcm_opt);
  draw_cmd->add_option("--etf", draw_etf, "Precomputed .flo field (computed on the fly otherwise)");
  draw_cmd->add_option("--passes", draw_passes, "FDoG passes")->capture_default_str();

  // dataset
  auto* ds_cmd = app.add_subcommand("dataset", "Dataset construction");
  ds_cmd->require_subcommand(1);
  std::string ds_src, ds_out, ds_levels = "0.1,0.3,0.5,0.7,0.9", ds_manifest;
  BuildOptions build;
  auto* build_cmd = ds_cmd->add_subcommand("build", "Build an ETF + drawing dataset");
  build_cmd->add_option("--src", ds_src, "Directory of source images")->required();
  build_cmd->add_option("--out", ds_out, "Output directory")->required();
  build_cmd->add_option("--levels", ds_levels, "Comma-separated control values")->capture_default_str();
  build_cmd->add_option("--size", build.size, "Square output size in pixels")->capture_default_str();
  build_cmd->add_option("--split", build.split_ratio, "Training fraction")->capture_default_str();
  build_cmd->add_option("--seed", build.seed, "Split seed")->capture_default_str();
  auto* validate_cmd = ds_cmd->add_subcommand("validate", "Check a manifest and the files it references");
  validate_cmd->add_option("manifest", ds_manifest, "Path to manifest.json")->required();

  // eval
  std::string eval_pred, eval_gt, eval_json;
  auto* eval_cmd = app.add_subcommand("eval", "SSIM / PSNR / spectral distance between two directories");
  eval_cmd->add_option("--pred", eval_pred, "Predicted drawings")->required();
  eval_cmd->add_option("--gt", eval_gt, "Ground-truth drawings")->required();
  eval_cmd->add_option("--json", eval_json, "Also write a JSON report");

  // train
  cli::TrainArgs targs;
  auto* train_cmd = app.add_subcommand("train", "Train a network on a built dataset");
  train_cmd->add_option("network", targs.kind, "i2f | lcr | dfg")->required()->check(CLI::IsMember({"i2f", "lcr", "dfg"}));
  train_cmd->add_option("--data", targs.data, "Dataset directory (holding manifest.json)")->required();
  train_cmd->add_option("--size", targs.size, "Training resolution")->capture_default_str();
  train_cmd->add_option("--epochs", targs.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--seed", targs.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--base-ch", targs.base_ch, "Generator/regressor base width")->capture_default_str();
  train_cmd->add_option("--disc-base-ch", targs.disc_base_ch, "Discriminator base width")->capture_default_str();
  train_cmd->add_option("--batch", targs.batch, "Batch size (default 1 for i2f/lcr, 2 for dfg)");
  train_cmd->add_option("--steps", targs.steps, "Stop after this many steps (0 = all epochs)");
  train_cmd->add_option("--out", targs.out, "Checkpoint path (default <network>.ckpt)");
  train_cmd->add_option("--log", targs.log, "JSON-lines log path (default stdout)");
  train_cmd->add_option("--i2f", targs.i2f, "Trained I2FNet checkpoint (dfg only)");
  train_cmd->add_option("--lcr", targs.lcr, "Trained regressor checkpoint (dfg only)");

  // serve
  int port = 8080;
  std::size_t cache_mb = 512;
  std::string host = "127.0.0.1", static_dir;
  std::size_t max_side = 2048;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--port", port, "Port (FLOWLINE_PORT overrides)")->capture_default_str();
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--cache-mb", cache_mb, "Session store budget in MiB")->capture_default_str();
  serve_cmd->add_option("--max-side", max_side, "Pixel limit is max-side squared")->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Directory served under /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (etf_cmd->parsed()) {
      const FlowField field = compute_etf(load_image(etf_in), etf_params);
      write_flo(field, etf_out);
      if (!etf_viz.empty()) save_image(visualize_field(field), etf_viz);
      return kExitOk;
    }
    if (draw_cmd->parsed()) {
      if (!draw_alpha && draw_lcm.empty()) throw UsageError("draw requires --alpha or --lcm");
      if (draw_alpha) check_render_args(*draw_alpha, draw_passes);
      const ImageBuf img = load_image(draw_in);
      const FlowField field = draw_etf.empty() ? compute_etf(img) : read_flo(draw_etf);
      if (field.width() != img.width() || field.height() != img.height())
        throw Error("flow field dimensions differ from the image");
      Bytes png;
      if (draw_alpha) {
        png = render_png(img, field, *draw_alpha, draw_passes);
      } else {
        const LineControlMatrix lcm = LineControlMatrix::from_image(load_image(draw_lcm));
        if (lcm.width() != img.width() || lcm.height() != img.height())
          throw Error("LCM dimensions differ from the image");
        png = render_png(img, field, lcm, draw_passes);
      }
      write_file(draw_out, png);
      return kExitOk;
    }
    if (build_cmd->parsed()) {
      build.levels = cli::parse_levels(ds_levels);
      const DatasetManifest m = build_dataset(ds_src, ds_out, build);
      std::size_t train = 0;
      for (const auto& e : m.entries) train += e.split == Split::Train;
      out << m.entries.size() << " images (" << train << " train, " << m.entries.size() - train << " test), "
          << build.levels.size() << " drawings each\n";
      return kExitOk;
    }
    if (validate_cmd->parsed()) {
      const auto issues = validate_manifest(ds_manifest);
      for (const auto& i : issues) err << i << "\n";
      if (issues.empty()) out << "ok\n";
      return issues.empty() ? kExitOk : kExitRuntime;
    }
    if (eval_cmd->parsed()) {
      const BatchReport report = evaluate_batch(eval_pred, eval_gt);
      out << format_table(report);
      if (!eval_json.empty()) {
        const std::string text = to_json(report).dump(2) + "\n";
        write_file(eval_json, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
      }
      return kExitOk;
    }
    if (train_cmd->parsed()) return cli::run_train(targs);
    if (serve_cmd->parsed()) {
      if (const char* env = std::getenv("FLOWLINE_PORT")) {
        try {
          port = std::stoi(env);
        } catch (const std::exception&) {
          throw UsageError(std::string("FLOWLINE_PORT is not a port number: ") + env);
        }
      }
      service::ServiceConfig cfg;
      cfg.cache_bytes = cache_mb << 20;
      cfg.max_pixels = max_side * max_side;
      cfg.static_dir = static_dir;
      service::HttpServer server(cfg);
      out << "listening on http://" << host << ":" << port << "\n" << std::flush;
      if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace flowline
