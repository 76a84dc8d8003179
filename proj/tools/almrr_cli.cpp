// almrr command-line front end: train, infer, eval, synth-corpus, bench-scan.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "almrr/corpus.hpp"
#include "almrr/error.hpp"
#include "almrr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace almrr;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3;

struct ConfigArgs {
  std::string profile = "desk";
  std::string file;
  std::vector<std::string> sets;
  int epochs = -1;
  long long seed = -1;
  double lr = -1.0;
  bool no_frm = false;
  std::string recon_arch;
  std::string precision;
  bool strict = false;

  void attach(CLI::App* app) {
    app->add_option("--profile", profile, "Base profile: desk or full")->capture_default_str();
    app->add_option("--config", file, "key = value config file applied on top of the profile");
    app->add_option("--set", sets, "Override one key (key=value); repeatable");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--seed", seed, "Run seed");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_flag("--no-frm", no_frm, "Disable the refinement head (L2 scoring)");
    app->add_option("--recon-arch", recon_arch, "mamba, conv1, conv3 or attention");
    app->add_option("--precision", precision, "f32 or f64");
    app->add_flag("--strict-deterministic", strict, "Single-threaded bit-exact mode");
  }

  RunConfig resolve() const {
    RunConfig c = RunConfig::profile(profile);
    if (!file.empty()) c = load_config_file(file, c);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (epochs >= 0) c.epochs = epochs;
    if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
    if (lr > 0.0) c.lr = lr;
    if (no_frm) c.frm_enabled = false;
    if (!recon_arch.empty()) c.set("recon_arch", recon_arch);
    if (!precision.empty()) c.set("precision", precision);
    if (strict) c.strict_deterministic = true;
    c.validate();
    return c;
  }
};

std::string default_data_root() {
  const char* env = std::getenv("ALMRR_DATA_ROOT");
  return env ? env : "";
}

fs::path require_data(const std::string& data) {
  if (data.empty()) throw ArgumentError("no dataset given (use --data or set ALMRR_DATA_ROOT)");
  return data;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly localization with state-space feature reconstruction"};
  app.require_subcommand(1);

  ConfigArgs train_cfg;
  std::string train_data = default_data_root(), train_out = "runs", train_layout = "mvtec", train_max_steps;
  std::vector<std::string> train_categories;
  auto* train_cmd = app.add_subcommand("train", "Train one model per category");
  train_cfg.attach(train_cmd);
  train_cmd->add_option("--data", train_data, "Dataset root (default: $ALMRR_DATA_ROOT)");
  train_cmd->add_option("--layout", train_layout, "mvtec or flat")->capture_default_str();
  train_cmd->add_option("--category", train_categories, "Restrict to these categories");
  train_cmd->add_option("--out", train_out, "Output directory")->capture_default_str();
  std::int64_t max_steps = -1;
  train_cmd->add_option("--max-steps", max_steps, "Stop after this many optimizer steps");

  std::string infer_ckpt, infer_input, infer_out = "heatmaps";
  bool infer_overlay = false;
  auto* infer_cmd = app.add_subcommand("infer", "Write anomaly heatmaps for images");
  infer_cmd->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  infer_cmd->add_option("--input", infer_input, "Image file or directory")->required();
  infer_cmd->add_option("--out", infer_out, "Output directory")->capture_default_str();
  infer_cmd->add_flag("--overlay", infer_overlay, "Also write color overlays");

  std::string eval_data = default_data_root(), eval_ckpt, eval_layout = "mvtec", eval_csv;
  std::vector<std::string> eval_categories;
  auto* eval_cmd = app.add_subcommand("eval", "Report image/pixel AUROC and pixel AP");
  eval_cmd->add_option("--data", eval_data, "Dataset root (default: $ALMRR_DATA_ROOT)");
  eval_cmd->add_option("--layout", eval_layout, "mvtec or flat")->capture_default_str();
  eval_cmd->add_option("--category", eval_categories, "Restrict to these categories");
  eval_cmd->add_option("--checkpoints", eval_ckpt, "Directory with <category>/model.almr, or one checkpoint file")
      ->required();
  eval_cmd->add_option("--csv", eval_csv, "Also write the report as CSV");

  std::string corpus_out;
  std::uint64_t corpus_seed = 0;
  CorpusOptions corpus_opts;
  auto* corpus_cmd = app.add_subcommand("synth-corpus", "Generate the procedural texture corpus");
  corpus_cmd->add_option("--out", corpus_out, "Output directory")->required();
  corpus_cmd->add_option("--seed", corpus_seed, "Corpus seed")->capture_default_str();
  corpus_cmd->add_option("--size", corpus_opts.image_size, "Image size")->capture_default_str();
  corpus_cmd->add_option("--train", corpus_opts.train_per_category, "Train images per category")->capture_default_str();
  corpus_cmd->add_option("--test-good", corpus_opts.test_good, "Anomaly-free test images")->capture_default_str();
  corpus_cmd->add_option("--test-anomalous", corpus_opts.test_anomalous, "Anomalous test images")
      ->capture_default_str();

  ConfigArgs bench_cfg;
  int bench_n = 10;
  auto* bench_cmd = app.add_subcommand("bench-scan", "Per-image latency of the reconstruction module");
  bench_cfg.attach(bench_cmd);
  bench_cmd->add_option("-n,--images", bench_n, "Number of images")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      const RunConfig cfg = train_cfg.resolve();
      const auto data = ingest(require_data(train_data), parse_layout(train_layout), train_categories);
      for (const auto& w : data.validation_report) std::cerr << "validation: " << w << "\n";
      for (const auto& cat : data.categories) {
        TrainOptions opts{fs::path(train_out) / cat, &std::cout, max_steps};
        std::cout << "training " << cat << "\n";
        const auto r = train_category(cfg, data, cat, opts);
        std::cout << cat << ": " << r.steps << " steps in " << r.seconds << " s -> " << r.checkpoint.string() << "\n";
      }
    } else if (*infer_cmd) {
      const auto model = Predictor::load(infer_ckpt);
      const auto records = infer(model, infer_input, InferOptions{infer_out, infer_overlay});
      for (const auto& r : records) std::cout << r.image_id << "," << r.image_score << "\n";
    } else if (*eval_cmd) {
      const auto data = ingest(require_data(eval_data), parse_layout(eval_layout), eval_categories);
      for (const auto& w : data.validation_report) std::cerr << "validation: " << w << "\n";
      const auto reports = evaluate(data, eval_ckpt);
      write_report_table(std::cout, reports);
      for (const auto& r : reports)
        if (r.n_skipped && r.category != "avg")
          std::cerr << "warning: " << r.category << ": " << r.n_skipped << " images without ground truth skipped\n";
      if (!eval_csv.empty()) {
        std::ofstream csv(eval_csv);
        write_report_csv(csv, reports);
      }
    } else if (*corpus_cmd) {
      const auto s = make_synth_corpus(corpus_out, corpus_seed, corpus_opts);
      std::cout << "wrote " << s.files_written << " files to " << corpus_out << "\n";
    } else if (*bench_cmd) {
      const RunConfig cfg = bench_cfg.resolve();
      const auto r = bench_reconstruction(cfg, bench_n, cfg.seed);
      std::cout << "image,seconds\n";
      for (std::size_t i = 0; i < r.seconds.size(); ++i) std::cout << i << "," << r.seconds[i] << "\n";
      std::cout << "# mean " << r.mean << " s, median " << r.median << " s\n";
    }
  } catch (const DataContractError& e) {
    std::cerr << "data contract violation: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}
