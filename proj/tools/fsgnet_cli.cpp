#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsgnet/config.hpp"
#include "fsgnet/data.hpp"
#include "fsgnet/errors.hpp"
#include "fsgnet/metrics.hpp"
#include "fsgnet/network.hpp"
#include "fsgnet/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

// Config file first, then the environment, then explicit flags.
fsg::RunConfig resolve(const std::string& config_path, const std::string& dataset,
                       const std::string& data_root) {
  fsg::RunConfig cfg = config_path.empty() ? fsg::RunConfig{} : fsg::load_config(config_path);
  fsg::apply_environment(cfg);
  if (!dataset.empty()) cfg.dataset = fsg::data::parse_dataset(dataset);
  if (!data_root.empty()) cfg.data_root = data_root;
  return cfg;
}

std::vector<fsg::data::SamplePair> load_split(const fsg::RunConfig& cfg, const std::string& which) {
  if (!cfg.dataset) throw fsg::ValidationError("no dataset given (--dataset or config 'dataset')");
  if (cfg.data_root.empty()) {
    throw fsg::ValidationError(std::string("no dataset root given (--data-root, config "
                                           "'data_root' or ") + fsg::kDataRootEnv + ")");
  }
  auto pairs = fsg::data::load_dataset(cfg.data_root, *cfg.dataset);
  if (which == "all") return pairs;
  auto s = fsg::data::split(std::move(pairs), cfg.dataset);
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  throw fsg::ValidationError("unknown split '" + which + "'; use train, val or all");
}

void print_report(const std::string& model, const std::string& dataset,
                  const fsg::metrics::MetricReport& r) {
  std::cout << fsg::metrics::report_header() << "\n"
            << fsg::metrics::format_row({model, dataset, r}) << "\n";
}

int run_train(const std::string& config, const std::string& dataset, const std::string& root,
              const std::string& out, int max_epochs, std::optional<uint64_t> seed) {
  auto cfg = resolve(config, dataset, root);
  if (max_epochs >= 0) cfg.train.max_epochs = max_epochs;
  if (seed) cfg.train.seed = *seed;
  cfg.train.validate();
  auto pairs = load_split(cfg, "all");
  const auto split = fsg::data::split(std::move(pairs), cfg.dataset);
  std::cerr << "training " << cfg.model.name << " on " << fsg::data::to_string(*cfg.dataset)
            << ": " << split.train.size() << " train / " << split.val.size() << " val, "
            << fsg::count_parameters(cfg.model) << " parameters\n";

  fsg::TrainOptions opts;
  opts.on_epoch = [](const fsg::EpochLog& e) {
    std::fprintf(stderr, "epoch %4d  lr %.3e  loss %.5f  val F1 %.3f\n", e.epoch, e.lr, e.loss,
                 e.val_f1);
  };
  const auto ckpt = fsg::train(cfg.model, cfg.train, split, cfg.dataset, opts);
  const fs::path path = out.empty() ? cfg.output_dir / (cfg.model.name + "_" +
                                                        fsg::data::to_string(*cfg.dataset) + ".pt")
                                    : fs::path(out);
  fsg::save_checkpoint(ckpt, path);
  std::cerr << "best val F1 " << ckpt.best_val_f1 << " at epoch " << ckpt.epoch << "; saved "
            << path.string() << "\n";
  print_report(cfg.model.name, fsg::data::to_string(*cfg.dataset),
               fsg::evaluate(ckpt, split.val, cfg.dataset));
  return kExitOk;
}

int run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& root,
             const std::string& which, const std::string& label) {
  auto cfg = resolve("", dataset, root);
  const auto ckpt = fsg::load_checkpoint(checkpoint);
  const auto samples = load_split(cfg, which);
  print_report(label.empty() ? ckpt.model.name : label, fsg::data::to_string(*cfg.dataset),
               fsg::evaluate(ckpt, samples, cfg.dataset));
  return kExitOk;
}

int run_predict(const std::string& checkpoint, const std::string& image, const std::string& out,
                const std::string& dataset) {
  const auto ckpt = fsg::load_checkpoint(checkpoint);
  std::optional<fsg::data::Dataset> d;
  if (!dataset.empty()) d = fsg::data::parse_dataset(dataset);
  const auto files = fsg::predict(ckpt, image, out, d);
  std::cout << files.mask.string() << "\n";
  for (const auto& f : files.stages) std::cout << f.string() << "\n";
  return kExitOk;
}

int run_cross_eval(const std::string& checkpoint, const std::string& dataset,
                   const std::string& root, const std::string& which,
                   const std::string& baseline_path, const std::string& label) {
  auto cfg = resolve("", dataset, root);
  const auto ckpt = fsg::load_checkpoint(checkpoint);
  const auto samples = load_split(cfg, which);
  std::optional<fsg::metrics::MetricReport> baseline;
  if (!baseline_path.empty()) {
    std::ifstream in(baseline_path);
    if (!in) throw fsg::ValidationError("cannot read baseline report: " + baseline_path);
    const auto rows = fsg::metrics::parse_report(in);
    const auto name = fsg::data::to_string(*cfg.dataset);
    for (const auto& r : rows) {
      if (r.dataset == name) baseline = r.report;
    }
    if (!baseline) throw fsg::ValidationError("baseline report has no " + name + " row");
  }
  const auto res = fsg::cross_eval(ckpt, samples, *cfg.dataset, baseline);
  const auto values = res.report.values();
  const auto& names = fsg::metrics::MetricReport::column_names();
  std::cout << (label.empty() ? ckpt.model.name : label) << " -> "
            << fsg::data::to_string(*cfg.dataset) << "\n";
  for (size_t i = 0; i < values.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", values[i]);
    std::cout << names[i] << "\t" << buf;
    if (!res.deltas.empty()) std::cout << " " << fsg::metrics::format_delta(res.deltas[i]);
    std::cout << "\n";
  }
  return kExitOk;
}

int run_inspect(const std::vector<std::string>& variants) {
  const auto& names = variants.empty() ? fsg::variant_names() : variants;
  std::printf("%-8s %14s %12s %10s %8s\n", "variant", "parameters", "target (M)", "actual (M)",
              "error");
  for (const auto& n : names) {
    const auto cfg = fsg::build_variant(n);
    const auto count = fsg::count_parameters(cfg);
    const double target = fsg::reference_params_millions(n);
    const double actual = static_cast<double>(count) / 1e6;
    std::printf("%-8s %14lld %12.2f %10.2f %+7.1f%%\n", n.c_str(),
                static_cast<long long>(count), target, actual,
                100.0 * (actual - target) / target);
  }
  return kExitOk;
}

int run_rank(const std::vector<std::string>& reports) {
  std::vector<fsg::metrics::ReportRow> rows;
  for (const auto& p : reports) {
    std::ifstream in(p);
    if (!in) throw fsg::ValidationError("cannot read report: " + p);
    auto part = fsg::metrics::parse_report(in);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw fsg::ValidationError("no report rows to rank");
  fsg::metrics::rank_rows(rows);
  std::cout << fsg::metrics::report_header('\t', true) << "\n";
  for (const auto& r : rows) std::cout << fsg::metrics::format_row(r) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FSG-Net retinal vessel segmentation"};
  app.require_subcommand(1);

  std::string config, dataset, root, out, checkpoint, image, which = "val", baseline, label;
  int max_epochs = -1;
  std::optional<uint64_t> seed;
  std::vector<std::string> variants, reports;

  auto* train = app.add_subcommand("train", "train a model and save the best checkpoint");
  train->add_option("-c,--config", config, "key-value recipe file")->check(CLI::ExistingFile);
  train->add_option("-d,--dataset", dataset, "DRIVE, STARE, CHASE_DB1 or HRF");
  train->add_option("-r,--data-root", root, "dataset root (overrides config and environment)");
  train->add_option("-o,--out", out, "checkpoint path");
  train->add_option("--max-epochs", max_epochs, "epoch cap (0: until early stop)");
  train->add_option("--seed", seed, "random seed");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  eval->add_option("-k,--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("-d,--dataset", dataset)->required();
  eval->add_option("-r,--data-root", root);
  eval->add_option("-s,--split", which, "train, val or all");
  eval->add_option("-l,--label", label, "model name in the report row");

  auto* pred = app.add_subcommand("predict", "write masks and per-stage maps for one image");
  pred->add_option("-k,--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  pred->add_option("-i,--image", image)->required();
  pred->add_option("-o,--out", out)->required();
  pred->add_option("-d,--dataset", dataset, "selects the padding square");

  auto* cross = app.add_subcommand("cross-eval", "score a checkpoint on another dataset");
  cross->add_option("-k,--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  cross->add_option("-d,--dataset", dataset)->required();
  cross->add_option("-r,--data-root", root);
  cross->add_option("-s,--split", which, "train, val or all");
  cross->add_option("-b,--baseline", baseline, "in-domain report for the deltas");
  cross->add_option("-l,--label", label);

  auto* inspect = app.add_subcommand("inspect", "parameter counts of the capacity variants");
  inspect->add_option("variants", variants, "subset of L, B, S, T, N");

  auto* rank = app.add_subcommand("rank", "merge metric reports into a Rank Avg table");
  rank->add_option("reports", reports)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*train) return run_train(config, dataset, root, out, max_epochs, seed);
    if (*eval) return run_eval(checkpoint, dataset, root, which, label);
    if (*pred) return run_predict(checkpoint, image, out, dataset);
    if (*cross) return run_cross_eval(checkpoint, dataset, root, which, baseline, label);
    if (*inspect) return run_inspect(variants);
    if (*rank) return run_rank(reports);
  } catch (const fsg::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fsg::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
