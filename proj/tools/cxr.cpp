// Command-line entry point: prepare -> extract -> train -> evaluate -> report.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cxr/error.hpp"
#include "cxr/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> work_dir, covid_dir, negative_dir, split_spec;
  std::vector<std::string> backbones;
  std::vector<std::string> models;  // BACKBONE=PATH
  std::optional<std::string> train_features, test_features;
  bool synthetic = false;
  std::optional<std::uint64_t> augment_seed;
  std::optional<std::size_t> target_count;
  std::optional<int> epochs, batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> shuffle_seed;
  std::optional<int> bins;
  std::optional<double> target_sensitivity, z;
  bool no_sweep_csv = false;
};

void add_options(CLI::App& app, Overrides& o) {
  app.add_option("-c,--config", o.config, "Pipeline config (YAML)");
  app.add_option("--work-dir", o.work_dir, "Directory for all artifacts");
  app.add_option("--covid-dir", o.covid_dir, "COVID corpus root");
  app.add_option("--negative-dir", o.negative_dir, "Negative corpus root");
  app.add_option("--split-spec", o.split_spec, "Split specification (YAML)");
  app.add_option("--backbone", o.backbones, "RESNET18, RESNET50, SQUEEZENET, DENSENET121 (repeatable)");
  app.add_option("--model", o.models, "BACKBONE=PATH of an ONNX graph (repeatable)");
  app.add_option("--train-features", o.train_features, "Precomputed TRAIN feature file");
  app.add_option("--test-features", o.test_features, "Precomputed TEST feature file");
  app.add_flag("--synthetic-fixture", o.synthetic, "Use generated Gaussian features instead of images");
  app.add_option("--augment-seed", o.augment_seed, "Augmentation seed");
  app.add_option("--target-count", o.target_count, "TRAIN/COVID images after augmentation");
  app.add_option("--epochs", o.epochs, "Training epochs");
  app.add_option("--batch-size", o.batch_size, "Mini-batch size");
  app.add_option("--learning-rate", o.learning_rate, "ADAM learning rate");
  app.add_option("--shuffle-seed", o.shuffle_seed, "Epoch shuffling seed");
  app.add_option("--bins", o.bins, "Histogram bins");
  app.add_option("--target-sensitivity", o.target_sensitivity, "Sensitivity of the reported operating point");
  app.add_option("--z", o.z, "Confidence interval z value");
  app.add_flag("--no-sweep-csv", o.no_sweep_csv, "Do not write the threshold sweep CSV");
}

cxr::PipelineConfig effective_config(const Overrides& o) {
  cxr::PipelineConfig cfg = o.config.empty() ? cxr::PipelineConfig{} : cxr::PipelineConfig::load(o.config);
  if (o.work_dir) cfg.work_dir = *o.work_dir;
  if (o.covid_dir) cfg.covid_dir = *o.covid_dir;
  if (o.negative_dir) cfg.negative_dir = *o.negative_dir;
  if (o.split_spec) cfg.split_spec = std::filesystem::path(*o.split_spec);
  if (!o.backbones.empty()) {
    cfg.backbones.clear();
    for (const auto& b : o.backbones) cfg.backbones.push_back(cxr::parse_backbone(b));
  }
  for (const auto& m : o.models) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) throw cxr::ValidationError("--model expects BACKBONE=PATH, got '" + m + "'");
    cfg.models[cxr::parse_backbone(m.substr(0, eq))] = m.substr(eq + 1);
  }
  if (o.train_features) cfg.train_features = std::filesystem::path(*o.train_features);
  if (o.test_features) cfg.test_features = std::filesystem::path(*o.test_features);
  if (o.synthetic) cfg.synthetic_fixture = true;
  if (cfg.synthetic_fixture) cfg.backbones = {cxr::Backbone::Synthetic};
  if (o.augment_seed) cfg.augment.seed = *o.augment_seed;
  if (o.target_count) cfg.augment.target_count = *o.target_count;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.learning_rate) cfg.train.learning_rate = *o.learning_rate;
  if (o.shuffle_seed) cfg.train.shuffle_seed = *o.shuffle_seed;
  if (o.bins) cfg.eval.bins = *o.bins;
  if (o.target_sensitivity) cfg.eval.target_sensitivity = *o.target_sensitivity;
  if (o.z) cfg.eval.z = *o.z;
  if (o.no_sweep_csv) cfg.eval.write_sweep_csv = false;
  cfg.augment.validate();
  cfg.train.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest X-ray COVID-19 screening pipeline"};
  app.require_subcommand(1);
  Overrides o;
  add_options(app, o);

  auto* prepare = app.add_subcommand("prepare", "Build, validate and augment the dataset manifest")->fallthrough();
  auto* extract = app.add_subcommand("extract", "Extract backbone features for TRAIN and TEST")->fallthrough();
  auto* train = app.add_subcommand("train", "Train the linear head on TRAIN features")->fallthrough();
  auto* evaluate = app.add_subcommand("evaluate", "Score TEST features and write the evaluation report")->fallthrough();
  auto* report = app.add_subcommand("report", "Merge per-backbone reports into a comparison table")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(cxr::ExitCode::Validation);
  }

  try {
    const cxr::PipelineConfig cfg = effective_config(o);
    auto per_backbone = [&](auto&& command) {
      for (auto b : cfg.backbones) {
        const auto rc = command(cfg, b, std::cout);
        if (rc != cxr::ExitCode::Ok) return rc;
      }
      return cxr::ExitCode::Ok;
    };
    cxr::ExitCode rc = cxr::ExitCode::Ok;
    if (prepare->parsed()) {
      rc = cxr::cmd_prepare(cfg, std::cout);
    } else if (extract->parsed()) {
      rc = per_backbone(cxr::cmd_extract);
    } else if (train->parsed()) {
      rc = per_backbone(cxr::cmd_train);
    } else if (evaluate->parsed()) {
      rc = per_backbone(cxr::cmd_evaluate);
    } else if (report->parsed()) {
      rc = cxr::cmd_report(cfg, std::cout);
    }
    return static_cast<int>(rc);
  } catch (const cxr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(cxr::ExitCode::Io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(cxr::ExitCode::Validation);
  }
}
