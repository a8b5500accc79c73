#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cxr/augment.hpp"
#include "cxr/error.hpp"
#include "cxr/head.hpp"
#include "cxr/types.hpp"

namespace cxr {

struct EvalConfig {
  int bins = 20;
  double target_sensitivity = 0.975;
  double z = 1.96;
  bool write_sweep_csv = true;
};

// Everything a pipeline command needs. Relative paths resolve against the
// working directory of the process.
struct PipelineConfig {
  std::filesystem::path covid_dir;
  std::filesystem::path negative_dir;
  std::filesystem::path work_dir = "work";
  std::optional<std::filesystem::path> split_spec;  // built-in default when unset

  std::vector<Backbone> backbones{Backbone::ResNet18};
  std::map<Backbone, std::filesystem::path> models;

  // Precomputed feature files that replace the extract step.
  std::optional<std::filesystem::path> train_features;
  std::optional<std::filesystem::path> test_features;

  AugmentConfig augment;
  TrainConfig train;
  EvalConfig eval;
  bool synthetic_fixture = false;

  static PipelineConfig from_yaml(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);

  // Effective configuration in a fixed key order.
  std::string to_yaml() const;

  std::filesystem::path manifest_path() const { return work_dir / "manifest.csv"; }
  std::filesystem::path augmented_dir() const { return work_dir / "augmented"; }
  std::filesystem::path features_path(Backbone b, Split s) const;
  std::filesystem::path head_path(Backbone b) const;
  std::filesystem::path history_path(Backbone b) const;
  std::filesystem::path report_path(Backbone b) const;
  std::filesystem::path sweep_path(Backbone b) const;
};

// Each command writes its artifacts under work_dir and returns the process
// exit code. Errors propagate as cxr::Error subclasses.
ExitCode cmd_prepare(const PipelineConfig& cfg, std::ostream& log);
ExitCode cmd_extract(const PipelineConfig& cfg, Backbone backbone, std::ostream& log);
ExitCode cmd_train(const PipelineConfig& cfg, Backbone backbone, std::ostream& log);
ExitCode cmd_evaluate(const PipelineConfig& cfg, Backbone backbone, std::ostream& log);
ExitCode cmd_report(const PipelineConfig& cfg, std::ostream& log);

}  // namespace cxr
