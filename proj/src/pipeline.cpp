#include "cxr/pipeline.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cxr/backbone.hpp"
#include "cxr/digest.hpp"
#include "cxr/evaluate.hpp"
#include "cxr/manifest.hpp"
#include "cxr/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cxr {

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
void read_into(const YAML::Node& node, const char* key, T& out) {
  if (const YAML::Node v = node[key]) out = v.as<T>();
}

void read_path(const YAML::Node& node, const char* key, fs::path& out) {
  if (const YAML::Node v = node[key]) out = v.as<std::string>();
}

void read_path(const YAML::Node& node, const char* key, std::optional<fs::path>& out) {
  if (const YAML::Node v = node[key]) out = fs::path(v.as<std::string>());
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("error writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

}  // namespace

PipelineConfig PipelineConfig::from_yaml(const std::string& text) {
  PipelineConfig c;
  try {
    const YAML::Node root = YAML::Load(text);
    if (const YAML::Node p = root["paths"]) {
      read_path(p, "covid_dir", c.covid_dir);
      read_path(p, "negative_dir", c.negative_dir);
      read_path(p, "work_dir", c.work_dir);
      read_path(p, "split_spec", c.split_spec);
    }
    if (const YAML::Node b = root["backbones"]) {
      c.backbones.clear();
      for (const auto& n : b) c.backbones.push_back(parse_backbone(n.as<std::string>()));
    }
    if (const YAML::Node m = root["models"]) {
      for (const auto& kv : m) c.models[parse_backbone(kv.first.as<std::string>())] = kv.second.as<std::string>();
    }
    if (const YAML::Node f = root["features"]) {
      read_path(f, "train", c.train_features);
      read_path(f, "test", c.test_features);
    }
    if (const YAML::Node a = root["augment"]) {
      read_into(a, "seed", c.augment.seed);
      read_into(a, "target_count", c.augment.target_count);
      read_into(a, "rotation_max_deg", c.augment.rotation_max_deg);
      read_into(a, "distortion_amplitude_px", c.augment.distortion_amplitude_px);
      read_into(a, "enable_hflip", c.augment.enable_hflip);
      read_into(a, "max_variants_per_image", c.augment.max_variants_per_image);
    }
    if (const YAML::Node t = root["train"]) {
      read_into(t, "epochs", c.train.epochs);
      read_into(t, "batch_size", c.train.batch_size);
      read_into(t, "learning_rate", c.train.learning_rate);
      read_into(t, "beta1", c.train.beta1);
      read_into(t, "beta2", c.train.beta2);
      read_into(t, "epsilon", c.train.epsilon);
      read_into(t, "shuffle_seed", c.train.shuffle_seed);
    }
    if (const YAML::Node e = root["eval"]) {
      read_into(e, "bins", c.eval.bins);
      read_into(e, "target_sensitivity", c.eval.target_sensitivity);
      read_into(e, "z", c.eval.z);
      read_into(e, "write_sweep_csv", c.eval.write_sweep_csv);
    }
    read_into(root, "synthetic_fixture", c.synthetic_fixture);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml(ss.str());
}

std::string PipelineConfig::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "paths" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "covid_dir" << YAML::Value << covid_dir.generic_string();
  out << YAML::Key << "negative_dir" << YAML::Value << negative_dir.generic_string();
  out << YAML::Key << "work_dir" << YAML::Value << work_dir.generic_string();
  out << YAML::Key << "split_spec" << YAML::Value << (split_spec ? split_spec->generic_string() : "builtin");
  out << YAML::EndMap;

  out << YAML::Key << "backbones" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto b : backbones) out << std::string(to_string(b));
  out << YAML::EndSeq;
  out << YAML::Key << "models" << YAML::Value << YAML::BeginMap;
  for (const auto& [b, p] : models) out << YAML::Key << std::string(to_string(b)) << YAML::Value << p.generic_string();
  out << YAML::EndMap;
  if (train_features || test_features) {
    out << YAML::Key << "features" << YAML::Value << YAML::BeginMap;
    if (train_features) out << YAML::Key << "train" << YAML::Value << train_features->generic_string();
    if (test_features) out << YAML::Key << "test" << YAML::Value << test_features->generic_string();
    out << YAML::EndMap;
  }

  out << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << augment.seed;
  out << YAML::Key << "target_count" << YAML::Value << augment.target_count;
  out << YAML::Key << "rotation_max_deg" << YAML::Value << shortest(augment.rotation_max_deg);
  out << YAML::Key << "distortion_amplitude_px" << YAML::Value << shortest(augment.distortion_amplitude_px);
  out << YAML::Key << "enable_hflip" << YAML::Value << augment.enable_hflip;
  out << YAML::Key << "max_variants_per_image" << YAML::Value << augment.max_variants_per_image;
  out << YAML::EndMap;

  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << train.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << shortest(train.learning_rate);
  out << YAML::Key << "beta1" << YAML::Value << shortest(train.beta1);
  out << YAML::Key << "beta2" << YAML::Value << shortest(train.beta2);
  out << YAML::Key << "epsilon" << YAML::Value << shortest(train.epsilon);
  out << YAML::Key << "shuffle_seed" << YAML::Value << train.shuffle_seed;
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "bins" << YAML::Value << eval.bins;
  out << YAML::Key << "target_sensitivity" << YAML::Value << shortest(eval.target_sensitivity);
  out << YAML::Key << "z" << YAML::Value << shortest(eval.z);
  out << YAML::Key << "write_sweep_csv" << YAML::Value << eval.write_sweep_csv;
  out << YAML::EndMap;

  out << YAML::Key << "synthetic_fixture" << YAML::Value << synthetic_fixture;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

fs::path PipelineConfig::features_path(Backbone b, Split s) const {
  if (s == Split::Train && train_features) return *train_features;
  if (s == Split::Test && test_features) return *test_features;
  return work_dir / "features" / (lower(to_string(b)) + "_" + lower(to_string(s)) + ".feat");
}

fs::path PipelineConfig::head_path(Backbone b) const {
  return work_dir / "heads" / (lower(to_string(b)) + ".head");
}

fs::path PipelineConfig::history_path(Backbone b) const {
  return work_dir / "heads" / (lower(to_string(b)) + "_history.json");
}

fs::path PipelineConfig::report_path(Backbone b) const {
  return work_dir / "reports" / (lower(to_string(b)) + "_eval.json");
}

fs::path PipelineConfig::sweep_path(Backbone b) const {
  return work_dir / "reports" / (lower(to_string(b)) + "_sweep.csv");
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void print_issues(const ValidationReport& report, std::ostream& log) {
  for (const auto& issue : report.issues) log << "  " << to_string(issue.kind) << ": " << issue.detail << '\n';
}

void print_counts(const Counts& c, std::ostream& log) {
  for (Split s : {Split::Train, Split::Test}) {
    log << "  " << to_string(s) << ":";
    for (int g = 0; g < kNumSubgroups; ++g) {
      log << ' ' << to_string(static_cast<Subgroup>(g)) << '=' << c.at(s, static_cast<Subgroup>(g));
    }
    log << '\n';
  }
}

std::vector<ImageRecord> rows_of(const DatasetManifest& m, Split split) {
  std::vector<ImageRecord> rows;
  for (const auto& r : m.records) {
    if (r.split == split) rows.push_back(r);
  }
  return rows;
}

std::string config_digest(const PipelineConfig& cfg) {
  const Digest d = sha256(cfg.to_yaml());
  return to_hex(d);
}

}  // namespace

ExitCode cmd_prepare(const PipelineConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.work_dir);
  if (cfg.synthetic_fixture) {
    const SyntheticFixture fx = make_synthetic_fixture();
    ValidateOptions opts;
    opts.check_files = false;
    const auto report = validate_manifest(fx.manifest, opts);
    if (!report.ok()) {
      print_issues(report, log);
      return ExitCode::Validation;
    }
    ensure_dir(cfg.work_dir / "features");
    save_manifest(fx.manifest, cfg.manifest_path());
    save_features(fx.train, cfg.features_path(Backbone::Synthetic, Split::Train));
    save_features(fx.test, cfg.features_path(Backbone::Synthetic, Split::Test));
    write_text(cfg.work_dir / "prepare.effective.yaml", cfg.to_yaml());
    log << "synthetic fixture: " << fx.train.rows << " train / " << fx.test.rows << " test rows, D="
        << fx.train.cols << '\n';
    return ExitCode::Ok;
  }

  if (!fs::is_directory(cfg.covid_dir)) throw IoError("COVID corpus directory not found: " + cfg.covid_dir.string());
  if (!fs::is_directory(cfg.negative_dir)) {
    throw IoError("negative corpus directory not found: " + cfg.negative_dir.string());
  }
  const SplitSpec spec = cfg.split_spec ? SplitSpec::load(*cfg.split_spec) : SplitSpec::standard_layout();
  const DatasetManifest base = build_manifest(cfg.covid_dir, cfg.negative_dir, spec);
  auto report = validate_manifest(base);
  if (!report.ok()) {
    log << "manifest validation failed:\n";
    print_issues(report, log);
    return ExitCode::Validation;
  }
  log << "source images:\n";
  print_counts(base.counts, log);

  const DatasetManifest augmented = augment_minority(base, cfg.augment, cfg.augmented_dir());
  report = validate_manifest(augmented);
  if (!report.ok()) {
    log << "augmented manifest validation failed:\n";
    print_issues(report, log);
    return ExitCode::Validation;
  }
  save_manifest(augmented, cfg.manifest_path());
  write_text(cfg.work_dir / "prepare.effective.yaml", cfg.to_yaml());
  log << "after augmentation:\n";
  print_counts(augmented.counts, log);
  log << "wrote " << cfg.manifest_path().string() << '\n';
  return ExitCode::Ok;
}

ExitCode cmd_extract(const PipelineConfig& cfg, Backbone backbone, std::ostream& log) {
  if (cfg.synthetic_fixture || backbone == Backbone::Synthetic || (cfg.train_features && cfg.test_features)) {
    for (Split s : {Split::Train, Split::Test}) {
      const fs::path p = cfg.features_path(backbone, s);
      if (!fs::is_regular_file(p)) throw IoError("feature file not found: " + p.string());
    }
    log << "extract skipped: feature files supplied for " << to_string(backbone) << '\n';
    return ExitCode::Ok;
  }
  auto model = cfg.models.find(backbone);
  if (model == cfg.models.end()) {
    throw ValidationError("no model file configured for " + std::string(to_string(backbone)));
  }
  const DatasetManifest manifest = load_manifest(cfg.manifest_path());
  FeatureExtractor extractor(BackboneSpec::make(backbone, model->second));
  ensure_dir(cfg.work_dir / "features");
  for (Split s : {Split::Train, Split::Test}) {
    const auto rows = rows_of(manifest, s);
    const FeatureMatrix m = extractor.extract_features(rows);
    save_features(m, cfg.features_path(backbone, s));
    log << to_string(backbone) << ' ' << to_string(s) << ": " << m.rows << "x" << m.cols << " -> "
        << cfg.features_path(backbone, s).string() << '\n';
  }
  write_text(cfg.work_dir / "features" / (lower(to_string(backbone)) + ".effective.yaml"), cfg.to_yaml());
  return ExitCode::Ok;
}

ExitCode cmd_train(const PipelineConfig& cfg, Backbone backbone, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(cfg.manifest_path());
  const FeatureMatrix features = load_features(cfg.features_path(backbone, Split::Train));
  if (features.backbone != backbone) {
    throw ValidationError("train: feature file holds " + std::string(to_string(features.backbone)) +
                          " features, expected " + std::string(to_string(backbone)));
  }
  const auto labels = labels_for(features, manifest.records);
  const TrainResult result = train_head(features, labels, cfg.train);

  ensure_dir(cfg.work_dir / "heads");
  const std::string audit = "backbone=" + std::string(to_string(backbone)) + "\n" +
                            "preprocessing_hash=" + to_hex(features.preprocessing_hash) + "\n" +
                            "config_sha256=" + config_digest(cfg) + "\n";
  save_head(result.head, cfg.train, cfg.head_path(backbone), audit);

  nlohmann::json history = {
      {"backbone", to_string(backbone)},
      {"epoch_mean_loss", result.history.epoch_mean_loss},
      {"epoch_accuracy", result.history.epoch_accuracy},
      {"config", cfg.to_yaml()},
  };
  write_text(cfg.history_path(backbone), history.dump(2) + "\n");
  log << to_string(backbone) << ": trained " << cfg.train.epochs << " epochs on " << features.rows
      << " rows; loss " << result.history.epoch_mean_loss.front() << " -> "
      << result.history.epoch_mean_loss.back() << ", train accuracy " << result.history.epoch_accuracy.back()
      << '\n';
  return ExitCode::Ok;
}

ExitCode cmd_evaluate(const PipelineConfig& cfg, Backbone backbone, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(cfg.manifest_path());
  const HeadFile head = load_head(cfg.head_path(backbone));
  const FeatureMatrix features = load_features(cfg.features_path(backbone, Split::Test));
  if (head.head.backbone != backbone || features.backbone != backbone) {
    throw ValidationError("evaluate: head or features do not belong to " + std::string(to_string(backbone)));
  }
  const ScoreSet scores = predict_scores(head.head, features, manifest.records);

  EvalOptions opts;
  opts.bins = cfg.eval.bins;
  opts.target_sensitivity = cfg.eval.target_sensitivity;
  opts.z = cfg.eval.z;
  const EvalReport report = evaluate(scores, opts);

  ensure_dir(cfg.work_dir / "reports");
  nlohmann::json j = to_json(report);
  j["backbone"] = to_string(backbone);
  j["config"] = cfg.to_yaml();
  write_text(cfg.report_path(backbone), j.dump(2) + "\n");
  if (cfg.eval.write_sweep_csv) write_text(cfg.sweep_path(backbone), sweep_csv(report.sweep));

  char line[256];
  std::snprintf(line, sizeof line,
                "%s: AUC %.4f; threshold %.6g -> sensitivity %.1f%% +/- %.1f%%, specificity %.1f%% +/- %.1f%%\n",
                std::string(to_string(backbone)).c_str(), report.auc, report.selected.threshold,
                100 * report.selected.sensitivity, 100 * report.sensitivity_ci.r, 100 * report.selected.specificity,
                100 * report.specificity_ci.r);
  log << line;
  return ExitCode::Ok;
}

ExitCode cmd_report(const PipelineConfig& cfg, std::ostream& log) {
  std::ostringstream csv;
  std::ostringstream md;
  csv << "model,threshold,sensitivity,sensitivity_ci,specificity,specificity_ci,auc\n";
  md << "| Model | Sensitivity | Specificity | AUC |\n|---|---|---|---|\n";
  nlohmann::json rows = nlohmann::json::array();
  std::size_t found = 0;
  for (Backbone b : cfg.backbones) {
    const fs::path path = cfg.report_path(b);
    if (!fs::is_regular_file(path)) {
      log << "no report for " << to_string(b) << " at " << path.string() << '\n';
      continue;
    }
    std::ifstream in(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
    const EvalReport r = report_from_json(j);
    ++found;
    csv << to_string(b) << ',' << shortest(r.selected.threshold) << ',' << shortest(r.selected.sensitivity) << ','
        << shortest(r.sensitivity_ci.r) << ',' << shortest(r.selected.specificity) << ','
        << shortest(r.specificity_ci.r) << ',' << shortest(r.auc) << '\n';
    char buf[256];
    std::snprintf(buf, sizeof buf, "| %s | %.1f%% ± %.1f%% | %.1f%% ± %.1f%% | %.4f |\n",
                  std::string(to_string(b)).c_str(), 100 * r.selected.sensitivity, 100 * r.sensitivity_ci.r,
                  100 * r.selected.specificity, 100 * r.specificity_ci.r, r.auc);
    md << buf;
    rows.push_back({{"model", to_string(b)},
                    {"threshold", r.selected.threshold},
                    {"sensitivity", r.selected.sensitivity},
                    {"sensitivity_ci", r.sensitivity_ci.r},
                    {"specificity", r.selected.specificity},
                    {"specificity_ci", r.specificity_ci.r},
                    {"auc", r.auc}});
  }
  if (found == 0) throw IoError("report: no evaluation reports found under " + (cfg.work_dir / "reports").string());
  write_text(cfg.work_dir / "reports" / "comparison.csv", csv.str());
  write_text(cfg.work_dir / "reports" / "comparison.md", md.str());
  write_text(cfg.work_dir / "reports" / "comparison.json",
             nlohmann::json{{"models", rows}, {"config", cfg.to_yaml()}}.dump(2) + "\n");
  log << md.str();
  return ExitCode::Ok;
}

}  // namespace cxr
