#include "cxr/manifest.hpp"

#include <fnmatch.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cxr/csv.hpp"
#include "cxr/error.hpp"
#include "cxr/image.hpp"

namespace fs = std::filesystem;

namespace cxr {

std::size_t Counts::label_total(Split s, Label l) const {
  std::size_t n = 0;
  for (int g = 0; g < kNumSubgroups; ++g) {
    if (label_of(static_cast<Subgroup>(g)) == l) n += at(s, static_cast<Subgroup>(g));
  }
  return n;
}

std::size_t Counts::total() const {
  std::size_t n = 0;
  for (const auto& row : cells)
    for (auto c : row) n += c;
  return n;
}

Counts tally(std::span<const ImageRecord> records) {
  Counts c;
  for (const auto& r : records) ++c.at(r.split, r.subgroup);
  return c;
}

DatasetManifest make_manifest(std::vector<ImageRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const ImageRecord& a, const ImageRecord& b) { return a.image_path < b.image_path; });
  DatasetManifest m;
  m.counts = tally(records);
  m.records = std::move(records);
  return m;
}

// ---------------------------------------------------------------------------
// Split specification

namespace {

constexpr std::string_view kNegativeSubfolders[] = {
    "No_Finding",   "Enlarged_Cardiomediastinum", "Cardiomegaly",     "Lung_Opacity",
    "Lung_Lesion",  "Edema",                      "Consolidation",    "Pneumonia",
    "Atelectasis",  "Pneumothorax",               "Pleural_Effusion", "Pleural_Other",
    "Fracture",     "Support_Devices",
};

std::optional<PatientMetadata> parse_metadata(const YAML::Node& node) {
  if (!node) return std::nullopt;
  PatientMetadata md;
  md.file = node["file"].as<std::string>();
  if (node["path_column"]) md.path_column = node["path_column"].as<std::string>();
  if (node["patient_column"]) md.patient_column = node["patient_column"].as<std::string>();
  return md;
}

void check_rule(const SplitRule& r, std::size_t index) {
  const std::string where = "split rule #" + std::to_string(index);
  if (r.glob.empty() == r.files.empty()) {
    throw ValidationError(where + ": exactly one of 'glob' or 'files' is required");
  }
  const bool covid_corpus = r.corpus == Source::CovidCorpus;
  if (covid_corpus != (r.subgroup == Subgroup::Covid)) {
    throw ValidationError(where + ": subgroup " + std::string(to_string(r.subgroup)) +
                          " does not belong to corpus " + std::string(to_string(r.corpus)));
  }
}

}  // namespace

std::span<const std::string_view> negative_subfolders() { return kNegativeSubfolders; }

SplitSpec SplitSpec::from_yaml(const std::string& text) {
  SplitSpec spec;
  try {
    YAML::Node root = YAML::Load(text);
    spec.covid_metadata = parse_metadata(root["covid_metadata"]);
    spec.negative_metadata = parse_metadata(root["negative_metadata"]);
    const YAML::Node rules = root["rules"];
    if (!rules || !rules.IsSequence()) throw ValidationError("split spec: 'rules' list is required");
    for (const auto& n : rules) {
      SplitRule r;
      r.corpus = parse_source(n["corpus"].as<std::string>());
      if (n["glob"]) r.glob = n["glob"].as<std::string>();
      if (n["files"]) r.files = n["files"].as<std::vector<std::string>>();
      r.split = parse_split(n["split"].as<std::string>());
      r.subgroup = parse_subgroup(n["subgroup"].as<std::string>());
      if (n["count"]) {
        const std::string c = n["count"].as<std::string>();
        if (c != "all") r.count = n["count"].as<std::size_t>();
      }
      spec.rules.push_back(std::move(r));
    }
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("split spec: ") + e.what());
  }
  for (std::size_t i = 0; i < spec.rules.size(); ++i) check_rule(spec.rules[i], i);
  return spec;
}

SplitSpec SplitSpec::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read split spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml(ss.str());
}

SplitSpec SplitSpec::standard_layout() {
  SplitSpec spec;
  spec.rules.push_back({Source::CovidCorpus, "train/*", {}, Split::Train, Subgroup::Covid, 31});
  spec.rules.push_back({Source::CovidCorpus, "test/*", {}, Split::Test, Subgroup::Covid, 40});
  for (Split split : {Split::Train, Split::Test}) {
    const std::string prefix = split == Split::Train ? "train/" : "test/";
    for (std::string_view folder : kNegativeSubfolders) {
      const bool normal = folder == "No_Finding";
      std::size_t count = normal ? (split == Split::Train ? 700 : 1700) : 100;
      spec.rules.push_back({Source::NegativeCorpus, prefix + std::string(folder) + "/*", {}, split,
                            normal ? Subgroup::Normal : Subgroup::OtherDisease, count});
    }
  }
  return spec;
}

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
         ext == ".tiff";
}

// ---------------------------------------------------------------------------
// build_manifest

namespace {

// Corpus-relative, '/'-separated image paths in sorted order.
std::vector<std::string> scan_images(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || !has_image_extension(entry.path())) continue;
    out.push_back(entry.path().lexically_relative(root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Map from relative path or bare file name to patient id.
std::unordered_map<std::string, std::string> load_patient_map(const fs::path& root,
                                                              const PatientMetadata& md) {
  const fs::path file = md.file.is_absolute() ? md.file : root / md.file;
  std::ifstream in(file);
  if (!in) throw IoError("cannot read patient metadata " + file.string());
  auto rows = csv::read(in);
  if (rows.empty()) throw ValidationError("patient metadata " + file.string() + " is empty");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ValidationError("patient metadata " + file.string() + " has no column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t path_col = column(md.path_column);
  const std::size_t patient_col = column(md.patient_column);
  std::unordered_map<std::string, std::string> map;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() <= std::max(path_col, patient_col)) continue;
    map.emplace(row[path_col], row[patient_col]);
  }
  return map;
}

struct Corpus {
  fs::path root;
  std::vector<std::string> images;
  std::unordered_map<std::string, std::string> patients;

  std::string patient_of(const std::string& rel) const {
    if (auto it = patients.find(rel); it != patients.end()) return it->second;
    const fs::path p(rel);
    if (auto it = patients.find(p.filename().string()); it != patients.end()) return it->second;
    return p.stem().string();
  }
};

Corpus open_corpus(const fs::path& root, const std::optional<PatientMetadata>& md) {
  if (!fs::is_directory(root)) throw IoError("corpus directory not found: " + root.string());
  Corpus c;
  c.root = root;
  c.images = scan_images(root);
  if (md) c.patients = load_patient_map(root, *md);
  return c;
}

std::string rule_name(const SplitRule& r) {
  return r.glob.empty() ? std::to_string(r.files.size()) + " listed files" : "'" + r.glob + "'";
}

}  // namespace

DatasetManifest build_manifest(const fs::path& covid_dir, const fs::path& negative_dir,
                               const SplitSpec& spec) {
  for (std::size_t i = 0; i < spec.rules.size(); ++i) check_rule(spec.rules[i], i);
  const Corpus covid = open_corpus(covid_dir, spec.covid_metadata);
  const Corpus negative = open_corpus(negative_dir, spec.negative_metadata);

  std::vector<ImageRecord> records;
  std::vector<std::string> missing;
  for (const auto& rule : spec.rules) {
    const Corpus& corpus = rule.corpus == Source::CovidCorpus ? covid : negative;
    std::vector<std::string> selected;
    if (!rule.files.empty()) {
      for (const auto& f : rule.files) {
        if (!fs::is_regular_file(corpus.root / f)) {
          missing.push_back((corpus.root / f).generic_string());
        } else {
          selected.push_back(fs::path(f).generic_string());
        }
      }
    } else {
      for (const auto& rel : corpus.images) {
        if (fnmatch(rule.glob.c_str(), rel.c_str(), 0) == 0) selected.push_back(rel);
      }
    }
    if (rule.count) {
      if (selected.size() < *rule.count) {
        throw ValidationError("insufficient images for rule " + rule_name(rule) + " in " +
                              corpus.root.string() + ": need " + std::to_string(*rule.count) +
                              ", found " + std::to_string(selected.size()));
      }
      selected.resize(*rule.count);
    }
    for (const auto& rel : selected) {
      ImageRecord r;
      r.image_path = (corpus.root / rel).lexically_normal().generic_string();
      r.patient_id = corpus.patient_of(rel);
      r.label = label_of(rule.subgroup);
      r.subgroup = rule.subgroup;
      r.split = rule.split;
      r.source = rule.corpus;
      records.push_back(std::move(r));
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing image files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }

  DatasetManifest manifest = make_manifest(std::move(records));
  for (std::size_t i = 1; i < manifest.records.size(); ++i) {
    if (manifest.records[i].image_path == manifest.records[i - 1].image_path) {
      throw ValidationError("duplicate image_path " + manifest.records[i].image_path);
    }
  }
  std::map<std::string, std::set<Split>> splits_of;
  for (const auto& r : manifest.records) splits_of[r.patient_id].insert(r.split);
  std::vector<std::string> leaked;
  for (const auto& [patient, splits] : splits_of) {
    if (splits.size() > 1) leaked.push_back(patient);
  }
  if (!leaked.empty()) {
    std::string msg = "patient leak between TRAIN and TEST:";
    for (const auto& p : leaked) msg += " " + p;
    throw ValidationError(msg);
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(IssueKind kind) {
  switch (kind) {
    case IssueKind::MissingFile: return "MISSING_FILE";
    case IssueKind::UndecodableImage: return "UNDECODABLE_IMAGE";
    case IssueKind::DuplicatePath: return "DUPLICATE_PATH";
    case IssueKind::PatientLeak: return "PATIENT_LEAK";
    case IssueKind::LabelInconsistent: return "LABEL_INCONSISTENT";
    case IssueKind::AugmentedOutsideTrain: return "AUGMENTED_OUTSIDE_TRAIN";
    case IssueKind::CountMismatch: return "COUNT_MISMATCH";
    case IssueKind::SchemaVersion: return "SCHEMA_VERSION";
  }
  return "UNKNOWN";
}

std::size_t ValidationReport::count(IssueKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(issues.begin(), issues.end(), [kind](const Issue& i) { return i.kind == kind; }));
}

ValidationReport validate_manifest(const DatasetManifest& manifest, const ValidateOptions& opts) {
  ValidationReport report;
  auto add = [&](IssueKind k, std::string detail) { report.issues.push_back({k, std::move(detail)}); };

  if (manifest.schema_version != kManifestSchemaVersion) {
    add(IssueKind::SchemaVersion, "schema_version " + std::to_string(manifest.schema_version) +
                                      " != " + std::to_string(kManifestSchemaVersion));
  }

  std::set<std::string> seen;
  std::map<std::string, std::set<Split>> splits_of;
  for (const auto& r : manifest.records) {
    if (!seen.insert(r.image_path).second) add(IssueKind::DuplicatePath, r.image_path);
    splits_of[r.patient_id].insert(r.split);

    const bool covid_label = r.label == Label::Covid;
    const bool covid_group = r.subgroup == Subgroup::Covid;
    const bool covid_source = r.source == Source::CovidCorpus;
    if (covid_label != covid_group || covid_label != covid_source) {
      add(IssueKind::LabelInconsistent,
          r.image_path + ": label " + std::string(to_string(r.label)) + ", subgroup " +
              std::string(to_string(r.subgroup)) + ", source " + std::string(to_string(r.source)));
    }
    if (r.is_augmented && r.split != Split::Train) {
      add(IssueKind::AugmentedOutsideTrain, r.image_path);
    }
    if (opts.check_files) {
      if (!fs::is_regular_file(r.image_path)) {
        add(IssueKind::MissingFile, r.image_path);
      } else if (opts.decode_images && !try_load_image(r.image_path)) {
        add(IssueKind::UndecodableImage, r.image_path);
      }
    }
  }
  for (const auto& [patient, splits] : splits_of) {
    if (splits.size() > 1) add(IssueKind::PatientLeak, patient);
  }

  const Counts actual = tally(manifest.records);
  for (int s = 0; s < kNumSplits; ++s) {
    for (int g = 0; g < kNumSubgroups; ++g) {
      const auto split = static_cast<Split>(s);
      const auto group = static_cast<Subgroup>(g);
      if (actual.at(split, group) != manifest.counts.at(split, group)) {
        add(IssueKind::CountMismatch, std::string(to_string(split)) + "/" +
                                          std::string(to_string(group)) + ": stored " +
                                          std::to_string(manifest.counts.at(split, group)) +
                                          ", recomputed " + std::to_string(actual.at(split, group)));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

void write_manifest(const DatasetManifest& manifest, std::ostream& out) {
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    csv::write_row(out, {r.image_path, r.patient_id, std::string(to_string(r.label)),
                         std::string(to_string(r.subgroup)), std::string(to_string(r.split)),
                         std::string(to_string(r.source)), r.is_augmented ? "1" : "0",
                         r.augmentation_desc});
  }
}

std::string manifest_to_csv(const DatasetManifest& manifest) {
  std::ostringstream ss;
  write_manifest(manifest, ss);
  return ss.str();
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  write_manifest(manifest, out);
  if (!out) throw IoError("error writing manifest " + path.string());
}

DatasetManifest read_manifest(std::istream& in) {
  auto rows = csv::read(in);
  if (rows.empty()) throw ValidationError("manifest: empty file");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != kManifestHeader) throw ValidationError("manifest: unexpected header '" + header + "'");

  std::vector<ImageRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 8) {
      throw ValidationError("manifest: row " + std::to_string(i) + " has " +
                            std::to_string(row.size()) + " fields, expected 8");
    }
    ImageRecord r;
    r.image_path = row[0];
    r.patient_id = row[1];
    r.label = parse_label(row[2]);
    r.subgroup = parse_subgroup(row[3]);
    r.split = parse_split(row[4]);
    r.source = parse_source(row[5]);
    if (row[6] != "0" && row[6] != "1") {
      throw ValidationError("manifest: row " + std::to_string(i) + " is_augmented must be 0 or 1");
    }
    r.is_augmented = row[6] == "1";
    r.augmentation_desc = row[7];
    records.push_back(std::move(r));
  }
  return make_manifest(std::move(records));
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest " + path.string());
  return read_manifest(in);
}

}  // namespace cxr
