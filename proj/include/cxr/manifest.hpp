#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/types.hpp"

namespace cxr {

inline constexpr int kManifestSchemaVersion = 1;

struct ImageRecord {
  std::string image_path;
  std::string patient_id;
  Label label = Label::NonCovid;
  Subgroup subgroup = Subgroup::Normal;
  Split split = Split::Train;
  Source source = Source::NegativeCorpus;
  bool is_augmented = false;
  std::string augmentation_desc;  // empty when not augmented

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Image tally indexed by [split][subgroup].
struct Counts {
  std::array<std::array<std::size_t, kNumSubgroups>, kNumSplits> cells{};

  std::size_t& at(Split s, Subgroup g) {
    return cells[static_cast<int>(s)][static_cast<int>(g)];
  }
  std::size_t at(Split s, Subgroup g) const {
    return cells[static_cast<int>(s)][static_cast<int>(g)];
  }
  std::size_t label_total(Split s, Label l) const;
  std::size_t total() const;

  friend bool operator==(const Counts&, const Counts&) = default;
};

Counts tally(std::span<const ImageRecord> records);

struct DatasetManifest {
  std::vector<ImageRecord> records;  // sorted by image_path
  Counts counts;
  int schema_version = kManifestSchemaVersion;
};

// Sorts records by path and recomputes the tallies.
DatasetManifest make_manifest(std::vector<ImageRecord> records);

// ---------------------------------------------------------------------------
// Split specification

// One selection rule: images of a corpus whose path (relative to the corpus
// root, '/'-separated) matches `glob`, or the explicit `files` list. With a
// count, the first `count` matches in path order are taken and fewer matches
// is an error.
struct SplitRule {
  Source corpus = Source::NegativeCorpus;
  std::string glob;
  std::vector<std::string> files;
  Split split = Split::Train;
  Subgroup subgroup = Subgroup::Normal;
  std::optional<std::size_t> count;  // nullopt == all
};

// A CSV that maps image files to patients. The path column may hold either
// the corpus-relative path or just the file name.
struct PatientMetadata {
  std::filesystem::path file;  // relative paths resolve against the corpus root
  std::string path_column = "filename";
  std::string patient_column = "patientid";
};

struct SplitSpec {
  std::vector<SplitRule> rules;
  std::optional<PatientMetadata> covid_metadata;
  std::optional<PatientMetadata> negative_metadata;

  static SplitSpec from_yaml(const std::string& text);
  static SplitSpec load(const std::filesystem::path& path);

  // 31/40 COVID images from covid_dir/{train,test}, and the 14 negative
  // sub-folders: 700 + 13x100 no-finding/other for training, 1700 + 13x100
  // for testing.
  static SplitSpec standard_layout();
};

// Names of the negative corpus sub-folders used by standard_layout().
std::span<const std::string_view> negative_subfolders();

bool has_image_extension(const std::filesystem::path& p);

// Throws IoError for missing directories or files named by explicit lists,
// ValidationError for duplicates, shortfalls and patient leakage.
DatasetManifest build_manifest(const std::filesystem::path& covid_dir,
                               const std::filesystem::path& negative_dir,
                               const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Validation

enum class IssueKind {
  MissingFile,
  UndecodableImage,
  DuplicatePath,
  PatientLeak,
  LabelInconsistent,
  AugmentedOutsideTrain,
  CountMismatch,
  SchemaVersion,
};

std::string_view to_string(IssueKind kind);

struct Issue {
  IssueKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Issue> issues;

  bool ok() const { return issues.empty(); }
  std::size_t count(IssueKind kind) const;
};

struct ValidateOptions {
  bool check_files = true;
  bool decode_images = true;
};

ValidationReport validate_manifest(const DatasetManifest& manifest, const ValidateOptions& opts = {});

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kManifestHeader =
    "image_path,patient_id,label,subgroup,split,source,is_augmented,augmentation_desc";

void write_manifest(const DatasetManifest& manifest, std::ostream& out);
std::string manifest_to_csv(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Counts are recomputed from the records read.
DatasetManifest read_manifest(std::istream& in);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace cxr
