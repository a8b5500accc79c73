#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.
// Nothing here calls the code path it is used to check.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cxr/evaluate.hpp"
#include "cxr/image.hpp"
#include "cxr/random.hpp"

namespace cxr::testing {

std::filesystem::path data_dir();
std::filesystem::path source_dir();

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cxr");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Small image whose pixels depend on `index`, so files differ.
Image tiny_image(int index, int width = 16, int height = 12, int channels = 1);

// Smooth RGB test image (sums of low-frequency sinusoids).
Image smooth_image(int width, int height);

struct StandardCorpus {
  std::filesystem::path covid_dir;
  std::filesystem::path negative_dir;
};

// covid/{train: 31, test: 40} and negative/{train,test}/<14 sub-folders>
// with 700/1700 no-finding and 100 per other sub-folder, as tiny PNGs.
StandardCorpus make_standard_corpus(const std::filesystem::path& root);

// Writes `n` tiny images named <prefix>_<i>.png into dir.
void write_images(const std::filesystem::path& dir, const std::string& prefix, int n, int channels = 1);

// Random ScoreSet with both labels present. Scores are drawn from a small
// set of levels when `ties` is set so that ties across classes are common.
ScoreSet random_scores(Rng& rng, std::size_t n, bool ties);

// Mann-Whitney estimate by comparing every (positive, negative) pair.
double pairwise_auc(const ScoreSet& s);

// ROC vertices by enumerating thresholds +inf and every distinct score with
// the rule "positive iff score >= t", in decreasing t.
std::vector<RocPoint> brute_force_roc(const ScoreSet& s);

// SHA-256 hex of every regular file under root, keyed by relative path.
std::map<std::string, std::string> hash_tree(const std::filesystem::path& root);

std::string file_sha256(const std::filesystem::path& p);

}  // namespace cxr::testing
