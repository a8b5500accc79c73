#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

#include "cxr/digest.hpp"
#include "cxr/manifest.hpp"

namespace fs = std::filesystem;

namespace cxr::testing {

fs::path data_dir() { return fs::path(CXR_SOURCE_DIR) / "tests" / "data"; }
fs::path source_dir() { return fs::path(CXR_SOURCE_DIR); }

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) + counter++);
  for (;;) {
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rng.next_u64() % 1000000000ULL));
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Image tiny_image(int index, int width, int height, int channels) {
  Image img(width, height, channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(x, y, c) = static_cast<std::uint8_t>((index * 37 + x * 11 + y * 5 + c * 70) % 256);
  return img;
}

Image smooth_image(int width, int height) {
  Image img(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      const double v = static_cast<double>(y) / height;
      const double base = 128 + 60 * std::sin(2 * std::numbers::pi * u) * std::cos(std::numbers::pi * v);
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(base));
      img.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(128 + 80 * std::cos(2 * std::numbers::pi * (u + v) / 2)));
      img.at(x, y, 2) = static_cast<std::uint8_t>(std::lround(40 + 150 * u * v));
    }
  }
  return img;
}

void write_images(const fs::path& dir, const std::string& prefix, int n, int channels) {
  fs::create_directories(dir);
  static int serial = 0;
  for (int i = 0; i < n; ++i) {
    char name[128];
    std::snprintf(name, sizeof name, "%s_%05d.png", prefix.c_str(), i);
    save_png(tiny_image(serial++, 8, 8, channels), dir / name);
  }
}

StandardCorpus make_standard_corpus(const fs::path& root) {
  StandardCorpus c{root / "covid", root / "negative"};
  write_images(c.covid_dir / "train", "covid_train", 31);
  write_images(c.covid_dir / "test", "covid_test", 40);
  for (const char* split : {"train", "test"}) {
    for (std::string_view folder : negative_subfolders()) {
      const bool normal = folder == "No_Finding";
      const int n = normal ? (std::string(split) == "train" ? 700 : 1700) : 100;
      write_images(c.negative_dir / split / std::string(folder),
                   std::string(split) + "_" + std::string(folder), n);
    }
  }
  return c;
}

ScoreSet random_scores(Rng& rng, std::size_t n, bool ties) {
  n = std::max<std::size_t>(n, 2);
  ScoreSet s;
  const std::size_t levels = 1 + rng.below(8);
  for (std::size_t i = 0; i < n; ++i) {
    ScoreEntry e;
    e.label = rng.below(2) ? Label::Covid : Label::NonCovid;
    e.subgroup = e.label == Label::Covid ? Subgroup::Covid : (rng.below(2) ? Subgroup::Normal : Subgroup::OtherDisease);
    if (ties) {
      e.score = (1.0 + static_cast<double>(rng.below(levels))) / (levels + 1.0);
    } else {
      e.score = 0.001 + 0.998 * rng.uniform01();
    }
    e.image_path = "img" + std::to_string(i);
    s.entries.push_back(std::move(e));
  }
  // Force both labels.
  s.entries[0].label = Label::Covid;
  s.entries[0].subgroup = Subgroup::Covid;
  s.entries[1].label = Label::NonCovid;
  s.entries[1].subgroup = Subgroup::Normal;
  return s;
}

double pairwise_auc(const ScoreSet& s) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (const auto& p : s.entries) {
    if (p.label != Label::Covid) continue;
    for (const auto& q : s.entries) {
      if (q.label != Label::NonCovid) continue;
      ++pairs;
      if (p.score > q.score) {
        wins += 1.0;
      } else if (p.score == q.score) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

std::vector<RocPoint> brute_force_roc(const ScoreSet& s) {
  std::set<double, std::greater<>> thresholds;
  for (const auto& e : s.entries) thresholds.insert(e.score);
  std::size_t p = 0, n = 0;
  for (const auto& e : s.entries) (e.label == Label::Covid ? p : n) += 1;
  std::vector<RocPoint> out{{0.0, 0.0}};
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (const auto& e : s.entries) {
      if (e.score >= t) (e.label == Label::Covid ? tp : fp) += 1;
    }
    out.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p});
  }
  return out;
}

std::string file_sha256(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return to_hex(sha256(bytes));
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[e.path().lexically_relative(root).generic_string()] = file_sha256(e.path());
  }
  return out;
}

}  // namespace cxr::testing
