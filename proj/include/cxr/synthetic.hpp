#pragma once

#include <cstddef>
#include <cstdint>

#include "cxr/backbone.hpp"
#include "cxr/manifest.hpp"

namespace cxr {

// Two Gaussian clouds with unit variance and means at +/- `offset` in every
// coordinate. COVID rows sit at +offset. Stands in for backbone features so
// train and evaluate can run without images or models.
struct SyntheticSpec {
  std::size_t dim = 16;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 200;
  double offset = 1.5;
  std::uint64_t seed = 20200428;
};

struct SyntheticFixture {
  DatasetManifest manifest;  // placeholder image paths; no files exist
  FeatureMatrix train;
  FeatureMatrix test;
};

SyntheticFixture make_synthetic_fixture(const SyntheticSpec& spec = {});

}  // namespace cxr
