#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cxr/digest.hpp"
#include "cxr/image.hpp"
#include "cxr/manifest.hpp"
#include "cxr/types.hpp"

namespace cxr {

inline constexpr int kInputSize = 224;

// Width of the penultimate (pooled) layer of each supported network.
std::size_t feature_dim_of(Backbone b);

struct BackboneSpec {
  Backbone name = Backbone::ResNet18;
  std::filesystem::path model_path;
  std::size_t feature_dim = 512;
  int input_size = kInputSize;

  static BackboneSpec make(Backbone name, std::filesystem::path model_path);
  void validate() const;  // throws ValidationError
};

// Preprocessing constants. Everything here feeds preprocessing_hash.
struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
  int input_size = kInputSize;

  std::string describe() const;
};

Digest preprocessing_hash(const Normalization& norm = {});

// Bilinear resize (half-pixel centres, edge clamped, no aspect preservation)
// to input_size x input_size, grey replicated to three channels, then
// (v/255 - mean_c) / std_c. Returns a channel-first 3 x S x S tensor.
std::vector<float> preprocess(const Image& image, const Normalization& norm = {});

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;  // rows x cols, row-major
  std::vector<std::string> row_ids;
  Backbone backbone = Backbone::ResNet18;
  Digest preprocessing_hash{};

  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  // Shape, id count, finiteness, and feature_dim for real backbones.
  void validate() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Binary layout: "FEAT1", u32 N, u32 D, u8 backbone, u8[32] hash,
// N*D float32 row-major, then N x (u32 byte length, UTF-8 row id).
// All integers and floats little-endian.
void write_features(const FeatureMatrix& m, std::ostream& out);
void save_features(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_features(std::istream& in);
FeatureMatrix load_features(const std::filesystem::path& path);

// A frozen network loaded from an ONNX graph with input (1,3,S,S) and
// output (1,feature_dim). The constructor runs one probe inference to check
// the output shape.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(BackboneSpec spec, Normalization norm = {});
  ~FeatureExtractor();
  FeatureExtractor(FeatureExtractor&&) noexcept;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept;

  const BackboneSpec& spec() const { return spec_; }

  std::vector<float> run(std::span<const float> input_tensor);
  std::vector<float> extract(const Image& image);

  // Rows follow `rows` order. Throws NumericError naming the image when a
  // feature is not finite.
  FeatureMatrix extract_features(std::span<const ImageRecord> rows);

 private:
  struct Impl;
  BackboneSpec spec_;
  Normalization norm_;
  std::unique_ptr<Impl> impl_;
};

FeatureMatrix extract_features(const BackboneSpec& spec, std::span<const ImageRecord> rows,
                               const Normalization& norm = {});

}  // namespace cxr
