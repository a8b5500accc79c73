#include "cxr/backbone.hpp"

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "binary_io.hpp"
#include "cxr/error.hpp"

namespace fs = std::filesystem;

namespace cxr {

std::size_t feature_dim_of(Backbone b) {
  switch (b) {
    case Backbone::ResNet18: return 512;
    case Backbone::ResNet50: return 2048;
    case Backbone::SqueezeNet: return 512;
    case Backbone::DenseNet121: return 1024;
    case Backbone::Synthetic: return 0;
  }
  return 0;
}

BackboneSpec BackboneSpec::make(Backbone name, fs::path model_path) {
  BackboneSpec s;
  s.name = name;
  s.model_path = std::move(model_path);
  s.feature_dim = feature_dim_of(name);
  return s;
}

void BackboneSpec::validate() const {
  if (name == Backbone::Synthetic) throw ValidationError("backbone: SYNTHETIC has no network");
  if (feature_dim != feature_dim_of(name)) {
    throw ValidationError("backbone " + std::string(to_string(name)) + ": feature_dim must be " +
                          std::to_string(feature_dim_of(name)));
  }
  if (input_size != kInputSize) throw ValidationError("backbone: input_size must be 224");
}

std::string Normalization::describe() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "resize=bilinear-halfpixel;size=%d;channels=rgb;scale=1/255;"
                "mean=%.17g,%.17g,%.17g;std=%.17g,%.17g,%.17g",
                input_size, mean[0], mean[1], mean[2], stddev[0], stddev[1], stddev[2]);
  return buf;
}

Digest preprocessing_hash(const Normalization& norm) { return sha256(norm.describe()); }

namespace {

struct AxisTap {
  int lo, hi;
  double frac;
};

std::vector<AxisTap> resize_taps(int src, int dst) {
  std::vector<AxisTap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double c = (i + 0.5) * scale - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(c));
    taps[i] = {lo, std::min(lo + 1, src - 1), c - lo};
  }
  return taps;
}

}  // namespace

std::vector<float> preprocess(const Image& image, const Normalization& norm) {
  if (image.empty() || image.width < 1 || image.height < 1) {
    throw ValidationError("preprocess: empty image");
  }
  const int s = norm.input_size;
  const auto xs = resize_taps(image.width, s);
  const auto ys = resize_taps(image.height, s);
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  std::vector<float> out(3 * plane);
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 1 ? 0 : c;
    for (int y = 0; y < s; ++y) {
      const auto& ty = ys[y];
      for (int x = 0; x < s; ++x) {
        const auto& tx = xs[x];
        const double p00 = image.at(tx.lo, ty.lo, src_c);
        const double p01 = image.at(tx.hi, ty.lo, src_c);
        const double p10 = image.at(tx.lo, ty.hi, src_c);
        const double p11 = image.at(tx.hi, ty.hi, src_c);
        const double top = p00 + tx.frac * (p01 - p00);
        const double bot = p10 + tx.frac * (p11 - p10);
        const double v = top + ty.frac * (bot - top);
        out[c * plane + static_cast<std::size_t>(y) * s + x] =
            static_cast<float>((v / 255.0 - norm.mean[c]) / norm.stddev[c]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// FeatureMatrix

void FeatureMatrix::validate() const {
  if (data.size() != rows * cols) throw ValidationError("features: data size does not match N x D");
  if (row_ids.size() != rows) throw ValidationError("features: row_ids count does not match N");
  if (backbone != Backbone::Synthetic && cols != feature_dim_of(backbone)) {
    throw ValidationError("features: D=" + std::to_string(cols) + " but " +
                          std::string(to_string(backbone)) + " has feature_dim " +
                          std::to_string(feature_dim_of(backbone)));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError("features: non-finite value in row " + row_ids[i / cols]);
    }
  }
}

void write_features(const FeatureMatrix& m, std::ostream& out) {
  m.validate();
  out.write("FEAT1", 5);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols));
  detail::put_u8(out, static_cast<std::uint8_t>(m.backbone));
  out.write(reinterpret_cast<const char*>(m.preprocessing_hash.data()), m.preprocessing_hash.size());
  for (float v : m.data) detail::put_f32(out, v);
  for (const auto& id : m.row_ids) {
    detail::put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
}

void save_features(const FeatureMatrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature file " + path.string());
  write_features(m, out);
  if (!out) throw IoError("error writing feature file " + path.string());
}

FeatureMatrix read_features(std::istream& in) {
  detail::Reader r(in, "feature file");
  r.expect_magic("FEAT1");
  FeatureMatrix m;
  m.rows = r.u32();
  m.cols = r.u32();
  m.backbone = backbone_from_code(r.u8());
  r.bytes(m.preprocessing_hash.data(), m.preprocessing_hash.size());
  m.data.resize(m.rows * m.cols);
  for (auto& v : m.data) v = r.f32();
  m.row_ids.resize(m.rows);
  for (auto& id : m.row_ids) {
    id.resize(r.u32());
    r.bytes(id.data(), id.size());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("feature file: trailing bytes");
  m.validate();
  return m;
}

FeatureMatrix load_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature file " + path.string());
  return read_features(in);
}

// ---------------------------------------------------------------------------
// FeatureExtractor

struct FeatureExtractor::Impl {
  cv::dnn::Net net;
  std::mutex mutex;  // Net::forward mutates internal buffers
};

FeatureExtractor::FeatureExtractor(BackboneSpec spec, Normalization norm)
    : spec_(std::move(spec)), norm_(norm), impl_(std::make_unique<Impl>()) {
  spec_.validate();
  if (!fs::is_regular_file(spec_.model_path)) {
    throw IoError("model file not found: " + spec_.model_path.string());
  }
  try {
    impl_->net = cv::dnn::readNetFromONNX(spec_.model_path.string());
  } catch (const cv::Exception& e) {
    throw IoError("cannot load ONNX graph " + spec_.model_path.string() + ": " + e.what());
  }
  if (impl_->net.empty()) throw IoError("empty ONNX graph " + spec_.model_path.string());
  impl_->net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  impl_->net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

  const std::vector<float> probe(3 * static_cast<std::size_t>(kInputSize) * kInputSize, 0.0f);
  run(probe);
}

FeatureExtractor::~FeatureExtractor() = default;
FeatureExtractor::FeatureExtractor(FeatureExtractor&&) noexcept = default;
FeatureExtractor& FeatureExtractor::operator=(FeatureExtractor&&) noexcept = default;

std::vector<float> FeatureExtractor::run(std::span<const float> input_tensor) {
  const int s = spec_.input_size;
  if (input_tensor.size() != 3 * static_cast<std::size_t>(s) * s) {
    throw ValidationError("extractor: input tensor must be 3x224x224");
  }
  const int shape[] = {1, 3, s, s};
  cv::Mat blob(4, shape, CV_32F, const_cast<float*>(input_tensor.data()));
  cv::Mat out;
  {
    std::lock_guard lock(impl_->mutex);
    try {
      impl_->net.setInput(blob);
      out = impl_->net.forward().clone();
    } catch (const cv::Exception& e) {
      throw ValidationError("extractor: inference failed for " + spec_.model_path.string() + ": " + e.what());
    }
  }
  std::vector<int> dims(out.size.p, out.size.p + out.dims);
  const bool shape_ok = out.dims == 2 && dims[0] == 1 && static_cast<std::size_t>(dims[1]) == spec_.feature_dim;
  if (!shape_ok) {
    std::string got = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) got += (i ? "," : "") + std::to_string(dims[i]);
    got += ")";
    throw ValidationError("extractor: graph output shape " + got + " does not match (1," +
                          std::to_string(spec_.feature_dim) + ") for " +
                          std::string(to_string(spec_.name)));
  }
  if (out.type() != CV_32F) out.convertTo(out, CV_32F);
  const float* p = out.ptr<float>();
  return {p, p + spec_.feature_dim};
}

std::vector<float> FeatureExtractor::extract(const Image& image) { return run(preprocess(image, norm_)); }

FeatureMatrix FeatureExtractor::extract_features(std::span<const ImageRecord> rows) {
  FeatureMatrix m;
  m.rows = rows.size();
  m.cols = spec_.feature_dim;
  m.backbone = spec_.name;
  m.preprocessing_hash = preprocessing_hash(norm_);
  m.data.reserve(m.rows * m.cols);
  for (const auto& rec : rows) {
    const auto f = extract(load_image(rec.image_path));
    for (float v : f) {
      if (!std::isfinite(v)) throw NumericError("extractor: non-finite feature for " + rec.image_path);
    }
    m.data.insert(m.data.end(), f.begin(), f.end());
    m.row_ids.push_back(rec.image_path);
  }
  return m;
}

FeatureMatrix extract_features(const BackboneSpec& spec, std::span<const ImageRecord> rows,
                               const Normalization& norm) {
  FeatureExtractor ex(spec, norm);
  return ex.extract_features(rows);
}

}  // namespace cxr
