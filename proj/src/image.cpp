#include "cxr/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstring>

#include "cxr/error.hpp"

namespace cxr {

namespace {

Image from_mat(const cv::Mat& decoded) {
  cv::Mat mat = decoded;
  if (mat.depth() != CV_8U) {
    double scale = mat.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
    mat.convertTo(mat, CV_8U, scale);
  }
  switch (mat.channels()) {
    case 1:
      break;
    case 3:
      cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
      break;
    default:
      return {};
  }
  Image out(mat.cols, mat.rows, mat.channels());
  const std::size_t row_bytes = static_cast<std::size_t>(mat.cols) * mat.channels();
  for (int y = 0; y < mat.rows; ++y) {
    std::memcpy(out.pixels.data() + y * row_bytes, mat.ptr<std::uint8_t>(y), row_bytes);
  }
  return out;
}

}  // namespace

std::optional<Image> try_load_image(const std::filesystem::path& path) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_ANYCOLOR | cv::IMREAD_ANYDEPTH);
  } catch (const cv::Exception&) {
    return std::nullopt;
  }
  if (mat.empty()) return std::nullopt;
  Image img = from_mat(mat);
  if (img.empty()) return std::nullopt;
  return img;
}

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  auto img = try_load_image(path);
  if (!img) throw IoError("cannot decode image: " + path.string());
  return std::move(*img);
}

void save_png(const Image& image, const std::filesystem::path& path) {
  if (image.empty() || (image.channels != 1 && image.channels != 3)) {
    throw IoError("save_png: unsupported image for " + path.string());
  }
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat view(image.height, image.width, type, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  if (image.channels == 3) {
    cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR);
  } else {
    bgr = view;
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace cxr
