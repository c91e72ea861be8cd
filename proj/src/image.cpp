// SPDX-License-Identifier: Apache-2.0
#include "ddnet/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace ddnet {

Image::Image(FeatureMap planes) : planes_(std::move(planes)) {
  require(planes_.channels() == 1 || planes_.channels() == 3, "image must have 1 or 3 channels");
  require(planes_.height() >= 1 && planes_.width() >= 1, "image must be nonempty");
  const auto& m = planes_.matrix();
  require(m.allFinite() && m.minCoeff() >= 0.0f && m.maxCoeff() <= 1.0f, "image intensities must lie in [0, 1]");
}

Image Image::constant(int channels, int height, int width, float value) {
  return Image(FeatureMap::constant(channels, height, width, value));
}

Image Image::clamped(FeatureMap planes) {
  planes.matrix() = planes.matrix().cwiseMax(0.0f).cwiseMin(1.0f);
  return Image(std::move(planes));
}

GradientMap::GradientMap(FeatureMap planes) : planes_(std::move(planes)) {
  require(planes_.channels() == 1, "gradient map must have exactly one channel");
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  const auto& m = img.planes().matrix();
  FeatureMap out(1, img.height(), img.width());
  out.matrix() = 0.299f * m.row(0) + 0.587f * m.row(1) + 0.114f * m.row(2);
  // Weights sum to 1 but float rounding can overshoot by one ulp.
  return Image::clamped(std::move(out));
}

namespace {

Image from_interleaved(const std::uint8_t* bytes, int height, int width, int stride_channels, int channels) {
  FeatureMap planes(channels, height, width);
  const Eigen::Index n = Eigen::Index(height) * width;
  for (Eigen::Index p = 0; p < n; ++p)
    for (int c = 0; c < channels; ++c)
      planes.matrix()(c, p) = static_cast<float>(bytes[p * stride_channels + c]) / 255.0f;
  return Image(std::move(planes));
}

Image load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(ErrorKind::format, path.string() + ": " + image.message);

  const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
  const bool alpha = image.format & PNG_FORMAT_FLAG_ALPHA;
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail(ErrorKind::format, path.string() + ": only 8-bit PNG is supported");
  }
  // Request the alpha channel when present so libpng never composites; it is
  // dropped below.
  image.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::format, path.string() + ": " + msg);
  }
  const int channels = color ? 3 : 1;
  return from_interleaved(buffer.data(), static_cast<int>(image.height), static_cast<int>(image.width),
                          channels + (alpha ? 1 : 0), channels);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image load_jpeg(const std::filesystem::path& path) {
  std::FILE* file = std::fopen(path.c_str(), "rb");
  if (!file) fail(ErrorKind::io, "cannot open " + path.string());

  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> buffer;
  int height = 0, width = 0, channels = 0;

  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(file);
    fail(ErrorKind::format, path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components == 1) {
    cinfo.out_color_space = JCS_GRAYSCALE;
  } else if (cinfo.jpeg_color_space == JCS_YCbCr || cinfo.jpeg_color_space == JCS_RGB) {
    cinfo.out_color_space = JCS_RGB;
  } else {
    std::snprintf(err.message, sizeof err.message, "unsupported JPEG color space");
    std::longjmp(err.jump, 1);
  }
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  channels = cinfo.output_components;
  buffer.resize(std::size_t(height) * width * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + std::size_t(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(file);
  return from_interleaved(buffer.data(), height, width, channels, channels);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), sizeof magic);
  if (in.gcount() >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(path);
  if (in.gcount() >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return load_jpeg(path);
  fail(ErrorKind::format, path.string() + ": not a PNG or JPEG file");
}

void save_image(const FeatureMap& planes, const std::filesystem::path& path) {
  const int channels = planes.channels();
  require(channels == 1 || channels == 3, "save_image: 1 or 3 channels required");
  std::vector<std::uint8_t> bytes(std::size_t(planes.pixels()) * channels);
  for (Eigen::Index p = 0; p < planes.pixels(); ++p)
    for (int c = 0; c < channels; ++c) bytes[p * channels + c] = quantize(planes.matrix()(c, p));

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(planes.width());
  image.height = static_cast<png_uint_32>(planes.height());
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    fail(ErrorKind::io, path.string() + ": " + image.message);
}

}  // namespace ddnet
