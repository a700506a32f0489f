#pragma once

// PNG and JPEG decoding to RgbImage, PNG encoding for generated corpora.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

// jpeglib.h expects FILE and size_t to be declared first.
#include <jpeglib.h>

#include "soilfusion/error.hpp"
#include "soilfusion/texture.hpp"

namespace soilfusion {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

// Decodes into `out`; returns an error message or an empty string. No
// objects with destructors are created between setjmp and the last libjpeg call.
inline std::string decode_jpeg(std::FILE* file, std::size_t& width, std::size_t& height, std::vector<unsigned char>& out) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return err.message[0] ? err.message : "invalid JPEG data";
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = cinfo.output_width;
  height = cinfo.output_height;
  if (cinfo.output_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    return "unsupported JPEG component count";
  }
  out.resize(width * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return {};
}

inline RgbImage from_interleaved(std::size_t width, std::size_t height, const std::vector<unsigned char>& bytes) {
  std::vector<Rgb> pixels(width * height);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = {bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]};
  }
  return RgbImage(width, height, std::move(pixels));
}

}  // namespace detail

inline RgbImage read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorKind::DecodeError, path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::DecodeError, path + ": " + msg);
  }
  return detail::from_interleaved(image.width, image.height, bytes);
}

inline RgbImage read_jpeg(const std::string& path) {
  detail::FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::size_t width = 0, height = 0;
  std::vector<unsigned char> bytes;
  if (auto msg = detail::decode_jpeg(file.get(), width, height, bytes); !msg.empty()) {
    throw Error(ErrorKind::DecodeError, path + ": " + msg);
  }
  return detail::from_interleaved(width, height, bytes);
}

inline bool is_supported_image(const std::filesystem::path& path) {
  const auto ext = detail::lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Dispatches on file extension (.png, .jpg, .jpeg; case-insensitive).
inline RgbImage read_image(const std::string& path) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  throw Error(ErrorKind::DecodeError, path + ": unsupported image extension '" + ext + "'");
}

inline void write_png(const std::string& path, const RgbImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  image.flags = PNG_IMAGE_FLAG_FAST;
  std::vector<unsigned char> bytes(img.pixels().size() * 3);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    bytes[3 * i] = img.pixels()[i].r;
    bytes[3 * i + 1] = img.pixels()[i].g;
    bytes[3 * i + 2] = img.pixels()[i].b;
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error(ErrorKind::IoError, path + ": " + image.message);
  }
}

/// `<sampleId>_<replicateIndex>.<ext>`; the id may itself contain underscores.
struct ImageName {
  std::string sample_id;
  int replicate = 0;
};

inline std::optional<ImageName> parse_image_name(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const auto pos = stem.rfind('_');
  if (pos == std::string::npos || pos == 0 || pos + 1 == stem.size()) return std::nullopt;
  const std::string rep = stem.substr(pos + 1);
  if (!std::all_of(rep.begin(), rep.end(), [](unsigned char c) { return std::isdigit(c); })) return std::nullopt;
  if (rep.size() > 9) return std::nullopt;
  return ImageName{stem.substr(0, pos), std::stoi(rep)};
}

}  // namespace soilfusion
