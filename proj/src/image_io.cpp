#include "rod/image_io.hpp"

#include <png.h>

#include <cstring>

#include "rod/error.hpp"

namespace rod {

namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::string png_message(const png_image& image) { return image.message; }

}  // namespace

PngInfo read_png_info(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png_message(png.image));
  }
  return {png.image.width, png.image.height, (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0};
}

Image8 read_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png_message(png.image));
  }
  const bool color = (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out(png.image.width, png.image.height, color ? 3 : 1);
  // Alpha, if present, is composited onto black.
  if (!png_image_finish_read(&png.image, nullptr, out.data.data(), 0, nullptr)) {
    throw IoError("corrupt PNG " + path.string() + ": " + png_message(png.image));
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("write_png: unsupported channel count " + std::to_string(image.channels));
  }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(image.width);
  png.image.height = static_cast<png_uint_32>(image.height);
  png.image.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, image.data.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png_message(png.image));
  }
}

}  // namespace rod
