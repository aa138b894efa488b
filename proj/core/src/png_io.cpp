#include "mmsd/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "mmsd/errors.hpp"

namespace mmsd {

Image8 load_png(const std::string& path) {
  png_image png;
  memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError("cannot read PNG " + path + ": " + png.message);

  Image8 img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  // Collapse everything to gray or RGB; alpha is dropped.
  bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  img.channels = gray ? 1 : 3;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path + ": " + png.message);
  }
  return img;
}

void save_png(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("save_png: channels must be 1 or 3");
  png_image png;
  memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0,
                               nullptr))
    throw DataError("cannot write PNG " + path + ": " + png.message);
}

namespace {

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments between header fields.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

}  // namespace

Image8 load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6")
    throw DataError(path + ": unsupported PNM magic '" + magic + "'");
  Image8 img;
  img.channels = magic == "P6" ? 3 : 1;
  img.width = read_pnm_token(in);
  img.height = read_pnm_token(in);
  int maxval = read_pnm_token(in);
  if (img.width <= 0 || img.height <= 0 || maxval != 255)
    throw DataError(path + ": bad PNM header (only maxval 255 supported)");
  in.get();  // single whitespace before payload
  size_t n = static_cast<size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw DataError(path + ": truncated PNM payload");
  return img;
}

void save_ppm(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("save_ppm: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError("short write to " + path);
}

}  // namespace mmsd
