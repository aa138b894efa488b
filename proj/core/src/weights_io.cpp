#include "mmsd/weights_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmsd/errors.hpp"

namespace mmsd {
namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("truncated weights file reading " + what);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_weights(const std::string& path, const WeightsFile& file) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot open for write: " + tmp);
    os.write("MMW1", 4);
    put_u32(os, static_cast<uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
      put_u32(os, static_cast<uint32_t>(t.name.size()));
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put_u32(os, static_cast<uint32_t>(t.shape.size()));
      size_t count = 1;
      for (int d : t.shape) {
        if (d < 1) throw UsageError("tensor dims must be positive");
        put_u32(os, static_cast<uint32_t>(d));
        count *= static_cast<size_t>(d);
      }
      if (count != t.data.size()) {
        throw UsageError("tensor data does not match dims: " + t.name);
      }
      static_assert(sizeof(float) == 4);
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * 4));
    }
    if (!file.metadata.empty()) {
      put_u32(os, static_cast<uint32_t>(file.metadata.size()));
      os.write(file.metadata.data(),
               static_cast<std::streamsize>(file.metadata.size()));
    }
    if (!os) throw DataError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

WeightsFile load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open weights file: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MMW1", 4) != 0) {
    throw DataError("not a weights file (bad magic): " + path);
  }
  WeightsFile file;
  uint32_t count = get_u32(is, "tensor count");
  file.tensors.resize(count);
  for (auto& t : file.tensors) {
    uint32_t name_len = get_u32(is, "name length");
    if (name_len > 4096) throw DataError("implausible tensor name length");
    t.name.resize(name_len);
    if (!is.read(t.name.data(), name_len)) {
      throw DataError("truncated weights file reading name");
    }
    uint32_t rank = get_u32(is, "rank");
    if (rank > 8) throw DataError("implausible tensor rank: " + t.name);
    size_t n = 1;
    t.shape.resize(rank);
    for (auto& d : t.shape) {
      uint32_t dim = get_u32(is, "dim of " + t.name);
      if (dim == 0 || dim > (1u << 28)) {
        throw DataError("implausible tensor dim: " + t.name);
      }
      d = static_cast<int>(dim);
      n *= dim;
      if (n > (1ull << 32)) throw DataError("implausible tensor size: " + t.name);
    }
    t.data.resize(n);
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(n * 4))) {
      throw DataError("truncated weights file reading data of " + t.name);
    }
    for (float v : t.data) {
      if (!std::isfinite(v)) {
        throw DataError("non-finite parameter in tensor " + t.name);
      }
    }
  }
  // trailing metadata blob is optional
  if (is.peek() != std::char_traits<char>::eof()) {
    uint32_t len = get_u32(is, "metadata length");
    file.metadata.resize(len);
    if (!is.read(file.metadata.data(), len)) {
      throw DataError("truncated weights file reading metadata");
    }
    if (is.peek() != std::char_traits<char>::eof()) {
      throw DataError("trailing bytes after metadata: " + path);
    }
  }
  return file;
}

}  // namespace mmsd
