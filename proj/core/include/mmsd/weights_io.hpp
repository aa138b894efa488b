#pragma once

#include <string>
#include <vector>

namespace mmsd {

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct WeightsFile {
  std::vector<NamedTensor> tensors;
  std::string metadata;  // optional JSON payload after the tensor table

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

// Container: "MMW1", u32 tensor count, then per tensor a length-prefixed
// name, u32 rank, u32 dims, raw little-endian f32 data. An optional
// trailing u32-length-prefixed JSON blob carries model metadata.
void save_weights(const std::string& path, const WeightsFile& file);
WeightsFile load_weights(const std::string& path);

}  // namespace mmsd
