#pragma once

#include <string>
#include <utility>
#include <vector>

#include "langtrack/tensor.hpp"

namespace langtrack {

/// Self-describing weight container: a plain-text manifest (the layer list)
/// followed by named tensors stored as little-endian float64 (float32 when
/// `float32` storage is requested).
struct Checkpoint {
  std::string manifest;
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const std::string& manifest,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries,
                     bool float32 = false);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace langtrack
