#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "speechface/nn.hpp"
#include "speechface/tensor.hpp"

namespace speechface {

/// Checkpoint container: one binary blob per parameter group. The file
/// starts with a JSON header (kind, format version, flat config map,
/// tensor manifest) followed by raw little-endian float64 payloads in
/// manifest order.
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const std::map<std::string, std::string>& config,
                     const NamedConstTensors& tensors);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace speechface
