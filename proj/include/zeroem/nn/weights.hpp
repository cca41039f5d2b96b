#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zeroem/nn/layers.hpp"

namespace zeroem::nn {

/// Named float32 tensors. On disk: "ZEMW0001", u32 count, then per tensor
/// u32 name length, name, u32 rows, u32 cols, rows*cols little-endian floats in row-major order.
using WeightsFile = std::map<std::string, Eigen::MatrixXf>;

inline constexpr char kWeightsMagic[] = "ZEMW0001";

void write_weights_file(const std::filesystem::path& path, const WeightsFile& weights);
/// Throws LoadError on a missing file, bad magic or truncated data.
WeightsFile read_weights_file(const std::filesystem::path& path);

template <typename Scalar>
WeightsFile export_weights(const std::vector<Parameter<Scalar>>& params) {
  WeightsFile out;
  for (const auto& p : params) out[p.name] = p.value.template cast<float>();
  return out;
}

/// Copies matching tensors into `params`. Returns the parameter names absent from
/// `weights`; throws std::invalid_argument on a shape mismatch.
template <typename Scalar>
std::vector<std::string> import_weights(std::vector<Parameter<Scalar>>& params, const WeightsFile& weights) {
  std::vector<std::string> missing;
  for (auto& p : params) {
    const auto it = weights.find(p.name);
    if (it == weights.end()) {
      missing.push_back(p.name);
      continue;
    }
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw std::invalid_argument("tensor '" + p.name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                                  std::to_string(it->second.cols()) + ", expected " + std::to_string(p.value.rows()) +
                                  "x" + std::to_string(p.value.cols()));
    }
    p.value = it->second.template cast<Scalar>();
  }
  return missing;
}

}  // namespace zeroem::nn
