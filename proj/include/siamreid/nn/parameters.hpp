#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "siamreid/tensor.hpp"
#include "siamreid/tensor_archive.hpp"

namespace siamreid::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Owns every parameter of a network. Addresses are stable for the store's
/// lifetime, so layers may hold raw pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter& add(std::string name, Tensor value, bool trainable);
  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) noexcept { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const noexcept { return *params_[i]; }

  void zero_grad();
  void scale_grad(float factor);

  /// Number of scalar values in trainable (or frozen) parameters.
  std::size_t count(bool trainable) const noexcept;
  /// Checksum over parameters whose name starts with `prefix`, in insertion order.
  std::uint64_t checksum(std::string_view prefix = {}) const noexcept;

  /// Copies values for every archive entry whose name matches a parameter.
  /// Throws kWeightsUnavailable on missing names or shape mismatch when `require_all`.
  void load(const TensorArchive& archive, std::string_view prefix, bool require_all);
  TensorArchive export_values(std::string_view prefix = {}) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace siamreid::nn
