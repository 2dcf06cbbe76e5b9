#include "siamreid/nn/parameters.hpp"

#include "siamreid/error.hpp"

namespace siamreid::nn {

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw Error(ErrorCode::kInvalidConfig, "duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(value.shape());
  p->value = std::move(value);
  p->trainable = trainable;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) noexcept {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const noexcept {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    if (p->trainable) p->grad.fill(0.0f);
  }
}

void ParameterStore::scale_grad(float factor) {
  for (auto& p : params_) {
    if (!p->trainable) continue;
    for (float& g : p->grad.values()) g *= factor;
  }
}

std::size_t ParameterStore::count(bool trainable) const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->trainable == trainable) n += p->value.size();
  }
  return n;
}

std::uint64_t ParameterStore::checksum(std::string_view prefix) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    if (p->name.starts_with(prefix)) h = siamreid::checksum(p->value.values(), h);
  }
  return h;
}

void ParameterStore::load(const TensorArchive& archive, std::string_view prefix, bool require_all) {
  for (auto& p : params_) {
    if (!p->name.starts_with(prefix)) continue;
    auto it = archive.find(p->name);
    if (it == archive.end()) {
      if (require_all) throw Error(ErrorCode::kWeightsUnavailable, "weights missing tensor " + p->name);
      continue;
    }
    if (it->second.shape() != p->value.shape()) {
      throw Error(ErrorCode::kWeightsUnavailable, "tensor " + p->name + " has shape " +
                                                      shape_string(it->second.shape()) + ", expected " +
                                                      shape_string(p->value.shape()));
    }
    p->value = it->second;
  }
}

TensorArchive ParameterStore::export_values(std::string_view prefix) const {
  TensorArchive out;
  for (const auto& p : params_) {
    if (p->name.starts_with(prefix)) out.emplace(p->name, p->value);
  }
  return out;
}

}  // namespace siamreid::nn
