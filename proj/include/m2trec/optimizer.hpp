#pragma once

#include "m2trec/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace m2trec {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient norm cap; <= 0 disables clipping

  void validate() const;
  nlohmann::json to_json() const;
  static AdamConfig from_json(const nlohmann::json& j);
};

template <class T>
class Adam {
 public:
  Adam(ParameterRegistry<T>& registry, AdamConfig config);

  // Applies one update from the accumulated gradients. Returns the global
  // gradient norm before clipping.
  double step();

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const Matrix<T>& first_moment(std::size_t i) const { return m_.at(i); }
  const Matrix<T>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  ParameterRegistry<T>& registry_;
  AdamConfig config_;
  std::vector<Matrix<T>> m_, v_;
  std::uint64_t steps_ = 0;
};

// sqrt of the sum of squared gradient entries over every parameter.
template <class T>
double global_grad_norm(const ParameterRegistry<T>& registry);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace m2trec
