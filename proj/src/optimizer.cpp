#include "m2trec/optimizer.hpp"

#include "m2trec/errors.hpp"

#include <cmath>

namespace m2trec {

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
}

nlohmann::json AdamConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"beta1", beta1}, {"beta2", beta2},
          {"epsilon", epsilon},             {"clip_norm", clip_norm}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j) {
  AdamConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

template <class T>
double global_grad_norm(const ParameterRegistry<T>& registry) {
  double sum = 0.0;
  for (std::size_t i = 0; i < registry.count(); ++i) {
    sum += registry.at(i).grad.template cast<double>().squaredNorm();
  }
  return std::sqrt(sum);
}

template <class T>
Adam<T>::Adam(ParameterRegistry<T>& registry, AdamConfig config) : registry_(registry), config_(config) {
  config_.validate();
  for (std::size_t i = 0; i < registry_.count(); ++i) {
    const auto& p = registry_.at(i);
    m_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <class T>
double Adam<T>::step() {
  if (m_.size() != registry_.count()) throw std::logic_error("parameters registered after optimizer creation");
  const double norm = global_grad_norm(registry_);
  const T clip = config_.clip_norm > 0.0 && norm > config_.clip_norm ? static_cast<T>(config_.clip_norm / norm)
                                                                       : T(1);
  ++steps_;
  const auto t = static_cast<double>(steps_);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.epsilon);
  for (std::size_t i = 0; i < registry_.count(); ++i) {
    auto& p = registry_.at(i);
    const auto g = (p.grad.array() * clip);
    m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
  return norm;
}

template double global_grad_norm(const ParameterRegistry<float>&);
template double global_grad_norm(const ParameterRegistry<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace m2trec
