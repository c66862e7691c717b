#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace m2trec {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

// A named, trainable tensor. Vectors are stored as 1 x n matrices.
template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  // Rows are indexed by item identity (ID-embedding tables). Metadata-only
  // models must not own any of these.
  bool item_indexed = false;

  Index size() const { return value.size(); }
};

// Owns every parameter of a model, in registration order. Addresses are
// stable for the lifetime of the registry.
template <class T>
class ParameterRegistry {
 public:
  ParameterRegistry() = default;
  ParameterRegistry(const ParameterRegistry&) = delete;
  ParameterRegistry& operator=(const ParameterRegistry&) = delete;
  ParameterRegistry(ParameterRegistry&&) noexcept = default;
  ParameterRegistry& operator=(ParameterRegistry&&) noexcept = default;

  Parameter<T>& add(std::string name, Index rows, Index cols, bool item_indexed = false) {
    if (find(name) != nullptr) {
      throw std::logic_error("parameter '" + name + "' registered twice");
    }
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Matrix<T>::Zero(rows, cols);
    p->grad = Matrix<T>::Zero(rows, cols);
    p->item_indexed = item_indexed;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(std::string_view name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  const Parameter<T>* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  std::size_t count() const { return params_.size(); }
  Parameter<T>& at(std::size_t i) { return *params_.at(i); }
  const Parameter<T>& at(std::size_t i) const { return *params_.at(i); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

  std::vector<Matrix<T>> snapshot() const {
    std::vector<Matrix<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Matrix<T>>& values) {
    if (values.size() != params_.size()) {
      throw std::invalid_argument("snapshot does not match registry");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = values[i];
  }

  // Copies values by name from a registry of possibly different precision.
  template <class U>
  void copy_values_from(const ParameterRegistry<U>& other) {
    for (auto& p : params_) {
      const Parameter<U>* src = other.find(p->name);
      if (src == nullptr || src->value.rows() != p->value.rows() ||
          src->value.cols() != p->value.cols()) {
        throw std::invalid_argument("cannot copy parameter '" + p->name + "'");
      }
      p->value = src->value.template cast<T>();
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

}  // namespace m2trec
