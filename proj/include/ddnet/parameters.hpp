// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ddnet/planes.hpp"

namespace ddnet {

/// How a parameter was initialized; kept so checkpoints are self-describing.
enum class Init { kaiming, zeros, ones, constant };

constexpr std::string_view to_string(Init init) {
  switch (init) {
    case Init::kaiming: return "kaiming";
    case Init::zeros: return "zeros";
    case Init::ones: return "ones";
    case Init::constant: return "constant";
  }
  return "unknown";
}

template <typename Scalar>
struct Parameter {
  std::string name;
  std::vector<int> shape;  // logical shape, e.g. {cout, cin, k, k}
  Init init = Init::zeros;
  RowMatrix<Scalar> value;  // stored as rows x cols, product of shape preserved
};

/// Ordered, named parameter collection. Indices are stable handles.
template <typename Scalar>
class ParameterStore {
 public:
  int add(std::string name, std::vector<int> shape, Eigen::Index rows, Eigen::Index cols, Init init) {
    const int index = static_cast<int>(items_.size());
    items_.push_back({std::move(name), std::move(shape), init, RowMatrix<Scalar>::Zero(rows, cols)});
    return index;
  }

  int size() const { return static_cast<int>(items_.size()); }
  Parameter<Scalar>& operator[](int i) { return items_[i]; }
  const Parameter<Scalar>& operator[](int i) const { return items_[i]; }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  int find(std::string_view name) const {
    for (int i = 0; i < size(); ++i)
      if (items_[i].name == name) return i;
    return -1;
  }

  bool all_finite() const {
    for (const auto& p : items_)
      if (!p.value.allFinite()) return false;
    return true;
  }

  /// One zero-filled matrix per parameter, shaped like the values.
  std::vector<RowMatrix<Scalar>> zeros_like() const {
    std::vector<RowMatrix<Scalar>> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(RowMatrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    return out;
  }

 private:
  std::vector<Parameter<Scalar>> items_;
};

}  // namespace ddnet
