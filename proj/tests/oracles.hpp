#pragma once

// Straightforward reference implementations used to check the optimized code.

#include "m2trec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<long double>>;

template <class M>
Grid to_grid(const M& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<long double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[i][j] = static_cast<long double>(m(i, j));
  }
  return g;
}

inline Grid matmul(const Grid& a, const Grid& b) {
  Grid c(a.size(), std::vector<long double>(b[0].size(), 0.0L));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

inline Grid add_bias(Grid x, const std::vector<long double>& b) {
  for (auto& row : x) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  return x;
}

inline std::vector<long double> softmax(const std::vector<long double>& z) {
  long double m = z[0];
  for (const auto v : z) m = std::max(m, v);
  std::vector<long double> e(z.size());
  long double s = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - m));
  for (auto& v : e) v /= s;
  return e;
}

// Multi-head attention computed head by head with explicit loops.
inline Grid attention(const Grid& x, const Grid& wq, const std::vector<long double>& bq, const Grid& wk,
                      const std::vector<long double>& bk, const Grid& wv, const std::vector<long double>& bv,
                      const Grid& wo, const std::vector<long double>& bo, int heads) {
  const Grid q = add_bias(matmul(x, wq), bq);
  const Grid k = add_bias(matmul(x, wk), bk);
  const Grid v = add_bias(matmul(x, wv), bv);
  const std::size_t n = x.size();
  const std::size_t d = wq[0].size();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  Grid concat(n, std::vector<long double>(d, 0.0L));
  for (int h = 0; h < heads; ++h) {
    const std::size_t c = static_cast<std::size_t>(h) * dh;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<long double> scores(n);
      for (std::size_t j = 0; j < n; ++j) {
        long double s = 0.0L;
        for (std::size_t t = 0; t < dh; ++t) s += q[i][c + t] * k[j][c + t];
        scores[j] = s / std::sqrt(static_cast<long double>(dh));
      }
      const auto p = softmax(scores);
      for (std::size_t t = 0; t < dh; ++t) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < n; ++j) acc += p[j] * v[j][c + t];
        concat[i][c + t] = acc;
      }
    }
  }
  return add_bias(matmul(concat, wo), bo);
}

// Count of every adjacent single-character pair across ASCII words.
inline std::map<std::pair<std::string, std::string>, int> pair_counts(const std::vector<std::string>& words) {
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& w : words) {
    for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w.substr(i, 1), w.substr(i + 1, 1)}];
  }
  return counts;
}

// 1-based position of target in ranked, 0 when absent from the first k.
inline int rank_of(const std::vector<int>& ranked, int target, int k) {
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    if (ranked[static_cast<std::size_t>(i)] == target) return i + 1;
  }
  return 0;
}

}  // namespace oracle
