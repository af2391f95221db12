#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedseg/hash.hpp"

namespace fedseg {

struct LayoutMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidWeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape of one tensor inside the flat parameter vector.
struct TensorShape {
  std::vector<std::uint32_t> dims;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  bool operator==(const TensorShape&) const = default;
};

inline std::size_t layout_count(const std::vector<TensorShape>& layout) {
  std::size_t n = 0;
  for (const auto& s : layout) n += s.count();
  return n;
}

// Flat vector of model weights plus its tensor layout. Treated as an
// immutable value: all operations return new sets. Two sets are
// compatible iff their layouts are identical.
struct ParameterSet {
  std::vector<double> values;
  std::vector<TensorShape> layout;

  static ParameterSet zeros(std::vector<TensorShape> layout) {
    ParameterSet p;
    p.values.assign(layout_count(layout), 0.0);
    p.layout = std::move(layout);
    return p;
  }

  bool compatible_with(const ParameterSet& other) const {
    return layout == other.layout;
  }

  std::size_t size() const { return values.size(); }

  // Checks the structural invariants: finite values, layout counts match.
  void validate() const {
    if (layout_count(layout) != values.size())
      throw LayoutMismatchError("layout element count does not match value count");
    for (double v : values)
      if (!std::isfinite(v))
        throw std::invalid_argument("parameter set contains non-finite value");
  }

  std::uint64_t digest() const {
    Fnv1a h;
    for (const auto& s : layout) h.update_vector(s.dims);
    h.update_vector(values);
    return h.digest();
  }
};

inline void require_compatible(const ParameterSet& a, const ParameterSet& b) {
  if (!a.compatible_with(b))
    throw LayoutMismatchError("parameter layouts differ");
}

// Convex combination sum_i weights[i] * sets[i]. Weights must each lie in
// [0, 1] and sum to 1 within 1e-9; every aggregation rule produces such a
// normalized vector.
inline ParameterSet weighted_sum(const std::vector<ParameterSet>& sets,
                                 const std::vector<double>& weights) {
  if (sets.empty()) throw std::invalid_argument("weighted_sum: no parameter sets");
  if (sets.size() != weights.size())
    throw InvalidWeightsError("weighted_sum: sets/weights length mismatch");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0))
      throw InvalidWeightsError("weighted_sum: weight outside [0,1]");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidWeightsError("weighted_sum: weights do not sum to 1");
  for (std::size_t i = 1; i < sets.size(); ++i) require_compatible(sets[0], sets[i]);

  ParameterSet out = ParameterSet::zeros(sets[0].layout);
  const std::size_t n = out.values.size();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const double w = weights[i];
    const auto& v = sets[i].values;
    for (std::size_t k = 0; k < n; ++k) out.values[k] += w * v[k];
  }
  return out;
}

// Squared L2 distance, the ||a - b||^2 of the proximal term.
inline double l2_sq_distance(const ParameterSet& a, const ParameterSet& b) {
  require_compatible(a, b);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double d = a.values[k] - b.values[k];
    acc += d * d;
  }
  return acc;
}

// a + alpha * b, element-wise.
inline ParameterSet scale_add(const ParameterSet& a, double alpha,
                              const ParameterSet& b) {
  require_compatible(a, b);
  ParameterSet out = a;
  for (std::size_t k = 0; k < out.values.size(); ++k)
    out.values[k] += alpha * b.values[k];
  return out;
}

}  // namespace fedseg
