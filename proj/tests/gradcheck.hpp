#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dor/autograd.hpp"
#include "dor/rng.hpp"

namespace dor::testing {

struct GradCheckResult {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::size_t checked = 0;
};

// Compares backward() of a scalar loss against central differences with step
// h = 1e-5 * max(1, |x|). At most `max_entries` entries per input are probed,
// picked at random; 0 probes all of them.
inline GradCheckResult grad_check(const std::function<nn::Var()>& loss, std::vector<nn::Var> inputs,
                                  std::size_t max_entries = 0, std::uint64_t seed = 1) {
  for (auto& in : inputs) in.zero_grad();
  nn::Var l = loss();
  l.backward();
  std::vector<nn::Tensor> analytic;
  for (auto& in : inputs) analytic.push_back(in.grad());

  Rng rng(seed);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradCheckResult r;
  const nn::NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    nn::Tensor& x = inputs[t].mutable_value();
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_entries != 0 && idx.size() > max_entries) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(max_entries);
    }
    for (std::size_t i : idx) {
      const double orig = x[i];
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      x[i] = orig + h;
      const double up = loss().item();
      x[i] = orig - h;
      const double down = loss().item();
      x[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++r.checked;
    }
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  r.rel_error = std::sqrt(diff2) / denom;
  return r;
}

inline nn::Tensor random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(shape, 0.0);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace dor::testing
