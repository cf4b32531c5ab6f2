#pragma once

#include "doctest.h"

#include "jepa/core/ops.hpp"
#include "jepa/core/rng.hpp"
#include "jepa/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jepa::test {

// Fresh empty directory under the system temp root, wiped at creation so a
// rerun never sees stale artifacts.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "jepa-tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <class E, class F>
std::string thrown_message(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  } catch (...) {
    FAIL("wrong exception type");
    return "";
  }
  FAIL("no exception thrown");
  return "";
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::logic_error("max_abs_diff: shape mismatch");
  double m = 0;
  const Scalar *ad = a.data(), *bd = b.data();
  for (Eigen::Index i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double(ad[i]) - double(bd[i])));
  return m;
}

inline bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(Scalar)) == 0;
}

struct GradCheckResult {
  int checked = 0;
  int skipped = 0;
  double max_rel = 0;
  double floor = 0;
};

// Central finite differences against analytic gradients on randomly drawn
// parameter entries. Forward math runs in 32-bit floats, so each loss read
// carries rounding of order eps32 * |loss|; dividing by 2h turns that into an
// absolute noise floor on the difference quotient. Entries whose analytic
// gradient sits below floor_mul * max(1, |loss|) are skipped as unmeasurable
// at this precision, and the draw moves on until `want` entries are checked.
template <class LossFn>
GradCheckResult gradcheck(std::vector<NamedParameter>& params, LossFn&& loss_fn, std::uint64_t key,
                          int want, Scalar h = 1e-3f, double floor_mul = 2e-3) {
  for (auto& np : params) np.param->value().zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  double loss0 = std::abs(double(loss.item()));

  std::vector<NamedParameter*> trainable;
  std::vector<ArrayX> analytic;
  std::vector<Eigen::Index> offset;
  Eigen::Index total = 0;
  for (auto& np : params) {
    if (!np.param->trainable()) continue;
    trainable.push_back(&np);
    analytic.push_back(np.param->value().grad().values());
    offset.push_back(total);
    total += np.param->value().numel();
  }
  if (total == 0) throw std::logic_error("gradcheck: no trainable parameters");

  GradCheckResult r;
  r.floor = std::max(1e-6, floor_mul * std::max(1.0, loss0));
  auto eval = [&]() -> double {
    NoGradGuard guard;
    return double(loss_fn().item());
  };
  std::set<Eigen::Index> seen;
  const int cap = want * 600;
  for (int draw = 0; draw < cap && r.checked < want; ++draw) {
    Eigen::Index g = Eigen::Index(rng::index(key, std::uint64_t(draw), std::uint64_t(total)));
    if (!seen.insert(g).second) continue;
    size_t pi = size_t(std::upper_bound(offset.begin(), offset.end(), g) - offset.begin()) - 1;
    Eigen::Index e = g - offset[pi];
    double a = double(analytic[pi][e]);
    if (std::abs(a) <= r.floor) {
      ++r.skipped;
      continue;
    }
    Scalar* w = trainable[pi]->param->value().data() + e;
    const Scalar orig = *w;
    *w = orig + h;
    double lp = eval();
    *w = orig - h;
    double lm = eval();
    *w = orig;
    double fd = (lp - lm) / (2.0 * double(h));
    double rel = std::abs(a - fd) / std::max(std::abs(a), std::abs(fd));
    r.max_rel = std::max(r.max_rel, rel);
    ++r.checked;
  }
  for (auto& np : params) np.param->value().zero_grad();
  return r;
}

}  // namespace jepa::test
