#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elunet/tensor.hpp"

namespace elunet {

// Central finite differences in double precision certify every analytic
// backward path. h = 1e-5 with elementwise relative tolerance 1e-4 sits in
// the truncation/roundoff sweet spot.
inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTol = 1e-4;

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0;
  std::int64_t worst_index = -1;
  bool passed = false;
  double step_size = kGradCheckStep;
  double tolerance = kGradCheckTol;

  std::string line() const {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%s %s max_rel_error=%.3e worst_index=%lld h=%.0e",
                  passed ? "pass" : "FAIL", op_name.c_str(), max_rel_error,
                  static_cast<long long>(worst_index), step_size);
    return buf;
  }
};

// (f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate. f must be finite at
// every probed point.
template <typename F>
std::vector<double> numeric_gradient_span(F&& f, std::span<double> x, double h) {
  if (!(h > 0)) throw std::invalid_argument("numeric_gradient: h must be > 0");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f();
    x[i] = saved - h;
    const double fm = f();
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("numeric_gradient: non-finite f evaluation");
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

template <typename F>
Tensor4<double> numeric_gradient(F&& f, Tensor4<double> x, double h) {
  auto probe = [&]() { return f(x); };
  std::vector<double> g = numeric_gradient_span(probe, x.values(), h);
  Tensor4<double> out(x.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = g[i];
  return out;
}

// rel error = |a - n| / max(|a|, |n|, 1e-8), maximum over entries.
inline GradCheckReport check_op(std::string op_name, std::span<const double> analytic,
                                std::span<const double> numeric,
                                double tol = kGradCheckTol,
                                double h = kGradCheckStep) {
  if (analytic.size() != numeric.size())
    throw std::invalid_argument("check_op: size mismatch");
  GradCheckReport report;
  report.op_name = std::move(op_name);
  report.step_size = h;
  report.tolerance = tol;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    const double rel = std::abs(analytic[i] - numeric[i]) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = static_cast<std::int64_t>(i);
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

inline GradCheckReport check_op(std::string op_name, const Tensor4<double>& analytic,
                                const Tensor4<double>& numeric,
                                double tol = kGradCheckTol,
                                double h = kGradCheckStep) {
  detail::require_same_shape(analytic, numeric, "check_op");
  return check_op(std::move(op_name), analytic.values(), numeric.values(), tol, h);
}

}  // namespace elunet
