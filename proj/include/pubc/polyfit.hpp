#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pubc/nn.hpp"

namespace pubc {

// Least-squares polynomial fit, coefficients in ascending power order.
// Solved by column-pivoted QR of the Vandermonde matrix; adequate for
// order <= 20 on [0,1] data.
inline std::vector<double> polyfit(const std::vector<double>& xs,
                                   const std::vector<double>& ys, int order) {
  if (order < 0 || xs.size() != ys.size() || xs.empty())
    throw StructuralError("polyfit: bad inputs");
  if (static_cast<std::size_t>(order) + 1 > xs.size())
    throw StructuralError("polyfit: order too high for point count");
  Eigen::MatrixXd vand(xs.size(), order + 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      vand(static_cast<Eigen::Index>(i), j) = p;
      p *= xs[i];
    }
  }
  Eigen::VectorXd rhs(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i)
    rhs(static_cast<Eigen::Index>(i)) = ys[i];
  Eigen::VectorXd coef = vand.colPivHouseholderQr().solve(rhs);
  return std::vector<double>(coef.data(), coef.data() + coef.size());
}

inline double poly_eval(const std::vector<double>& coeffs, double x) {
  double v = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) v = v * x + coeffs[i];
  return v;
}

inline std::vector<double> poly_derivative(const std::vector<double>& coeffs) {
  std::vector<double> d;
  for (std::size_t i = 1; i < coeffs.size(); ++i)
    d.push_back(static_cast<double>(i) * coeffs[i]);
  return d;
}

// Rightmost x in (lo, hi) where the polynomial has a local minimum
// (derivative sign change - to +). Grid scan at 1e-3 resolution, then
// bisection on the derivative. Returns false when no interior minimum.
inline bool rightmost_local_minimum(const std::vector<double>& coeffs,
                                    double lo, double hi, double& out_x) {
  std::vector<double> deriv = poly_derivative(coeffs);
  if (deriv.empty()) return false;
  const double step = 1e-3;
  bool found = false;
  double best = 0.0;
  double prev_x = lo + step;
  double prev_d = poly_eval(deriv, prev_x);
  for (double x = lo + 2 * step; x < hi - step / 2; x += step) {
    double d = poly_eval(deriv, x);
    if (prev_d < 0.0 && d >= 0.0) {
      double a = prev_x, b = x;
      for (int it = 0; it < 60; ++it) {
        double m = 0.5 * (a + b);
        if (poly_eval(deriv, m) < 0.0) a = m;
        else b = m;
      }
      best = 0.5 * (a + b);
      found = true;
    }
    prev_x = x;
    prev_d = d;
  }
  if (found) out_x = best;
  return found;
}

// One interior critical point of a polynomial on (lo, hi).
struct CriticalPoint {
  double x = 0.0;
  double value = 0.0;
  bool is_minimum = false;
};

// All interior critical points, left to right. Grid scan of the derivative
// at 1e-3 resolution, each sign change refined by 60 bisection steps.
inline std::vector<CriticalPoint> critical_points(
    const std::vector<double>& coeffs, double lo, double hi) {
  std::vector<CriticalPoint> out;
  std::vector<double> deriv = poly_derivative(coeffs);
  if (deriv.empty()) return out;
  const double step = 1e-3;
  double prev_x = lo + step;
  double prev_d = poly_eval(deriv, prev_x);
  for (double x = lo + 2 * step; x < hi - step / 2; x += step) {
    double d = poly_eval(deriv, x);
    if ((prev_d < 0.0 && d >= 0.0) || (prev_d > 0.0 && d <= 0.0)) {
      double a = prev_x, b = x;
      bool minimum = prev_d < 0.0;
      for (int it = 0; it < 60; ++it) {
        double m = 0.5 * (a + b);
        double dm = poly_eval(deriv, m);
        if ((minimum && dm < 0.0) || (!minimum && dm > 0.0)) a = m;
        else b = m;
      }
      double cx = 0.5 * (a + b);
      out.push_back({cx, poly_eval(coeffs, cx), minimum});
    }
    prev_x = x;
    prev_d = d;
  }
  return out;
}

// Rightmost interior local minimum that is prominent: some local maximum on
// each side must exceed it by at least `prominence_fraction` of the value
// range spanned by all critical points. High-order fits of sparse histograms
// oscillate, producing shallow spurious dips; requiring a genuine peak on
// both sides keeps only minima that separate two modes.
inline bool prominent_rightmost_minimum(const std::vector<double>& coeffs,
                                        double lo, double hi,
                                        double prominence_fraction,
                                        double& out_x) {
  std::vector<CriticalPoint> cps = critical_points(coeffs, lo, hi);
  if (cps.empty()) return false;
  double vmax = cps.front().value, vmin = cps.front().value;
  for (const CriticalPoint& c : cps) {
    vmax = std::max(vmax, c.value);
    vmin = std::min(vmin, c.value);
  }
  double range = vmax - vmin;
  if (!(range > 0.0)) return false;
  const double bar = prominence_fraction * range;
  bool found = false;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (!cps[i].is_minimum) continue;
    double left_peak = -std::numeric_limits<double>::infinity();
    double right_peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < i; ++j)
      if (!cps[j].is_minimum) left_peak = std::max(left_peak, cps[j].value);
    for (std::size_t j = i + 1; j < cps.size(); ++j)
      if (!cps[j].is_minimum) right_peak = std::max(right_peak, cps[j].value);
    if (left_peak - cps[i].value >= bar && right_peak - cps[i].value >= bar) {
      out_x = cps[i].x;
      found = true;
    }
  }
  return found;
}

}  // namespace pubc
