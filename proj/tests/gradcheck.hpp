#pragma once

// Central finite differences for gradient tests.

#include <algorithm>
#include <functional>

#include "structrep/numerics.hpp"

namespace structrep::test {

// d loss / d x, perturbing x in place one coordinate at a time.
template <typename Derived>
Vector numeric_gradient(Eigen::MatrixBase<Derived>& x, const std::function<double()>& loss, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double& xi = x.derived().data()[i];
    const double saved = xi;
    xi = saved + h;
    const double up = loss();
    xi = saved - h;
    const double down = loss();
    xi = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Norm-wise relative error ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  return scale == 0.0 ? 0.0 : (analytic - numeric).norm() / scale;
}

template <typename Derived>
Vector flat(const Eigen::MatrixBase<Derived>& m) {
  Vector v(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) v[i] = m.derived().data()[i];
  return v;
}

}  // namespace structrep::test
