#pragma once

#include "fastslow/lie_geometry.hpp"
#include "fastslow/poisson.hpp"

namespace fastslow {

/// The linear-trace test family f(g) = Re trace(A g). Left-invariant Lie
/// derivatives are exact: L_Y f(g) = Re trace(A g Y) and
/// L_{Y_i} L_{Y_j} f(g) = Re trace(A g Y_i Y_j), so second-order identities
/// can be checked without a finite-difference error scale.
struct TraceObservable {
  Matrix a;

  static TraceObservable re_trace(const GroupSpec& spec) {
    return TraceObservable{Matrix::Identity(spec.n, spec.n)};
  }

  double eval(const GroupElement& g) const { return (a * g.matrix).trace().real(); }

  double lie(const GroupElement& g, const AlgebraVector& y) const {
    return (a * g.matrix * y.matrix).trace().real();
  }

  double lie2(const GroupElement& g, const AlgebraVector& yi, const AlgebraVector& yj) const {
    return (a * g.matrix * yi.matrix * yj.matrix).trace().real();
  }

  Observable as_observable() const {
    Observable obs;
    const Matrix aa = a;
    obs.eval = [aa](const GroupElement& g) { return (aa * g.matrix).trace().real(); };
    obs.bound = 2.0 * aa.cwiseAbs().sum();
    return obs;
  }
};

}  // namespace fastslow
