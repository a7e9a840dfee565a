#pragma once

#include "switchsynth/core.hpp"

#include <string>
#include <vector>

namespace switchsynth {

/// min ½xᵀHx + gᵀx  s.t.  A x ≤ b, with H symmetric positive semidefinite.
struct QpProblem {
  Matrix H;
  Vector g;
  Matrix A;
  Vector b;
};

struct QpOptions {
  int max_iterations = 20000;
  /// Among equal-objective solutions of a problem with H = 0 (up to the
  /// regularizer) pick the lexicographically smallest x.
  bool lexicographic_ties = false;
};

enum class QpStatus { Optimal, Infeasible, Unbounded, IterationLimit };
const char* to_string(QpStatus s);

struct QpResult {
  QpStatus status = QpStatus::IterationLimit;
  Vector x;
  Vector lambda;  // one multiplier per inequality row (zero off the active set)
  double objective = 0.0;
  int iterations = 0;
  int phase1_iterations = 0;
  std::vector<int> active;
  double primal_residual = 0.0;  // max(0, max(Ax − b))
  double stationarity = 0.0;     // ‖Hx + g + Aᵀλ‖∞ relative to the gradient scale
  Vector farkas;                 // Infeasible only: y ≥ 0, Aᵀy ≈ 0, bᵀy < 0
  bool farkas_verified = false;
};

/**
 * Dense primal active-set method.
 *
 * Phase I solves min s s.t. Ax − s ≤ b, s ≥ 0 from x = 0; a positive optimum
 * proves infeasibility and its multipliers form the Farkas certificate.
 * Phase II takes null-space Newton steps where the reduced Hessian is
 * positive definite and projected-gradient steps with a ratio test where it is
 * singular (the LP case). Bland's rule is used after repeated zero-length
 * steps. Deterministic: ties resolve to the lowest row index.
 */
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

/// Checks a Farkas certificate for A x ≤ b to the 1e-8 tolerance.
bool verify_farkas(const Matrix& a, const Vector& b, const Vector& y);

}  // namespace switchsynth
