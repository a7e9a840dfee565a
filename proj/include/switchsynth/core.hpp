#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace switchsynth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/**
 * Numerical tolerances shared across modules.
 *
 * Relative tolerances are scaled by the norm of the matrix they are checked
 * against unless noted otherwise.
 */
namespace tol {
inline constexpr double kSymmetry = 1e-12;          // max|M - Mᵀ| relative to max|M|
inline constexpr double kLmiRelative = 1e-8;        // λ_max(AᵀM + MA + μM) vs ‖M‖
inline constexpr double kLyapunovResidual = 1e-8;   // shifted Lyapunov residual vs ‖Q‖
inline constexpr double kMaxLyapunovCondition = 1e12;
inline constexpr int kMaxKroneckerDim = 50;          // O(n⁶) dense solve guard
inline constexpr double kUnitNorm = 1e-10;          // ‖a‖₂ = 1 for atoms
inline constexpr double kPsdRelative = 1e-9;        // λ_min(M - z²aaᵀ) ≥ -tol·‖M‖
inline constexpr double kCenter = 1e-9;             // ellipsoid centre agreement
inline constexpr double kContainmentRelative = 1e-9;
inline constexpr double kStepAlignment = 1e-9;      // dwell/step integrality
inline constexpr double kTime = 1e-9;               // sample-instant matching
inline constexpr double kMaxAlgebraicCondition = 1e10;
inline constexpr double kDivergence = 1e12;         // state magnitude treated as blow-up
inline constexpr double kHessianRegularization = 1e-10;
inline constexpr double kPrimalFeasibility = 1e-7;
inline constexpr double kStationarity = 1e-6;
inline constexpr double kFarkas = 1e-8;
// Enforced margin on assembled constraints; realizes the strict "<" of the
// predicates so that solver round-off never leaves the nominal at robustness < 0.
inline constexpr double kStrictMargin = 1e-6;
}  // namespace tol

inline constexpr double kDefaultMu = 0.1;
inline constexpr int kMaxMuHalvings = 10;

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotHurwitz,
  IllConditioned,
  SingularM,
  CenterMismatch,
  InvalidEpsilon,
  SignalTooShort,
  UnboundedHorizon,
  NotInFragment,
  ParseError,
  SingularAlgebraicBlock,
  InvalidParameter,
  SchemaError,
  InvariantViolation,
  NameCollision,
  StepMisaligned,
  EmptyHorizon,
  Infeasible,
  Unbounded,
  IterationLimit,
  NonFinite,
  MissingArtifact,
  Usage,
  Io,
};

const char* to_string(ErrorCode code);

/// Exception carrying a stable error code; `what()` holds the detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  const char* name() const noexcept { return to_string(code_); }

 private:
  ErrorCode code_;
};

/// Raised when a linear inequality system has no solution. `certificate` is a
/// nonnegative y with ‖Aᵀy‖ ≈ 0 and bᵀy < 0 for the rows A x ≤ b.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& message, Vector certificate, bool verified)
      : Error(ErrorCode::Infeasible, message),
        certificate_(std::move(certificate)),
        verified_(verified) {}

  const Vector& certificate() const noexcept { return certificate_; }
  bool verified() const noexcept { return verified_; }

 private:
  Vector certificate_;
  bool verified_;
};

// Small dense helpers used by several modules.

Matrix symmetrize(const Matrix& m);
double max_abs(const Matrix& m);
double lambda_max_symmetric(const Matrix& s);
double lambda_min_symmetric(const Matrix& s);
/// Largest real part over the spectrum of a general square matrix.
double spectral_abscissa(const Matrix& a);
bool is_hurwitz(const Matrix& a);
Matrix select(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols);
Vector select(const Vector& v, const std::vector<int>& idx);

}  // namespace switchsynth
