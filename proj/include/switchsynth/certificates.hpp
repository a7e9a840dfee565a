#pragma once

#include "switchsynth/core.hpp"
#include "switchsynth/schedule.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace switchsynth {

/**
 * Quadratic stochastic bisimulation certificate for one mode.
 *
 * φ_q(x, x̃, t) = (x − x̃)ᵀ M (x − x̃) e^{μt} with AᵀM + MA + μM ≺ 0 and noise
 * gain α = trace(Σᵀ M Σ). M lives on the certified (endogenous) coordinates
 * of the model.
 */
struct ModeCertificate {
  int mode_id = 0;
  Matrix M;
  double mu = kDefaultMu;
  double alpha = 0.0;
  double lmi_residual = 0.0;  // λ_max(AᵀM + MA + μM)
  Vector weights;             // diagonal Lyapunov weighting Q that produced M
};

struct Ellipsoid {
  Vector center;
  Matrix M;
  double level = 1.0;

  /// (x − c)ᵀ M (x − c) ≤ level·(1 + rel_tol)
  bool contains(const Vector& x, double rel_tol = 0.0) const;
  double quadratic(const Vector& x) const;
};

/**
 * Tube sizing for a switching schedule. Rows of `z` and `delta_hat` are
 * schedule segments, columns are atomic predicates.
 */
struct TubeParameters {
  double gamma_hat = 0.0;
  double epsilon = 0.0;
  double t_end = 0.0;
  std::vector<double> r;        // per-segment initial-set level (e^{−μT/2} propagation)
  std::vector<double> r_proof;  // same with the e^{−μT} decay of the quadratic form
  std::vector<double> mu;       // per-segment decay rate
  std::vector<double> start;    // per-segment start time
  Matrix z;
  Matrix delta_hat;
};

/// Solves (A + μ/2·I)ᵀM + M(A + μ/2·I) = −Q by Kronecker vectorization.
Matrix solve_shifted_lyapunov(const Matrix& a, const Matrix& q, double mu);

/// λ_max(AᵀM + MA + μM); negative means the LMI holds.
double verify_lmi(const Matrix& a, const Matrix& m, double mu);

/// trace(Σᵀ M Σ)
double noise_gain(const Matrix& m, const Matrix& sigma);

/// Largest z with z²aaᵀ ⪯ M for a unit vector a: (aᵀM⁻¹a)^{−1/2}.
double max_predicate_gain(const Matrix& m, const Vector& a);

/// Same bound for any nonzero direction (no unit-norm precondition). Returns
/// +inf for a zero direction, which never constrains the tube.
double predicate_gain(const Matrix& m, const Vector& a);

/// Certificate from an explicit diagonal weighting Q = diag(weights).
ModeCertificate make_certificate(int mode_id, const Matrix& a, const Matrix& sigma, double mu,
                                 const Vector& weights);

/// Halves μ until A + μ/2·I is Hurwitz (at most kMaxMuHalvings times).
/// `halvings` receives the number of halvings applied.
double select_mu(const Matrix& a, double mu, int* halvings = nullptr);

struct ShapeOptions {
  int target_index = 0;
  int budget = 1;
  std::uint64_t seed = 0;
  /// Predicate direction whose gain is held fixed; defaults to e_target.
  std::optional<Vector> direction;
};

/**
 * Lyapunov-weighting search standing in for the trace/rank-one SDP.
 *
 * Candidates are diagonal weightings Q; candidate 0 is Q = I, the rest come
 * from a seeded randomized coordinate search. Each candidate is scored by the
 * scale-free ratio M(t,t)·aᵀM⁻¹a, i.e. M(t,t) at a fixed predicate gain. The
 * winner is rescaled so its gain along `direction` equals the Q = I gain,
 * so the returned M(t,t) never exceeds the baseline. Ties go to the lower
 * candidate index.
 */
ModeCertificate shape_certificate(int mode_id, const Matrix& a, const Matrix& sigma, double mu,
                                  const ShapeOptions& options);

/// Serial reference of shape_certificate; results are bit-identical.
ModeCertificate shape_certificate_serial(int mode_id, const Matrix& a, const Matrix& sigma,
                                         double mu, const ShapeOptions& options);

/// Scores an explicit candidate list (first entry is the baseline).
ModeCertificate shape_certificate_from_candidates(int mode_id, const Matrix& a,
                                                  const Matrix& sigma, double mu,
                                                  int target_index,
                                                  const std::vector<Vector>& candidates,
                                                  const std::optional<Vector>& direction = {});

/// True iff the same-centre inner ellipsoid lies inside the outer one.
bool ellipsoid_contained(const Ellipsoid& inner, const Ellipsoid& outer);

/// Smallest outer level containing {d : dᵀ M_inner d ≤ inner_level}.
double containing_level(const Matrix& m_inner, double inner_level, const Matrix& m_outer);

const ModeCertificate& find_certificate(const std::vector<ModeCertificate>& certs, int mode_id);

/**
 * γ̂ = max_i α_i · T_end / ε, initial-set levels r_i propagated through the
 * schedule, predicate gains z and tightening amplitudes
 * δ̂ = (√r_i + √γ̂)/z for each direction.
 */
TubeParameters tube_parameters(const std::vector<ModeCertificate>& certs,
                               const Schedule& schedule, double epsilon, double r0,
                               const std::vector<Vector>& directions);

/// 1 − Σ_i α_i T_i / γ̂ clipped to [0, 1].
double probability_bound(const std::vector<ModeCertificate>& certs, const Schedule& schedule,
                         double gamma_hat);

/// Π_i (1 − α_i T_i / γ̂), each factor clipped to [0, 1].
double product_bound(const std::vector<ModeCertificate>& certs, const Schedule& schedule,
                     double gamma_hat);

}  // namespace switchsynth
