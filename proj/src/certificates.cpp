#include "switchsynth/certificates.hpp"

#include "switchsynth/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <sstream>

namespace switchsynth {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be square");
}

struct Scored {
  double objective = std::numeric_limits<double>::infinity();
  ModeCertificate cert;
  bool ok = false;
};

Vector default_direction(int n, int target, const std::optional<Vector>& direction) {
  if (direction) {
    if (direction->size() != n)
      throw Error(ErrorCode::DimensionMismatch, "shape direction has wrong length");
    return *direction;
  }
  Vector a = Vector::Zero(n);
  a(target) = 1.0;
  return a;
}

Scored score(int mode_id, const Matrix& a, const Matrix& sigma, double mu, const Vector& w,
             int target, const Vector& dir) {
  Scored s;
  try {
    s.cert = make_certificate(mode_id, a, sigma, mu, w);
    const double z = predicate_gain(s.cert.M, dir);
    s.objective = s.cert.M(target, target) / (z * z);
    s.ok = std::isfinite(s.objective);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotHurwitz) throw;
    s.ok = false;
  }
  return s;
}

// Rescale so the gain along `dir` matches `z_ref`; the LMI is homogeneous in M.
ModeCertificate rescale(ModeCertificate cert, const Matrix& a, const Vector& dir, double z_ref) {
  const double z = predicate_gain(cert.M, dir);
  const double c = (z_ref / z) * (z_ref / z);
  if (c == 1.0) return cert;
  cert.M *= c;
  cert.alpha *= c;
  cert.weights *= c;
  cert.lmi_residual = verify_lmi(a, cert.M, cert.mu);
  return cert;
}

std::size_t pick(const std::vector<Scored>& round) {
  std::size_t best = round.size();
  for (std::size_t i = 0; i < round.size(); ++i) {
    if (!round[i].ok) continue;
    if (best == round.size() || round[i].objective < round[best].objective) best = i;
  }
  return best;
}

ModeCertificate shape_impl(int mode_id, const Matrix& a, const Matrix& sigma, double mu,
                           const ShapeOptions& opt, bool parallel) {
  require_square(a, "A");
  const int n = static_cast<int>(a.rows());
  if (opt.target_index < 0 || opt.target_index >= n)
    throw Error(ErrorCode::InvalidArgument, "target index outside the certified state");
  if (opt.budget < 1) throw Error(ErrorCode::InvalidArgument, "budget must be at least 1");
  const Vector dir = default_direction(n, opt.target_index, opt.direction);

  Scored best = score(mode_id, a, sigma, mu, Vector::Ones(n), opt.target_index, dir);
  if (!best.ok) throw Error(ErrorCode::IllConditioned, "baseline Lyapunov solve failed");
  const double z_ref = predicate_gain(best.cert.M, dir);
  Vector best_w = Vector::Ones(n);

  const std::uint64_t stream_seed = derive_seed(opt.seed, "shape_certificate");
  int evaluated = 1;
  while (evaluated < opt.budget) {
    const int count = std::min(n, opt.budget - evaluated);
    std::vector<Vector> weights(count);
    for (int j = 0; j < count; ++j) {
      RandomStream rng(stream_seed, static_cast<std::uint64_t>(evaluated + j));
      Vector w = best_w;
      w(j) *= std::pow(10.0, 2.0 * rng.uniform() - 1.0);
      weights[j] = w / w.minCoeff();
    }
    std::vector<Scored> round(count);
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
      for (int j = 0; j < count; ++j)
        round[j] = score(mode_id, a, sigma, mu, weights[j], opt.target_index, dir);
    } else {
      for (int j = 0; j < count; ++j)
        round[j] = score(mode_id, a, sigma, mu, weights[j], opt.target_index, dir);
    }
    const std::size_t k = pick(round);
    if (k < round.size() && round[k].objective < best.objective) {
      best = round[k];
      best_w = weights[k];
    }
    evaluated += count;
  }
  return rescale(best.cert, a, dir, z_ref);
}

}  // namespace

bool Ellipsoid::contains(const Vector& x, double rel_tol) const {
  return quadratic(x) <= level * (1.0 + rel_tol);
}

double Ellipsoid::quadratic(const Vector& x) const {
  const Vector d = x - center;
  return d.dot(M * d);
}

Matrix solve_shifted_lyapunov(const Matrix& a, const Matrix& q, double mu) {
  require_square(a, "A");
  require_square(q, "Q");
  const Eigen::Index n = a.rows();
  if (q.rows() != n) throw Error(ErrorCode::DimensionMismatch, "A and Q differ in size");
  if (n > tol::kMaxKroneckerDim)
    throw Error(ErrorCode::InvalidArgument,
                "Kronecker Lyapunov solve is limited to n <= 50 (O(n^6) cost)");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw Error(ErrorCode::InvalidArgument, "mu must be >= 0");
  if (max_abs(q - q.transpose()) > tol::kSymmetry * std::max(1.0, max_abs(q)))
    throw Error(ErrorCode::InvalidArgument, "Q must be symmetric");
  if (Eigen::LLT<Matrix>(q).info() != Eigen::Success)
    throw Error(ErrorCode::InvalidArgument, "Q must be positive definite");

  const Matrix shifted = a + 0.5 * mu * Matrix::Identity(n, n);
  const double abscissa = spectral_abscissa(shifted);
  if (!(abscissa < 0.0)) {
    std::ostringstream msg;
    msg << "A + (mu/2)I is not Hurwitz (max real part " << abscissa << ", mu = " << mu << ")";
    throw Error(ErrorCode::NotHurwitz, msg.str());
  }

  // vec(AsᵀM) = (I ⊗ Asᵀ) vec(M),  vec(M As) = (Asᵀ ⊗ I) vec(M), column-major vec.
  const Eigen::Index nn = n * n;
  Matrix k = Matrix::Zero(nn, nn);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index l = 0; l < n; ++l) {
        k(i + j * n, l + j * n) += shifted(l, i);
        k(i + j * n, i + l * n) += shifted(l, j);
      }
  Eigen::PartialPivLU<Matrix> lu(k);
  const double rcond = lu.rcond();
  if (!(rcond > 0.0) || 1.0 / rcond > tol::kMaxLyapunovCondition)
    throw Error(ErrorCode::IllConditioned, "Lyapunov operator condition estimate exceeds 1e12");

  const Vector rhs = -Eigen::Map<const Vector>(q.data(), nn);
  const Vector vec_m = lu.solve(rhs);
  Matrix m = symmetrize(Eigen::Map<const Matrix>(vec_m.data(), n, n));

  const Matrix residual = shifted.transpose() * m + m * shifted + q;
  if (max_abs(residual) > tol::kLyapunovResidual * max_abs(q))
    throw Error(ErrorCode::IllConditioned, "Lyapunov residual above tolerance");
  return m;
}

double verify_lmi(const Matrix& a, const Matrix& m, double mu) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "A and M differ in size");
  return lambda_max_symmetric(a.transpose() * m + m * a + mu * m);
}

double noise_gain(const Matrix& m, const Matrix& sigma) {
  if (sigma.rows() != m.rows()) throw Error(ErrorCode::DimensionMismatch, "Sigma rows != n");
  return (sigma.transpose() * m * sigma).trace();
}

double predicate_gain(const Matrix& m, const Vector& a) {
  if (a.size() != m.rows()) throw Error(ErrorCode::DimensionMismatch, "direction length != n");
  if (a.squaredNorm() == 0.0) return std::numeric_limits<double>::infinity();
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularM, "M is not numerically positive definite");
  const double quad = a.dot(llt.solve(a));
  if (!(quad > 0.0) || !std::isfinite(quad))
    throw Error(ErrorCode::SingularM, "a^T M^-1 a is not a finite positive number");
  return 1.0 / std::sqrt(quad);
}

double max_predicate_gain(const Matrix& m, const Vector& a) {
  if (std::abs(a.norm() - 1.0) > tol::kUnitNorm)
    throw Error(ErrorCode::InvalidArgument, "predicate direction must have unit 2-norm");
  const double z = predicate_gain(m, a);
  const double slack = lambda_min_symmetric(m - z * z * a * a.transpose());
  if (slack < -tol::kPsdRelative * max_abs(m))
    throw Error(ErrorCode::SingularM, "z* fails the PSD postcondition");
  return z;
}

ModeCertificate make_certificate(int mode_id, const Matrix& a, const Matrix& sigma, double mu,
                                 const Vector& weights) {
  if (weights.size() != a.rows())
    throw Error(ErrorCode::DimensionMismatch, "weight vector length != n");
  ModeCertificate c;
  c.mode_id = mode_id;
  c.mu = mu;
  c.weights = weights;
  c.M = solve_shifted_lyapunov(a, weights.asDiagonal().toDenseMatrix(), mu);
  c.alpha = noise_gain(c.M, sigma);
  c.lmi_residual = verify_lmi(a, c.M, mu);
  return c;
}

double select_mu(const Matrix& a, double mu, int* halvings) {
  require_square(a, "A");
  if (!(mu > 0.0)) throw Error(ErrorCode::InvalidArgument, "mu must be positive");
  const Matrix eye = Matrix::Identity(a.rows(), a.cols());
  int h = 0;
  while (!is_hurwitz(a + 0.5 * mu * eye)) {
    if (h == kMaxMuHalvings) {
      std::ostringstream msg;
      msg << "no mu in the halving sequence makes A + (mu/2)I Hurwitz (spectral abscissa "
          << spectral_abscissa(a) << ")";
      throw Error(ErrorCode::NotHurwitz, msg.str());
    }
    mu *= 0.5;
    ++h;
  }
  if (halvings) *halvings = h;
  return mu;
}

ModeCertificate shape_certificate(int mode_id, const Matrix& a, const Matrix& sigma, double mu,
                                  const ShapeOptions& options) {
  return shape_impl(mode_id, a, sigma, mu, options, true);
}

ModeCertificate shape_certificate_serial(int mode_id, const Matrix& a, const Matrix& sigma,
                                         double mu, const ShapeOptions& options) {
  return shape_impl(mode_id, a, sigma, mu, options, false);
}

ModeCertificate shape_certificate_from_candidates(int mode_id, const Matrix& a,
                                                  const Matrix& sigma, double mu,
                                                  int target_index,
                                                  const std::vector<Vector>& candidates,
                                                  const std::optional<Vector>& direction) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no candidates");
  const Vector dir = default_direction(static_cast<int>(a.rows()), target_index, direction);
  std::vector<Scored> scored;
  for (const auto& w : candidates) scored.push_back(score(mode_id, a, sigma, mu, w, target_index, dir));
  if (!scored.front().ok) throw Error(ErrorCode::IllConditioned, "baseline candidate failed");
  const double z_ref = predicate_gain(scored.front().cert.M, dir);
  return rescale(scored[pick(scored)].cert, a, dir, z_ref);
}

double containing_level(const Matrix& m_inner, double inner_level, const Matrix& m_outer) {
  // sup_{dᵀM₁d ≤ L} dᵀM₂d = L·λ_max(M₁⁻¹M₂)
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(symmetrize(m_outer), symmetrize(m_inner),
                                                       Eigen::EigenvaluesOnly);
  if (ges.info() != Eigen::Success)
    throw Error(ErrorCode::SingularM, "inner ellipsoid matrix is not positive definite");
  return inner_level * ges.eigenvalues().maxCoeff();
}

bool ellipsoid_contained(const Ellipsoid& inner, const Ellipsoid& outer) {
  if (inner.center.size() != outer.center.size() || inner.M.rows() != outer.M.rows())
    throw Error(ErrorCode::DimensionMismatch, "ellipsoid dimensions differ");
  const double scale = std::max(1.0, outer.center.cwiseAbs().maxCoeff());
  if ((inner.center - outer.center).cwiseAbs().maxCoeff() > tol::kCenter * scale)
    throw Error(ErrorCode::CenterMismatch, "ellipsoid centres differ");
  const double sup = containing_level(inner.M, inner.level, outer.M);
  return sup <= outer.level * (1.0 + tol::kContainmentRelative);
}

const ModeCertificate& find_certificate(const std::vector<ModeCertificate>& certs, int mode_id) {
  for (const auto& c : certs)
    if (c.mode_id == mode_id) return c;
  throw Error(ErrorCode::InvalidArgument, "no certificate for mode " + std::to_string(mode_id));
}

TubeParameters tube_parameters(const std::vector<ModeCertificate>& certs,
                               const Schedule& schedule, double epsilon, double r0,
                               const std::vector<Vector>& directions) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw Error(ErrorCode::InvalidEpsilon, "epsilon must lie in (0, 1)");
  if (!(r0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "r0 must be positive");
  if (schedule.empty()) throw Error(ErrorCode::InvalidArgument, "empty schedule");

  TubeParameters tube;
  tube.epsilon = epsilon;
  tube.t_end = schedule_end(schedule);
  tube.start = segment_starts(schedule);
  double max_alpha = 0.0;
  for (const auto& seg : schedule) max_alpha = std::max(max_alpha, find_certificate(certs, seg.mode).alpha);
  tube.gamma_hat = max_alpha * tube.t_end / epsilon;

  const std::size_t segments = schedule.size();
  tube.r.assign(segments, r0);
  tube.r_proof.assign(segments, r0);
  for (std::size_t i = 0; i < segments; ++i) tube.mu.push_back(find_certificate(certs, schedule[i].mode).mu);
  for (std::size_t i = 1; i < segments; ++i) {
    const auto& prev = find_certificate(certs, schedule[i - 1].mode);
    const auto& cur = find_certificate(certs, schedule[i].mode);
    const double dwell = schedule[i - 1].dwell;
    const double inner = tube.r[i - 1] * std::exp(-prev.mu * dwell / 2.0);
    tube.r[i] = containing_level(prev.M, inner, cur.M);
    const Vector origin = Vector::Zero(cur.M.rows());
    if (!ellipsoid_contained({origin, prev.M, inner}, {origin, cur.M, tube.r[i]}))
      throw Error(ErrorCode::InvariantViolation, "closed-form containment level failed its check");
    tube.r_proof[i] =
        containing_level(prev.M, tube.r_proof[i - 1] * std::exp(-prev.mu * dwell), cur.M);
  }

  const std::size_t atoms = directions.size();
  tube.z.resize(segments, atoms);
  tube.delta_hat.resize(segments, atoms);
  for (std::size_t i = 0; i < segments; ++i) {
    const auto& cert = find_certificate(certs, schedule[i].mode);
    for (std::size_t k = 0; k < atoms; ++k) {
      const double z = predicate_gain(cert.M, directions[k]);
      tube.z(i, k) = z;
      tube.delta_hat(i, k) =
          std::isinf(z) ? 0.0 : (std::sqrt(tube.r[i]) + std::sqrt(tube.gamma_hat)) / z;
    }
  }
  return tube;
}

double probability_bound(const std::vector<ModeCertificate>& certs, const Schedule& schedule,
                         double gamma_hat) {
  double load = 0.0;
  for (const auto& seg : schedule) load += find_certificate(certs, seg.mode).alpha * seg.dwell;
  if (load == 0.0) return 1.0;
  if (!(gamma_hat > 0.0)) return 0.0;
  return std::clamp(1.0 - load / gamma_hat, 0.0, 1.0);
}

double product_bound(const std::vector<ModeCertificate>& certs, const Schedule& schedule,
                     double gamma_hat) {
  double p = 1.0;
  for (const auto& seg : schedule) {
    const double load = find_certificate(certs, seg.mode).alpha * seg.dwell;
    if (load == 0.0) continue;
    p *= gamma_hat > 0.0 ? std::clamp(1.0 - load / gamma_hat, 0.0, 1.0) : 0.0;
  }
  return p;
}

}  // namespace switchsynth
