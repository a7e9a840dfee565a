#include "switchsynth/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace switchsynth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kBlandAfter = 8;  // consecutive zero-length steps before Bland's rule

enum class EngineStatus { Optimal, Unbounded, IterationLimit };

/// Primal active-set iterations from a feasible x for min ½xᵀHx + gᵀx, Ax ≤ b.
struct Engine {
  const Matrix& H;
  const Vector& g;
  const Matrix& A;
  const Vector& b;
  Vector x;
  std::vector<int> work;
  Vector lambda_w;
  int iterations = 0;
  int max_iterations = 0;

  Engine(const Matrix& h, const Vector& gg, const Matrix& a, const Vector& bb, Vector x0, int max_it)
      : H(h), g(gg), A(a), b(bb), x(std::move(x0)), max_iterations(max_it) {}

  EngineStatus run() {
    const Eigen::Index n = x.size();
    const double hnorm = H.size() ? H.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
    const double curvature_floor = 1e-8 * std::max(1.0, hnorm);
    Vector row_norm(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) row_norm(i) = A.row(i).norm();
    std::vector<char> in_work(static_cast<std::size_t>(A.rows()), 0);
    for (int i : work) in_work[i] = 1;
    int zero_steps = 0;

    for (; iterations < max_iterations; ++iterations) {
      const Vector grad = H * x + g;
      const auto k = static_cast<Eigen::Index>(work.size());
      Eigen::HouseholderQR<Matrix> qr;
      Matrix z = Matrix::Zero(n, n - k);
      z.bottomRows(n - k).setIdentity();
      if (k > 0) {
        Matrix awt(n, k);
        for (Eigen::Index j = 0; j < k; ++j) awt.col(j) = A.row(work[j]).transpose();
        qr.compute(awt);
        z.applyOnTheLeft(qr.householderQ());
      }
      const Vector gr = z.transpose() * grad;

      Vector p = Vector::Zero(n);
      double alpha = 1.0;
      const double gscale = std::max(1.0, grad.cwiseAbs().maxCoeff());
      if (n - k > 0 && gr.cwiseAbs().maxCoeff() > 1e-13 * gscale) {
        const Matrix hr = hnorm > 0.0 ? Matrix(z.transpose() * H * z) : Matrix();
        // λ_min(hr) ≥ floor iff hr − floor·I admits a Cholesky factor.
        const bool curved =
            hnorm > 0.0 &&
            Eigen::LLT<Matrix>(hr - curvature_floor * Matrix::Identity(n - k, n - k)).info() ==
                Eigen::Success;
        if (curved) {
          p = -z * hr.llt().solve(gr);
          alpha = 1.0;
        } else {
          p = -z * gr;
          const double curv = hnorm > 0.0 ? p.dot(H * p) : 0.0;
          alpha = curv > curvature_floor * p.squaredNorm() ? gr.squaredNorm() / curv : kInf;
        }
      }

      const double xscale = std::max(1.0, x.cwiseAbs().maxCoeff());
      if (p.cwiseAbs().maxCoeff() <= 1e-14 * xscale) {
        // Stationary on the working set: inspect multipliers.
        lambda_w = Vector::Zero(k);
        if (k > 0) {
          const Vector rhs = -(qr.householderQ().transpose() * grad).head(k);
          lambda_w = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(rhs);
        }
        const bool bland = zero_steps >= kBlandAfter;
        Eigen::Index drop = -1;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
          const double scaled = lambda_w(j) * row_norm(work[j]);
          if (scaled >= -1e-10 * gscale) continue;
          if (bland) {
            if (drop < 0 || work[j] < work[drop]) drop = j;
          } else if (scaled < worst) {
            worst = scaled;
            drop = j;
          }
        }
        if (drop < 0) return EngineStatus::Optimal;
        in_work[work[drop]] = 0;
        work.erase(work.begin() + drop);
        continue;
      }

      Eigen::Index block = -1;
      const Vector ap = A * p;
      const double pnorm = p.norm();
      for (Eigen::Index i = 0; i < A.rows(); ++i) {
        if (in_work[i]) continue;
        if (ap(i) <= 1e-12 * row_norm(i) * pnorm) continue;
        const double slack = std::max(0.0, b(i) - A.row(i).dot(x));
        const double step = slack / ap(i);
        if (step < alpha) {
          alpha = step;
          block = i;
        }
      }
      if (!std::isfinite(alpha)) return EngineStatus::Unbounded;
      x += alpha * p;
      if (block >= 0) {
        work.push_back(static_cast<int>(block));
        in_work[block] = 1;
      }
      zero_steps = alpha * pnorm <= 1e-14 * xscale ? zero_steps + 1 : 0;
    }
    return EngineStatus::IterationLimit;
  }

  Vector full_lambda(Eigen::Index m) const {
    Vector lam = Vector::Zero(m);
    for (std::size_t j = 0; j < work.size(); ++j) lam(work[j]) = lambda_w(static_cast<Eigen::Index>(j));
    return lam;
  }

  bool unique_vertex(double gscale) const {
    if (static_cast<Eigen::Index>(work.size()) != x.size()) return false;
    for (Eigen::Index j = 0; j < lambda_w.size(); ++j)
      if (lambda_w(j) * A.row(work[j]).norm() <= 1e-9 * gscale) return false;
    return true;
  }
};

double objective(const QpProblem& p, const Vector& x) { return 0.5 * x.dot(p.H * x) + p.g.dot(x); }

}  // namespace

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::Unbounded: return "unbounded";
    case QpStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

bool verify_farkas(const Matrix& a, const Vector& b, const Vector& y) {
  if (y.size() != a.rows() || b.size() != a.rows() || y.size() == 0) return false;
  if (y.minCoeff() < -tol::kFarkas * std::max(1.0, y.cwiseAbs().maxCoeff())) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff()) * y.cwiseAbs().sum();
  if ((a.transpose() * y).cwiseAbs().maxCoeff() > tol::kFarkas * scale) return false;
  return b.dot(y) < -tol::kFarkas * std::max(1.0, b.cwiseAbs().maxCoeff()) * y.cwiseAbs().sum();
}

QpResult solve_qp(const QpProblem& prob, const QpOptions& opt) {
  const Eigen::Index n = prob.g.size();
  const Eigen::Index m = prob.A.rows();
  if (prob.H.rows() != n || prob.H.cols() != n || prob.A.cols() != n || prob.b.size() != m)
    throw Error(ErrorCode::DimensionMismatch, "QP dimensions are inconsistent");
  if (!prob.H.allFinite() || !prob.g.allFinite() || !prob.A.allFinite() || !prob.b.allFinite())
    throw Error(ErrorCode::NonFinite, "QP data contains non-finite values");

  QpResult res;
  // Phase I over (x, s).
  Matrix a1 = Matrix::Zero(m + 1, n + 1);
  a1.topLeftCorner(m, n) = prob.A;
  a1.col(n).head(m).setConstant(-1.0);
  a1(m, n) = -1.0;
  Vector b1 = Vector::Zero(m + 1);
  b1.head(m) = prob.b;
  Vector g1 = Vector::Zero(n + 1);
  g1(n) = 1.0;
  const Matrix h1 = Matrix::Zero(n + 1, n + 1);
  Vector start = Vector::Zero(n + 1);
  start(n) = m > 0 ? std::max(0.0, (-prob.b).maxCoeff()) : 0.0;
  Engine phase1(h1, g1, a1, b1, start, opt.max_iterations);
  const EngineStatus s1 = phase1.run();
  res.phase1_iterations = phase1.iterations;
  if (s1 == EngineStatus::IterationLimit) {
    res.status = QpStatus::IterationLimit;
    res.x = phase1.x.head(n);
    return res;
  }
  const double s_star = phase1.x(n);
  const double bscale = std::max(1.0, m ? prob.b.cwiseAbs().maxCoeff() : 0.0);
  if (s_star > tol::kPrimalFeasibility * bscale) {
    res.status = QpStatus::Infeasible;
    res.x = phase1.x.head(n);
    res.farkas = phase1.full_lambda(m + 1).head(m).cwiseMax(0.0);
    res.farkas_verified = verify_farkas(prob.A, prob.b, res.farkas);
    return res;
  }

  // Phase II on the (at most 1e-7) relaxed system.
  const Vector b2 = prob.b.array() + std::max(0.0, s_star);
  Engine phase2(prob.H, prob.g, prob.A, b2, phase1.x.head(n), opt.max_iterations);
  EngineStatus s2 = phase2.run();
  res.iterations = phase2.iterations;
  if (s2 == EngineStatus::Unbounded) {
    res.status = QpStatus::Unbounded;
    res.x = phase2.x;
    return res;
  }
  if (s2 == EngineStatus::IterationLimit) {
    res.status = QpStatus::IterationLimit;
    res.x = phase2.x;
    return res;
  }

  Vector x = phase2.x;
  Vector lambda = phase2.full_lambda(m);
  std::vector<int> active = phase2.work;
  const double gscale = std::max(1.0, prob.g.cwiseAbs().maxCoeff());
  if (opt.lexicographic_ties && !phase2.unique_vertex(gscale)) {
    // Minimize x_0, x_1, ... in turn over the optimal face.
    const double f_star = objective(prob, x);
    Matrix ax(m + 1 + n, n);
    Vector bx(m + 1 + n);
    ax.topRows(m) = prob.A;
    bx.head(m) = b2;
    ax.row(m) = prob.g.transpose() + 0.5 * (prob.H * x).transpose();
    bx(m) = ax.row(m).dot(x) + 1e-10 * std::max(1.0, std::abs(f_star));
    Eigen::Index rows = m + 1;
    const Matrix h0 = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      Vector gk = Vector::Zero(n);
      gk(k) = 1.0;
      const Matrix a_view = ax.topRows(rows);
      const Vector b_view = bx.head(rows);
      Engine lex(h0, gk, a_view, b_view, x, opt.max_iterations);
      if (lex.run() != EngineStatus::Optimal) break;
      res.iterations += lex.iterations;
      x = lex.x;
      ax.row(rows) = gk.transpose();
      bx(rows) = x(k) + 1e-12 * std::max(1.0, std::abs(x(k)));
      ++rows;
      if (lex.unique_vertex(1.0)) break;
    }
    // Multipliers of the original problem at the refined point.
    Engine polish(prob.H, prob.g, prob.A, b2, x, opt.max_iterations);
    s2 = polish.run();
    res.iterations += polish.iterations;
    if (s2 != EngineStatus::Optimal) {
      res.status = s2 == EngineStatus::Unbounded ? QpStatus::Unbounded : QpStatus::IterationLimit;
      res.x = polish.x;
      return res;
    }
    x = polish.x;
    lambda = polish.full_lambda(m);
    active = polish.work;
  }

  res.status = QpStatus::Optimal;
  res.x = x;
  res.lambda = lambda;
  res.active = active;
  std::sort(res.active.begin(), res.active.end());
  res.objective = objective(prob, x);
  res.primal_residual = m ? std::max(0.0, (prob.A * x - prob.b).maxCoeff()) : 0.0;
  const Vector grad = prob.H * x + prob.g;
  const Vector kkt = grad + prob.A.transpose() * res.lambda.cwiseMax(0.0);
  res.stationarity = kkt.cwiseAbs().maxCoeff() /
                     std::max({1.0, prob.g.cwiseAbs().maxCoeff(), (prob.H * x).cwiseAbs().maxCoeff()});
  return res;
}

}  // namespace switchsynth
