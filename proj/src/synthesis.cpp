#include "switchsynth/synthesis.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace switchsynth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

ZohPair zoh(const Matrix& a, const Matrix& b, double h) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = b.cols();
  if (a.cols() != n || b.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "zoh: A must be square with B rows matching");
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "zoh: step must be positive");
  Matrix aug = Matrix::Zero(n + p, n + p);
  aug.topLeftCorner(n, n) = a * h;
  aug.topRightCorner(n, p) = b * h;
  const Matrix e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, p)};
}

DiscretizedSystem discretize(const SwitchedLinearModel& model, double step) {
  if (!(step > 0.0) || !std::isfinite(step))
    throw Error(ErrorCode::InvalidArgument, "grid step must be positive, got " + num(step));
  DiscretizedSystem d;
  d.step = step;
  d.n = model.n();
  d.p = model.p();
  d.times.push_back(0.0);
  int offset = 0;
  for (const auto& seg : model.schedule) {
    const double ratio = seg.dwell / step;
    const double k = std::round(ratio);
    if (k < 1.0 || std::abs(ratio - k) > tol::kStepAlignment * std::max(1.0, ratio))
      throw Error(ErrorCode::StepMisaligned, "grid step " + num(step) + " does not divide dwell " +
                                                 num(seg.dwell) + " of mode " +
                                                 std::to_string(seg.mode));
    auto it = std::find(d.mode_ids.begin(), d.mode_ids.end(), seg.mode);
    int idx;
    if (it == d.mode_ids.end()) {
      const Mode& m = model.mode(seg.mode);
      d.mode_ids.push_back(seg.mode);
      d.pairs.push_back(zoh(m.A, m.B, step));
      idx = static_cast<int>(d.pairs.size()) - 1;
    } else {
      idx = static_cast<int>(it - d.mode_ids.begin());
    }
    for (int i = 0; i < static_cast<int>(k); ++i) {
      d.interval_mode.push_back(idx);
      d.times.push_back(step * (offset + i + 1));
    }
    offset += static_cast<int>(k);
  }
  return d;
}

void SynthesisProblem::append(const SynthesisProblem& other) {
  if (other.p != p || other.intervals != intervals)
    throw Error(ErrorCode::DimensionMismatch, "cannot merge problems on different grids");
  const Eigen::Index m0 = G.rows();
  G.conservativeResize(m0 + other.G.rows(), variables());
  G.bottomRows(other.G.rows()) = other.G;
  h.conservativeResize(m0 + other.h.size());
  h.tail(other.h.size()) = other.h;
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

SynthesisProblem assemble(const DiscretizedSystem& disc, const FragmentSpec& spec,
                          const Vector& x0, const SwitchedLinearModel& model,
                          const AssembleOptions& opt) {
  const int n = disc.n;
  const int p = disc.p;
  const int big_n = disc.intervals();
  if (x0.size() != n) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong size");
  const double t_end = disc.times.back();
  if (spec.t_end > t_end + tol::kTime)
    throw Error(ErrorCode::UnboundedHorizon, "specification horizon " + num(spec.t_end) +
                                                 " exceeds the model horizon " + num(t_end));
  for (const auto& c : spec.conjuncts) {
    if (c.tau > spec.t_end + tol::kTime)
      throw Error(ErrorCode::EmptyHorizon,
                  "conjunct starting at " + num(c.tau) + " lies beyond T_end = " + num(spec.t_end));
    for (const auto& a : c.atoms)
      if (a.a.size() != n || a.c.size() != p)
        throw Error(ErrorCode::DimensionMismatch, "atom dimensions do not match the model");
  }

  SynthesisProblem prob;
  prob.n = n;
  prob.p = p;
  prob.intervals = big_n;
  prob.step = disc.step;
  prob.weights.resize(p);
  for (int c = 0; c < p; ++c) {
    prob.weights(c) = model.inputs[c].weight;
    prob.lower.push_back(model.inputs[c].lower);
    prob.upper.push_back(model.inputs[c].upper);
  }

  std::size_t count = 0;
  for (const auto& c : spec.conjuncts)
    for (int j = 0; j <= big_n; ++j)
      if (disc.times[j] >= c.tau - tol::kTime && disc.times[j] <= spec.t_end + tol::kTime)
        count += c.atoms.size();
  prob.G = Matrix::Zero(static_cast<Eigen::Index>(count), prob.variables());
  prob.h = Vector::Zero(static_cast<Eigen::Index>(count));
  prob.rows.reserve(count);

  // x_j = free_j + sens_j u, advanced interval by interval.
  Vector free = x0;
  Matrix sens = Matrix::Zero(n, prob.variables());
  Eigen::Index row = 0;
  for (int j = 0; j <= big_n; ++j) {
    const double t = disc.times[j];
    const int uj = std::min(j, big_n - 1);
    int atom_index = 0;
    for (const auto& c : spec.conjuncts) {
      const bool active = t >= c.tau - tol::kTime && t <= spec.t_end + tol::kTime;
      for (const auto& a : c.atoms) {
        if (active) {
          const double margin = a.margin.at(t);
          prob.G.row(row) = a.a.transpose() * sens;
          if (big_n > 0) prob.G.row(row).segment(uj * p, p) += a.c.transpose();
          prob.h(row) = a.b - margin - opt.strict_margin - a.a.dot(free);
          prob.rows.push_back({opt.group, atom_index, j, margin});
          ++row;
        }
        ++atom_index;
      }
    }
    if (j == big_n) break;
    const ZohPair& z = disc.at(j);
    free = z.Phi * free;
    sens = z.Phi * sens;
    sens.middleCols(j * p, p) += z.Gamma;
  }
  return prob;
}

const char* to_string(ObjectiveKind k) { return k == ObjectiveKind::L2 ? "l2" : "l1"; }

ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "l2") return ObjectiveKind::L2;
  if (s == "l1") return ObjectiveKind::L1;
  throw Error(ErrorCode::InvalidArgument, "objective must be l1 or l2, got '" + s + "'");
}

ControlPlan solve(const SynthesisProblem& prob, ObjectiveKind objective,
                  const std::vector<std::string>& channels) {
  const int nv = prob.variables();
  const Eigen::Index m = prob.G.rows();
  // Input-bound rows follow the specification rows.
  Matrix ga = prob.G;
  Vector ha = prob.h;
  {
    std::vector<Eigen::Index> idx;
    std::vector<double> sign, rhs;
    for (int j = 0; j < prob.intervals; ++j)
      for (int c = 0; c < prob.p; ++c) {
        if (prob.upper[c]) {
          idx.push_back(j * prob.p + c);
          sign.push_back(1.0);
          rhs.push_back(*prob.upper[c]);
        }
        if (prob.lower[c]) {
          idx.push_back(j * prob.p + c);
          sign.push_back(-1.0);
          rhs.push_back(-*prob.lower[c]);
        }
      }
    const auto extra = static_cast<Eigen::Index>(idx.size());
    ga.conservativeResize(m + extra, nv);
    ha.conservativeResize(m + extra);
    ga.bottomRows(extra).setZero();
    for (Eigen::Index k = 0; k < extra; ++k) {
      ga(m + k, idx[k]) = sign[k];
      ha(m + k) = rhs[k];
    }
  }
  const Eigen::Index mg = ga.rows();

  Vector wdt(nv);
  for (int j = 0; j < prob.intervals; ++j)
    for (int c = 0; c < prob.p; ++c) wdt(j * prob.p + c) = prob.weights(c) * prob.step;

  QpProblem qp;
  QpOptions qopt;
  if (objective == ObjectiveKind::L2) {
    qp.H = Matrix(Vector(2.0 * wdt).asDiagonal());
    qp.H.diagonal().array() += tol::kHessianRegularization;
    qp.g = Vector::Zero(nv);
    qp.A = ga;
    qp.b = ha;
  } else {
    qp.H = Matrix::Zero(2 * nv, 2 * nv);
    qp.g.resize(2 * nv);
    qp.g << wdt, wdt;
    qp.A = Matrix::Zero(mg + 2 * nv, 2 * nv);
    qp.A.topLeftCorner(mg, nv) = ga;
    qp.A.topRightCorner(mg, nv) = -ga;
    qp.A.bottomRows(2 * nv) = -Matrix::Identity(2 * nv, 2 * nv);
    qp.b = Vector::Zero(mg + 2 * nv);
    qp.b.head(mg) = ha;
    qopt.lexicographic_ties = true;
  }

  const QpResult r = solve_qp(qp, qopt);
  if (r.status == QpStatus::Infeasible) {
    const Vector y = r.farkas.head(mg);
    const bool ok = verify_farkas(ga, ha, y);
    throw InfeasibleError("synthesis problem is infeasible (" + std::to_string(mg) +
                              " constraints; certificate " + (ok ? "verified" : "NOT verified") +
                              ")",
                          y, ok);
  }
  if (r.status == QpStatus::Unbounded)
    throw Error(ErrorCode::Unbounded, "synthesis objective is unbounded below");
  if (r.status == QpStatus::IterationLimit)
    throw Error(ErrorCode::IterationLimit, "QP solver hit its iteration limit");

  ControlPlan plan;
  plan.step = prob.step;
  plan.objective = objective;
  plan.status = r.status;
  plan.iterations = r.iterations + r.phase1_iterations;
  plan.stationarity = r.stationarity;
  Vector u = objective == ObjectiveKind::L2 ? r.x : Vector(r.x.head(nv) - r.x.tail(nv));
  plan.values = Matrix::Zero(prob.intervals, prob.p);
  for (int j = 0; j < prob.intervals; ++j) {
    plan.values.row(j) = u.segment(j * prob.p, prob.p).transpose();
    plan.times.push_back(j * prob.step);
  }
  if (!plan.values.allFinite()) throw Error(ErrorCode::NonFinite, "plan has non-finite entries");
  plan.objective_value = objective == ObjectiveKind::L2
                             ? (wdt.array() * u.array().square()).sum()
                             : (wdt.array() * u.array().abs()).sum();
  plan.primal_residual = mg ? std::max(0.0, (ga * u - ha).maxCoeff()) : 0.0;
  for (int a : r.active)
    if (a < m) plan.active.push_back(a);
  plan.channels = channels;
  if (plan.channels.empty())
    for (int c = 0; c < prob.p; ++c) plan.channels.push_back("u" + std::to_string(c + 1));
  plan.lazy_objectives.push_back(plan.objective_value);
  return plan;
}

ControlPlan solve_lazy(const SynthesisProblem& core, const std::vector<SynthesisProblem>& pool,
                       const GroupValidator& violated, ObjectiveKind objective,
                       const std::vector<std::string>& channels) {
  SynthesisProblem current = core;
  std::vector<char> added(pool.size(), 0);
  std::vector<double> history;
  std::vector<int> order;
  for (;;) {
    ControlPlan plan = solve(current, objective, channels);
    history.push_back(plan.objective_value);
    std::vector<int> fresh;
    for (int g : violated(plan))
      if (g >= 0 && g < static_cast<int>(pool.size()) && !added[g]) fresh.push_back(g);
    std::sort(fresh.begin(), fresh.end());
    fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
    if (fresh.empty()) {
      plan.lazy_objectives = history;
      plan.added_groups = order;
      return plan;
    }
    for (int g : fresh) {
      current.append(pool[g]);
      added[g] = 1;
      order.push_back(g);
    }
  }
}

PiecewiseSignal nominal_rollout(const DiscretizedSystem& disc, const ControlPlan& plan,
                                const Vector& x0) {
  const int big_n = disc.intervals();
  if (plan.intervals() != big_n || plan.values.cols() != disc.p)
    throw Error(ErrorCode::DimensionMismatch,
                "plan has " + std::to_string(plan.intervals()) + " intervals, grid has " +
                    std::to_string(big_n));
  if (x0.size() != disc.n) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong size");
  PiecewiseSignal s;
  s.times = disc.times;
  Vector x = x0;
  for (int j = 0; j <= big_n; ++j) {
    const Vector u = plan.input(std::min(j, big_n - 1));
    s.states.push_back(x);
    s.inputs.push_back(u);
    if (j < big_n) x = disc.at(j).Phi * x + disc.at(j).Gamma * u;
  }
  return s;
}

GroupValidator rollout_validator(const DiscretizedSystem& disc, const Vector& x0,
                                 std::vector<FragmentSpec> groups) {
  return [&disc, x0, groups = std::move(groups)](const ControlPlan& plan) {
    const PiecewiseSignal s = nominal_rollout(disc, plan, x0);
    std::vector<int> out;
    for (std::size_t g = 0; g < groups.size(); ++g)
      if (groups[g].robustness(s) < 0.0) out.push_back(static_cast<int>(g));
    return out;
  };
}

std::vector<double> intersample_slack(const SwitchedLinearModel& model,
                                      const DiscretizedSystem& disc, const PiecewiseSignal& nominal,
                                      const FragmentSpec& spec) {
  std::vector<double> out;
  const int big_n = disc.intervals();
  for (const Atom* a : spec.atoms()) {
    double worst = 0.0;
    for (int j = 0; j < static_cast<int>(nominal.size()); ++j) {
      const int mode_id = disc.mode_ids[disc.interval_mode[std::min(j, big_n - 1)]];
      const Mode& m = model.mode(mode_id);
      const Vector xdot = m.A * nominal.states[j] + m.B * nominal.inputs[j];
      worst = std::max(worst, std::abs(a->a.dot(xdot)));
    }
    out.push_back(worst * disc.step / 2.0);
  }
  return out;
}

std::string plan_to_csv(const ControlPlan& plan) {
  std::string out = "time";
  for (const auto& c : plan.channels) out += "," + c;
  out += "\n";
  for (int j = 0; j < plan.intervals(); ++j) {
    out += format_double(plan.times[j]);
    for (Eigen::Index c = 0; c < plan.values.cols(); ++c) out += "," + format_double(plan.values(j, c));
    out += "\n";
  }
  return out;
}

ControlPlan plan_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::string cur;
    for (char ch : l) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    f.push_back(cur);
    return f;
  };
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, "plan: empty file");
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "time")
    throw Error(ErrorCode::SchemaError, "plan: header must be time,<channels>");
  ControlPlan plan;
  plan.channels.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != header.size())
      throw Error(ErrorCode::SchemaError, "plan line " + std::to_string(lineno) + ": expected " +
                                              std::to_string(header.size()) + " fields");
    std::vector<double> v;
    for (const auto& s : f) {
      char* end = nullptr;
      const double d = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0' || !std::isfinite(d))
        throw Error(ErrorCode::SchemaError,
                    "plan line " + std::to_string(lineno) + ": bad number '" + s + "'");
      v.push_back(d);
    }
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw Error(ErrorCode::SchemaError, "plan: no rows");
  plan.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(header.size() - 1));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    plan.times.push_back(rows[j][0]);
    for (std::size_t c = 1; c < rows[j].size(); ++c)
      plan.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c - 1)) = rows[j][c];
  }
  plan.step = rows.size() > 1 ? plan.times[1] - plan.times[0] : kInf;
  for (std::size_t j = 1; j < plan.times.size(); ++j)
    if (std::abs(plan.times[j] - plan.times[0] - plan.step * static_cast<double>(j)) >
        tol::kTime * std::max(1.0, plan.times[j]))
      throw Error(ErrorCode::SchemaError, "plan: times are not on a uniform grid");
  return plan;
}

Json solver_log(const ControlPlan& plan, const SynthesisProblem& prob) {
  Json j;
  j["status"] = to_string(plan.status);
  j["objective"] = to_string(plan.objective);
  j["objective_value"] = plan.objective_value;
  j["iterations"] = plan.iterations;
  j["primal_residual"] = plan.primal_residual;
  j["stationarity"] = plan.stationarity;
  j["variables"] = prob.variables();
  j["constraints"] = prob.G.rows();
  j["step"] = plan.step;
  Json active = Json::array();
  for (int a : plan.active) {
    const auto& o = prob.rows[static_cast<std::size_t>(a)];
    active.push_back({{"row", a},
                      {"group", o.group},
                      {"atom", o.atom},
                      {"time", o.time_index * prob.step},
                      {"margin", o.margin}});
  }
  j["active_set"] = active;
  j["lazy_objectives"] = plan.lazy_objectives;
  j["added_groups"] = plan.added_groups;
  return j;
}

}  // namespace switchsynth
