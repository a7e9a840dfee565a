#include "switchsynth/sim.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace switchsynth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

const char* to_string(InitialSampling s) {
  switch (s) {
    case InitialSampling::NominalOnly: return "nominal";
    case InitialSampling::UniformInEllipsoid: return "uniform";
    case InitialSampling::BoundaryOfEllipsoid: return "boundary";
  }
  return "?";
}

InitialSampling initial_sampling_from_string(const std::string& s) {
  if (s == "nominal") return InitialSampling::NominalOnly;
  if (s == "uniform") return InitialSampling::UniformInEllipsoid;
  if (s == "boundary") return InitialSampling::BoundaryOfEllipsoid;
  throw Error(ErrorCode::InvalidArgument, "init mode must be nominal, uniform or boundary");
}

Vector sample_initial(const Ellipsoid& e, RandomStream& rng, bool boundary) {
  const Eigen::Index n = e.center.size();
  if (e.M.rows() != n || e.M.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "ellipsoid matrix does not match its centre");
  if (!(e.level >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ellipsoid level is negative");
  Vector y(n);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < n; ++i) y(i) = rng.normal();
    norm = y.norm();
  } while (norm == 0.0);
  const double radius = boundary ? 1.0 : std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
  y *= radius / norm;
  if (e.level == 0.0) return e.center;
  Eigen::LLT<Matrix> llt(e.M);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularM, "ellipsoid matrix is not positive definite");
  // M = LLᵀ, d = √level · L⁻ᵀ y gives dᵀMd = level·‖y‖².
  const Vector d = llt.matrixU().solve(y) * std::sqrt(e.level);
  return e.center + d;
}

Simulator::Simulator(const SwitchedLinearModel& model, const DiscretizedSystem& grid, double sde_step)
    : model_(model), grid_(grid) {
  h_ = sde_step > 0.0 ? sde_step : grid.step / 10.0;
  const double ratio = grid.step / h_;
  ratio_ = static_cast<int>(std::lround(ratio));
  if (h_ > grid.step * (1.0 + tol::kStepAlignment) || ratio_ < 1 ||
      std::abs(ratio - ratio_) > tol::kStepAlignment * std::max(1.0, ratio))
    throw Error(ErrorCode::StepMisaligned, "SDE step must divide the grid step");
  h_ = grid.step / ratio_;
  for (std::size_t k = 0; k < grid.pairs.size(); ++k) {
    const Mode& m = model.mode(grid.mode_ids[k]);
    step_pairs_.push_back(zoh(m.A, m.B, h_));
    diffusion_.push_back(m.Sigma * std::sqrt(h_));
  }
  const auto starts = segment_starts(model.schedule);
  segment_start_ = starts;
  for (int j = 0; j < grid.intervals(); ++j)
    segment_of_interval_.push_back(static_cast<int>(segment_at(model.schedule, grid.times[j])));
  certified_ = model.certified_indices();
}

Simulator::Result Simulator::run(const ControlPlan& plan, const Vector& x_init, RandomStream* rng,
                                 const std::vector<ModeCertificate>* certs) const {
  const int big_n = grid_.intervals();
  if (plan.intervals() != big_n || plan.values.cols() != grid_.p)
    throw Error(ErrorCode::DimensionMismatch, "plan does not match the simulation grid");
  if (x_init.size() != grid_.n || !x_init.allFinite())
    throw Error(ErrorCode::InvalidArgument, "initial state must be finite with n entries");
  const bool track = certs != nullptr && !certs->empty();
  std::vector<const ModeCertificate*> cert_of_pair;
  if (track)
    for (int id : grid_.mode_ids) cert_of_pair.push_back(&find_certificate(*certs, id));

  Result res;
  PiecewiseSignal& s = res.signal;
  const std::size_t total = static_cast<std::size_t>(big_n) * ratio_ + 1;
  s.times.reserve(total);
  s.states.reserve(total);
  s.inputs.reserve(total);
  Vector x = x_init;
  Vector xd = x_init;
  Vector noise(model_.m());
  double sup_phi = track ? 0.0 : kNaN;
  int segment = -1;
  for (int j = 0; j < big_n; ++j) {
    const int pi = grid_.interval_mode[j];
    const ZohPair& zp = step_pairs_[pi];
    const Matrix& dif = diffusion_[pi];
    const Vector u = plan.input(j);
    const Vector drive = zp.Gamma * u;
    if (segment_of_interval_[j] != segment) {
      segment = segment_of_interval_[j];
      xd = x;
    }
    const double s_i = segment_start_[segment];
    for (int k = 0; k < ratio_; ++k) {
      const double t = (static_cast<double>(j) * ratio_ + k) * h_;
      s.times.push_back(t);
      s.states.push_back(x);
      s.inputs.push_back(u);
      x = zp.Phi * x + drive;
      if (rng != nullptr && dif.size() > 0) {
        for (Eigen::Index c = 0; c < noise.size(); ++c) noise(c) = rng->normal();
        x += dif * noise;
      }
      if (!x.allFinite() || x.cwiseAbs().maxCoeff() > tol::kDivergence)
        throw Error(ErrorCode::NonFinite, "state diverged at t = " + std::to_string(t + h_));
      if (track) {
        xd = zp.Phi * xd + drive;
        const Vector d = select(Vector(x - xd), certified_);
        const ModeCertificate& c = *cert_of_pair[pi];
        const double t_next = (static_cast<double>(j) * ratio_ + k + 1) * h_;
        sup_phi = std::max(sup_phi, d.dot(c.M * d) * std::exp(c.mu * (t_next - s_i)));
      }
    }
  }
  s.times.push_back(static_cast<double>(big_n) * ratio_ * h_);
  s.states.push_back(x);
  s.inputs.push_back(plan.input(big_n - 1));
  res.sup_phi = sup_phi;
  return res;
}

PiecewiseSignal simulate_realization(const SwitchedLinearModel& model, const DiscretizedSystem& grid,
                                     const ControlPlan& plan, const Vector& x_init,
                                     std::uint64_t seed, std::uint64_t stream, double sde_step) {
  const Simulator sim(model, grid, sde_step);
  RandomStream rng(seed, stream);
  return sim.run(plan, x_init, &rng).signal;
}

namespace {

struct Prepared {
  Simulator sim;
  std::optional<Ellipsoid> initial;
  std::uint64_t seed;
};

Prepared prepare(const EnsembleInputs& in, const EnsembleConfig& cfg) {
  if (in.model == nullptr || in.grid == nullptr || in.plan == nullptr || in.spec == nullptr)
    throw Error(ErrorCode::InvalidArgument, "ensemble inputs are incomplete");
  if (cfg.realizations < 1) throw Error(ErrorCode::InvalidArgument, "realizations must be ≥ 1");
  if (in.spec->t_end > in.grid->times.back() + tol::kTime)
    throw Error(ErrorCode::UnboundedHorizon, "formula horizon exceeds T_end");
  std::optional<Ellipsoid> initial;
  const bool have_certs = in.certs != nullptr && !in.certs->empty();
  if (cfg.initial_sampling != InitialSampling::NominalOnly) {
    if (!have_certs)
      throw Error(ErrorCode::InvalidArgument, "initial-set sampling needs the certificates");
    const int first = in.model->schedule.front().mode;
    const auto idx = in.model->certified_indices();
    initial = Ellipsoid{select(in.model->x0, idx), find_certificate(*in.certs, first).M, in.r0};
  }
  return {Simulator(*in.model, *in.grid, cfg.sde_step), initial, derive_seed(cfg.seed, "ensemble")};
}

struct Single {
  RealizationResult result;
  PiecewiseSignal grid_trace;
};

Single realize(const Prepared& prep, const EnsembleInputs& in, const EnsembleConfig& cfg, int k) {
  RandomStream rng(prep.seed, static_cast<std::uint64_t>(k));
  Vector x = in.model->x0;
  if (prep.initial) {
    const Vector d = sample_initial(
        *prep.initial, rng, cfg.initial_sampling == InitialSampling::BoundaryOfEllipsoid);
    const auto idx = in.model->certified_indices();
    for (std::size_t i = 0; i < idx.size(); ++i) x(idx[i]) = d(static_cast<Eigen::Index>(i));
  }
  const bool have_certs = in.certs != nullptr && !in.certs->empty();
  auto run = prep.sim.run(*in.plan, x, &rng, have_certs ? in.certs : nullptr);
  Single out;
  out.result.atom_margins = in.spec->atom_margins(run.signal);
  double r = std::numeric_limits<double>::infinity();
  for (double m : out.result.atom_margins) r = std::min(r, m);
  out.result.robustness = r;
  out.result.satisfied = r >= 0.0;
  out.result.sup_phi = run.sup_phi;
  if (k < cfg.trace_limit) {
    const int ratio = prep.sim.substeps();
    for (std::size_t i = 0; i < run.signal.size(); i += static_cast<std::size_t>(ratio)) {
      out.grid_trace.times.push_back(run.signal.times[i]);
      out.grid_trace.states.push_back(run.signal.states[i]);
      out.grid_trace.inputs.push_back(run.signal.inputs[i]);
    }
  }
  return out;
}

EnsembleReport aggregate(const EnsembleInputs& in, const EnsembleConfig& cfg, const Prepared& prep,
                         std::vector<Single>& singles) {
  EnsembleReport rep;
  rep.seed = cfg.seed;
  rep.realizations = cfg.realizations;
  rep.sde_step = prep.sim.sde_step();
  rep.initial_sampling = cfg.initial_sampling;
  rep.r0 = in.r0;
  for (const Atom* a : in.spec->atoms()) {
    rep.atom_labels.push_back(a->label);
    rep.atom_scales.push_back(a->scale);
    rep.worst_margins.push_back(std::numeric_limits<double>::infinity());
  }
  const bool have_certs = in.certs != nullptr && !in.certs->empty();
  if (in.tube != nullptr) {
    rep.gamma_hat = in.tube->gamma_hat;
    rep.epsilon = in.tube->epsilon;
    if (have_certs) rep.theoretical_bound = probability_bound(*in.certs, in.model->schedule, rep.gamma_hat);
  } else {
    rep.theoretical_bound = kNaN;
  }
  rep.max_sup_phi = have_certs ? 0.0 : kNaN;
  int below = 0;
  for (std::size_t k = 0; k < singles.size(); ++k) {
    auto& s = singles[k];
    if (s.result.satisfied) ++rep.satisfied_count;
    for (std::size_t a = 0; a < rep.worst_margins.size(); ++a)
      rep.worst_margins[a] = std::min(rep.worst_margins[a], s.result.atom_margins[a]);
    if (have_certs) {
      rep.max_sup_phi = std::max(rep.max_sup_phi, s.result.sup_phi);
      if (s.result.sup_phi < rep.gamma_hat) ++below;
    }
    if (!s.grid_trace.times.empty()) rep.traces.push_back({static_cast<int>(k), std::move(s.grid_trace)});
    rep.runs.push_back(std::move(s.result));
  }
  rep.empirical_rate = static_cast<double>(rep.satisfied_count) / cfg.realizations;
  rep.fraction_below_gamma = have_certs && in.tube != nullptr
                                 ? static_cast<double>(below) / cfg.realizations
                                 : kNaN;
  return rep;
}

}  // namespace

EnsembleReport run_ensemble_serial(const EnsembleInputs& in, const EnsembleConfig& cfg) {
  const Prepared prep = prepare(in, cfg);
  std::vector<Single> singles(static_cast<std::size_t>(cfg.realizations));
  for (int k = 0; k < cfg.realizations; ++k) singles[k] = realize(prep, in, cfg, k);
  return aggregate(in, cfg, prep, singles);
}

EnsembleReport run_ensemble(const EnsembleInputs& in, const EnsembleConfig& cfg) {
  const Prepared prep = prepare(in, cfg);
  std::vector<Single> singles(static_cast<std::size_t>(cfg.realizations));
  std::string failure;
  ErrorCode failure_code = ErrorCode::NonFinite;
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < cfg.realizations; ++k) {
    try {
      singles[k] = realize(prep, in, cfg, k);
    } catch (const Error& e) {
#pragma omp critical(switchsynth_ensemble_error)
      if (failure.empty()) {
        failure = e.what();
        failure_code = e.code();
      }
    }
  }
  if (!failure.empty()) throw Error(failure_code, failure);
  return aggregate(in, cfg, prep, singles);
}

Json ensemble_to_json(const EnsembleReport& r) {
  Json j;
  j["rng"] = r.rng;
  j["seed"] = r.seed;
  j["realizations"] = r.realizations;
  j["sde_step"] = r.sde_step;
  j["initial_sampling"] = to_string(r.initial_sampling);
  j["r0"] = r.r0;
  j["satisfied_count"] = r.satisfied_count;
  j["empirical_rate"] = r.empirical_rate;
  j["theoretical_bound"] = finite_or_null(r.theoretical_bound);
  j["gamma_hat"] = r.gamma_hat;
  j["epsilon"] = r.epsilon;
  j["max_sup_phi"] = finite_or_null(r.max_sup_phi);
  j["fraction_sup_phi_below_gamma_hat"] = finite_or_null(r.fraction_below_gamma);
  Json margins = Json::array();
  for (std::size_t a = 0; a < r.atom_labels.size(); ++a)
    margins.push_back({{"atom", r.atom_labels[a]},
                       {"worst_margin", finite_or_null(r.worst_margins[a] * r.atom_scales[a])},
                       {"worst_margin_normalized", finite_or_null(r.worst_margins[a])}});
  j["worst_margins"] = margins;
  Json runs = Json::array();
  for (std::size_t k = 0; k < r.runs.size(); ++k)
    runs.push_back({{"id", k},
                    {"robustness", finite_or_null(r.runs[k].robustness)},
                    {"satisfied", r.runs[k].satisfied},
                    {"sup_phi", finite_or_null(r.runs[k].sup_phi)}});
  j["runs"] = runs;
  return j;
}

namespace {

struct Channel {
  std::string name;
  Vector c;
  Vector d;
};

std::vector<Channel> channels(const SwitchedLinearModel& model, bool with_states) {
  std::vector<Channel> out;
  const int n = model.n(), p = model.p();
  if (with_states || model.outputs.empty())
    for (int i = 0; i < n; ++i) out.push_back({model.states[i].name, Vector::Unit(n, i), Vector::Zero(p)});
  for (const auto& o : model.outputs) out.push_back({o.name, o.c_row, o.d_row});
  for (int c = 0; c < p; ++c) out.push_back({model.inputs[c].name, Vector::Zero(n), Vector::Unit(p, c)});
  return out;
}

}  // namespace

std::string plot_csv(const SwitchedLinearModel& model, const std::vector<Trace>& traces) {
  const auto ch = channels(model, false);
  std::string out = "time,realization,channel,value\n";
  for (const auto& tr : traces)
    for (std::size_t i = 0; i < tr.signal.size(); ++i)
      for (const auto& c : ch) {
        const double v = c.c.dot(tr.signal.states[i]) + c.d.dot(tr.signal.inputs[i]);
        out += format_double(tr.signal.times[i]) + "," + std::to_string(tr.realization) + "," +
               c.name + "," + format_double(v) + "\n";
      }
  return out;
}

std::string trace_csv(const SwitchedLinearModel& model, const PiecewiseSignal& s) {
  const auto ch = channels(model, true);
  std::string out = "time";
  for (const auto& c : ch) out += "," + c.name;
  out += "\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += format_double(s.times[i]);
    for (const auto& c : ch) out += "," + format_double(c.c.dot(s.states[i]) + c.d.dot(s.inputs[i]));
    out += "\n";
  }
  return out;
}

}  // namespace switchsynth
