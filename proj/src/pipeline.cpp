#include "switchsynth/pipeline.hpp"

#include "switchsynth/mtl_parser.hpp"
#include "switchsynth/rng.hpp"

#include <cmath>
#include <cstdio>

namespace switchsynth {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json matrix_or_null(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(finite_or_null(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<Vector> tube_directions(const SwitchedLinearModel& model, const FragmentSpec& spec) {
  const auto idx = model.certified_indices();
  std::vector<Vector> dirs;
  for (const Atom* a : spec.atoms()) dirs.push_back(select(a->a, idx));
  return dirs;
}

CertifyResult certify(const SwitchedLinearModel& model, const CertifyOptions& opt,
                      const FragmentSpec* spec) {
  model.validate();
  if (!(opt.epsilon > 0.0 && opt.epsilon < 1.0))
    throw Error(ErrorCode::InvalidEpsilon, "epsilon must lie in (0, 1), got " + std::to_string(opt.epsilon));
  if (opt.mu && !(*opt.mu > 0.0)) throw Error(ErrorCode::InvalidArgument, "mu must be positive");
  CertifyResult res;
  res.epsilon = opt.epsilon;
  res.model_hash = hex64(fnv1a64(model_to_json_text(model)));
  const auto idx = model.certified_indices();
  const int nc = static_cast<int>(idx.size());
  if (opt.target_entry < 0 || opt.target_entry >= nc)
    throw Error(ErrorCode::InvalidArgument, "target entry outside the certified state");

  for (const auto& mode : model.modes)
    if (!is_hurwitz(model.certified_A(mode.id)))
      throw Error(ErrorCode::NotHurwitz, "mode " + std::to_string(mode.id) +
                                             " is not Hurwitz on the certified state");
  auto search = [&](int budget, std::vector<ModeCertificate>& certs, std::vector<int>& halvings) {
    for (const auto& mode : model.modes) {
      const Matrix a = model.certified_A(mode.id);
      int h = 0;
      const double mu = select_mu(a, opt.mu.value_or(mode.mu), &h);
      ShapeOptions so;
      so.target_index = opt.target_entry;
      so.budget = budget;
      so.seed = derive_seed(opt.seed, "certify/" + std::to_string(mode.id));
      certs.push_back(shape_certificate(mode.id, a, model.certified_Sigma(mode.id), mu, so));
      halvings.push_back(h);
    }
  };
  // Worst tube half-width along the target coordinate over all segments.
  auto width = [&](const std::vector<ModeCertificate>& certs) {
    double max_alpha = 0.0;
    for (const auto& seg : model.schedule)
      max_alpha = std::max(max_alpha, find_certificate(certs, seg.mode).alpha);
    const double g = max_alpha * model.t_end() / opt.epsilon;
    const double r0 = model.r0_gamma_multiple ? *model.r0_gamma_multiple * g : model.r0;
    return tube_parameters(certs, model.schedule, opt.epsilon, r0, {Vector::Unit(nc, opt.target_entry)})
        .delta_hat.maxCoeff();
  };
  search(opt.budget, res.certs, res.mu_halvings);
  if (opt.budget > 1) {
    // Per-mode shaping can inflate the level carried across switches; keep
    // the unshaped set when it yields the narrower tube.
    std::vector<ModeCertificate> base;
    std::vector<int> base_halvings;
    search(1, base, base_halvings);
    if (width(base) < width(res.certs)) {
      res.certs = std::move(base);
      res.mu_halvings = std::move(base_halvings);
      res.shaped = false;
    }
  }

  std::vector<Vector> dirs;
  if (spec != nullptr) {
    dirs = tube_directions(model, *spec);
    for (const Atom* a : spec->atoms()) res.direction_labels.push_back(a->label);
  } else {
    for (int i = 0; i < nc; ++i) {
      dirs.push_back(Vector::Unit(nc, i));
      res.direction_labels.push_back(model.states[idx[i]].name);
    }
  }
  // γ̂ does not depend on r0, so a multiple of γ̂ is resolved first.
  const double eps = opt.epsilon;
  double max_alpha = 0.0;
  for (const auto& seg : model.schedule)
    max_alpha = std::max(max_alpha, find_certificate(res.certs, seg.mode).alpha);
  const double gamma_hat = max_alpha * model.t_end() / eps;
  res.r0 = model.r0_gamma_multiple ? *model.r0_gamma_multiple * gamma_hat : model.r0;
  res.tube = tube_parameters(res.certs, model.schedule, eps, res.r0, dirs);
  res.gamma_hat = res.tube.gamma_hat;
  res.bound = probability_bound(res.certs, model.schedule, res.gamma_hat);
  res.product_bound = product_bound(res.certs, model.schedule, res.gamma_hat);

  for (std::size_t i = 1; i < model.schedule.size(); ++i) {
    const auto& prev = find_certificate(res.certs, model.schedule[i - 1].mode);
    const auto& cur = find_certificate(res.certs, model.schedule[i].mode);
    ContainmentCheck c;
    c.from_mode = prev.mode_id;
    c.to_mode = cur.mode_id;
    c.time = res.tube.start[i];
    c.inner_level = res.tube.r[i - 1] * std::exp(-prev.mu * model.schedule[i - 1].dwell / 2.0);
    c.outer_level = res.tube.r[i];
    const Vector origin = Vector::Zero(nc);
    c.contained = ellipsoid_contained({origin, prev.M, c.inner_level}, {origin, cur.M, c.outer_level});
    res.containment.push_back(c);
  }
  return res;
}

Json certify_to_json(const CertifyResult& r) {
  Json j;
  j["model_hash"] = r.model_hash;
  j["epsilon"] = r.epsilon;
  j["r0"] = r.r0;
  j["gamma_hat"] = r.gamma_hat;
  j["probability_bound"] = r.bound;
  j["shaped"] = r.shaped;
  j["product_bound"] = r.product_bound;
  Json certs = Json::array();
  for (std::size_t i = 0; i < r.certs.size(); ++i) {
    Json c = certificate_to_json(r.certs[i]);
    c["mu_halvings"] = r.mu_halvings[i];
    certs.push_back(c);
  }
  j["certificates"] = certs;
  Json tube;
  tube["segment_start"] = r.tube.start;
  tube["mu"] = r.tube.mu;
  tube["r"] = r.tube.r;
  tube["r_proof"] = r.tube.r_proof;
  tube["directions"] = r.direction_labels;
  tube["z"] = matrix_or_null(r.tube.z);
  tube["delta_hat"] = matrix_or_null(r.tube.delta_hat);
  j["tube"] = tube;
  Json cont = Json::array();
  for (const auto& c : r.containment)
    cont.push_back({{"from_mode", c.from_mode},
                    {"to_mode", c.to_mode},
                    {"time", c.time},
                    {"inner_level", c.inner_level},
                    {"outer_level", c.outer_level},
                    {"contained", c.contained}});
  j["containment"] = cont;
  return j;
}

CertifyResult certify_from_json(const Json& j) {
  CertifyResult r;
  const Json& hash = json_field(j, "model_hash", "");
  if (!hash.is_string()) throw Error(ErrorCode::SchemaError, "/model_hash: expected a string");
  r.model_hash = hash.get<std::string>();
  r.epsilon = json_number(json_field(j, "epsilon", ""), "/epsilon");
  r.r0 = json_number(json_field(j, "r0", ""), "/r0");
  r.gamma_hat = json_number(json_field(j, "gamma_hat", ""), "/gamma_hat");
  r.bound = json_number(json_field(j, "probability_bound", ""), "/probability_bound");
  r.product_bound = json_number(json_field(j, "product_bound", ""), "/product_bound");
  const Json& certs = json_field(j, "certificates", "");
  if (!certs.is_array()) throw Error(ErrorCode::SchemaError, "/certificates: expected an array");
  for (std::size_t i = 0; i < certs.size(); ++i) {
    const std::string ptr = "/certificates/" + std::to_string(i);
    r.certs.push_back(certificate_from_json(certs[i], ptr));
    r.mu_halvings.push_back(certs[i].value("mu_halvings", 0));
  }
  return r;
}

TubeParameters tube_for(const SwitchedLinearModel& model, const CertifyResult& cert,
                        const FragmentSpec& spec) {
  const auto idx = model.certified_indices();
  for (const auto& c : cert.certs)
    if (c.M.rows() != static_cast<Eigen::Index>(idx.size()))
      throw Error(ErrorCode::DimensionMismatch, "certificate size does not match the model");
  return tube_parameters(cert.certs, model.schedule, cert.epsilon, cert.r0,
                         tube_directions(model, spec));
}

SynthesisRun synthesize(const SwitchedLinearModel& model, const CertifyResult& cert,
                        const FragmentSpec& spec, const std::vector<FragmentSpec>& pool,
                        const SynthesizeOptions& opt) {
  SynthesisRun run;
  run.spec = spec;
  run.pool = pool;
  run.nesting = check_nesting(spec);
  run.tube = tube_for(model, cert, spec);
  run.tightened = tighten(spec, run.tube, model.schedule);
  run.grid = discretize(model, opt.step);
  run.problem = assemble(run.grid, run.tightened, model.x0, model);

  std::vector<std::string> channels;
  for (const auto& in : model.inputs) channels.push_back(in.name);
  if (pool.empty()) {
    run.plan = solve(run.problem, opt.objective, channels);
  } else {
    std::vector<SynthesisProblem> groups;
    for (std::size_t g = 0; g < pool.size(); ++g) {
      run.pool_tight.push_back(tighten(pool[g], tube_for(model, cert, pool[g]), model.schedule));
      AssembleOptions ao;
      ao.group = static_cast<int>(g) + 1;
      groups.push_back(assemble(run.grid, run.pool_tight.back(), model.x0, model, ao));
    }
    run.plan = solve_lazy(run.problem, groups,
                          rollout_validator(run.grid, model.x0, run.pool_tight), opt.objective,
                          channels);
    for (int g : run.plan.added_groups) run.problem.append(groups[static_cast<std::size_t>(g)]);
  }
  run.nominal = nominal_rollout(run.grid, run.plan, model.x0);
  run.tightened_robustness = run.tightened.robustness(run.nominal);
  run.robustness = spec.robustness(run.nominal);
  for (const auto& g : run.pool_tight)
    run.tightened_robustness = std::min(run.tightened_robustness, g.robustness(run.nominal));
  for (const auto& g : run.pool) run.robustness = std::min(run.robustness, g.robustness(run.nominal));
  run.intersample_slack = intersample_slack(model, run.grid, run.nominal, spec);
  return run;
}

Json synthesis_to_json(const SynthesisRun& run) {
  Json j;
  j["tightened_formula"] = format_fragment(run.tightened);
  j["nominal_robustness_tightened"] = run.tightened_robustness;
  j["nominal_robustness"] = run.robustness;
  j["nesting"] = to_string(run.nesting);
  j["objective"] = to_string(run.plan.objective);
  j["objective_value"] = run.plan.objective_value;
  j["grid_step"] = run.grid.step;
  j["intervals"] = run.grid.intervals();
  j["lazy_iterations"] = run.plan.lazy_objectives.size();
  j["lazy_objectives"] = run.plan.lazy_objectives;
  j["added_groups"] = run.plan.added_groups;
  Json slack = Json::array();
  const auto atoms = run.spec.atoms();
  for (std::size_t a = 0; a < atoms.size(); ++a)
    slack.push_back({{"atom", atoms[a]->label},
                     {"slack", run.intersample_slack[a] * atoms[a]->scale}});
  j["intersample_slack"] = slack;
  Json tube = tube_to_json(run.tube);
  Json labels = Json::array(), scales = Json::array();
  for (const Atom* a : atoms) {
    labels.push_back(a->label);
    scales.push_back(a->scale);
  }
  tube["directions"] = labels;
  tube["direction_scales"] = scales;
  j["tube"] = tube;
  return j;
}

FragmentSpec load_fragment(const std::string& text, const SwitchedLinearModel& model) {
  const FormulaPtr f = parse_formula(text, model.symbols());
  return validate_fragment(*f);
}

std::vector<FragmentSpec> load_pool(const std::string& text, const SwitchedLinearModel& model) {
  const FormulaPtr f = parse_formula(text, model.symbols());
  return split_groups(*f);
}

}  // namespace switchsynth
