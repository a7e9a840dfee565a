#include "switchsynth/cli.hpp"

#include "switchsynth/pipeline.hpp"
#include "switchsynth/sim.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>

namespace switchsynth {

namespace fs = std::filesystem;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Infeasible:
    case ErrorCode::NotHurwitz:
      return 3;
    case ErrorCode::IllConditioned:
    case ErrorCode::SingularM:
    case ErrorCode::SingularAlgebraicBlock:
    case ErrorCode::NonFinite:
    case ErrorCode::IterationLimit:
    case ErrorCode::Unbounded:
      return 4;
    default:
      return 2;
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string content_hash(const std::string& bytes) { return hex64(fnv1a64(bytes)); }

std::string fmt(double v) { return format_double(v); }

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Json error_json(const std::string& code, const std::string& message, int exit) {
  return {{"error", {{"code", code}, {"message", message}, {"exit_code", exit}}}};
}

/// Non-error outcome with a nonzero exit (containment failure, validation miss).
struct Outcome {
  int code = 0;
  Json error;
};

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> args, fs::path out, bool out_is_dir)
      : out_(std::move(out)), dir_(out_is_dir) {
    j_["tool"] = "switchsynth";
    j_["version"] = kToolVersion;
    j_["command"] = std::move(command);
    j_["arguments"] = std::move(args);
    j_["out"] = out_.string();
    j_["out_kind"] = dir_ ? "dir" : "file";
    j_["inputs"] = Json::object();
    j_["parameters"] = Json::object();
    j_["outputs"] = Json::object();
    j_["timings_s"] = Json::object();
  }

  std::string input(const std::string& role, const std::string& path) {
    std::string bytes = read_text(path);
    j_["inputs"][role] = {{"path", path}, {"fnv1a64", content_hash(bytes)}};
    return bytes;
  }

  Json& params() { return j_["parameters"]; }

  /// Writes `bytes` under the output directory (or to the output file).
  void output(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ ? out_ / name : out_;
    write_text(p.string(), bytes);
    j_["outputs"][dir_ ? name : p.filename().string()] = content_hash(bytes);
  }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Record {
      Manifest* m;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Record() {
        m->j_["timings_s"][name] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } rec{this, name, t0};
    return f();
  }

  fs::path path() const {
    const std::string cmd = j_["command"].get<std::string>();
    return dir_ ? out_ / ("manifest." + cmd + ".json") : fs::path(out_.string() + ".manifest.json");
  }

  void write(int code) {
    j_["exit_code"] = code;
    write_text(path().string(), dump_json(j_));
  }

 private:
  fs::path out_;
  bool dir_;
  Json j_;
};

SwitchedLinearModel load_model_input(Manifest& m, const std::string& path) {
  return model_from_json_text(m.input("model", path));
}

CertifyResult load_cert_input(Manifest& m, const std::string& path,
                              const SwitchedLinearModel& model) {
  CertifyResult cert = certify_from_json(parse_json(m.input("certificate", path), path));
  const std::string expect = hex64(fnv1a64(model_to_json_text(model)));
  if (cert.model_hash != expect)
    throw Error(ErrorCode::InvariantViolation, "certificate " + path +
                                                   " was computed for a different model (hash " +
                                                   cert.model_hash + ", model " + expect + ")");
  return cert;
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
  std::string model, out, spec;
  double epsilon = 0.05;
  std::optional<double> mu;
  int target_entry = 0;
  int budget = 64;
  std::uint64_t seed = 0;

  std::vector<std::string> argv() const {
    std::vector<std::string> a{"certify", "--model", model, "--out", out, "--epsilon", fmt(epsilon),
                               "--target-entry", std::to_string(target_entry), "--budget",
                               std::to_string(budget), "--seed", std::to_string(seed)};
    if (!spec.empty()) a.insert(a.end(), {"--spec", spec});
    if (mu) a.insert(a.end(), {"--mu", fmt(*mu)});
    return a;
  }
};

Outcome cmd_certify(const CertifyArgs& a, std::ostream& out) {
  Manifest man("certify", a.argv(), a.out, true);
  const auto model = load_model_input(man, a.model);
  std::optional<FragmentSpec> spec;
  if (!a.spec.empty()) spec = load_fragment(man.input("spec", a.spec), model);
  CertifyOptions opt;
  opt.epsilon = a.epsilon;
  opt.mu = a.mu;
  opt.target_entry = a.target_entry;
  opt.budget = a.budget;
  opt.seed = a.seed;
  const CertifyResult res =
      man.stage("certify", [&] { return certify(model, opt, spec ? &*spec : nullptr); });

  Json& p = man.params();
  p["epsilon"] = a.epsilon;
  p["target_entry"] = a.target_entry;
  p["budget"] = a.budget;
  p["seed"] = a.seed;
  p["r0"] = res.r0;
  p["shaped"] = res.shaped;
  Json modes = Json::array();
  for (std::size_t i = 0; i < res.certs.size(); ++i)
    modes.push_back({{"mode", res.certs[i].mode_id},
                     {"mu", res.certs[i].mu},
                     {"mu_halvings", res.mu_halvings[i]},
                     {"search_seed", derive_seed(a.seed, "certify/" +
                                                              std::to_string(res.certs[i].mode_id))}});
  p["modes"] = modes;
  man.output("certificate.json", dump_json(certify_to_json(res)));

  out << "model " << model.name << " (" << res.model_hash << ")\n";
  out << "epsilon " << fixed(res.epsilon) << "  gamma_hat " << fixed(res.gamma_hat) << "  r0 "
      << fixed(res.r0) << "\n";
  out << "probability bound " << fixed(res.bound) << " (product form " << fixed(res.product_bound)
      << ")\n";
  for (std::size_t i = 0; i < res.certs.size(); ++i)
    out << "mode " << res.certs[i].mode_id << ": mu " << fixed(res.certs[i].mu) << " alpha "
        << fixed(res.certs[i].alpha) << (res.mu_halvings[i] ? "  (mu halved)" : "") << "\n";
  Outcome o;
  for (const auto& c : res.containment) {
    out << "containment " << c.from_mode << " -> " << c.to_mode << " at t=" << fixed(c.time) << ": "
        << (c.contained ? "ok" : "FAILED") << "\n";
    if (!c.contained && o.code == 0) {
      o.code = 3;
      o.error = error_json("ContainmentFailure",
                           "ellipsoid at the switch " + std::to_string(c.from_mode) + " -> " +
                               std::to_string(c.to_mode) + " is not contained",
                           3);
    }
  }
  out << "wrote " << (fs::path(a.out) / "certificate.json").string() << "\n";
  man.write(o.code);
  return o;
}

// ------------------------------------------------------------- synthesize

struct SynthesizeArgs {
  std::string model, spec, cert, out, pool;
  double step = 0.05;
  std::string objective = "l2";

  std::vector<std::string> argv() const {
    std::vector<std::string> a{"synthesize", "--model", model, "--spec", spec, "--cert", cert,
                               "--out", out, "--step", fmt(step), "--objective", objective};
    if (!pool.empty()) a.insert(a.end(), {"--lazy-pool", pool});
    return a;
  }
};

Outcome cmd_synthesize(const SynthesizeArgs& a, std::ostream& out, std::ostream& err) {
  Manifest man("synthesize", a.argv(), a.out, true);
  const auto model = load_model_input(man, a.model);
  const auto cert = load_cert_input(man, a.cert, model);
  const auto spec = load_fragment(man.input("spec", a.spec), model);
  std::vector<FragmentSpec> pool;
  if (!a.pool.empty()) pool = load_pool(man.input("lazy_pool", a.pool), model);
  SynthesizeOptions opt;
  opt.step = a.step;
  opt.objective = objective_from_string(a.objective);

  Json& p = man.params();
  p["step"] = a.step;
  p["objective"] = to_string(opt.objective);
  p["epsilon"] = cert.epsilon;
  p["strict_margin"] = tol::kStrictMargin;
  Json weights = Json::object();
  for (const auto& in : model.inputs) weights[in.name] = in.weight;
  p["input_weights"] = weights;

  SynthesisRun run;
  try {
    run = man.stage("synthesize", [&] { return synthesize(model, cert, spec, pool, opt); });
  } catch (const InfeasibleError& e) {
    Json cj;
    cj["status"] = "infeasible";
    cj["message"] = e.what();
    cj["farkas_multipliers"] = vector_to_json(e.certificate());
    cj["verified"] = e.verified();
    man.output("infeasibility.json", dump_json(cj));
    man.write(3);
    Json ej = error_json(to_string(e.code()), e.what(), 3);
    ej["error"]["certificate"] = (fs::path(a.out) / "infeasibility.json").string();
    ej["error"]["certificate_verified"] = e.verified();
    err << dump_json(ej);
    return {3, Json()};
  }
  man.output("plan.csv", plan_to_csv(run.plan));
  man.output("solver_log.json", dump_json(solver_log(run.plan, run.problem)));
  Json sj = synthesis_to_json(run);
  // White-noise feedthrough into outputs has no pathwise meaning; it is dropped.
  const bool feedthrough = model.noise_feedthrough && model.noise_feedthrough->cwiseAbs().maxCoeff() > 0.0;
  sj["noise_feedthrough_excluded"] = feedthrough;
  man.output("synthesis.json", dump_json(sj));
  man.output("nominal.csv", trace_csv(model, run.nominal));

  out << "tightened specification:\n" << format_fragment(run.tightened) << "\n";
  out << "nominal robustness (tightened) " << fixed(run.tightened_robustness) << "\n";
  out << "nominal robustness (original)  " << fixed(run.robustness) << "\n";
  out << "objective " << to_string(run.plan.objective) << " = " << fixed(run.plan.objective_value)
      << "  (" << run.plan.iterations << " solver iterations";
  if (!pool.empty()) out << ", " << run.plan.lazy_objectives.size() << " lazy rounds";
  out << ")\n";
  out << "wrote " << (fs::path(a.out) / "plan.csv").string() << "\n";
  man.write(0);
  return {};
}

// --------------------------------------------------------------- validate

struct ValidateArgs {
  std::string model, spec, plan, cert, out;
  int realizations = 100;
  std::uint64_t seed = 0;
  std::string init_mode = "uniform";
  double sde_step = 0.0;
  int plot_realizations = 100;
  bool dump_traces = false;

  std::vector<std::string> argv() const {
    std::vector<std::string> a{"validate", "--model", model, "--spec", spec, "--plan", plan,
                               "--cert", cert, "--out", out, "--realizations",
                               std::to_string(realizations), "--seed", std::to_string(seed),
                               "--init-mode", init_mode, "--sde-step", fmt(sde_step),
                               "--plot-realizations", std::to_string(plot_realizations)};
    if (dump_traces) a.push_back("--dump-traces");
    return a;
  }
};

Outcome cmd_validate(ValidateArgs a, std::ostream& out) {
  if (a.cert.empty()) a.cert = (fs::path(a.plan).parent_path() / "certificate.json").string();
  if (!fs::exists(a.cert))
    throw Error(ErrorCode::MissingArtifact, "certificate not found: " + a.cert);
  Manifest man("validate", a.argv(), a.out, true);
  const auto model = load_model_input(man, a.model);
  const auto cert = load_cert_input(man, a.cert, model);
  const auto spec = load_fragment(man.input("spec", a.spec), model);
  const ControlPlan plan = plan_from_csv(man.input("plan", a.plan));
  if (!std::isfinite(plan.step))
    throw Error(ErrorCode::StepMisaligned, "plan has a single row; the grid step is undefined");
  const auto grid = discretize(model, plan.step);
  if (plan.values.rows() != grid.intervals() || plan.values.cols() != grid.p)
    throw Error(ErrorCode::StepMisaligned,
                "plan has " + std::to_string(plan.values.rows()) + " rows for " +
                    std::to_string(grid.intervals()) + " grid intervals");
  for (int j = 0; j < grid.intervals(); ++j)
    if (std::abs(plan.times[static_cast<std::size_t>(j)] - grid.times[static_cast<std::size_t>(j)]) >
        tol::kStepAlignment * std::max(1.0, grid.times.back()))
      throw Error(ErrorCode::StepMisaligned, "plan times do not match the model schedule grid");
  const auto tube = tube_for(model, cert, spec);

  EnsembleConfig cfg;
  cfg.realizations = a.realizations;
  cfg.seed = a.seed;
  cfg.sde_step = a.sde_step;
  cfg.initial_sampling = initial_sampling_from_string(a.init_mode);
  cfg.trace_limit = std::min(a.plot_realizations, a.realizations);
  const EnsembleInputs in{&model, &grid, &plan, &spec, &cert.certs, &tube, cert.r0};
  const EnsembleReport rep = man.stage("ensemble", [&] { return run_ensemble(in, cfg); });

  Json& p = man.params();
  p["realizations"] = a.realizations;
  p["seed"] = a.seed;
  p["ensemble_seed"] = derive_seed(a.seed, "ensemble");
  p["rng"] = kRngName;
  p["initial_sampling"] = to_string(cfg.initial_sampling);
  p["sde_step"] = rep.sde_step;
  p["grid_step"] = plan.step;
  p["epsilon"] = cert.epsilon;

  const double b = rep.theoretical_bound;
  const double slack = 2.0 * std::sqrt(b * (1.0 - b) / a.realizations);
  const bool passed = rep.empirical_rate >= b - slack;
  Json j = ensemble_to_json(rep);
  j["acceptance"] = {{"binomial_slack", slack}, {"threshold", b - slack}, {"passed", passed}};
  man.output("ensemble.json", dump_json(j));

  std::vector<Trace> traces;
  traces.push_back({-1, nominal_rollout(grid, plan, model.x0)});
  traces.insert(traces.end(), rep.traces.begin(), rep.traces.end());
  man.output("plot.csv", plot_csv(model, traces));
  if (a.dump_traces) {
    std::string index = "realization,file\n";
    for (const auto& t : rep.traces) {
      char name[64];
      std::snprintf(name, sizeof name, "traces/realization_%05d.csv", t.realization);
      man.output(name, trace_csv(model, t.signal));
      index += std::to_string(t.realization) + "," + std::string(name + 7) + "\n";
    }
    man.output("traces/index.csv", index);
  }

  out << rep.satisfied_count << "/" << rep.realizations << " realizations satisfy the specification"
      << " (rate " << fixed(rep.empirical_rate) << ")\n";
  out << "theoretical bound " << fixed(b) << ", binomial slack " << fixed(slack) << " -> "
      << (passed ? "PASS" : "FAIL") << "\n";
  out << "fraction of realizations with sup of the tube functional below gamma_hat: "
      << fixed(rep.fraction_below_gamma) << "\n";
  for (std::size_t i = 0; i < rep.atom_labels.size(); ++i)
    out << "  worst margin " << rep.atom_labels[i] << ": "
        << fixed(rep.worst_margins[i] * rep.atom_scales[i]) << "\n";
  out << "wrote " << (fs::path(a.out) / "ensemble.json").string() << "\n";

  Outcome o;
  if (!passed) {
    o.code = 3;
    o.error = error_json("ValidationFailed",
                         "empirical rate " + fixed(rep.empirical_rate) + " is below " +
                             fixed(b - slack),
                         3);
  }
  man.write(o.code);
  return o;
}

// ----------------------------------------------------------------- report

Json load_artifact(Manifest& m, const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw Error(ErrorCode::MissingArtifact, "missing artifact " + p.string());
  return parse_json(m.input(name, p.string()), p.string());
}

std::string md_number(const Json& v) {
  return v.is_number() ? fixed(v.get<double>()) : std::string("n/a");
}

Outcome cmd_report(const std::string& dir, std::ostream& out) {
  Manifest man("report", {"report", "--run-dir", dir}, dir, true);
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingArtifact, "no run directory " + dir);
  std::vector<std::string> missing;
  for (const char* f : {"certificate.json", "synthesis.json", "ensemble.json"})
    if (!fs::exists(fs::path(dir) / f)) missing.push_back(f);
  if (!missing.empty()) {
    std::string list;
    for (const auto& f : missing) list += (list.empty() ? "" : ", ") + f;
    throw Error(ErrorCode::MissingArtifact, "run directory " + dir + " lacks " + list);
  }
  const Json cert = load_artifact(man, dir, "certificate.json");
  const Json syn = load_artifact(man, dir, "synthesis.json");
  const Json ens = load_artifact(man, dir, "ensemble.json");

  Json r;
  r["model_hash"] = cert["model_hash"];
  Json c;
  for (const char* k : {"epsilon", "gamma_hat", "r0", "probability_bound", "product_bound"})
    c[k] = cert[k];
  Json modes = Json::array();
  for (const auto& m : cert["certificates"])
    modes.push_back({{"mode", m["mode_id"]}, {"mu", m["mu"]}, {"alpha", m["alpha"]}});
  c["modes"] = modes;
  c["containment"] = cert["containment"];
  r["certificate"] = c;

  const Json& tube = syn["tube"];
  Json table = Json::array();
  for (std::size_t i = 0; i < tube["start"].size(); ++i) {
    Json widths = Json::array();
    for (std::size_t k = 0; k < tube["direction_scales"].size(); ++k) {
      const Json& d = tube["delta_hat"][i][k];
      widths.push_back(d.is_number() ? Json(d.get<double>() * tube["direction_scales"][k].get<double>())
                                     : Json(nullptr));
    }
    table.push_back({{"start", tube["start"][i]},
                     {"mu", tube["mu"][i]},
                     {"r", tube["r"][i]},
                     {"delta_hat", widths}});
  }
  r["tightening"] = {{"directions", tube["directions"]}, {"segments", table},
                     {"formula", syn["tightened_formula"]}};
  r["plan"] = {{"objective", syn["objective"]},
               {"objective_value", syn["objective_value"]},
               {"nominal_robustness", syn["nominal_robustness"]},
               {"nominal_robustness_tightened", syn["nominal_robustness_tightened"]},
               {"lazy_iterations", syn["lazy_iterations"]},
               {"noise_feedthrough_excluded", syn.value("noise_feedthrough_excluded", false)}};
  r["ensemble"] = {{"realizations", ens["realizations"]},
                   {"seed", ens["seed"]},
                   {"rng", ens["rng"]},
                   {"initial_sampling", ens["initial_sampling"]},
                   {"empirical_rate", ens["empirical_rate"]},
                   {"worst_margins", ens["worst_margins"]},
                   {"max_sup_phi", ens["max_sup_phi"]}};
  const double eps = cert["epsilon"].get<double>();
  r["bound_comparison"] = {
      {"theoretical_bound", ens["theoretical_bound"]},
      {"empirical_rate", ens["empirical_rate"]},
      {"binomial_slack", ens["acceptance"]["binomial_slack"]},
      {"passed", ens["acceptance"]["passed"]},
      {"one_minus_epsilon", 1.0 - eps},
      {"fraction_sup_phi_below_gamma_hat", ens["fraction_sup_phi_below_gamma_hat"]}};

  std::ostringstream md;
  md << "# Run report\n\n";
  md << "Model hash `" << cert["model_hash"].get<std::string>() << "`\n\n";
  md << "## Certificates\n\n";
  md << "| quantity | value |\n|---|---|\n";
  md << "| epsilon | " << md_number(cert["epsilon"]) << " |\n";
  md << "| gamma_hat | " << md_number(cert["gamma_hat"]) << " |\n";
  md << "| r0 | " << md_number(cert["r0"]) << " |\n";
  md << "| probability bound | " << md_number(cert["probability_bound"]) << " |\n";
  md << "| product-form bound | " << md_number(cert["product_bound"]) << " |\n\n";
  md << "| mode | mu | alpha |\n|---|---|---|\n";
  for (const auto& m : modes)
    md << "| " << m["mode"].get<int>() << " | " << md_number(m["mu"]) << " | "
       << md_number(m["alpha"]) << " |\n";
  md << "\n";
  for (const auto& k : cert["containment"])
    md << "- switch " << k["from_mode"].get<int>() << " -> " << k["to_mode"].get<int>() << " at t = "
       << md_number(k["time"]) << ": " << (k["contained"].get<bool>() ? "contained" : "NOT contained")
       << "\n";
  md << "\n## Tightening\n\n| segment start | mu | r |";
  for (const auto& d : tube["directions"]) md << " " << d.get<std::string>() << " |";
  md << "\n|---|---|---|";
  for (std::size_t k = 0; k < tube["directions"].size(); ++k) md << "---|";
  md << "\n";
  for (const auto& row : table) {
    md << "| " << md_number(row["start"]) << " | " << md_number(row["mu"]) << " | "
       << md_number(row["r"]) << " |";
    for (const auto& v : row["delta_hat"]) md << " " << md_number(v) << " |";
    md << "\n";
  }
  md << "\nTube half-widths are in the units of each predicate.\n\n```\n"
     << syn["tightened_formula"].get<std::string>() << "\n```\n\n";
  md << "## Plan\n\n";
  md << "- objective " << syn["objective"].get<std::string>() << " = "
     << md_number(syn["objective_value"]) << "\n";
  md << "- nominal robustness, tightened: " << md_number(syn["nominal_robustness_tightened"]) << "\n";
  md << "- nominal robustness, original: " << md_number(syn["nominal_robustness"]) << "\n";
  md << "- solve rounds: " << syn["lazy_iterations"].get<int>() << "\n";
  if (syn.value("noise_feedthrough_excluded", false))
    md << "- the model's noise feedthrough into outputs is nonzero and was left out of output "
          "trajectories\n";
  md << "\n";
  md << "## Ensemble\n\n";
  md << "- " << ens["satisfied_count"].get<int>() << " of " << ens["realizations"].get<int>()
     << " realizations satisfy the specification (seed " << ens["seed"].get<std::uint64_t>()
     << ", " << ens["initial_sampling"].get<std::string>() << " initial states)\n";
  md << "- empirical rate " << md_number(ens["empirical_rate"]) << " vs theoretical bound "
     << md_number(ens["theoretical_bound"]) << " (slack " << md_number(ens["acceptance"]["binomial_slack"])
     << "): " << (ens["acceptance"]["passed"].get<bool>() ? "PASS" : "FAIL") << "\n";
  md << "- sup of the tube functional below gamma_hat: "
     << md_number(ens["fraction_sup_phi_below_gamma_hat"]) << " (guaranteed " << fixed(1.0 - eps)
     << ")\n\n";
  md << "| atom | worst margin |\n|---|---|\n";
  for (const auto& w : ens["worst_margins"])
    md << "| " << w["atom"].get<std::string>() << " | " << md_number(w["worst_margin"]) << " |\n";

  man.output("report.md", md.str());
  man.output("report.json", dump_json(r));
  out << md.str();
  man.write(0);
  return {};
}

// --------------------------------------------------------------- fixtures

struct SfrArgs {
  std::string out;
  std::string droop = "per-unit";
  double t_end = 10.0;
  double disturbance = 0.15;
  double ramp = 0.04;
};

Outcome cmd_sfr_model(const SfrArgs& a, std::ostream& out) {
  Manifest man("sfr-model",
               {"sfr-model", "--out", a.out, "--droop", a.droop, "--t-end", fmt(a.t_end),
                "--disturbance", fmt(a.disturbance), "--ramp", fmt(a.ramp)},
               a.out, false);
  SfrParams p;
  if (a.droop == "literal")
    p.droop = DroopForm::Literal;
  else if (a.droop != "per-unit")
    throw Error(ErrorCode::InvalidArgument, "droop must be per-unit or literal");
  p.t_end = a.t_end;
  const auto model = build_sfr_model(p, a.disturbance, a.ramp);
  man.params() = {{"droop", a.droop}, {"t_end", a.t_end}, {"disturbance", a.disturbance},
                  {"ramp", a.ramp}};
  man.output("", model_to_json_text(model));
  for (const auto& w : model.warnings) out << "warning: " << w << "\n";
  out << "wrote " << a.out << "\n";
  man.write(0);
  return {};
}

Outcome cmd_wtg_fixture(const std::string& path, std::uint64_t seed, std::ostream& out) {
  Manifest man("wtg-fixture", {"wtg-fixture", "--out", path, "--seed", std::to_string(seed)}, path,
               false);
  man.params() = {{"seed", seed}};
  man.output("", model_to_json_text(build_wtg_fixture(seed)));
  out << "wrote " << path << "\n";
  man.write(0);
  return {};
}

// ----------------------------------------------------------------- replay

Outcome cmd_replay(const std::string& manifest_path, const std::string& dir, std::ostream& out) {
  const Json m = parse_json(read_text(manifest_path), manifest_path);
  for (const char* k : {"arguments", "inputs", "outputs", "out_kind", "exit_code"})
    if (!m.contains(k)) throw Error(ErrorCode::SchemaError, manifest_path + ": missing " + k);
  if (m["command"] == "replay") throw Error(ErrorCode::InvalidArgument, "cannot replay a replay");
  for (const auto& [role, in] : m["inputs"].items()) {
    const std::string path = in["path"].get<std::string>();
    if (!fs::exists(path)) throw Error(ErrorCode::MissingArtifact, "input " + path + " is gone");
    if (content_hash(read_text(path)) != in["fnv1a64"].get<std::string>())
      throw Error(ErrorCode::InvariantViolation, "input " + path + " changed since the run");
  }
  const bool file = m["out_kind"] == "file";
  const fs::path target = file ? fs::path(dir) / fs::path(m["out"].get<std::string>()).filename()
                               : fs::path(dir);
  std::vector<std::string> args = m["arguments"].get<std::vector<std::string>>();
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--out" || args[i] == "--run-dir") args[i + 1] = target.string();
  if (m["command"] == "report") {
    // Report reads its artifacts from the run directory.
    for (const auto& [name, h] : m["inputs"].items())
      write_text((fs::path(dir) / name).string(), read_text(m["inputs"][name]["path"].get<std::string>()));
  }
  std::ostringstream sink, errs;
  const int code = run_cli(args, sink, errs);
  const fs::path new_manifest =
      file ? fs::path(target.string() + ".manifest.json")
           : target / ("manifest." + m["command"].get<std::string>() + ".json");
  Json fresh;
  if (fs::exists(new_manifest)) fresh = parse_json(read_text(new_manifest.string()), new_manifest.string());
  std::vector<std::string> diffs;
  if (code != m["exit_code"].get<int>())
    diffs.push_back("exit code " + std::to_string(code) + " (recorded " +
                    std::to_string(m["exit_code"].get<int>()) + ")");
  const Json outputs = fresh.value("outputs", Json::object());
  for (const auto& [name, h] : m["outputs"].items())
    if (!outputs.contains(name) || outputs[name] != h) diffs.push_back(name);
  for (const auto& [name, h] : outputs.items())
    if (!m["outputs"].contains(name)) diffs.push_back(name);

  Manifest man("replay", {"replay", "--manifest", manifest_path, "--out", dir}, dir, true);
  man.input("manifest", manifest_path);
  man.params() = {{"identical", diffs.empty()}, {"differences", diffs}};
  man.write(diffs.empty() ? 0 : 4);
  if (diffs.empty()) {
    out << "replay of " << m["command"].get<std::string>() << ": " << m["outputs"].size()
        << " outputs identical\n";
    return {};
  }
  std::string list;
  for (const auto& d : diffs) list += (list.empty() ? "" : ", ") + d;
  out << "replay differs: " << list << "\n";
  return {4, error_json("ReplayMismatch", "replayed outputs differ: " + list, 4)};
}

void configure_threads() {
  const char* env = std::getenv("SWITCHSYNTH_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1)
    throw Error(ErrorCode::Usage, std::string("SWITCHSYNTH_THREADS must be a positive integer, got '") +
                                      env + "'");
  omp_set_num_threads(static_cast<int>(n));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Switched stochastic controller synthesis under MTL specifications", "switchsynth"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CertifyArgs ca;
  auto* certify_cmd = app.add_subcommand("certify", "Per-mode certificates, tube levels and bound");
  certify_cmd->add_option("--model", ca.model, "Model JSON")->required();
  certify_cmd->add_option("--out", ca.out, "Output directory")->required();
  certify_cmd->add_option("--spec", ca.spec, "Specification sizing the reported tube table");
  certify_cmd->add_option("--epsilon", ca.epsilon, "Violation probability in (0, 1)");
  certify_cmd->add_option("--mu", ca.mu, "Decay rate for every mode (default: per mode)");
  certify_cmd->add_option("--target-entry", ca.target_entry, "Certified coordinate to shape");
  certify_cmd->add_option("--budget", ca.budget, "Weighting candidates per mode")
      ->check(CLI::PositiveNumber);
  certify_cmd->add_option("--seed", ca.seed, "Seed for the weighting search");

  SynthesizeArgs sa;
  auto* synth_cmd = app.add_subcommand("synthesize", "Open-loop input plan for a specification");
  synth_cmd->add_option("--model", sa.model, "Model JSON")->required();
  synth_cmd->add_option("--spec", sa.spec, "Specification file")->required();
  synth_cmd->add_option("--cert", sa.cert, "Certificate from certify")->required();
  synth_cmd->add_option("--out", sa.out, "Output directory")->required();
  synth_cmd->add_option("--step", sa.step, "Grid step (must divide every dwell time)")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--objective", sa.objective, "l2 or l1")
      ->check(CLI::IsMember({"l1", "l2"}));
  synth_cmd->add_option("--lazy-pool", sa.pool, "Constraints added lazily, one group per always");

  ValidateArgs va;
  auto* validate_cmd = app.add_subcommand("validate", "Monte Carlo ensemble against the bound");
  validate_cmd->add_option("--model", va.model, "Model JSON")->required();
  validate_cmd->add_option("--spec", va.spec, "Specification file")->required();
  validate_cmd->add_option("--plan", va.plan, "Plan CSV")->required();
  validate_cmd->add_option("--cert", va.cert, "Certificate (default: next to the plan)");
  validate_cmd->add_option("--out", va.out, "Output directory")->required();
  validate_cmd->add_option("--realizations", va.realizations, "Ensemble size")
      ->check(CLI::PositiveNumber);
  validate_cmd->add_option("--seed", va.seed, "Ensemble seed");
  validate_cmd->add_option("--init-mode", va.init_mode, "uniform, boundary or nominal")
      ->check(CLI::IsMember({"uniform", "boundary", "nominal"}));
  validate_cmd->add_option("--sde-step", va.sde_step, "SDE step (default grid step / 10)")
      ->check(CLI::NonNegativeNumber);
  validate_cmd->add_option("--plot-realizations", va.plot_realizations,
                           "Realizations written to plot.csv")
      ->check(CLI::NonNegativeNumber);
  validate_cmd->add_flag("--dump-traces", va.dump_traces, "Per-realization CSVs under traces/");

  std::string run_dir;
  auto* report_cmd = app.add_subcommand("report", "Summary of a run directory");
  report_cmd->add_option("--run-dir", run_dir, "Directory holding the run artifacts")->required();

  SfrArgs fa;
  auto* sfr_cmd = app.add_subcommand("sfr-model", "Write the frequency-response model");
  sfr_cmd->add_option("--out", fa.out, "Model JSON path")->required();
  sfr_cmd->add_option("--droop", fa.droop, "per-unit or literal")
      ->check(CLI::IsMember({"per-unit", "literal"}));
  sfr_cmd->add_option("--t-end", fa.t_end, "Horizon")->check(CLI::PositiveNumber);
  sfr_cmd->add_option("--disturbance", fa.disturbance, "Load step (pu)");
  sfr_cmd->add_option("--ramp", fa.ramp, "Ramp rate in mode 2 (pu/s)");

  std::string wtg_out;
  std::uint64_t wtg_seed = 7;
  auto* wtg_cmd = app.add_subcommand("wtg-fixture", "Write the synthetic turbine fixture");
  wtg_cmd->add_option("--out", wtg_out, "Model JSON path")->required();
  wtg_cmd->add_option("--seed", wtg_seed, "Fixture seed");

  std::string replay_manifest, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a manifest and compare output hashes");
  replay_cmd->add_option("--manifest", replay_manifest, "Manifest file")->required();
  replay_cmd->add_option("--out", replay_out, "Directory for the replayed outputs")->required();

  auto emit = [&](const Json& j) { err << dump_json(j); };
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
    configure_threads();
    Outcome o;
    if (certify_cmd->parsed()) o = cmd_certify(ca, out);
    else if (synth_cmd->parsed()) o = cmd_synthesize(sa, out, err);
    else if (validate_cmd->parsed()) o = cmd_validate(va, out);
    else if (report_cmd->parsed()) o = cmd_report(run_dir, out);
    else if (sfr_cmd->parsed()) o = cmd_sfr_model(fa, out);
    else if (wtg_cmd->parsed()) o = cmd_wtg_fixture(wtg_out, wtg_seed, out);
    else if (replay_cmd->parsed()) o = cmd_replay(replay_manifest, replay_out, out);
    if (o.code != 0 && !o.error.is_null()) emit(o.error);
    return o.code;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    emit(error_json(to_string(ErrorCode::Usage), e.what(), 2));
    return 2;
  } catch (const InfeasibleError& e) {
    Json j = error_json(to_string(e.code()), e.what(), 3);
    j["error"]["farkas_multipliers"] = vector_to_json(e.certificate());
    j["error"]["certificate_verified"] = e.verified();
    emit(j);
    return 3;
  } catch (const Error& e) {
    const int code = exit_code(e.code());
    emit(error_json(to_string(e.code()), e.what(), code));
    return code;
  } catch (const std::exception& e) {
    emit(error_json("Internal", e.what(), 4));
    return 4;
  }
}

}  // namespace switchsynth
