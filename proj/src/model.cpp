#include "switchsynth/model.hpp"

#include "switchsynth/io.hpp"
#include "switchsynth/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace switchsynth {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------

const Mode& SwitchedLinearModel::mode(int id) const {
  for (const auto& m : modes)
    if (m.id == id) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown mode id " + std::to_string(id));
}

std::vector<int> SwitchedLinearModel::certified_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n(); ++i)
    if (!states[i].exogenous) idx.push_back(i);
  return idx;
}

Matrix SwitchedLinearModel::certified_A(int mode_id) const {
  const auto idx = certified_indices();
  return select(mode(mode_id).A, idx, idx);
}

Matrix SwitchedLinearModel::certified_Sigma(int mode_id) const {
  const auto idx = certified_indices();
  const Matrix& s = mode(mode_id).Sigma;
  std::vector<int> cols(static_cast<std::size_t>(s.cols()));
  for (int j = 0; j < static_cast<int>(s.cols()); ++j) cols[j] = j;
  return select(s, idx, cols);
}

SymbolTable SwitchedLinearModel::symbols() const {
  SymbolTable t;
  for (const auto& s : states) t.states.push_back(s.name);
  for (const auto& i : inputs) t.inputs.push_back(i.name);
  for (const auto& o : outputs) {
    Vector d = o.d_row.size() ? o.d_row : Vector::Zero(p());
    t.outputs.push_back({o.name, o.c_row, d});
  }
  return t;
}

void SwitchedLinearModel::validate() const {
  std::vector<std::string> issues;
  auto fail = [&](const std::string& s) { issues.push_back(s); };
  const int nn = n(), pp = p();
  if (nn == 0) fail("model has no states");

  std::set<std::string> names;
  auto claim = [&](const std::string& name, const char* kind) {
    if (name.empty()) fail(std::string(kind) + " with empty name");
    else if (!names.insert(name).second) fail("duplicate symbol name '" + name + "'");
  };
  for (const auto& s : states) claim(s.name, "state");
  for (const auto& i : inputs) claim(i.name, "input");
  for (const auto& o : outputs) claim(o.name, "output");

  if (modes.empty()) fail("model has no modes");
  std::set<int> ids;
  const int mm = m();
  for (const auto& md : modes) {
    const std::string tag = "mode " + std::to_string(md.id);
    if (!ids.insert(md.id).second) fail("duplicate " + tag);
    if (md.A.rows() != nn || md.A.cols() != nn) fail(tag + ": A is not n x n");
    if (md.B.rows() != nn || md.B.cols() != pp) fail(tag + ": B is not n x p");
    if (md.Sigma.rows() != nn) fail(tag + ": Sigma does not have n rows");
    if (md.Sigma.cols() != mm) fail(tag + ": Sigma column count differs between modes");
    if (!all_finite(md.A) || !all_finite(md.B) || !all_finite(md.Sigma))
      fail(tag + ": non-finite matrix entry");
    if (!(md.mu > 0.0) || !std::isfinite(md.mu)) fail(tag + ": mu must be positive");
    if (md.A.rows() != nn || md.A.cols() != nn || md.Sigma.rows() != nn) continue;
    for (int i = 0; i < nn; ++i) {
      if (!states[i].exogenous) continue;
      if (md.Sigma.row(i).cwiseAbs().maxCoeff() > 0.0)
        fail(tag + ": exogenous state '" + states[i].name + "' has a noise row");
      for (int j = 0; j < nn; ++j)
        if (!states[j].exogenous && md.A(i, j) != 0.0)
          fail(tag + ": exogenous state '" + states[i].name + "' is driven by '" + states[j].name + "'");
    }
  }
  if (nn > 0 && certified_indices().empty()) fail("every state is exogenous");

  if (schedule.empty()) fail("schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto& e = schedule[i];
    if (!(e.dwell > 0.0) || !std::isfinite(e.dwell))
      fail("schedule entry " + std::to_string(i) + ": dwell must be positive");
    if (!ids.count(e.mode)) fail("schedule entry " + std::to_string(i) + ": unknown mode");
  }
  std::set<std::pair<int, int>> edges(transitions.begin(), transitions.end());
  for (const auto& [q, r] : transitions)
    if (!ids.count(q) || !ids.count(r))
      fail("transition (" + std::to_string(q) + "," + std::to_string(r) + ") uses an unknown mode");
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    const int q = schedule[i - 1].mode, r = schedule[i].mode;
    if (q != r && !edges.count({q, r}))
      fail("schedule switch " + std::to_string(q) + " -> " + std::to_string(r) +
           " is not a declared transition");
  }

  if (x0.size() != nn) fail("x0 length differs from the state count");
  else if (!x0.allFinite()) fail("x0 has non-finite entries");
  const bool has_r0 = r0 > 0.0 && std::isfinite(r0);
  const bool has_mult = r0_gamma_multiple && *r0_gamma_multiple > 0.0;
  if (has_r0 == has_mult) fail("exactly one of r0 > 0 or r0_gamma_multiple > 0 is required");

  for (const auto& o : outputs) {
    if (o.c_row.size() != nn) fail("output '" + o.name + "': C row length differs from n");
    if (o.d_row.size() != 0 && o.d_row.size() != pp)
      fail("output '" + o.name + "': D row length differs from p");
  }
  for (const auto& i : inputs) {
    if (!(i.weight > 0.0) || !std::isfinite(i.weight))
      fail("input '" + i.name + "': weight must be positive");
    if (i.lower && i.upper && *i.lower > *i.upper) fail("input '" + i.name + "': lower > upper");
  }
  if (noise_feedthrough && noise_feedthrough->rows() != static_cast<Eigen::Index>(outputs.size()))
    fail("noise feedthrough rows differ from the output count");

  if (!issues.empty()) {
    std::string msg = "model invariants failed:";
    for (const auto& s : issues) msg += "\n  - " + s;
    throw Error(ErrorCode::InvariantViolation, msg);
  }
}

SwitchedLinearModel output_map(const SwitchedLinearModel& model, const Matrix& c,
                               const Matrix& d_feed, const std::vector<std::string>& names) {
  if (c.cols() != model.n() || c.rows() != static_cast<Eigen::Index>(names.size()))
    throw Error(ErrorCode::DimensionMismatch, "C must be q x n with one name per row");
  if (d_feed.rows() != c.rows() || d_feed.cols() != model.p())
    throw Error(ErrorCode::DimensionMismatch, "D_feed must be q x p");
  std::set<std::string> used;
  for (const auto& s : model.states) used.insert(s.name);
  for (const auto& i : model.inputs) used.insert(i.name);
  for (const auto& o : model.outputs) used.insert(o.name);
  SwitchedLinearModel out = model;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (!used.insert(names[k]).second)
      throw Error(ErrorCode::NameCollision, "output name '" + names[k] + "' is already in use");
    const auto r = static_cast<Eigen::Index>(k);
    out.outputs.push_back({names[k], "", c.row(r).transpose(), d_feed.row(r).transpose()});
  }
  if (out.noise_feedthrough) {
    Matrix e = Matrix::Zero(static_cast<Eigen::Index>(out.outputs.size()), out.noise_feedthrough->cols());
    e.topRows(out.noise_feedthrough->rows()) = *out.noise_feedthrough;
    out.noise_feedthrough = e;
  }
  return out;
}

SwitchedLinearModel truncate_schedule(const SwitchedLinearModel& model, double t_end) {
  if (!(t_end > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_end must be positive");
  SwitchedLinearModel out = model;
  out.schedule.clear();
  double t = 0.0;
  for (const auto& e : model.schedule) {
    if (t >= t_end - tol::kTime) break;
    ScheduleEntry kept = e;
    kept.dwell = std::min(e.dwell, t_end - t);
    out.schedule.push_back(kept);
    t += kept.dwell;
  }
  if (t < t_end - tol::kTime && !out.schedule.empty()) out.schedule.back().dwell += t_end - t;
  return out;
}

// ---------------------------------------------------------------------------

void DescriptorModel::validate() const {
  const auto n = As.rows(), k = Ds.rows();
  const auto p = Ms.cols(), q = Es.rows(), m = Sigma1.cols();
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::DimensionMismatch, std::string("descriptor: ") + what);
  };
  need(As.cols() == n, "A_s must be square");
  need(Ds.cols() == k, "D_s must be square");
  need(Bs.rows() == n && Bs.cols() == k, "B_s must be n x k");
  need(Cs.rows() == k && Cs.cols() == n, "C_s must be k x n");
  need(Ms.rows() == n, "M_s must be n x p");
  need(Ns.rows() == k && Ns.cols() == p, "N_s must be k x p");
  need(Es.cols() == n, "E_s must be q x n");
  need(Fs.rows() == q && Fs.cols() == k, "F_s must be q x k");
  need(Sigma1.rows() == n, "Sigma_s1 must be n x m");
  need(Sigma2.rows() == k && Sigma2.cols() == m, "Sigma_s2 must be k x m");
}

KronReduced kron_reduce(const DescriptorModel& d) {
  d.validate();
  KronReduced r;
  if (d.Ds.rows() == 0) {
    r.A = d.As;
    r.B = d.Ms;
    r.C = d.Es;
    r.D = Matrix::Zero(d.Es.rows(), d.Ms.cols());
    r.Sigma = d.Sigma1;
    r.E = Matrix::Zero(d.Es.rows(), d.Sigma1.cols());
    return r;
  }
  Eigen::JacobiSVD<Matrix> svd(d.Ds);
  const auto& s = svd.singularValues();
  r.condition = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(r.condition <= tol::kMaxAlgebraicCondition)) {
    std::ostringstream msg;
    msg << "algebraic block D_s is singular or ill-conditioned (condition " << r.condition << ")";
    throw Error(ErrorCode::SingularAlgebraicBlock, msg.str());
  }
  const Eigen::PartialPivLU<Matrix> lu(d.Ds);
  const Matrix dinv_c = lu.solve(d.Cs);
  const Matrix dinv_n = lu.solve(d.Ns);
  const Matrix dinv_s2 = lu.solve(d.Sigma2);
  r.A = d.As - d.Bs * dinv_c;
  r.B = d.Ms - d.Bs * dinv_n;
  r.C = d.Es - d.Fs * dinv_c;
  r.D = -d.Fs * dinv_n;
  r.Sigma = d.Sigma1 - d.Bs * dinv_s2;
  r.E = -d.Fs * dinv_s2;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void check_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw Error(ErrorCode::InvalidParameter, std::string(name) + " must be positive");
}

Schedule sfr_schedule(double t_end) {
  Schedule s{{1, 5.0}, {2, 3.75}};
  if (t_end > 8.75 + tol::kTime) s.push_back({1, t_end - 8.75});
  return s;
}

// Rows: dw, Ps, Pm, Pv. `one` is the index of the constant coordinate.
void fill_sfr_block(Matrix& a, Matrix& b, int one, int us, const SfrParams& p, double disturbance,
                    double ramp, bool ramping) {
  const double k = p.omega_s / (2.0 * p.H);
  a(0, 0) = -k * p.D / p.omega_s;
  a(0, 1) = k;
  a(0, 2) = k;
  a(0, one) = -k * disturbance;
  b(0, us) = k;
  if (ramping) a(1, one) = ramp;
  a(2, 2) = -1.0 / p.tau_ch;
  a(2, 3) = 1.0 / p.tau_ch;
  const double droop = p.droop == DroopForm::PerUnit ? 1.0 / (p.omega_s * p.R) : 1.0 / (kTwoPi * p.R);
  a(3, 0) = -droop / p.tau_g;
  a(3, 3) = -1.0 / p.tau_g;
}

void check_params(const SfrParams& p, double disturbance, double ramp) {
  check_positive(p.omega_s, "omega_s");
  check_positive(p.D, "D");
  check_positive(p.H, "H");
  check_positive(p.tau_ch, "tau_ch");
  check_positive(p.tau_g, "tau_g");
  check_positive(p.R, "R");
  check_positive(p.t_end, "t_end");
  check_positive(p.mu, "mu");
  check_positive(p.r0_gamma_multiple, "r0_gamma_multiple");
  if (!(p.sigma_w >= 0.0) || !std::isfinite(p.sigma_w))
    throw Error(ErrorCode::InvalidParameter, "sigma_w must be nonnegative");
  if (!std::isfinite(disturbance) || !std::isfinite(ramp))
    throw Error(ErrorCode::InvalidParameter, "disturbance and ramp must be finite");
}

void require_stable_mode1(SwitchedLinearModel& model, const SfrParams& p) {
  const double abscissa = spectral_abscissa(model.certified_A(1));
  if (abscissa < 0.0) return;
  std::ostringstream msg;
  msg << "mode 1 is not Hurwitz (spectral abscissa " << abscissa << ")";
  if (p.droop == DroopForm::Literal) {
    model.warnings.push_back(msg.str());
    return;
  }
  throw Error(ErrorCode::NotHurwitz, msg.str());
}

}  // namespace

SwitchedLinearModel build_sfr_model(const SfrParams& p, double disturbance, double ramp) {
  check_params(p, disturbance, ramp);
  SwitchedLinearModel model;
  model.name = "sfr";
  model.description =
      "Four-state system frequency response model with a constant-1 coordinate for the load "
      "step and the ramp; mode 2 ramps dPs.";
  model.states = {{"dw", "rad/s", false},
                  {"Ps", "pu", true},
                  {"Pm", "pu", false},
                  {"Pv", "pu", false},
                  {"one", "1", true}};
  model.inputs = {{"u_s", "pu", 1.0, {}, {}}};
  Vector df = Vector::Zero(5);
  df(0) = 1.0 / kTwoPi;
  model.outputs = {{"df", "Hz", df, Vector::Zero(1)}};
  for (int id : {1, 2}) {
    Mode md;
    md.id = id;
    md.A = Matrix::Zero(5, 5);
    md.B = Matrix::Zero(5, 1);
    md.Sigma = Matrix::Zero(5, 1);
    md.Sigma(0, 0) = p.omega_s / (2.0 * p.H) * p.sigma_w;
    md.mu = p.mu;
    fill_sfr_block(md.A, md.B, 4, 0, p, disturbance, ramp, id == 2);
    model.modes.push_back(md);
  }
  model.transitions = {{1, 2}, {2, 1}};
  model.schedule = sfr_schedule(p.t_end);
  model = truncate_schedule(model, p.t_end);
  model.x0 = Vector::Zero(5);
  model.x0(4) = 1.0;
  model.r0_gamma_multiple = p.r0_gamma_multiple;
  require_stable_mode1(model, p);
  model.validate();
  return model;
}

SwitchedLinearModel build_wtg_fixture(std::uint64_t seed) {
  const SfrParams p;
  const double disturbance = 0.15, ramp = 0.04;
  const int nw = 6, k = 3;
  RandomStream rng(seed, 0x77);
  auto randn = [&](int r, int c, double s) {
    Matrix m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = s * rng.normal();
    return m;
  };
  DescriptorModel d;
  d.As = randn(nw, nw, 0.5);
  d.Bs = randn(nw, k, 0.3);
  d.Cs = randn(k, nw, 0.3);
  d.Ds = randn(k, k, 0.3) + 3.0 * Matrix::Identity(k, k);
  d.Ms = randn(nw, 1, 1.0);
  d.Ns = randn(k, 1, 0.2);
  d.Es = randn(1, nw, 1.0);
  d.Fs = randn(1, k, 0.2);
  // Noise enters through the swing equation only.
  d.Sigma1 = Matrix::Zero(nw, 1);
  d.Sigma2 = Matrix::Zero(k, 1);
  KronReduced kr = kron_reduce(d);
  // Shift A_s so the reduced block has spectral abscissa −1.
  d.As -= (spectral_abscissa(kr.A) + 1.0) * Matrix::Identity(nw, nw);
  kr = kron_reduce(d);
  // Unit DC gain from u_w to ΔP_gen.
  const double gain = (-kr.C * kr.A.partialPivLu().solve(kr.B) + kr.D)(0, 0);
  d.Ms /= gain;
  d.Ns /= gain;
  kr = kron_reduce(d);

  const int n = 4 + nw + 1, one = n - 1, uw = 0, us = 1;
  const double share = 200.0 / 1000.0;  // turbine rating over system base
  SwitchedLinearModel model;
  model.name = "wtg11-synthetic";
  model.description =
      "Synthetic non-physical fixture: frequency-response states coupled to a random stable "
      "six-state turbine block from Kron reduction; nine synthetic line flows.";
  model.states = {{"dw", "rad/s", false}, {"Ps", "pu", true}, {"Pm", "pu", false},
                  {"Pv", "pu", false}};
  for (int i = 0; i < nw; ++i) model.states.push_back({"w" + std::to_string(i + 1), "pu", false});
  model.states.push_back({"one", "1", true});
  model.inputs = {{"u_w", "pu", 1.0, {}, {}}, {"u_s", "pu", 100.0, {}, {}}};
  const double kk = p.omega_s / (2.0 * p.H);
  for (int id : {1, 2}) {
    Mode md;
    md.id = id;
    md.A = Matrix::Zero(n, n);
    md.B = Matrix::Zero(n, 2);
    md.Sigma = Matrix::Zero(n, 1);
    fill_sfr_block(md.A, md.B, one, us, p, disturbance, ramp, id == 2);
    md.A.block(0, 4, 1, nw) = kk * share * kr.C;
    md.B(0, uw) = kk * share * kr.D(0, 0);
    md.A.block(4, 4, nw, nw) = kr.A;
    md.B.block(4, uw, nw, 1) = kr.B;
    md.Sigma(0, 0) = kk * p.sigma_w;
    md.mu = p.mu;
    model.modes.push_back(md);
  }
  Vector df = Vector::Zero(n);
  df(0) = 1.0 / kTwoPi;
  Vector pgen = Vector::Zero(n);
  pgen.segment(4, nw) = kr.C.row(0).transpose();
  Vector pgen_d = Vector::Zero(2);
  pgen_d(uw) = kr.D(0, 0);
  model.outputs = {{"df", "Hz", df, Vector::Zero(2)}, {"dPgen", "pu", pgen, pgen_d}};
  for (int line = 0; line < 9; ++line) {
    Vector c = Vector::Zero(n);
    c(2) = 0.3 * rng.normal();
    c(3) = 0.3 * rng.normal();
    for (int i = 0; i < nw; ++i) c(4 + i) = 0.3 * rng.normal();
    Vector dr = Vector::Zero(2);
    dr(uw) = 0.2 * rng.normal();
    dr(us) = 0.2 * rng.normal();
    model.outputs.push_back({"P" + std::to_string(line + 1), "pu", c, dr});
  }
  model.transitions = {{1, 2}, {2, 1}};
  model.schedule = sfr_schedule(p.t_end);
  model.x0 = Vector::Zero(n);
  model.x0(one) = 1.0;
  model.r0_gamma_multiple = p.r0_gamma_multiple;
  require_stable_mode1(model, p);
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------

namespace {

std::string ptr(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string ptr(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

std::string json_string(const Json& j, const std::string& pointer) {
  if (!j.is_string()) throw Error(ErrorCode::SchemaError, pointer + ": expected a string");
  return j.get<std::string>();
}

int json_int(const Json& j, const std::string& pointer) {
  if (!j.is_number_integer()) throw Error(ErrorCode::SchemaError, pointer + ": expected an integer");
  return j.get<int>();
}

const Json& json_array(const Json& obj, const char* key, const std::string& base) {
  const Json& a = json_field(obj, key, base);
  if (!a.is_array()) throw Error(ErrorCode::SchemaError, ptr(base, key) + ": expected an array");
  return a;
}

}  // namespace

SwitchedLinearModel model_from_json_text(const std::string& text) {
  const Json root = parse_json(text, "model");
  if (!root.is_object()) throw Error(ErrorCode::SchemaError, "/: expected an object");
  SwitchedLinearModel model;
  if (root.contains("name")) model.name = json_string(root["name"], "/name");
  if (root.contains("description")) model.description = json_string(root["description"], "/description");

  const Json& states = json_array(root, "states", "");
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string b = ptr("/states", i);
    StateInfo s;
    s.name = json_string(json_field(states[i], "name", b), b + "/name");
    if (states[i].contains("unit")) s.unit = json_string(states[i]["unit"], b + "/unit");
    if (states[i].contains("exogenous")) {
      if (!states[i]["exogenous"].is_boolean())
        throw Error(ErrorCode::SchemaError, b + "/exogenous: expected a boolean");
      s.exogenous = states[i]["exogenous"].get<bool>();
    }
    model.states.push_back(s);
  }
  const int n = model.n();

  const Json& inputs = json_array(root, "inputs", "");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string b = ptr("/inputs", i);
    InputInfo in;
    in.name = json_string(json_field(inputs[i], "name", b), b + "/name");
    if (inputs[i].contains("unit")) in.unit = json_string(inputs[i]["unit"], b + "/unit");
    if (inputs[i].contains("weight")) in.weight = json_number(inputs[i]["weight"], b + "/weight");
    if (inputs[i].contains("lower")) in.lower = json_number(inputs[i]["lower"], b + "/lower");
    if (inputs[i].contains("upper")) in.upper = json_number(inputs[i]["upper"], b + "/upper");
    model.inputs.push_back(in);
  }
  const int p = model.p();

  if (root.contains("outputs")) {
    const Json& outputs = json_array(root, "outputs", "");
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const std::string b = ptr("/outputs", i);
      OutputDef o;
      o.name = json_string(json_field(outputs[i], "name", b), b + "/name");
      if (outputs[i].contains("unit")) o.unit = json_string(outputs[i]["unit"], b + "/unit");
      o.c_row = json_to_vector(json_field(outputs[i], "C_row", b), b + "/C_row", n);
      o.d_row = outputs[i].contains("D_row") ? json_to_vector(outputs[i]["D_row"], b + "/D_row", p)
                                             : Vector::Zero(p);
      model.outputs.push_back(o);
    }
  }

  const Json& modes = json_array(root, "modes", "");
  int sigma_cols = -1;
  for (const auto& md : modes)
    if (md.is_object() && md.contains("Sigma") && md["Sigma"].is_array() && !md["Sigma"].empty() &&
        md["Sigma"][0].is_array())
      sigma_cols = static_cast<int>(md["Sigma"][0].size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string b = ptr("/modes", i);
    Mode md;
    md.id = json_int(json_field(modes[i], "id", b), b + "/id");
    // Shapes are checked by validate() so mismatches surface as invariant failures.
    md.A = json_to_matrix(json_field(modes[i], "A", b), b + "/A");
    md.B = json_to_matrix(json_field(modes[i], "B", b), b + "/B");
    if (p == 0 && md.B.rows() == 0) md.B = Matrix::Zero(n, 0);
    if (modes[i].contains("Sigma")) {
      md.Sigma = json_to_matrix(modes[i]["Sigma"], b + "/Sigma");
    } else {
      md.Sigma = Matrix::Zero(n, std::max(sigma_cols, 1));
      model.warnings.push_back("mode " + std::to_string(md.id) +
                               " has no Sigma; treated as deterministic");
    }
    if (modes[i].contains("mu")) md.mu = json_number(modes[i]["mu"], b + "/mu");
    model.modes.push_back(md);
  }

  if (root.contains("transitions")) {
    const Json& tr = json_array(root, "transitions", "");
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const std::string b = ptr("/transitions", i);
      if (!tr[i].is_array() || tr[i].size() != 2)
        throw Error(ErrorCode::SchemaError, b + ": expected a [q, q'] pair");
      model.transitions.emplace_back(json_int(tr[i][0], b + "/0"), json_int(tr[i][1], b + "/1"));
    }
  }

  const Json& sched = json_array(root, "schedule", "");
  for (std::size_t i = 0; i < sched.size(); ++i) {
    const std::string b = ptr("/schedule", i);
    model.schedule.push_back({json_int(json_field(sched[i], "mode", b), b + "/mode"),
                              json_number(json_field(sched[i], "dwell", b), b + "/dwell")});
  }
  model.x0 = json_to_vector(json_field(root, "x0", ""), "/x0", n);
  if (root.contains("r0")) model.r0 = json_number(root["r0"], "/r0");
  if (root.contains("r0_gamma_multiple"))
    model.r0_gamma_multiple = json_number(root["r0_gamma_multiple"], "/r0_gamma_multiple");
  if (root.contains("noise_feedthrough"))
    model.noise_feedthrough = json_to_matrix(root["noise_feedthrough"], "/noise_feedthrough",
                                             static_cast<int>(model.outputs.size()), model.m());
  model.validate();
  return model;
}

SwitchedLinearModel load_model(const std::string& path) { return model_from_json_text(read_text(path)); }

std::string model_to_json_text(const SwitchedLinearModel& model) {
  Json root;
  root["name"] = model.name;
  root["description"] = model.description;
  root["states"] = Json::array();
  for (const auto& s : model.states) {
    Json j{{"name", s.name}, {"unit", s.unit}};
    if (s.exogenous) j["exogenous"] = true;
    root["states"].push_back(j);
  }
  root["inputs"] = Json::array();
  for (const auto& i : model.inputs) {
    Json j{{"name", i.name}, {"unit", i.unit}, {"weight", i.weight}};
    if (i.lower) j["lower"] = *i.lower;
    if (i.upper) j["upper"] = *i.upper;
    root["inputs"].push_back(j);
  }
  root["outputs"] = Json::array();
  for (const auto& o : model.outputs) {
    Json j{{"name", o.name}, {"unit", o.unit}, {"C_row", vector_to_json(o.c_row)}};
    j["D_row"] = vector_to_json(o.d_row.size() ? o.d_row : Vector::Zero(model.p()));
    root["outputs"].push_back(j);
  }
  root["modes"] = Json::array();
  for (const auto& md : model.modes)
    root["modes"].push_back({{"id", md.id},
                             {"A", matrix_to_json(md.A)},
                             {"B", matrix_to_json(md.B)},
                             {"Sigma", matrix_to_json(md.Sigma)},
                             {"mu", md.mu}});
  root["transitions"] = Json::array();
  for (const auto& [q, r] : model.transitions) root["transitions"].push_back({q, r});
  root["schedule"] = Json::array();
  for (const auto& e : model.schedule) root["schedule"].push_back({{"mode", e.mode}, {"dwell", e.dwell}});
  root["x0"] = vector_to_json(model.x0);
  if (model.r0 > 0.0) root["r0"] = model.r0;
  if (model.r0_gamma_multiple) root["r0_gamma_multiple"] = *model.r0_gamma_multiple;
  if (model.noise_feedthrough) root["noise_feedthrough"] = matrix_to_json(*model.noise_feedthrough);
  return dump_json(root);
}

void save_model(const SwitchedLinearModel& model, const std::string& path) {
  write_text(path, model_to_json_text(model));
}

DescriptorModel descriptor_from_json_text(const std::string& text) {
  const Json root = parse_json(text, "descriptor");
  DescriptorModel d;
  auto get = [&](const char* key) { return json_to_matrix(json_field(root, key, ""), std::string("/") + key); };
  d.As = get("A_s");
  d.Bs = get("B_s");
  d.Cs = get("C_s");
  d.Ds = get("D_s");
  d.Ms = get("M_s");
  d.Ns = get("N_s");
  d.Es = get("E_s");
  d.Fs = get("F_s");
  d.Sigma1 = get("Sigma_s1");
  d.Sigma2 = get("Sigma_s2");
  d.validate();
  return d;
}

DescriptorModel load_descriptor(const std::string& path) {
  return descriptor_from_json_text(read_text(path));
}

std::string descriptor_to_json_text(const DescriptorModel& d) {
  Json root{{"A_s", matrix_to_json(d.As)},       {"B_s", matrix_to_json(d.Bs)},
            {"C_s", matrix_to_json(d.Cs)},       {"D_s", matrix_to_json(d.Ds)},
            {"M_s", matrix_to_json(d.Ms)},       {"N_s", matrix_to_json(d.Ns)},
            {"E_s", matrix_to_json(d.Es)},       {"F_s", matrix_to_json(d.Fs)},
            {"Sigma_s1", matrix_to_json(d.Sigma1)}, {"Sigma_s2", matrix_to_json(d.Sigma2)}};
  return dump_json(root);
}

}  // namespace switchsynth
