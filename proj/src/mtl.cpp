#include "switchsynth/mtl.hpp"

#include "switchsynth/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <sstream>

namespace switchsynth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_interval(Interval i) {
  if (!(i.lo >= 0.0) || !(i.hi >= i.lo) || std::isnan(i.hi))
    throw Error(ErrorCode::InvalidArgument, "interval must satisfy 0 <= lo <= hi");
}

FormulaPtr make_node(Formula::Kind kind, Interval i, std::vector<FormulaPtr> children) {
  for (const auto& c : children)
    if (!c) throw Error(ErrorCode::InvalidArgument, "null subformula");
  auto f = std::make_shared<Formula>();
  f->kind = kind;
  f->interval = i;
  f->children = std::move(children);
  return f;
}

const char* kind_name(Formula::Kind k) {
  switch (k) {
    case Formula::Kind::True: return "true";
    case Formula::Kind::Atom: return "atom";
    case Formula::Kind::Not: return "not";
    case Formula::Kind::And: return "and";
    case Formula::Kind::Or: return "or";
    case Formula::Kind::Until: return "until";
    case Formula::Kind::Eventually: return "eventually";
    case Formula::Kind::Always: return "always";
  }
  return "?";
}

// First index with times[k] >= t - tol.
std::size_t lower_index(const std::vector<double>& times, double t) {
  return static_cast<std::size_t>(
      std::lower_bound(times.begin(), times.end(), t - tol::kTime) - times.begin());
}

// One past the last index with times[k] <= t + tol.
std::size_t upper_index(const std::vector<double>& times, double t) {
  return static_cast<std::size_t>(
      std::upper_bound(times.begin(), times.end(), t + tol::kTime) - times.begin());
}

// Sliding-window extremum over [t_j + lo, t_j + hi] with a monotone deque.
// Empty windows yield `empty` (+inf for min, -inf for max).
template <class Better>
std::vector<double> window_extremum(const std::vector<double>& times,
                                    const std::vector<double>& v, Interval w, Better better,
                                    double empty) {
  const std::size_t n = times.size();
  std::vector<double> out(n, empty);
  std::deque<std::size_t> dq;
  std::size_t pushed = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t s = lower_index(times, times[j] + w.lo);
    const std::size_t e = w.hi == kInf ? n : upper_index(times, times[j] + w.hi);
    while (pushed < e) {
      while (!dq.empty() && !better(v[dq.back()], v[pushed])) dq.pop_back();
      dq.push_back(pushed++);
    }
    while (!dq.empty() && dq.front() < s) dq.pop_front();
    if (s < e && !dq.empty()) out[j] = v[dq.front()];
  }
  return out;
}

std::vector<double> trace_impl(const Formula& f, const PiecewiseSignal& s) {
  const std::size_t n = s.size();
  switch (f.kind) {
    case Formula::Kind::True:
      return std::vector<double>(n, kInf);
    case Formula::Kind::Atom: {
      const Atom& a = f.atom;
      if (a.a.size() != s.states[0].size())
        throw Error(ErrorCode::DimensionMismatch, "atom state dimension does not match signal");
      const bool has_c = a.c.size() > 0 && a.c.cwiseAbs().maxCoeff() > 0.0;
      if (has_c && a.c.size() != s.inputs[0].size())
        throw Error(ErrorCode::DimensionMismatch, "atom input dimension does not match signal");
      std::vector<double> out(n);
      for (std::size_t j = 0; j < n; ++j) {
        double v = a.b - a.margin.at(s.times[j]) - a.a.dot(s.states[j]);
        if (has_c) v -= a.c.dot(s.inputs[j]);
        out[j] = v;
      }
      return out;
    }
    case Formula::Kind::Not: {
      auto v = trace_impl(*f.children[0], s);
      for (auto& x : v) x = -x;
      return v;
    }
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      const bool is_and = f.kind == Formula::Kind::And;
      std::vector<double> out(n, is_and ? kInf : -kInf);
      for (const auto& c : f.children) {
        const auto v = trace_impl(*c, s);
        for (std::size_t j = 0; j < n; ++j)
          out[j] = is_and ? std::min(out[j], v[j]) : std::max(out[j], v[j]);
      }
      return out;
    }
    case Formula::Kind::Always:
      return window_extremum(s.times, trace_impl(*f.children[0], s), f.interval,
                             [](double a, double b) { return a < b; }, kInf);
    case Formula::Kind::Eventually:
      return window_extremum(s.times, trace_impl(*f.children[0], s), f.interval,
                             [](double a, double b) { return a > b; }, -kInf);
    case Formula::Kind::Until: {
      // sup_{t' ∈ t+I} min(ρ₂(t'), inf_{t'' ∈ [t, t')} ρ₁(t''))
      const auto r1 = trace_impl(*f.children[0], s);
      const auto r2 = trace_impl(*f.children[1], s);
      std::vector<double> out(n, -kInf);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t lo = lower_index(s.times, s.times[j] + f.interval.lo);
        const std::size_t hi =
            f.interval.hi == kInf ? n : upper_index(s.times, s.times[j] + f.interval.hi);
        double prefix = kInf;
        double best = -kInf;
        for (std::size_t k = j; k < hi; ++k) {
          if (k >= lo) best = std::max(best, std::min(r2[k], prefix));
          prefix = std::min(prefix, r1[k]);
        }
        out[j] = best;
      }
      return out;
    }
  }
  return {};
}

// Flattens nested conjunctions, recording child paths.
void flatten_and(const FormulaPtr& f, const std::string& path,
                 std::vector<std::pair<FormulaPtr, std::string>>& out) {
  if (f->kind == Formula::Kind::And) {
    for (std::size_t i = 0; i < f->children.size(); ++i)
      flatten_and(f->children[i], path + "." + std::to_string(i), out);
  } else {
    out.emplace_back(f, path);
  }
}

[[noreturn]] void not_in_fragment(const std::string& path, const Formula& f,
                                  const std::string& why) {
  throw Error(ErrorCode::NotInFragment,
              "subterm " + path + " (" + kind_name(f.kind) + "): " + why);
}

std::vector<Conjunct> collect_conjuncts(const Formula& root, double* t_end) {
  // A non-owning alias lets the root take part in the shared-pointer walk.
  FormulaPtr alias(std::shared_ptr<const Formula>{}, &root);
  std::vector<std::pair<FormulaPtr, std::string>> terms;
  flatten_and(alias, "root", terms);
  std::vector<Conjunct> out;
  double end = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [term, path] : terms) {
    if (term->kind != Formula::Kind::Always)
      not_in_fragment(path, *term, "expected always[tau, T_end] over atoms");
    if (!std::isfinite(term->interval.hi))
      not_in_fragment(path, *term, "interval end must be finite");
    if (std::isnan(end)) {
      end = term->interval.hi;
    } else if (std::abs(term->interval.hi - end) > tol::kTime) {
      not_in_fragment(path, *term, "interval end differs from the other conjuncts");
    }
    std::vector<std::pair<FormulaPtr, std::string>> atoms;
    flatten_and(term->children[0], path + ".0", atoms);
    Conjunct c;
    c.tau = term->interval.lo;
    for (const auto& [a, apath] : atoms) {
      if (a->kind != Formula::Kind::Atom)
        not_in_fragment(apath, *a, "only conjunctions of affine atoms may appear under always");
      c.atoms.push_back(a->atom);
    }
    out.push_back(std::move(c));
  }
  *t_end = end;
  return out;
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string atom_lhs(const Atom& a) {
  if (!a.label.empty()) return a.label;
  std::string s;
  auto term = [&](double k, const std::string& name) {
    if (k == 0.0) return;
    if (s.empty()) {
      if (k < 0) s += "-";
    } else {
      s += k < 0 ? " - " : " + ";
    }
    if (std::abs(k) != 1.0) s += fmt_num(std::abs(k)) + "*";
    s += name;
  };
  for (Eigen::Index i = 0; i < a.a.size(); ++i) term(a.a[i], "x" + std::to_string(i));
  for (Eigen::Index i = 0; i < a.c.size(); ++i) term(a.c[i], "u" + std::to_string(i));
  return s.empty() ? "0" : s;
}

std::string margin_text(const Margin& m, double scale) {
  bool any = false;
  for (const auto& seg : m.segments) any = any || seg.delta != 0.0;
  if (!any) return "";
  auto piece = [&](const Margin::Segment& seg) {
    std::string t = seg.start == 0.0 ? "t" : "(t-" + fmt_num(seg.start) + ")";
    return fmt3(seg.delta * scale) + "*exp(-" + fmt3(seg.mu / 2.0) + "*" + t + ")";
  };
  if (m.segments.size() == 1) return " - " + piece(m.segments[0]);
  std::string s = " - {";
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    if (i) s += "; ";
    s += piece(m.segments[i]) + " for t >= " + fmt_num(m.segments[i].start);
  }
  return s + "}";
}

}  // namespace

// ---------------------------------------------------------------------------

double Margin::at(double t) const {
  if (segments.empty()) return 0.0;
  std::size_t i = 0;
  for (std::size_t k = 1; k < segments.size(); ++k)
    if (segments[k].start <= t + tol::kTime) i = k;
  const auto& s = segments[i];
  return s.delta * std::exp(-s.mu * std::max(0.0, t - s.start) / 2.0);
}

FormulaPtr Formula::truth() { return make_node(Kind::True, {}, {}); }

FormulaPtr Formula::make_atom(switchsynth::Atom atom) {
  if (atom.a.size() == 0) throw Error(ErrorCode::InvalidArgument, "atom has no state coefficients");
  if (!atom.a.allFinite() || !std::isfinite(atom.b) || (atom.c.size() && !atom.c.allFinite()))
    throw Error(ErrorCode::InvalidArgument, "atom coefficients must be finite");
  if (std::abs(atom.a.norm() - 1.0) > tol::kUnitNorm)
    throw Error(ErrorCode::InvalidArgument, "atom normal must have unit 2-norm");
  auto f = std::make_shared<Formula>();
  f->kind = Kind::Atom;
  f->atom = std::move(atom);
  return f;
}

FormulaPtr Formula::negation(FormulaPtr f) { return make_node(Kind::Not, {}, {std::move(f)}); }

FormulaPtr Formula::conjunction(std::vector<FormulaPtr> fs) {
  if (fs.empty()) return truth();
  if (fs.size() == 1) return fs[0];
  return make_node(Kind::And, {}, std::move(fs));
}

FormulaPtr Formula::disjunction(std::vector<FormulaPtr> fs) {
  if (fs.empty()) return negation(truth());
  if (fs.size() == 1) return fs[0];
  return make_node(Kind::Or, {}, std::move(fs));
}

FormulaPtr Formula::until(FormulaPtr lhs, Interval i, FormulaPtr rhs) {
  check_interval(i);
  return make_node(Kind::Until, i, {std::move(lhs), std::move(rhs)});
}

FormulaPtr Formula::eventually(Interval i, FormulaPtr f) {
  check_interval(i);
  return make_node(Kind::Eventually, i, {std::move(f)});
}

FormulaPtr Formula::always(Interval i, FormulaPtr f) {
  check_interval(i);
  return make_node(Kind::Always, i, {std::move(f)});
}

double Formula::horizon() const {
  double h = 0.0;
  for (const auto& c : children) h = std::max(h, c->horizon());
  switch (kind) {
    case Kind::Until:
    case Kind::Eventually:
    case Kind::Always:
      return interval.hi + h;
    default:
      return h;
  }
}

double Formula::max_interval_end() const {
  double m = 0.0;
  if (kind == Kind::Until || kind == Kind::Eventually || kind == Kind::Always) m = interval.hi;
  for (const auto& c : children) m = std::max(m, c->max_interval_end());
  return m;
}

// ---------------------------------------------------------------------------

void PiecewiseSignal::validate() const {
  if (times.size() < 2) throw Error(ErrorCode::InvalidArgument, "signal needs at least 2 samples");
  if (states.size() != times.size() || inputs.size() != times.size())
    throw Error(ErrorCode::DimensionMismatch, "signal sample counts differ");
  if (std::abs(times[0]) > tol::kTime)
    throw Error(ErrorCode::InvalidArgument, "signal must start at t = 0");
  for (std::size_t j = 1; j < times.size(); ++j)
    if (!(times[j] > times[j - 1]))
      throw Error(ErrorCode::InvalidArgument, "signal times must be strictly increasing");
}

std::size_t PiecewiseSignal::index_of(double t) const {
  const std::size_t k = lower_index(times, t);
  if (k < times.size() && std::abs(times[k] - t) <= tol::kTime) return k;
  throw Error(ErrorCode::InvalidArgument,
              "robustness is evaluated at sample instants; t = " + fmt_num(t) + " is off-grid");
}

std::vector<double> robustness_trace(const Formula& f, const PiecewiseSignal& s) {
  s.validate();
  return trace_impl(f, s);
}

double robustness(const Formula& f, const PiecewiseSignal& s, double t) {
  s.validate();
  if (t < -tol::kTime || t > s.t_end() + tol::kTime)
    throw Error(ErrorCode::InvalidArgument, "evaluation time outside the signal domain");
  if (f.max_interval_end() > s.t_end() + tol::kTime)
    throw Error(ErrorCode::UnboundedHorizon, "an interval end exceeds the signal end time");
  if (t + f.horizon() > s.t_end() + tol::kTime)
    throw Error(ErrorCode::SignalTooShort, "formula horizon extends past the signal end");
  const std::size_t j = s.index_of(t);
  return trace_impl(f, s)[j];
}

bool satisfied(const Formula& f, const PiecewiseSignal& s) { return robustness(f, s, 0.0) >= 0.0; }

// ---------------------------------------------------------------------------

std::size_t FragmentSpec::atom_count() const {
  std::size_t n = 0;
  for (const auto& c : conjuncts) n += c.atoms.size();
  return n;
}

std::vector<const Atom*> FragmentSpec::atoms() const {
  std::vector<const Atom*> out;
  for (const auto& c : conjuncts)
    for (const auto& a : c.atoms) out.push_back(&a);
  return out;
}

FormulaPtr FragmentSpec::to_formula() const {
  std::vector<FormulaPtr> terms;
  for (const auto& c : conjuncts) {
    std::vector<FormulaPtr> atoms;
    for (const auto& a : c.atoms) atoms.push_back(Formula::make_atom(a));
    terms.push_back(Formula::always({c.tau, t_end}, Formula::conjunction(std::move(atoms))));
  }
  return Formula::conjunction(std::move(terms));
}

std::vector<double> FragmentSpec::atom_margins(const PiecewiseSignal& s) const {
  s.validate();
  if (t_end > s.t_end() + tol::kTime)
    throw Error(ErrorCode::SignalTooShort, "signal ends before the specification horizon");
  std::vector<double> out;
  const std::size_t hi = upper_index(s.times, t_end);
  for (const auto& c : conjuncts) {
    const std::size_t lo = lower_index(s.times, c.tau);
    for (const auto& a : c.atoms) {
      if (a.a.size() != s.states[0].size())
        throw Error(ErrorCode::DimensionMismatch, "atom state dimension does not match signal");
      double m = kInf;
      for (std::size_t j = lo; j < hi; ++j) {
        double v = a.b - a.margin.at(s.times[j]) - a.a.dot(s.states[j]);
        if (a.c.size()) v -= a.c.dot(s.inputs[j]);
        m = std::min(m, v);
      }
      out.push_back(m);
    }
  }
  return out;
}

double FragmentSpec::robustness(const PiecewiseSignal& s) const {
  double r = kInf;
  for (double m : atom_margins(s)) r = std::min(r, m);
  return r;
}

FragmentSpec validate_fragment(const Formula& f) {
  FragmentSpec spec;
  auto raw = collect_conjuncts(f, &spec.t_end);
  std::stable_sort(raw.begin(), raw.end(),
                   [](const Conjunct& a, const Conjunct& b) { return a.tau < b.tau; });
  for (auto& c : raw) {
    if (!spec.conjuncts.empty() && std::abs(spec.conjuncts.back().tau - c.tau) <= tol::kTime) {
      auto& dst = spec.conjuncts.back().atoms;
      dst.insert(dst.end(), c.atoms.begin(), c.atoms.end());
    } else {
      spec.conjuncts.push_back(std::move(c));
    }
  }
  return spec;
}

std::vector<FragmentSpec> split_groups(const Formula& f) {
  double end = 0.0;
  auto raw = collect_conjuncts(f, &end);
  std::vector<FragmentSpec> out;
  for (auto& c : raw) {
    FragmentSpec g;
    g.t_end = end;
    g.conjuncts.push_back(std::move(c));
    out.push_back(std::move(g));
  }
  return out;
}

const char* to_string(Nesting n) {
  switch (n) {
    case Nesting::Holds: return "holds";
    case Nesting::Violated: return "violated";
    case Nesting::Unknown: return "unknown";
  }
  return "unknown";
}

Nesting check_nesting(const FragmentSpec& spec) {
  if (spec.conjuncts.empty()) return Nesting::Holds;
  const Eigen::Index n = spec.conjuncts[0].atoms.empty() ? 0 : spec.conjuncts[0].atoms[0].a.size();
  std::vector<Vector> lo, hi;
  for (const auto& c : spec.conjuncts) {
    Vector l = Vector::Constant(n, -kInf), h = Vector::Constant(n, kInf);
    for (const auto& a : c.atoms) {
      if (a.a.size() != n) return Nesting::Unknown;
      if (a.c.size() && a.c.cwiseAbs().maxCoeff() > 0.0) return Nesting::Unknown;
      Eigen::Index idx = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (a.a[i] == 0.0) continue;
        if (idx >= 0 || std::abs(std::abs(a.a[i]) - 1.0) > tol::kUnitNorm) return Nesting::Unknown;
        idx = i;
      }
      if (idx < 0) return Nesting::Unknown;
      if (a.a[idx] > 0)
        h[idx] = std::min(h[idx], a.b);
      else
        l[idx] = std::max(l[idx], -a.b);
    }
    lo.push_back(l);
    hi.push_back(h);
  }
  for (std::size_t k = 1; k < lo.size(); ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      if (lo[k][i] < lo[k - 1][i] || hi[k][i] > hi[k - 1][i]) return Nesting::Violated;
  return Nesting::Holds;
}

FragmentSpec tighten(const FragmentSpec& spec, const TubeParameters& tube,
                     const Schedule& schedule) {
  const auto n_atoms = static_cast<Eigen::Index>(spec.atom_count());
  const auto n_seg = static_cast<Eigen::Index>(schedule.size());
  if (tube.delta_hat.rows() != n_seg || tube.delta_hat.cols() != n_atoms)
    throw Error(ErrorCode::DimensionMismatch,
                "delta_hat must have one row per schedule segment and one column per atom");
  if (static_cast<Eigen::Index>(tube.mu.size()) != n_seg)
    throw Error(ErrorCode::DimensionMismatch, "tube decay rates do not match the schedule");
  const auto starts = segment_starts(schedule);
  FragmentSpec out = spec;
  Eigen::Index col = 0;
  for (auto& c : out.conjuncts) {
    for (auto& a : c.atoms) {
      a.margin.segments.clear();
      for (Eigen::Index i = 0; i < n_seg; ++i)
        a.margin.segments.push_back({starts[i], tube.delta_hat(i, col), tube.mu[i]});
      ++col;
    }
  }
  return out;
}

std::string format_fragment(const FragmentSpec& spec) {
  std::ostringstream os;
  for (std::size_t k = 0; k < spec.conjuncts.size(); ++k) {
    const auto& c = spec.conjuncts[k];
    if (k) os << "\n& ";
    os << "always[" << fmt_num(c.tau) << "," << fmt_num(spec.t_end) << "] (";
    for (std::size_t i = 0; i < c.atoms.size(); ++i) {
      const auto& a = c.atoms[i];
      if (i) os << " & ";
      os << atom_lhs(a) << " < " << fmt_num(a.b * a.scale) << margin_text(a.margin, a.scale);
    }
    os << ")";
  }
  return os.str();
}

}  // namespace switchsynth
