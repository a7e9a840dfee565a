#pragma once

#include "switchsynth/core.hpp"
#include "switchsynth/schedule.hpp"

#include <memory>
#include <string>
#include <vector>

namespace switchsynth {

struct TubeParameters;

/// Piecewise exponential tightening Δ(t) = δ_i·exp(−μ_i (t − s_i)/2) on the
/// segment [s_i, s_{i+1}). An empty margin is identically zero.
struct Margin {
  struct Segment {
    double start = 0.0;
    double delta = 0.0;
    double mu = 0.0;
  };
  std::vector<Segment> segments;

  double at(double t) const;
  bool empty() const { return segments.empty(); }
};

/**
 * Affine half-space predicate aᵀx + cᵀu < b − Δ(t) with ‖a‖₂ = 1.
 *
 * With a unit normal, b − aᵀx − cᵀu is the signed distance from x to the
 * boundary of the half-space (for fixed u), which is the atom's robustness.
 */
struct Atom {
  Vector a;
  Vector c;
  double b = 0.0;
  std::string label;   // left-hand side as written, for display
  double scale = 1.0;  // display units per normalized unit
  Margin margin;

  double value(const Vector& x, const Vector& u, double t) const {
    return b - margin.at(t) - a.dot(x) - c.dot(u);
  }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

/// Immutable MTL abstract syntax tree.
struct Formula {
  enum class Kind { True, Atom, Not, And, Or, Until, Eventually, Always };

  Kind kind = Kind::True;
  switchsynth::Atom atom;  // Kind::Atom
  Interval interval;       // temporal operators
  std::vector<FormulaPtr> children;

  static FormulaPtr truth();
  static FormulaPtr make_atom(switchsynth::Atom atom);
  static FormulaPtr negation(FormulaPtr f);
  static FormulaPtr conjunction(std::vector<FormulaPtr> fs);
  static FormulaPtr disjunction(std::vector<FormulaPtr> fs);
  static FormulaPtr until(FormulaPtr lhs, Interval i, FormulaPtr rhs);
  static FormulaPtr eventually(Interval i, FormulaPtr f);
  static FormulaPtr always(Interval i, FormulaPtr f);

  /// Time span beyond the evaluation instant needed to decide the formula.
  double horizon() const;
  /// Largest interval end in the tree.
  double max_interval_end() const;
};

/// Sampled trajectory; linear interpolation between samples is implied but
/// robustness is evaluated at the sample instants.
struct PiecewiseSignal {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> inputs;

  void validate() const;
  double t_end() const { return times.back(); }
  std::size_t size() const { return times.size(); }
  /// Sample index whose time equals t within tol::kTime.
  std::size_t index_of(double t) const;
};

/// Robust semantics at the sample instant t (sup/inf over sampled instants).
double robustness(const Formula& f, const PiecewiseSignal& s, double t);
/// Robustness at every sample instant (windows truncated at the signal end).
std::vector<double> robustness_trace(const Formula& f, const PiecewiseSignal& s);
/// robustness(f, s, 0) ≥ 0
bool satisfied(const Formula& f, const PiecewiseSignal& s);

/// One □_{[τ, T_end]} over a conjunction of atoms.
struct Conjunct {
  double tau = 0.0;
  std::vector<Atom> atoms;
};

/// Conjunction-of-always fragment, conjuncts sorted by strictly increasing τ.
struct FragmentSpec {
  std::vector<Conjunct> conjuncts;
  double t_end = 0.0;

  std::size_t atom_count() const;
  /// Atoms in conjunct order; indices match tube columns.
  std::vector<const Atom*> atoms() const;
  FormulaPtr to_formula() const;
  /// Same value as robustness(to_formula(), s, 0), computed directly.
  double robustness(const PiecewiseSignal& s) const;
  /// Per-atom min over active sample instants of the atom value.
  std::vector<double> atom_margins(const PiecewiseSignal& s) const;
};

/// Accepts ∧_k □_{[τ_k, T]} ∧_ν atoms with a shared T; conjuncts with equal
/// τ are merged. Throws NotInFragment naming the offending subterm path.
FragmentSpec validate_fragment(const Formula& f);

/// Splits a top-level conjunction into one fragment per □ conjunct without
/// merging; used for lazily-added constraint groups.
std::vector<FragmentSpec> split_groups(const Formula& f);

enum class Nesting { Holds, Violated, Unknown };
const char* to_string(Nesting n);

/// O(p_k) ⊂ O(p_{k−1}) check, decided only when every atom is an axis-aligned
/// bound on a state (the box case); otherwise Unknown.
Nesting check_nesting(const FragmentSpec& spec);

/// Sets each atom's margin from the tube: segment i uses δ̂(i, atom) with
/// decay μ_i in local time. Throws DimensionMismatch on shape errors.
FragmentSpec tighten(const FragmentSpec& spec, const TubeParameters& tube,
                     const Schedule& schedule);

/// Human-readable tightened formula in display units, e.g.
/// "df < 0.5 - 0.217*exp(-0.01*t)".
std::string format_fragment(const FragmentSpec& spec);

}  // namespace switchsynth
