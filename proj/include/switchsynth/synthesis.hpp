#pragma once

#include "switchsynth/core.hpp"
#include "switchsynth/io.hpp"
#include "switchsynth/model.hpp"
#include "switchsynth/mtl.hpp"
#include "switchsynth/qp.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace switchsynth {

/// Zero-order-hold pair for one step: x⁺ = Φ x + Γ u.
struct ZohPair {
  Matrix Phi;
  Matrix Gamma;
};

/// Φ = e^{Ah}, Γ = ∫₀ʰ e^{As} ds B from one exponential of [[A, B], [0, 0]]·h.
ZohPair zoh(const Matrix& a, const Matrix& b, double h);

/**
 * Exact discretization of the nominal switched dynamics on a uniform grid.
 * Interval j covers [t_j, t_{j+1}) and uses the mode active at t_j; switch
 * instants fall on grid points. Affine terms ride on exogenous states.
 */
struct DiscretizedSystem {
  double step = 0.0;
  std::vector<double> times;       // N + 1 grid points, times[N] = T_end
  std::vector<int> interval_mode;  // N entries, index into `pairs`
  std::vector<int> mode_ids;       // mode id of each entry of `pairs`
  std::vector<ZohPair> pairs;
  int n = 0;
  int p = 0;

  int intervals() const { return static_cast<int>(interval_mode.size()); }
  const ZohPair& at(int j) const { return pairs[static_cast<std::size_t>(interval_mode[j])]; }
};

/// Throws StepMisaligned unless `step` divides every dwell within 1e-9.
DiscretizedSystem discretize(const SwitchedLinearModel& model, double step);

/// Where each assembled row came from.
struct RowOrigin {
  int group = 0;       // lazy-constraint group (0 for the core)
  int atom = 0;        // atom index within the group's fragment
  int time_index = 0;  // grid point j
  double margin = 0.0; // Δ(t_j) subtracted from the bound
};

/**
 * Linear inequalities G u ≤ h over the stacked inputs
 * u = (u_0, …, u_{N−1}), channel-minor. States are eliminated by forward
 * substitution, so row j depends only on u_0..u_j (block lower triangular).
 */
struct SynthesisProblem {
  int n = 0;
  int p = 0;
  int intervals = 0;
  double step = 0.0;
  Matrix G;
  Vector h;
  std::vector<RowOrigin> rows;
  Vector weights;  // per-channel objective weight
  std::vector<std::optional<double>> lower;
  std::vector<std::optional<double>> upper;

  int variables() const { return p * intervals; }
  /// Appends the rows of `other` (same grid and channels).
  void append(const SynthesisProblem& other);
};

struct AssembleOptions {
  int group = 0;
  /// Extra margin realizing the strict inequality of the predicates.
  double strict_margin = tol::kStrictMargin;
};

/**
 * One row per atom and grid time t_j ≥ τ_k (j = 0..N; the input at t_N is
 * u_{N−1}): aᵀx_j + cᵀu_j ≤ b − Δ(t_j) − strict_margin. Throws EmptyHorizon
 * when some τ exceeds T_end and UnboundedHorizon when the fragment's
 * horizon extends past the grid.
 */
SynthesisProblem assemble(const DiscretizedSystem& disc, const FragmentSpec& tightened,
                          const Vector& x0, const SwitchedLinearModel& model,
                          const AssembleOptions& options = {});

enum class ObjectiveKind { L2, L1 };
const char* to_string(ObjectiveKind k);
ObjectiveKind objective_from_string(const std::string& s);

struct ControlPlan {
  double step = 0.0;
  std::vector<double> times;  // interval start times
  Matrix values;              // intervals × channels
  std::vector<std::string> channels;
  ObjectiveKind objective = ObjectiveKind::L2;
  double objective_value = 0.0;
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  double primal_residual = 0.0;
  double stationarity = 0.0;
  std::vector<int> active;           // active rows of the final problem
  std::vector<double> lazy_objectives;  // one per solve in solve_lazy
  std::vector<int> added_groups;        // pool indices in the order added

  int intervals() const { return static_cast<int>(values.rows()); }
  Vector input(int j) const { return values.row(j).transpose(); }
};

/**
 * Weighted ‖u‖₂² (Σ_j Σ_c w_c u_{j,c}² Δt, Hessian regularized by 1e-10) or
 * ‖u‖₁ (Σ w_c |u_{j,c}| Δt via u = u⁺ − u⁻, ties broken lexicographically).
 * Throws InfeasibleError carrying the Farkas combination of the rows of G,
 * or Error(IterationLimit / Unbounded).
 */
ControlPlan solve(const SynthesisProblem& problem, ObjectiveKind objective,
                  const std::vector<std::string>& channels = {});

/// Indices of pool groups violated by the candidate plan.
using GroupValidator = std::function<std::vector<int>(const ControlPlan&)>;

/**
 * Solves the core problem, then repeatedly adds every violated pool group
 * and re-solves until the validator reports none (or all groups are in).
 */
ControlPlan solve_lazy(const SynthesisProblem& core, const std::vector<SynthesisProblem>& pool,
                       const GroupValidator& violated, ObjectiveKind objective,
                       const std::vector<std::string>& channels = {});

/// Exact nominal trajectory at the grid points.
PiecewiseSignal nominal_rollout(const DiscretizedSystem& disc, const ControlPlan& plan,
                                const Vector& x0);

/// Validator flagging groups whose (tightened) fragment has negative
/// robustness on the nominal rollout.
GroupValidator rollout_validator(const DiscretizedSystem& disc, const Vector& x0,
                                 std::vector<FragmentSpec> groups);

/**
 * First-order estimate of how far an atom may dip between samples:
 * max over grid points of |aᵀẋ_j| · Δt / 2, per atom.
 */
std::vector<double> intersample_slack(const SwitchedLinearModel& model,
                                      const DiscretizedSystem& disc, const PiecewiseSignal& nominal,
                                      const FragmentSpec& spec);

std::string plan_to_csv(const ControlPlan& plan);
/// Reads time,u_1..u_p rows; the step is inferred from the first two times.
ControlPlan plan_from_csv(const std::string& text);
Json solver_log(const ControlPlan& plan, const SynthesisProblem& problem);

}  // namespace switchsynth
