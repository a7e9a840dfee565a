#pragma once

#include "switchsynth/certificates.hpp"
#include "switchsynth/io.hpp"
#include "switchsynth/model.hpp"
#include "switchsynth/mtl.hpp"
#include "switchsynth/rng.hpp"
#include "switchsynth/synthesis.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace switchsynth {

enum class InitialSampling { NominalOnly, UniformInEllipsoid, BoundaryOfEllipsoid };
const char* to_string(InitialSampling s);
InitialSampling initial_sampling_from_string(const std::string& s);

struct EnsembleConfig {
  int realizations = 100;
  double sde_step = 0.0;  // 0: grid step / 10
  std::uint64_t seed = 0;
  InitialSampling initial_sampling = InitialSampling::UniformInEllipsoid;
  /// Realizations whose grid-point traces are kept for plotting.
  int trace_limit = 0;
};

/**
 * Point in {x : (x − c)ᵀ M (x − c) ≤ level}: uniform in volume (normal
 * direction, radius U^{1/n}) or on the boundary, mapped through the
 * Cholesky factor of M.
 */
Vector sample_initial(const Ellipsoid& ellipsoid, RandomStream& rng, bool boundary = false);

/**
 * Stochastic simulation on a fixed grid. Per SDE step h the drift is advanced
 * exactly (x ← e^{Ah}x + Γ_h u) and the diffusion adds Σ√h ζ with ζ standard
 * normal, which is Euler–Maruyama with exact drift for constant Σ. Every SDE
 * step is a sample of the returned signal.
 */
class Simulator {
 public:
  Simulator(const SwitchedLinearModel& model, const DiscretizedSystem& grid, double sde_step);

  struct Result {
    PiecewiseSignal signal;
    /// sup over t of (x − x_d)ᵀ M_i (x − x_d) e^{μ_i (t − s_i)}, where x_d is
    /// the noise-free trajectory restarted from x at each segment start s_i.
    /// NaN when no certificates are given.
    double sup_phi = 0.0;
  };

  Result run(const ControlPlan& plan, const Vector& x_init, RandomStream* rng,
             const std::vector<ModeCertificate>* certs = nullptr) const;

  double sde_step() const { return h_; }
  int substeps() const { return ratio_; }

 private:
  const SwitchedLinearModel& model_;
  const DiscretizedSystem& grid_;
  double h_ = 0.0;
  int ratio_ = 1;
  std::vector<ZohPair> step_pairs_;  // indexed like grid.pairs
  std::vector<Matrix> diffusion_;    // Σ√h, indexed like grid.pairs
  std::vector<int> segment_of_interval_;
  std::vector<double> segment_start_;
  std::vector<int> certified_;
};

/// Single realization with stream `stream` of `seed`; Σ = 0 gives the exact
/// nominal trajectory on the fine grid.
PiecewiseSignal simulate_realization(const SwitchedLinearModel& model, const DiscretizedSystem& grid,
                                     const ControlPlan& plan, const Vector& x_init,
                                     std::uint64_t seed, std::uint64_t stream = 0,
                                     double sde_step = 0.0);

struct RealizationResult {
  double robustness = 0.0;
  bool satisfied = false;
  double sup_phi = 0.0;
  std::vector<double> atom_margins;
};

struct Trace {
  int realization = 0;  // −1 for the nominal
  PiecewiseSignal signal;
};

struct EnsembleReport {
  std::string rng = kRngName;
  std::uint64_t seed = 0;
  int realizations = 0;
  double sde_step = 0.0;
  InitialSampling initial_sampling = InitialSampling::UniformInEllipsoid;
  std::vector<RealizationResult> runs;
  int satisfied_count = 0;
  double empirical_rate = 0.0;
  double theoretical_bound = 0.0;
  double gamma_hat = 0.0;
  double epsilon = 0.0;
  double r0 = 0.0;
  std::vector<std::string> atom_labels;
  std::vector<double> atom_scales;    // display units per normalized unit
  std::vector<double> worst_margins;  // normalized units
  double max_sup_phi = 0.0;
  double fraction_below_gamma = 0.0;
  std::vector<Trace> traces;
};

/// Inputs shared by every realization.
struct EnsembleInputs {
  const SwitchedLinearModel* model = nullptr;
  const DiscretizedSystem* grid = nullptr;
  const ControlPlan* plan = nullptr;
  const FragmentSpec* spec = nullptr;  // evaluated untightened
  const std::vector<ModeCertificate>* certs = nullptr;  // may be empty
  const TubeParameters* tube = nullptr;                 // may be null
  double r0 = 0.0;
};

/// OpenMP over realizations; each realization owns stream k of the derived
/// seed, so the report does not depend on the thread count.
EnsembleReport run_ensemble(const EnsembleInputs& in, const EnsembleConfig& cfg);
/// Serial reference of run_ensemble.
EnsembleReport run_ensemble_serial(const EnsembleInputs& in, const EnsembleConfig& cfg);

/// Report without traces; per-realization rows included.
Json ensemble_to_json(const EnsembleReport& r);
/// Long format: time,realization,channel,value (outputs, then inputs).
std::string plot_csv(const SwitchedLinearModel& model, const std::vector<Trace>& traces);
/// Wide format for one realization: time, states, inputs, outputs.
std::string trace_csv(const SwitchedLinearModel& model, const PiecewiseSignal& s);

}  // namespace switchsynth
