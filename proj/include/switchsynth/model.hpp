#pragma once

#include "switchsynth/core.hpp"
#include "switchsynth/mtl_parser.hpp"
#include "switchsynth/schedule.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace switchsynth {

struct StateInfo {
  std::string name;
  std::string unit;
  /// Driven only by other exogenous coordinates and never by noise (e.g. the
  /// constant-1 augmentation or a scheduled disturbance ramp). Such states
  /// coincide on nominal and stochastic trajectories and are left out of the
  /// certified block.
  bool exogenous = false;
};

struct InputInfo {
  std::string name;
  std::string unit;
  double weight = 1.0;  // objective weight λ_c
  std::optional<double> lower;
  std::optional<double> upper;
};

struct OutputDef {
  std::string name;
  std::string unit;
  Vector c_row;
  Vector d_row;
};

/// dx = (A x + B u) dt + Σ dw
struct Mode {
  int id = 0;
  Matrix A;
  Matrix B;
  Matrix Sigma;
  double mu = kDefaultMu;
};

struct SwitchedLinearModel {
  std::string name;
  std::string description;
  std::vector<StateInfo> states;
  std::vector<InputInfo> inputs;
  std::vector<OutputDef> outputs;
  std::vector<Mode> modes;
  std::vector<std::pair<int, int>> transitions;
  Schedule schedule;
  Vector x0;
  double r0 = 0.0;
  /// Alternative initial-set sizing r0 = multiple·γ̂, resolved at certification.
  std::optional<double> r0_gamma_multiple;
  /// Formal white-noise feedthrough into outputs (rows match `outputs`); kept
  /// for reporting only and never used in output trajectories.
  std::optional<Matrix> noise_feedthrough;
  std::vector<std::string> warnings;

  int n() const { return static_cast<int>(states.size()); }
  int p() const { return static_cast<int>(inputs.size()); }
  int m() const { return modes.empty() ? 0 : static_cast<int>(modes[0].Sigma.cols()); }
  double t_end() const { return schedule_end(schedule); }
  const Mode& mode(int id) const;
  /// Indices of the non-exogenous states.
  std::vector<int> certified_indices() const;
  Matrix certified_A(int mode_id) const;
  Matrix certified_Sigma(int mode_id) const;
  SymbolTable symbols() const;
  /// Throws InvariantViolation listing every failed check.
  void validate() const;
};

/// Appends named outputs y = C x + D u. Throws NameCollision when a name is
/// already used by a state, input or output.
SwitchedLinearModel output_map(const SwitchedLinearModel& model, const Matrix& c,
                               const Matrix& d_feed, const std::vector<std::string>& names);

/// Restricts the schedule to [0, t_end] (the last kept segment is shortened).
SwitchedLinearModel truncate_schedule(const SwitchedLinearModel& model, double t_end);

/**
 * Linearized differential-algebraic model
 *   ẋ = A_s x + B_s y + M_s u + Σ_s1 ẇ
 *   0 = C_s x + D_s y + N_s u + Σ_s2 ẇ
 *   z = E_s x + F_s y
 */
struct DescriptorModel {
  Matrix As, Bs, Cs, Ds, Ms, Ns, Es, Fs, Sigma1, Sigma2;
  void validate() const;
};

struct KronReduced {
  Matrix A, B, C, D, Sigma, E;
  double condition = 1.0;  // 2-norm condition number of D_s
};

/// Eliminates the algebraic block; throws SingularAlgebraicBlock when the
/// condition number of D_s exceeds 1e10.
KronReduced kron_reduce(const DescriptorModel& d);

enum class DroopForm {
  PerUnit,  // Δω/(ω_s R): droop R on the per-unit speed deviation
  Literal,  // Δω/(2π R)
};

struct SfrParams {
  double omega_s = 2.0 * 3.14159265358979323846 * 60.0;  // rad/s
  double D = 1.0;
  double H = 4.0;       // s
  double tau_ch = 0.3;  // s
  double tau_g = 0.1;   // s
  double R = 0.05;
  DroopForm droop = DroopForm::PerUnit;
  double sigma_w = 2e-4;  // pu/√s power noise on the swing equation
  double t_end = 10.0;    // s
  double mu = kDefaultMu;
  double r0_gamma_multiple = 4.0;
};

/**
 * Four-state frequency-response model (Δω, ΔP_s, ΔP_m, ΔP_v) plus a
 * constant-1 coordinate carrying the load step and the ramp. Mode 1 holds
 * ΔP_s constant, mode 2 ramps it; schedule 5 s / 3.75 s / remainder.
 * Input u_s, output df = Δω/2π in Hz.
 */
SwitchedLinearModel build_sfr_model(const SfrParams& params = {}, double disturbance = 0.15,
                                    double ramp = 0.04);

/**
 * Synthetic, non-physical 11-state wind/storage fixture: the SFR states plus
 * a random stable six-state turbine block obtained by Kron reduction, inputs
 * u_w (weight 1) and u_s (weight 100), output ΔP_gen and nine line flows
 * P1..P9. Deterministic in `seed`.
 */
SwitchedLinearModel build_wtg_fixture(std::uint64_t seed = 7);

SwitchedLinearModel load_model(const std::string& path);
SwitchedLinearModel model_from_json_text(const std::string& text);
std::string model_to_json_text(const SwitchedLinearModel& model);
void save_model(const SwitchedLinearModel& model, const std::string& path);

DescriptorModel load_descriptor(const std::string& path);
DescriptorModel descriptor_from_json_text(const std::string& text);
std::string descriptor_to_json_text(const DescriptorModel& d);

}  // namespace switchsynth
