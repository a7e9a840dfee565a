#pragma once

#include "switchsynth/certificates.hpp"
#include "switchsynth/io.hpp"
#include "switchsynth/model.hpp"
#include "switchsynth/mtl.hpp"
#include "switchsynth/synthesis.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace switchsynth {

struct CertifyOptions {
  double epsilon = 0.05;
  std::optional<double> mu;  // overrides every mode's μ
  int target_entry = 0;      // certified coordinate whose tube width is shaped
  int budget = 64;           // candidate weightings per mode
  std::uint64_t seed = 0;
};

struct ContainmentCheck {
  int from_mode = 0;
  int to_mode = 0;
  double time = 0.0;
  double inner_level = 0.0;  // r_{i−1} e^{−μT/2} in the previous metric
  double outer_level = 0.0;  // r_i in the next metric
  bool contained = false;
};

struct CertifyResult {
  std::vector<ModeCertificate> certs;
  std::vector<int> mu_halvings;  // per certificate
  double epsilon = 0.0;
  double r0 = 0.0;
  double gamma_hat = 0.0;
  double bound = 0.0;
  double product_bound = 0.0;
  TubeParameters tube;  // directions below
  std::vector<std::string> direction_labels;
  std::vector<ContainmentCheck> containment;
  std::string model_hash;
  bool shaped = true;  // false when the unshaped (Q = I) set was kept
};

/// Atom normals restricted to the certified coordinates.
std::vector<Vector> tube_directions(const SwitchedLinearModel& model, const FragmentSpec& spec);

/**
 * Per-mode certificates by the weighting search, γ̂ from ε, r0 (explicit or
 * a multiple of γ̂), level propagation with containment checks and the δ̂
 * table. The shaped set is replaced by the Q = I set when the latter gives a
 * narrower worst-segment tube on the target coordinate. Directions come from `spec` when given, else the certified unit
 * vectors.
 */
CertifyResult certify(const SwitchedLinearModel& model, const CertifyOptions& options,
                      const FragmentSpec* spec = nullptr);

Json certify_to_json(const CertifyResult& r);
/// Reads certificates, ε, r0 and the model hash; the tube is not restored.
CertifyResult certify_from_json(const Json& j);

/// Tube sized for the atoms of `spec` from existing certificates.
TubeParameters tube_for(const SwitchedLinearModel& model, const CertifyResult& cert,
                        const FragmentSpec& spec);

struct SynthesizeOptions {
  double step = 0.05;
  ObjectiveKind objective = ObjectiveKind::L2;
};

struct SynthesisRun {
  FragmentSpec spec;
  FragmentSpec tightened;
  std::vector<FragmentSpec> pool;        // untightened lazy groups
  std::vector<FragmentSpec> pool_tight;  // tightened lazy groups
  TubeParameters tube;
  DiscretizedSystem grid;
  SynthesisProblem problem;  // final (core plus added groups)
  ControlPlan plan;
  PiecewiseSignal nominal;
  double tightened_robustness = 0.0;
  double robustness = 0.0;
  std::vector<double> intersample_slack;
  Nesting nesting = Nesting::Unknown;
};

/// Tighten, discretize, assemble, solve (lazily when `pool` is non-empty) and
/// roll out the nominal trajectory.
SynthesisRun synthesize(const SwitchedLinearModel& model, const CertifyResult& cert,
                        const FragmentSpec& spec, const std::vector<FragmentSpec>& pool,
                        const SynthesizeOptions& options);

Json synthesis_to_json(const SynthesisRun& run);

/// Parses and validates a specification file against the model's symbols.
FragmentSpec load_fragment(const std::string& text, const SwitchedLinearModel& model);
/// Lazy pool: each top-level □ conjunct becomes one group.
std::vector<FragmentSpec> load_pool(const std::string& text, const SwitchedLinearModel& model);

}  // namespace switchsynth
