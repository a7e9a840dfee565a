#include "switchsynth/pipeline.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace switchsynth;

namespace {

const char* kSfrSpec =
    "always[0,10] (df < 0.5 & df > -0.5 & Pm < 1 & Pm > -1) & always[2,10] (df < 0.4 & df > -0.4)";

std::string data(const std::string& name) { return std::string(SWITCHSYNTH_DATA_DIR) + "/" + name; }

}  // namespace

TEST_CASE("certify on the frequency-response model") {
  const auto model = build_sfr_model();
  const auto spec = load_fragment(kSfrSpec, model);
  const auto res = certify(model, {}, &spec);
  REQUIRE(res.certs.size() == 2);
  for (const auto& c : res.certs) {
    CHECK(verify_lmi(model.certified_A(c.mode_id), c.M, c.mu) <= 0.0);
    CHECK(c.alpha == doctest::Approx(noise_gain(c.M, model.certified_Sigma(c.mode_id))).epsilon(1e-14));
  }
  // γ̂ and r0 from their definitions.
  const double max_alpha = std::max(res.certs[0].alpha, res.certs[1].alpha);
  CHECK(res.gamma_hat == doctest::Approx(max_alpha * 10.0 / 0.05).epsilon(1e-14));
  CHECK(res.r0 == doctest::Approx(4.0 * res.gamma_hat).epsilon(1e-14));
  CHECK(res.bound >= 0.95);
  CHECK(res.bound <= res.product_bound);
  REQUIRE(res.containment.size() == 2);
  for (const auto& c : res.containment) CHECK(c.contained);
  CHECK(res.tube.delta_hat.rows() == 3);
  CHECK(res.tube.delta_hat.cols() == static_cast<Eigen::Index>(spec.atoms().size()));
  CHECK(res.direction_labels.front() == "df");

  SUBCASE("single mode on a 5 s horizon gives exactly 1 − ε") {
    const auto five = truncate_schedule(model, 5.0);
    const auto r5 = certify(five, {});
    CHECK(std::abs(r5.bound - 0.95) <= 1e-12);
  }
  SUBCASE("deterministic and JSON round trip") {
    const auto again = certify(model, {}, &spec);
    CHECK(dump_json(certify_to_json(again)) == dump_json(certify_to_json(res)));
    const auto back = certify_from_json(parse_json(dump_json(certify_to_json(res)), "cert"));
    CHECK(back.model_hash == res.model_hash);
    CHECK(back.r0 == res.r0);
    REQUIRE(back.certs.size() == 2);
    CHECK(max_abs(back.certs[1].M - res.certs[1].M) == 0.0);
  }
  SUBCASE("shaping never widens the target tube") {
    CertifyOptions flat;
    flat.budget = 1;
    const auto base = certify(model, flat);
    const auto shaped = certify(model, {});
    CHECK(shaped.tube.delta_hat.col(0).maxCoeff() <= base.tube.delta_hat.col(0).maxCoeff());
  }
  SUBCASE("errors") {
    CertifyOptions bad;
    bad.epsilon = 1.5;
    CHECK_THROWS_WITH_AS(certify(model, bad), doctest::Contains("epsilon"), Error);
    SfrParams lp;
    lp.droop = DroopForm::Literal;
    try {
      certify(build_sfr_model(lp), {});
      FAIL("literal droop certified");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotHurwitz);
    }
  }
}

TEST_CASE("synthesis on the frequency-response model") {
  const auto model = build_sfr_model();
  const auto spec = load_fragment(kSfrSpec, model);
  const auto cert = certify(model, {}, &spec);
  const auto l2 = synthesize(model, cert, spec, {}, {});
  CHECK(l2.tightened_robustness >= -1e-7);
  CHECK(l2.robustness >= l2.tightened_robustness);
  CHECK(l2.grid.intervals() == 200);
  CHECK(l2.nesting == Nesting::Violated);  // Pm is bounded only by the first conjunct
  CHECK(l2.plan.primal_residual <= 1e-7);

  SynthesizeOptions o1;
  o1.objective = ObjectiveKind::L1;
  const auto l1 = synthesize(model, cert, spec, {}, o1);
  CHECK(l1.tightened_robustness >= -1e-7);
  CHECK((l1.plan.values - l2.plan.values).cwiseAbs().maxCoeff() > 1e-6);

  const Json j = synthesis_to_json(l2);
  CHECK(j["tube"]["directions"].size() == spec.atoms().size());
  CHECK(j["nominal_robustness_tightened"].get<double>() == l2.tightened_robustness);
}

TEST_CASE("lazy line-flow groups on the turbine fixture") {
  const auto model = load_model(data("wtg_model.json"));
  const auto spec = load_fragment(read_text(data("wtg_spec.mtl")), model);
  const auto pool = load_pool(read_text(data("wtg_pool.mtl")), model);
  REQUIRE(pool.size() == 9);
  const auto cert = certify(model, {}, &spec);
  CHECK_FALSE(cert.shaped);  // per-mode shaping inflates the level after the second switch

  const auto run = synthesize(model, cert, spec, pool, {});
  CHECK(run.plan.lazy_objectives.size() == 2);
  REQUIRE(run.plan.added_groups.size() == 1);
  CHECK(run.plan.added_groups[0] == 2);
  CHECK(run.plan.lazy_objectives[1] >= run.plan.lazy_objectives[0]);
  for (const auto& g : run.pool_tight) CHECK(g.robustness(run.nominal) >= -1e-7);
  CHECK(run.tightened_robustness >= -1e-7);
}
