#include "switchsynth/sim.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace switchsynth;

namespace {

SwitchedLinearModel brownian(double t_end) {
  SwitchedLinearModel m;
  m.states = {{"x", "", false}};
  InputInfo u;
  u.name = "u";
  m.inputs = {u};
  Mode md;
  md.id = 1;
  md.A = Matrix::Zero(1, 1);
  md.B = Matrix::Zero(1, 1);
  md.Sigma = Matrix::Ones(1, 1);
  m.modes = {md};
  m.schedule = {{1, t_end}};
  m.x0 = Vector::Zero(1);
  m.r0 = 1.0;
  return m;
}

ControlPlan zero_plan(const DiscretizedSystem& d) {
  ControlPlan p;
  p.step = d.step;
  p.values = Matrix::Zero(d.intervals(), d.p);
  for (int j = 0; j < d.intervals(); ++j) p.times.push_back(j * d.step);
  return p;
}

std::vector<ModeCertificate> toy_certs(const SwitchedLinearModel& m) {
  std::vector<ModeCertificate> certs;
  for (const auto& md : m.modes)
    certs.push_back(make_certificate(md.id, m.certified_A(md.id), m.certified_Sigma(md.id), md.mu,
                                     Vector::Ones(m.n())));
  return certs;
}

}  // namespace

TEST_CASE("sample_initial") {
  Matrix mm(3, 3);
  mm << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Vector c = Vector::LinSpaced(3, -1.0, 1.0);
  RandomStream rng(5, 0);
  SUBCASE("zero radius returns the centre") {
    CHECK(sample_initial({c, mm, 0.0}, rng) == c);
  }
  SUBCASE("membership, boundary, uniformity and mean") {
    const Ellipsoid e{c, mm, 0.7};
    const int n = 100000;
    Vector sum = Vector::Zero(3), sumsq = Vector::Zero(3);
    int inner = 0;
    for (int k = 0; k < n; ++k) {
      const Vector x = sample_initial(e, rng);
      const double q = (x - c).dot(mm * (x - c));
      CHECK_MESSAGE(q <= 0.7 * (1.0 + 1e-9), "sample outside the ellipsoid");
      if (q <= 0.7 / 4.0) ++inner;  // radius ≤ 1/2: probability 2⁻³
      sum += x;
      sumsq += x.cwiseProduct(x);
    }
    const Vector mean = sum / n;
    const Vector var = sumsq / n - mean.cwiseProduct(mean);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(mean(i) - c(i)) <= 3.0 * std::sqrt(var(i) / n));
    const double p = 0.125;
    CHECK(std::abs(inner / double(n) - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
    for (int k = 0; k < 1000; ++k) {
      const Vector x = sample_initial(e, rng, true);
      CHECK(std::abs((x - c).dot(mm * (x - c)) - 0.7) <= 1e-9 * 0.7);
    }
  }
}

TEST_CASE("pure diffusion variance") {
  const auto model = brownian(1.0);
  const auto grid = discretize(model, 0.1);
  const auto plan = zero_plan(grid);
  const Simulator sim(model, grid, 0.1);
  const int n = 100000;
  double s1 = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    RandomStream rng(77, static_cast<std::uint64_t>(k));
    const double x = sim.run(plan, model.x0, &rng).signal.states.back()(0);
    s1 += x;
    s2 += x * x;
  }
  const double var = s2 / n - (s1 / n) * (s1 / n);
  // Var of the sample variance of N(0, T): 2T²/(N−1).
  CHECK(std::abs(var - 1.0) <= 3.0 * std::sqrt(2.0 / (n - 1)));
  CHECK(std::abs(s1 / n) <= 3.0 * std::sqrt(1.0 / n));
}

TEST_CASE("simulation determinism and the noise-free limit") {
  const auto model = fixture::toy_model();
  const auto grid = discretize(model, 0.1);
  ControlPlan plan = zero_plan(grid);
  for (int j = 0; j < grid.intervals(); ++j) plan.values(j, 0) = std::cos(0.3 * j);
  const auto a = simulate_realization(model, grid, plan, model.x0, 42, 3);
  const auto b = simulate_realization(model, grid, plan, model.x0, 42, 3);
  const auto c = simulate_realization(model, grid, plan, model.x0, 43, 3);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 201);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a.states[i] == b.states[i];
    differ = differ || a.states[i] != c.states[i];
  }
  CHECK(same);
  CHECK(differ);

  const auto quiet = fixture::toy_model(0.0);
  const auto nominal = nominal_rollout(grid, plan, quiet.x0);
  for (double h : {0.01, 0.005, 0.0025}) {
    const auto s = simulate_realization(quiet, grid, plan, quiet.x0, 1, 0, h);
    const int ratio = static_cast<int>(std::lround(0.1 / h));
    for (std::size_t j = 0; j < nominal.size(); ++j) {
      CHECK(std::abs(s.times[j * ratio] - nominal.times[j]) <= 1e-12);
      CHECK((s.states[j * ratio] - nominal.states[j]).norm() <= 1e-12);
    }
  }
  CHECK_THROWS_AS(Simulator(model, grid, 0.03), Error);
  CHECK_THROWS_AS(Simulator(model, grid, 0.2), Error);
}

TEST_CASE("divergence is reported") {
  auto model = brownian(50.0);
  model.modes[0].A = Matrix::Constant(1, 1, 2.0);
  model.modes[0].Sigma = Matrix::Zero(1, 1);
  model.x0 = Vector::Ones(1);
  const auto grid = discretize(model, 1.0);
  try {
    simulate_realization(model, grid, zero_plan(grid), model.x0, 0);
    FAIL("no divergence detected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("ensemble") {
  const auto model = fixture::toy_model(0.05);
  const auto grid = discretize(model, 0.05);
  const auto certs = toy_certs(model);
  FragmentSpec spec;
  spec.t_end = 2.0;
  Atom at;
  at.a = Vector::Unit(2, 0);
  at.c = Vector::Zero(1);
  at.b = 1.5;
  at.label = "x1";
  spec.conjuncts.push_back({0.0, {at}});
  const auto tube = tube_parameters(certs, model.schedule, 0.05, model.r0,
                                    {Vector::Unit(2, 0)});
  const auto plan = zero_plan(grid);
  EnsembleInputs in{&model, &grid, &plan, &spec, &certs, &tube, model.r0};
  EnsembleConfig cfg;
  cfg.realizations = 400;
  cfg.seed = 9;
  cfg.trace_limit = 3;

  const auto par = run_ensemble(in, cfg);
  const auto ser = run_ensemble_serial(in, cfg);
  CHECK(dump_json(ensemble_to_json(par)) == dump_json(ensemble_to_json(ser)));
  CHECK(plot_csv(model, par.traces) == plot_csv(model, ser.traces));
  CHECK(par.traces.size() == 3);
  CHECK(par.empirical_rate == static_cast<double>(par.satisfied_count) / 400);
  CHECK(par.theoretical_bound == probability_bound(certs, model.schedule, tube.gamma_hat));
  CHECK(par.theoretical_bound >= 0.95);  // unequal noise gains: sum bound exceeds 1 − ε
  // Direct check of the sup bound: P(sup φ < γ̂) ≥ 1 − ε.
  const double slack = 2.0 * std::sqrt(0.95 * 0.05 / 400);
  CHECK(par.fraction_below_gamma >= 0.95 - slack);
  CHECK(par.max_sup_phi > 0.0);

  SUBCASE("aggregates ignore realization order") {
    int count = 0;
    double worst = 1e300;
    for (auto it = par.runs.rbegin(); it != par.runs.rend(); ++it) {
      count += it->satisfied ? 1 : 0;
      worst = std::min(worst, it->atom_margins[0]);
    }
    CHECK(count == par.satisfied_count);
    CHECK(worst == par.worst_margins[0]);
  }
  SUBCASE("noise-free ensemble from the nominal start") {
    const auto quiet = fixture::toy_model(0.0);
    EnsembleInputs qi = in;
    qi.model = &quiet;
    EnsembleConfig qc;
    qc.realizations = 5;
    qc.initial_sampling = InitialSampling::NominalOnly;
    const auto rep = run_ensemble(qi, qc);
    CHECK(rep.empirical_rate == 1.0);
    CHECK(rep.max_sup_phi == 0.0);
  }
  SUBCASE("usage errors") {
    EnsembleConfig bad = cfg;
    bad.realizations = 0;
    CHECK_THROWS_AS(run_ensemble(in, bad), Error);
    FragmentSpec longer = spec;
    longer.t_end = 3.0;
    EnsembleInputs li = in;
    li.spec = &longer;
    CHECK_THROWS_AS(run_ensemble(li, cfg), Error);
  }
  SUBCASE("trace CSV") {
    const auto text = trace_csv(model, par.traces[0].signal);
    CHECK(text.rfind("time,x1,x2,u\n", 0) == 0);
  }
}
