#include "switchsynth/model.hpp"
#include "switchsynth/io.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace switchsynth;

namespace {

DescriptorModel random_descriptor(std::mt19937_64& gen, int n, int k, int p, int q, int m) {
  std::normal_distribution<double> nd;
  auto r = [&](int a, int b, double s) {
    Matrix x(a, b);
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j) x(i, j) = s * nd(gen);
    return x;
  };
  DescriptorModel d;
  d.As = r(n, n, 0.5) - 2.0 * Matrix::Identity(n, n);
  d.Bs = r(n, k, 0.5);
  d.Cs = r(k, n, 0.5);
  d.Ds = r(k, k, 0.5) + 2.0 * Matrix::Identity(k, k);
  d.Ms = r(n, p, 1.0);
  d.Ns = r(k, p, 1.0);
  d.Es = r(q, n, 1.0);
  d.Fs = r(q, k, 1.0);
  d.Sigma1 = r(n, m, 1.0);
  d.Sigma2 = r(k, m, 1.0);
  return d;
}

ErrorCode error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;  // sentinel: nothing thrown
}
}  // namespace

TEST_CASE("kron_reduce examples") {
  std::mt19937_64 gen(1);
  DescriptorModel d = random_descriptor(gen, 3, 2, 1, 2, 1);
  d.Bs.setZero();
  d.Fs.setZero();
  const auto r = kron_reduce(d);
  CHECK(max_abs(r.A - d.As) == 0.0);
  CHECK(max_abs(r.C - d.Es) == 0.0);
  CHECK(max_abs(r.D) == 0.0);

  DescriptorModel s;
  s.As = Matrix::Constant(1, 1, -1);
  s.Bs = Matrix::Constant(1, 1, 1);
  s.Cs = Matrix::Constant(1, 1, 1);
  s.Ds = Matrix::Constant(1, 1, -2);
  s.Ms = Matrix::Zero(1, 1);
  s.Ns = Matrix::Zero(1, 1);
  s.Es = Matrix::Zero(1, 1);
  s.Fs = Matrix::Zero(1, 1);
  s.Sigma1 = Matrix::Zero(1, 1);
  s.Sigma2 = Matrix::Zero(1, 1);
  CHECK(kron_reduce(s).A(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));

  s.Ds(0, 0) = 0.0;
  CHECK(error_code([&] { kron_reduce(s); }) == ErrorCode::SingularAlgebraicBlock);
  DescriptorModel near = random_descriptor(gen, 2, 2, 1, 1, 1);
  near.Ds << 1.0, 1.0, 1.0, 1.0 + 1e-12;
  CHECK(error_code([&] { kron_reduce(near); }) == ErrorCode::SingularAlgebraicBlock);
  DescriptorModel bad = s;
  bad.Bs = Matrix::Zero(2, 1);
  CHECK(error_code([&] { kron_reduce(bad); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("kron_reduce matches the index-1 DAE over 1 s") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 5; ++trial) {
    const DescriptorModel d = random_descriptor(gen, 4, 3, 2, 2, 1);
    const auto r = kron_reduce(d);
    const Matrix dinv = d.Ds.fullPivLu().inverse();
    auto u = [](double t) {
      Vector v(2);
      v << std::sin(3 * t), std::cos(t);
      return v;
    };
    // Full DAE: solve the algebraic block at each stage.
    auto full = [&](double t, const Vector& x) -> Vector {
      const Vector y = -dinv * (d.Cs * x + d.Ns * u(t));
      return d.As * x + d.Bs * y + d.Ms * u(t);
    };
    auto reduced = [&](double t, const Vector& x) -> Vector { return r.A * x + r.B * u(t); };
    Vector x0(4);
    x0 << 1, -0.5, 0.25, 2;
    const Vector xf = oracle::rk4(full, x0, 0, 1, 2000);
    const Vector xr = oracle::rk4(reduced, x0, 0, 1, 2000);
    CHECK((xf - xr).cwiseAbs().maxCoeff() < 1e-6);
    const Vector yf = -dinv * (d.Cs * xf + d.Ns * u(1.0));
    const Vector zf = d.Es * xf + d.Fs * yf;
    CHECK((zf - (r.C * xr + r.D * u(1.0))).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("kron_reduce commutes with state permutation") {
  std::mt19937_64 gen(4);
  const DescriptorModel d = random_descriptor(gen, 5, 2, 2, 3, 2);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const Matrix p = perm.toDenseMatrix().cast<double>();
  DescriptorModel dp = d;
  dp.As = p * d.As * p.transpose();
  dp.Bs = p * d.Bs;
  dp.Cs = d.Cs * p.transpose();
  dp.Ms = p * d.Ms;
  dp.Es = d.Es * p.transpose();
  dp.Sigma1 = p * d.Sigma1;
  const auto r = kron_reduce(d), rp = kron_reduce(dp);
  CHECK(max_abs(rp.A - p * r.A * p.transpose()) < 1e-13);
  CHECK(max_abs(rp.B - p * r.B) < 1e-13);
  CHECK(max_abs(rp.C - r.C * p.transpose()) < 1e-13);
  CHECK(max_abs(rp.Sigma - p * r.Sigma) < 1e-13);
  CHECK(max_abs(rp.D - r.D) < 1e-13);
  CHECK(max_abs(rp.E - r.E) < 1e-13);
}

TEST_CASE("SFR model") {
  const auto model = build_sfr_model();
  const Mode& m1 = model.mode(1);
  CHECK(model.n() == 5);
  CHECK(model.certified_indices() == std::vector<int>{0, 2, 3});
  CHECK(m1.A(0, 0) == doctest::Approx(-0.125).epsilon(1e-15));
  CHECK(is_hurwitz(model.certified_A(1)));
  CHECK(is_hurwitz(model.certified_A(2)));
  CHECK(model.schedule.size() == 3);
  CHECK(model.schedule[0].dwell == 5.0);
  CHECK(model.schedule[1].dwell == 3.75);
  CHECK(model.t_end() == doctest::Approx(10.0));

  SUBCASE("balanced injection is an equilibrium") {
    Vector u(1);
    u << 0.15;
    CHECK((m1.A * model.x0 + m1.B * u).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("literal droop coefficient, unstable") {
    SfrParams p;
    p.droop = DroopForm::Literal;
    const auto lit = build_sfr_model(p);
    CHECK(lit.mode(1).A(3, 0) == doctest::Approx(-1.0 / (0.1 * 2 * M_PI * 0.05)).epsilon(1e-14));
    CHECK_FALSE(is_hurwitz(lit.certified_A(1)));
    CHECK(lit.warnings.size() == 1);
  }
  SUBCASE("ramp through the constant coordinate") {
    const Mode& m2 = model.mode(2);
    Vector x5 = model.x0;
    x5(0) = 0.01;
    x5(2) = 0.02;
    for (double dt : {0.5, 1.25, 3.75}) {
      const Vector x = oracle::expm_taylor(m2.A * dt) * x5;
      CHECK(std::abs(x(1) - 0.04 * dt) < 1e-14);
      CHECK(x(4) == 1.0);
    }
  }
  SUBCASE("invalid parameters") {
    SfrParams p;
    p.H = -1;
    CHECK(error_code([&] { build_sfr_model(p); }) == ErrorCode::InvalidParameter);
  }
  SUBCASE("short horizon truncates the schedule") {
    SfrParams p;
    p.t_end = 5.0;
    const auto s = build_sfr_model(p);
    CHECK(s.schedule.size() == 1);
    CHECK(s.t_end() == 5.0);
  }
}

TEST_CASE("synthetic turbine fixture") {
  const auto model = build_wtg_fixture(7);
  CHECK(model.n() == 11);
  CHECK(model.p() == 2);
  CHECK(model.outputs.size() == 11);
  CHECK(model.inputs[1].weight == 100.0);
  CHECK(is_hurwitz(model.certified_A(1)));
  const auto again = build_wtg_fixture(7);
  CHECK(model_to_json_text(model) == model_to_json_text(again));
}

TEST_CASE("model JSON round trip and errors") {
  const auto model = build_wtg_fixture(3);
  const std::string text = model_to_json_text(model);
  const auto back = model_from_json_text(text);
  CHECK(model_to_json_text(back) == text);
  for (std::size_t i = 0; i < model.modes.size(); ++i) {
    CHECK(max_abs(back.modes[i].A - model.modes[i].A) == 0.0);
    CHECK(max_abs(back.modes[i].Sigma - model.modes[i].Sigma) == 0.0);
  }

  Json j = Json::parse(model_to_json_text(build_sfr_model()));
  SUBCASE("missing Sigma is deterministic with a warning") {
    j["modes"][0].erase("Sigma");
    const auto m = model_from_json_text(j.dump());
    CHECK(max_abs(m.modes[0].Sigma) == 0.0);
    CHECK(m.warnings.size() == 1);
  }
  SUBCASE("mismatched mode dimensions") {
    j["modes"][1]["A"].erase(4);
    CHECK(error_code([&] { model_from_json_text(j.dump()); }) == ErrorCode::InvariantViolation);
  }
  SUBCASE("schema errors carry a JSON pointer") {
    j["modes"][0]["A"][2][1] = "x";
    try {
      model_from_json_text(j.dump());
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SchemaError);
      CHECK(std::string(e.what()).find("/modes/0/A/2/1") == 0);
    }
  }
  SUBCASE("exogenous states may not carry noise") {
    j["modes"][0]["Sigma"][1][0] = 0.1;
    CHECK(error_code([&] { model_from_json_text(j.dump()); }) == ErrorCode::InvariantViolation);
  }
  SUBCASE("undeclared transition") {
    j["transitions"] = Json::array();
    CHECK(error_code([&] { model_from_json_text(j.dump()); }) == ErrorCode::InvariantViolation);
  }
  SUBCASE("descriptor round trip") {
    std::mt19937_64 gen(2);
    const auto d = random_descriptor(gen, 3, 2, 1, 1, 1);
    const auto d2 = descriptor_from_json_text(descriptor_to_json_text(d));
    CHECK(max_abs(d2.As - d.As) == 0.0);
    CHECK(max_abs(d2.Sigma2 - d.Sigma2) == 0.0);
  }
}

TEST_CASE("output_map") {
  const auto model = build_sfr_model();
  const auto aliased = output_map(model, Matrix::Identity(5, 5), Matrix::Zero(5, 1),
                                  {"y_dw", "y_Ps", "y_Pm", "y_Pv", "y_one"});
  const auto f = parse_formula("y_Pm < 0.3", aliased.symbols());
  CHECK(f->atom.a == Vector::Unit(5, 2));
  CHECK(f->atom.b == 0.3);
  CHECK(error_code([&] {
          output_map(model, Matrix::Identity(1, 5), Matrix::Zero(1, 1), {"Pm"});
        }) == ErrorCode::NameCollision);
  CHECK(error_code([&] {
          output_map(model, Matrix::Identity(1, 5), Matrix::Zero(1, 1), {"df"});
        }) == ErrorCode::NameCollision);
}
