#include "switchsynth/certificates.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace switchsynth;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix random_stable(std::mt19937_64& gen, int n, double margin) {
  std::normal_distribution<double> nd;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(gen);
  const double shift = spectral_abscissa(a) + margin;
  return a - shift * Matrix::Identity(n, n);
}

Matrix random_spd(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> nd;
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = nd(gen);
  return g * g.transpose() + 0.1 * Matrix::Identity(n, n);
}

ModeCertificate cert_with(int id, Matrix m, double mu, double alpha) {
  ModeCertificate c;
  c.mode_id = id;
  c.M = std::move(m);
  c.mu = mu;
  c.alpha = alpha;
  return c;
}

}  // namespace

TEST_CASE("solve_shifted_lyapunov examples") {
  CHECK(solve_shifted_lyapunov(mat({{-1}}), mat({{2}}), 0.0)(0, 0) == doctest::Approx(1.0));
  const Matrix m2 = solve_shifted_lyapunov(-Matrix::Identity(2, 2), Matrix::Identity(2, 2), 0.0);
  CHECK(max_abs(m2 - 0.5 * Matrix::Identity(2, 2)) < 1e-14);

  const Matrix a = mat({{0, 1}, {-2, -3}});
  const Matrix q = Matrix::Identity(2, 2);
  const Matrix m = solve_shifted_lyapunov(a, q, 0.1);
  const Matrix ref = oracle::lyapunov_symmetric(a, q, 0.1);
  CHECK(max_abs(m - ref) < 1e-12);
  CHECK(max_abs(a.transpose() * m + m * a + 0.1 * m + q) < 1e-12);
  CHECK(verify_lmi(a, m, 0.1) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(lambda_min_symmetric(m) > 0.0);
  CHECK(max_abs(m - m.transpose()) == 0.0);
}

TEST_CASE("solve_shifted_lyapunov errors") {
  CHECK_THROWS_WITH_AS(solve_shifted_lyapunov(mat({{0.1}}), mat({{1}}), 0.0), doctest::Contains("Hurwitz"),
                       Error);
  try {
    solve_shifted_lyapunov(mat({{-0.04}}), mat({{1}}), 0.1);
    FAIL("expected NotHurwitz");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotHurwitz);
  }
  try {
    solve_shifted_lyapunov(-Matrix::Identity(2, 2), mat({{1, 0}, {0, -1}}), 0.0);
    FAIL("expected InvalidArgument");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
  try {
    // Two eigenvalues summing to ~0 make the Lyapunov operator nearly singular.
    solve_shifted_lyapunov(mat({{-1e-14, 1}, {0, -1e-14}}), Matrix::Identity(2, 2), 0.0);
    FAIL("expected IllConditioned");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IllConditioned);
  }
}

TEST_CASE("verify_lmi and noise_gain examples") {
  CHECK(verify_lmi(mat({{-1}}), mat({{1}}), 0.0) == doctest::Approx(-2.0));
  CHECK(verify_lmi(mat({{-1}}), mat({{1}}), 3.0) == doctest::Approx(1.0));
  Matrix e3 = Matrix::Zero(3, 1);
  e3(2, 0) = 1.0;
  CHECK(noise_gain(Matrix::Identity(3, 3), e3) == 1.0);
  CHECK(noise_gain(Matrix::Identity(3, 3), Matrix::Zero(3, 2)) == 0.0);
  std::mt19937_64 gen(3);
  const Matrix m = random_spd(gen, 3);
  const double kw = 0.37;
  CHECK(noise_gain(m, kw * e3) == doctest::Approx(kw * kw * m(2, 2)).epsilon(1e-14));
}

TEST_CASE("max_predicate_gain examples and oracle") {
  Vector a(3);
  a << 0.6, 0.0, 0.8;
  CHECK(max_predicate_gain(Matrix::Identity(3, 3), a) == doctest::Approx(1.0));
  Vector e1 = Vector::Unit(2, 0);
  CHECK(max_predicate_gain(mat({{4, 0}, {0, 1}}), e1) == doctest::Approx(2.0));
  Vector d(2);
  d << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const Matrix m = mat({{2, 1}, {1, 2}});
  const double z = max_predicate_gain(m, d);
  CHECK(z == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  CHECK(oracle::psd_gain_sweep(m, d) == doctest::Approx(z).epsilon(1e-6));
  CHECK_THROWS_AS(max_predicate_gain(m, Vector::Ones(2)), Error);
}

TEST_CASE("max_predicate_gain scales with sqrt(c)") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    const Matrix m = random_spd(gen, 4);
    Vector a(4);
    for (int i = 0; i < 4; ++i) a(i) = nd(gen);
    a.normalize();
    const double c = std::exp(nd(gen));
    CHECK(max_predicate_gain(c * m, a) ==
          doctest::Approx(std::sqrt(c) * max_predicate_gain(m, a)).epsilon(1e-10));
  }
}

TEST_CASE("lmi residual equals -lambda_min(Q) and the autobisimulation derivative is negative") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 10; ++t) {
    const int n = 2 + t % 5;
    const Matrix a = random_stable(gen, n, 0.3);
    const Matrix q = random_spd(gen, n);
    const double mu = 0.2;
    const Matrix m = solve_shifted_lyapunov(a, q, mu);
    CHECK(std::abs(verify_lmi(a, m, mu) + oracle::lambda_min(q)) <= 1e-8 * q.norm());
    const Matrix lmi = a.transpose() * m + m * a + mu * m;
    for (int s = 0; s < 100; ++s) {
      Vector x(n), y(n);
      for (int i = 0; i < n; ++i) x(i) = nd(gen), y(i) = nd(gen);
      const double time = std::abs(nd(gen)) * 3;
      const Vector e = x - y;
      CHECK(e.dot(lmi * e) * std::exp(mu * time) <= 0.0);
    }
  }
}

TEST_CASE("shape_certificate examples") {
  const Matrix a = -Matrix::Identity(2, 2);
  const Matrix sigma = Matrix::Identity(2, 2);
  const ModeCertificate chosen =
      shape_certificate_from_candidates(0, a, sigma, 0.0, 1, {Vector::Ones(2), Vector{{1.0, 10.0}}});
  // M_I = 0.5·I and M_Q = diag(0.5, 5): equal scale-free objective, tie goes to Q = I.
  CHECK(max_abs(chosen.M - 0.5 * Matrix::Identity(2, 2)) < 1e-14);
  CHECK(chosen.M(1, 1) < 5.0);

  const Matrix b = mat({{0, 1}, {-2, -3}});
  ShapeOptions one;
  one.target_index = 1;
  one.budget = 1;
  const ModeCertificate base = shape_certificate(0, b, sigma, 0.1, one);
  const Matrix m_i = solve_shifted_lyapunov(b, Matrix::Identity(2, 2), 0.1);
  CHECK(max_abs(base.M - m_i) == 0.0);

  ShapeOptions search = one;
  search.budget = 40;
  search.seed = 17;
  const ModeCertificate s = shape_certificate(0, b, sigma, 0.1, search);
  CHECK(s.M(1, 1) <= m_i(1, 1) * (1 + 1e-12));
  CHECK(s.lmi_residual <= tol::kLmiRelative * s.M.norm());
  CHECK(s.alpha == doctest::Approx(noise_gain(s.M, sigma)).epsilon(1e-12));
  // The predicate gain along the target is held at the baseline value.
  CHECK(predicate_gain(s.M, Vector::Unit(2, 1)) ==
        doctest::Approx(predicate_gain(m_i, Vector::Unit(2, 1))).epsilon(1e-10));
}

TEST_CASE("shape_certificate parallel equals serial") {
  std::mt19937_64 gen(23);
  const Matrix a = random_stable(gen, 6, 0.5);
  const Matrix sigma = Matrix::Identity(6, 2);
  ShapeOptions o;
  o.target_index = 2;
  o.budget = 60;
  o.seed = 4;
  const auto p = shape_certificate(1, a, sigma, 0.1, o);
  const auto s = shape_certificate_serial(1, a, sigma, 0.1, o);
  CHECK(max_abs(p.M - s.M) == 0.0);
  CHECK(p.alpha == s.alpha);
  o.target_index = 6;
  CHECK_THROWS_AS(shape_certificate(1, a, sigma, 0.1, o), Error);
}

TEST_CASE("ellipsoid_contained examples") {
  const Vector c = Vector::Zero(2);
  const Matrix i2 = Matrix::Identity(2, 2);
  CHECK(ellipsoid_contained({c, i2, 1.0}, {c, 2 * i2, 2.0}));
  CHECK_FALSE(ellipsoid_contained({c, i2, 1.0}, {c, 2 * i2, 1.9}));
  const Matrix in = mat({{1, 0}, {0, 4}});
  CHECK(ellipsoid_contained({c, in, 1.0}, {c, 2 * i2, 2.0}));
  CHECK(oracle::sampled_containment_sup(in, 1.0, 2 * i2, 10000, 1) <= 2.0 + 1e-12);
  Vector off = c;
  off(0) = 1e-3;
  CHECK_THROWS_AS(ellipsoid_contained({off, i2, 1.0}, {c, i2, 1.0}), Error);
}

TEST_CASE("ellipsoid_contained agrees with a boundary sampler") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> ud(0.5, 1.5);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 2;
    const Matrix m_in = random_spd(gen, n), m_out = random_spd(gen, n);
    const double sup = oracle::sampled_containment_sup(m_in, 1.0, m_out, 10000, t);
    const double level = sup * ud(gen);
    if (std::abs(level / sup - 1.0) < 0.02) continue;  // sampler resolution
    const Vector c = Vector::Zero(n);
    CHECK(ellipsoid_contained({c, m_in, 1.0}, {c, m_out, level}) == (sup <= level));
    ++checked;
  }
  CHECK(checked > 80);
}

TEST_CASE("tube_parameters") {
  const Matrix m = mat({{2, 0.3}, {0.3, 1}});
  const double alpha = 0.02;
  SUBCASE("gamma hat and initial set sizing") {
    const Schedule sched{{0, 5.0}};
    const auto tube = tube_parameters({cert_with(0, m, 0.1, alpha)}, sched, 0.05, 1.0, {});
    CHECK(tube.gamma_hat == doctest::Approx(100 * alpha).epsilon(1e-15));
    const auto tube4 =
        tube_parameters({cert_with(0, m, 0.1, alpha)}, sched, 0.05, 4 * tube.gamma_hat, {});
    CHECK(tube4.r[0] == 4 * tube.gamma_hat);
    CHECK(std::abs(alpha * 5.0 / tube.gamma_hat - 0.05) < 1e-12);
  }
  SUBCASE("identical modes with mu = 0 keep r") {
    const Schedule sched{{0, 2.0}, {1, 3.0}};
    const auto tube = tube_parameters({cert_with(0, m, 0.0, alpha), cert_with(1, m, 0.0, alpha)},
                                      sched, 0.1, 3.0, {Vector::Unit(2, 0)});
    CHECK(tube.r[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(tube.delta_hat.minCoeff() > 0.0);
    const double z = max_predicate_gain(m, Vector::Unit(2, 0));
    CHECK(tube.delta_hat(1, 0) ==
          doctest::Approx((std::sqrt(3.0) + std::sqrt(tube.gamma_hat)) / z).epsilon(1e-12));
  }
  SUBCASE("decay shrinks the propagated level, proof exponent is smaller still") {
    const Schedule sched{{0, 2.0}, {0, 3.0}};
    const auto tube = tube_parameters({cert_with(0, m, 0.2, alpha)}, sched, 0.1, 3.0, {});
    CHECK(tube.r[1] == doctest::Approx(3.0 * std::exp(-0.2)).epsilon(1e-12));
    CHECK(tube.r_proof[1] == doctest::Approx(3.0 * std::exp(-0.4)).epsilon(1e-12));
  }
  SUBCASE("epsilon round trip on random inputs") {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> ud(0.001, 0.999);
    for (int t = 0; t < 200; ++t) {
      const double eps = ud(gen);
      const Schedule sched{{0, 1.0 + 9 * ud(gen)}};
      const double a0 = ud(gen);
      const auto tube = tube_parameters({cert_with(0, m, 0.1, a0)}, sched, eps, 1.0, {});
      CHECK(std::abs(a0 * tube.t_end / tube.gamma_hat - eps) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(tube_parameters({cert_with(0, m, 0.1, alpha)}, {{0, 1.0}}, 1.5, 1.0, {}), Error);
  try {
    tube_parameters({cert_with(0, m, 0.1, alpha)}, {{0, 1.0}}, 0.0, 1.0, {});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidEpsilon);
  }
}

TEST_CASE("probability bounds") {
  const Matrix m = Matrix::Identity(1, 1);
  const double g = 2.0;
  CHECK(probability_bound({cert_with(0, m, 0.1, 0.01 * g)}, {{0, 5.0}}, g) == 1.0 - 0.05);
  CHECK(probability_bound({cert_with(0, m, 0.1, 0.0)}, {{0, 5.0}}, g) == 1.0);
  const std::vector<ModeCertificate> three{cert_with(0, m, 0.1, 0.01 * g), cert_with(1, m, 0.1, 0.02 * g),
                                           cert_with(2, m, 0.1, 0.03 * g)};
  const Schedule sched{{0, 1.0}, {1, 1.0}, {2, 1.0}};
  CHECK(probability_bound(three, sched, g) == doctest::Approx(0.94).epsilon(1e-14));
  CHECK(product_bound(three, sched, g) == doctest::Approx(0.99 * 0.98 * 0.97).epsilon(1e-14));
  CHECK(product_bound(three, sched, g) >= probability_bound(three, sched, g));

  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<ModeCertificate> certs{cert_with(0, m, 0.1, ud(gen)), cert_with(1, m, 0.1, ud(gen))};
    Schedule s{{0, ud(gen) * 3}, {1, ud(gen) * 3}};
    const double gh = 1.0 + 10 * ud(gen);
    const double p = probability_bound(certs, s, gh);
    auto more = certs;
    more[0].alpha += ud(gen);
    CHECK(probability_bound(more, s, gh) <= p);
    CHECK(probability_bound(certs, s, gh * 1.5) >= p);
    auto longer = s;
    longer[1].dwell += ud(gen);
    CHECK(probability_bound(certs, longer, gh) <= p);
  }
}

TEST_CASE("select_mu halves until Hurwitz") {
  int h = -1;
  CHECK(select_mu(mat({{-0.03}}), 0.1, &h) == doctest::Approx(0.05));
  CHECK(h == 1);
  CHECK(select_mu(mat({{-1}}), 0.1, &h) == 0.1);
  CHECK(h == 0);
  CHECK_THROWS_AS(select_mu(mat({{0.0}}), 0.1), Error);
}
