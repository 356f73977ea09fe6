#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <random>

#include "mdls/coding_models.hpp"
#include "oracles.hpp"

using namespace mdls;
using Catch::Approx;

TEST_CASE("quantize rounds half away from zero", "[coding_models]") {
  const QuantizationStep d16{16.0};
  CHECK(quantize(0.0, d16) == 0.0);
  CHECK(quantize(17.3, d16) == 16.0);
  CHECK(quantize(-8.1, d16) == -16.0);
  CHECK(quantize(8.0, d16) == 16.0);
  CHECK(quantize(-8.0, d16) == -16.0);
  CHECK(quantize_index(-8.0, 16.0) == -1);
  CHECK_THROWS_AS(QuantizationStep(0.0), std::invalid_argument);
  CHECK_THROWS_AS(QuantizationStep(-1.0), std::invalid_argument);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1000, 1000);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    CHECK(std::abs(quantize(x, QuantizationStep{3.7}) - x) <= 3.7 / 2 + 1e-12);
  }
}

TEST_CASE("support codelength", "[coding_models]") {
  CHECK(support_codelength(256, 0) == Approx(std::log2(257.0)).epsilon(1e-12));
  CHECK(support_codelength(256, 0) == Approx(8.006).margin(5e-4));
  CHECK(support_codelength(4, 2) == Approx(std::log2(5.0) + std::log2(6.0)).epsilon(1e-12));
  CHECK(support_codelength(4, 2) == Approx(4.907).margin(5e-4));
  CHECK(support_codelength(1, 1) == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(support_codelength(4, 5), std::invalid_argument);
  CHECK_THROWS_AS(support_codelength(0, 0), std::invalid_argument);
}

TEST_CASE("support code satisfies Kraft exhaustively for p <= 12", "[coding_models][kraft]") {
  for (int p = 1; p <= 12; ++p) {
    double sum = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << p); ++mask) sum += std::exp2(-support_codelength(p, std::popcount(mask)));
    CHECK(sum <= 1.0 + 1e-12);
    CHECK(sum == Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("MOE codelength", "[coding_models]") {
  const MOEParams prm{3.0, 50.0};
  CHECK(moe_codelength(0.0, prm) == Approx(-std::log2(3.0) + std::log2(50.0)).epsilon(1e-12));
  CHECK(moe_codelength(0.0, prm) == Approx(4.059).margin(5e-4));
  CHECK_THROWS_AS(moe_codelength(-1.0, prm), std::invalid_argument);
  for (double v = 0.0; v < 1000.0; v += 7.5) CHECK(moe_codelength(v + 1.0, prm) > moe_codelength(v, prm));
}

TEST_CASE("MOE matches its Gamma mixture integral", "[coding_models][oracle]") {
  for (double kappa : {1.5, 3.0, 5.0})
    for (double beta : {1.0, 10.0, 50.0})
      for (double v : {0.0, 0.5, 3.0, 40.0, 700.0}) {
        INFO("kappa=" << kappa << " beta=" << beta << " v=" << v);
        CHECK(std::abs(moe_codelength(v, {kappa, beta}) - oracle::moe_mixture_bits(v, kappa, beta)) < 1e-6);
      }
}

TEST_CASE("MOE and exponential magnitude bins sum to one", "[coding_models][kraft]") {
  double moe = 0.0, expo = 0.0;
  for (int j = 0; j < 2000000; ++j) {
    moe += std::exp2(-moe_bin_codelength(j, 16.0, {3.0, 50.0}));
    expo += std::exp2(-exponential_bin_codelength(j, 16.0, 40.0));
  }
  CHECK(moe <= 1.0 + 1e-12);
  CHECK(moe == Approx(1.0).margin(1e-6));
  CHECK(expo == Approx(1.0).margin(1e-12));
}

TEST_CASE("LG density basic properties", "[coding_models][lg]") {
  const LGParams prm{4.0, 2.5};
  for (double e = 0.0; e < 300.0; e += 1.37) CHECK(lg_neg_log_density(e, prm) == Approx(lg_neg_log_density(-e, prm)));

  SECTION("Gaussian limit") {
    for (double e : {0.0, 0.7, 3.0, -5.0, 12.0}) {
      const double gauss = (0.5 * e * e / 4.0 + 0.5 * std::log(2 * M_PI * 4.0)) / std::log(2.0);
      const double lg = lg_neg_log_density(e, {4.0, 1e-4});
      CHECK(std::abs(lg - gauss) <= 1e-6 * std::abs(gauss));
    }
  }
  SECTION("Laplacian asymptote") {
    const double theta = 2.5;
    double prev = 0.0;
    for (double e : {1e2, 1e3, 1e4, 1e5}) {
      const double ratio = lg_neg_log_density(e, prm) / (e * std::log2(std::exp(1.0)) / theta);
      CHECK(std::abs(ratio - 1.0) < (e >= 1e3 ? 1e-2 : 1e-1));
      if (prev > 0) CHECK(std::abs(ratio - 1.0) < prev);
      prev = std::abs(ratio - 1.0);
    }
  }
  SECTION("overflow regime stays finite") {
    for (double e : {1e3, 1e5, 1e8}) {
      CHECK(std::isfinite(lg_neg_log_density(e, {100.0, 1e-3})));
      CHECK(std::isfinite(lg_neg_log_density(e, {1e-4, 50.0})));
    }
  }
  SECTION("matches direct long-double evaluation in its range") {
    for (double e : {0.0, 1.0, -3.0, 10.0, 40.0}) {
      const double direct = double(-std::log2(oracle::lg_density_direct(e, 4.0L, 2.5L)));
      CHECK(lg_neg_log_density(e, prm) == Approx(direct).epsilon(1e-12));
    }
  }
  SECTION("density integrates to one") {
    auto f = [&](long double x) { return (long double)std::exp(lg_log_density(double(x), prm)); };
    const long double mass = oracle::integrate_pieces(f, -200.0L, 200.0L, 400, 1e-12L);
    CHECK(std::abs(double(mass) - 1.0) < 1e-6);
  }
}

TEST_CASE("LG convexity and bounded influence", "[coding_models][lg][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-80.0, 80.0);
  std::uniform_real_distribution<double> s2(0.05, 50.0), th(0.05, 20.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const LGParams prm{s2(rng), th(rng)};
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const double mid = lg_neg_log_density(0.5 * (a + b), prm);
    CHECK(mid <= 0.5 * (lg_neg_log_density(a, prm) + lg_neg_log_density(b, prm)) + 1e-9);
  }
  for (double s : {0.1, 1.0, 25.0})
    for (double theta : {0.1, 1.0, 7.0}) {
      const LGParams prm{s, theta};
      const double bound = std::log2(std::exp(1.0)) / theta * (1.0 + 1e-6);
      for (double e = -500.0; e <= 500.0; e += 0.25) {
        const double d = lg_neg_log_density_derivative(e, prm);
        CHECK(std::abs(d) <= bound);
      }
    }
  // derivative against central differences
  const LGParams prm{2.0, 3.0};
  for (double e : {-20.0, -1.0, 0.3, 4.0, 50.0}) {
    const double h = 1e-5;
    const double fd = (lg_neg_log_density(e + h, prm) - lg_neg_log_density(e - h, prm)) / (2 * h);
    CHECK(lg_neg_log_density_derivative(e, prm) == Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("MOEG agrees with quadrature oracle", "[coding_models][moeg][oracle]") {
  const MOEGParams prm{25.0, 3.0, 1.0};
  const MoegTable table(prm);
  for (double e : {0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0}) {
    const double ref = oracle::moeg_bits(e, 25.0, 3.0, 1.0);
    INFO("e=" << e << " ref=" << ref);
    CHECK(std::abs(moeg_codelength(e, prm) - ref) < 1e-6);
    CHECK(std::abs(table(e) - ref) < 1e-6);
  }
}

TEST_CASE("MOEG symmetry and redescending influence", "[coding_models][moeg][property]") {
  const MOEGParams prm{25.0, 3.0, 1.0};
  const MoegTable table(prm);
  for (double e : {0.5, 3.0, 17.0, 250.0}) CHECK(table(e) == table(-e));
  CHECK(std::abs(moeg_codelength_derivative_exact(1e4, prm)) < std::abs(moeg_codelength_derivative_exact(10.0, prm)));
  const double d3 = std::abs(moeg_codelength_derivative_exact(1e3, prm));
  const double d4 = std::abs(moeg_codelength_derivative_exact(1e4, prm));
  const double d5 = std::abs(moeg_codelength_derivative_exact(1e5, prm));
  CHECK(d3 > d4);
  CHECK(d4 > d5);
  // derivative against finite differences of the exact codelength
  for (double e : {0.7, 12.0, 300.0}) {
    const double h = 1e-4 * std::max(1.0, e);
    const double fd = (moeg_codelength_exact(e + h, prm) - moeg_codelength_exact(e - h, prm)) / (2 * h);
    CHECK(moeg_codelength_derivative_exact(e, prm) == Approx(fd).epsilon(1e-5));
    CHECK(table.derivative(e) == Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("discretized codelength", "[coding_models][oracle]") {
  const LGParams prm{1.0, 1.0};
  auto logp = [&](double x) { return lg_log_density(x, prm); };
  SECTION("bins of the LG model sum to one") {
    double sum = 0.0;
    for (int k = -300; k <= 300; ++k) sum += std::exp2(-discretized_codelength(logp, k, QuantizationStep{1.0}, 1.0));
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  SECTION("fine quantization: approximation and exact agree") {
    const double delta = 1e-3;
    for (double x : {0.0, 0.5, 2.0, -4.0}) {
      const double xq = quantize(x, QuantizationStep{delta});
      const double approx = discretized_codelength(logp, xq, QuantizationStep{delta}, 1e9);  // forces approximation
      auto f = [&](long double t) { return (long double)std::exp(logp(double(t))); };
      const long double mass = oracle::adaptive_simpson(f, xq - delta / 2, xq + delta / 2, 1e-20L);
      CHECK(std::abs(approx - double(-std::log2(mass))) < 1e-4);
    }
  }
  SECTION("never negative") {
    const LGParams narrow{1e-4, 1e-3};
    auto lp = [&](double x) { return lg_log_density(x, narrow); };
    for (double x : {0.0, 1.0, 5.0}) {
      CHECK(discretized_codelength(lp, x, QuantizationStep{1.0}, 1e9) >= 0.0);
      CHECK(discretized_codelength(lp, x, QuantizationStep{1.0}, 1e-3) >= 0.0);
    }
  }
}

TEST_CASE("residual code tables", "[coding_models]") {
  const QuantizationStep one{1.0};
  auto lg = ResidualCodeTable::lg({1.0, 3.0}, one, 64);
  auto mg = ResidualCodeTable::moeg({1.0, 3.0, 1.0}, one, 64);
  double s_lg = 0.0, s_mg = 0.0;
  for (int k = -5000; k <= 5000; ++k) {
    s_lg += std::exp2(-lg->bits(k));
    s_mg += std::exp2(-mg->bits(k));
  }
  CHECK(s_lg == Approx(1.0).margin(2e-3));
  CHECK(s_mg == Approx(1.0).margin(2e-3));
  // continuity across the table edge
  CHECK(lg->bits(65) == Approx(lg->bits(64) + (lg->bits(64) - lg->bits(63))).epsilon(1e-3));
  CHECK(lg->bits_for(2.4) == lg->bits(2));
  CHECK(lg->bits_for(-2.6) == lg->bits(3));
}

TEST_CASE("KT estimator", "[coding_models][kt]") {
  CHECK(kt_probability(0, 1) == 0.5);
  CHECK(kt_probability(3, 4) == 0.875);
  CHECK_THROWS_AS(kt_probability(4, 4), std::invalid_argument);
}

TEST_CASE("KT universality over all binary strings of length 10", "[coding_models][kt][property]") {
  const int n = 10;
  for (std::uint32_t s = 0; s < (1u << n); ++s) {
    double bits = 0.0;
    int ones = 0;
    for (int j = 1; j <= n; ++j) {
      const bool bit = (s >> (j - 1)) & 1u;
      const double p1 = kt_probability(ones, j);
      bits -= std::log2(bit ? p1 : 1.0 - p1);
      ones += bit;
    }
    const double bound = n * oracle::binary_entropy(double(ones) / n) + 0.5 * std::log2(double(n)) + 1.0;
    CHECK(bits <= bound);
  }
}

TEST_CASE("plug-in estimators", "[coding_models]") {
  const QuantizationStep d16{16.0};
  const std::vector<double> v{16, 32, 48};
  CHECK(exponential_ml_theta(v, d16) == Approx(16.0));
  const std::vector<double> flat{16, -16, 16};
  CHECK(exponential_ml_theta(flat, d16) == Approx(0.16));
  const std::vector<double> one{32};
  CHECK(exponential_ml_theta(one, d16) == Approx(16.0));
  CHECK(std::isnan(exponential_ml_theta({}, d16)));

  CHECK(lg_theta_estimate(100.0 * 10, 10, 100.0) == 0.0);
  CHECK(lg_theta_estimate((9.0 + 4.0) * 7, 7, 9.0) == Approx(1.0));
  CHECK(lg_theta_estimate(5.0, 10, 9.0) == 0.0);
}

TEST_CASE("universal integer code", "[coding_models][kraft]") {
  CHECK(integer_universal_codelength(1) == Approx(std::log2(2.865064)).epsilon(1e-12));
  CHECK(integer_universal_codelength(1) == Approx(1.518).margin(1e-3));
  CHECK(integer_universal_codelength(2) == Approx(2.518).margin(1e-3));
  CHECK(integer_universal_codelength(16) == Approx(std::log2(2.865064) + 4 + 2 + 1).epsilon(1e-12));
  CHECK_THROWS_AS(integer_universal_codelength(0), std::invalid_argument);
  double sum = 0.0;
  for (std::int64_t k = 1; k <= 1000000; ++k) sum += std::exp2(-integer_universal_codelength(k));
  CHECK(sum <= 1.0);
}

TEST_CASE("discretized Laplacian bins", "[coding_models][kraft]") {
  for (double theta : {0.01, 0.3, 2.0, 50.0}) {
    double sum = 0.0;
    for (int k = -100000; k <= 100000; ++k) sum += std::exp2(-laplace_bin_codelength(k, 1.0, theta));
    CHECK(sum == Approx(1.0).margin(1e-9));
  }
}
