#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mdls/sparse_coding.hpp"

using namespace mdls;
using Catch::Approx;

namespace {

Dictionary random_dictionary(int m, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Dictionary d;
  d.atoms.resize(m, p);
  for (Eigen::Index i = 0; i < d.atoms.size(); ++i) d.atoms.data()[i] = g(rng);
  for (int k = 0; k < p; ++k) d.atoms.col(k).normalize();
  d.delta_a = 16.0;
  d.delta_e = 1.0;
  return d;
}

Eigen::VectorXd sparse_sample(const Dictionary& d, int k0, std::mt19937_64& rng, double noise) {
  std::uniform_int_distribution<int> atom(0, d.p() - 1);
  std::uniform_real_distribution<double> amp(30.0, 150.0);
  std::normal_distribution<double> g(0.0, noise);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(d.m());
  for (int i = 0; i < k0; ++i) y += (rng() % 2 ? 1.0 : -1.0) * amp(rng) * d.atoms.col(atom(rng));
  for (int i = 0; i < d.m(); ++i) y[i] = std::round(y[i] + g(rng));
  return y;
}

constexpr double kSigma2 = 1.0 / 12.0;

}  // namespace

TEST_CASE("sparse code parts round trip", "[sparse_coding]") {
  SparseCode c;
  c.delta_a = 16.0;
  c.atoms = {1, 4, 7};
  c.q = {3, -1, -12};
  const int p = 10;
  const auto z = c.support(p);
  const auto s = c.signs(p);
  const auto v = c.magnitudes(p);
  CHECK(v[1] == 32.0);
  CHECK(v[4] == 0.0);
  const SparseCode r = SparseCode::from_parts(z, s, v, 16.0);
  CHECK(r.atoms == c.atoms);
  CHECK(r.q == c.q);
  CHECK(r.dense(p) == c.dense(p));
  CHECK(c.dense(p)[7] == -192.0);
}

TEST_CASE("COMPA accepted codelengths strictly decrease", "[sparse_coding][compa]") {
  const Dictionary d = random_dictionary(16, 32, 3);
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  const SampleModel model = universal_model(d.p(), kSigma2, d.delta_a, d.delta_e);
  std::mt19937_64 rng(17);
  CompaOptions opt;
  opt.record_trace = true;
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd y = sparse_sample(d, 1 + t % 4, rng, 2.0);
    const CompaResult r = compa_encode(y, d, gram, model, opt);
    REQUIRE(!r.trace.empty());
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] < r.trace[i - 1]);
    CHECK(r.report.total == Approx(r.trace.back()).epsilon(1e-9));
    // never worse than sending the sample as pure residual
    const SparseCode empty;
    CHECK(r.report.total <= sample_codelength(y, empty, d, model).report.total + 1e-9);
    // reported codelength agrees with an independent evaluation of the code
    CHECK(sample_codelength(y, r.code, d, model).report.total == Approx(r.report.total).epsilon(1e-9));
  }
}

TEST_CASE("COMPA is near the exhaustive optimum on tiny problems", "[sparse_coding][compa]") {
  const int m = 8, p = 4, qmax = 10;
  std::mt19937_64 rng(2024);
  int ok = 0, trials = 40;
  for (int t = 0; t < trials; ++t) {
    const Dictionary d = random_dictionary(m, p, 100 + t);
    const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
    const SampleModel model = universal_model(p, kSigma2, d.delta_a, d.delta_e);
    const Eigen::VectorXd y = sparse_sample(d, 1 + t % 2, rng, 1.0);
    double best = sample_codelength(y, SparseCode{}, d, model).report.total;
    for (int a = 0; a < p; ++a)
      for (int qa = -qmax; qa <= qmax; ++qa) {
        if (qa == 0) continue;
        SparseCode c;
        c.atoms = {a};
        c.q = {qa};
        best = std::min(best, sample_codelength(y, c, d, model).report.total);
        for (int b = a + 1; b < p; ++b)
          for (int qb = -qmax; qb <= qmax; ++qb) {
            if (qb == 0) continue;
            c.atoms = {a, b};
            c.q = {qa, qb};
            best = std::min(best, sample_codelength(y, c, d, model).report.total);
          }
      }
    const double got = compa_encode(y, d, gram, model).report.total;
    if (got <= best + 0.5) ++ok;
  }
  INFO("within 0.5 bits on " << ok << " of " << trials);
  CHECK(ok >= 0.9 * trials);
}

TEST_CASE("code plus quantized residual reconstructs the sample", "[sparse_coding][compa]") {
  const Dictionary d = random_dictionary(16, 24, 9);
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  const SampleModel model = universal_model(d.p(), kSigma2, d.delta_a, d.delta_e);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    const Eigen::VectorXd y = sparse_sample(d, 3, rng, 3.0);
    const CompaResult r = compa_encode(y, d, gram, model);
    const Eigen::VectorXd rec = d.atoms * r.code.dense(d.p()) + r.residual;
    CHECK((rec - y).cwiseAbs().maxCoeff() <= 0.5 * d.delta_e + 1e-9);
  }
}

TEST_CASE("zero sample gets the empty code", "[sparse_coding][compa]") {
  const Dictionary d = random_dictionary(64, 256, 1);
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  const SampleModel model = universal_model(d.p(), kSigma2, d.delta_a, d.delta_e);
  const CompaResult r = compa_encode(Eigen::VectorXd::Zero(64), d, gram, model);
  CHECK(r.code.nnz() == 0);
  CHECK(r.report.l_support == Approx(8.006).margin(5e-4));
  CHECK(r.report.l_values == 0.0);
  CHECK(r.report.l_signs == 0.0);
  CHECK(r.residual.isZero());
}

TEST_CASE("distortion stop meets its budget", "[sparse_coding][compa]") {
  const Dictionary d = random_dictionary(16, 32, 21);
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  const SampleModel model = universal_model(d.p(), kSigma2, d.delta_a, d.delta_e);
  std::mt19937_64 rng(8);
  CompaOptions opt;
  opt.stop = CompaOptions::Stop::distortion;
  opt.distortion_budget = 16.0 * 100.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd y = sparse_sample(d, 3, rng, 1.0);
    const CompaResult r = compa_encode(y, d, gram, model, opt);
    if (r.budget_met) CHECK(r.residual.squaredNorm() <= opt.distortion_budget + 1e-9);
    else CHECK(r.residual.squaredNorm() > opt.distortion_budget);
  }
}

TEST_CASE("Markov states read neighbors at the grid offset", "[sparse_coding][plugin]") {
  // 3 x 3 grid of samples; atom 0 is used at (0,0) and (0,1), atom 1 at (1,0)
  std::vector<SparseCode> codes(9);
  codes[0].atoms = {0};
  codes[0].q = {1};
  codes[1].atoms = {0};
  codes[1].q = {1};
  codes[3].atoms = {1};
  codes[3].q = {-2};
  const SampleGrid g{3, 1};
  // sample (1,1): north (0,1) has 0, west (1,0) has 1, northwest (0,0) has 0
  CHECK(markov_state(codes, 4, g, 0) == 4 + 1);
  CHECK(markov_state(codes, 4, g, 1) == 2);
  CHECK(markov_states(codes, 4, g, 2) == std::vector<MarkovState>{5, 2});
  // first row and column see zeros outside the grid
  CHECK(markov_state(codes, 1, g, 0) == 2);
  CHECK(markov_state(codes, 3, g, 0) == 4);
  // offset 2 on a 3-wide grid: sample (2,2) looks at (0,2), (2,0), (0,0)
  CHECK(markov_state(codes, 8, SampleGrid{3, 2}, 0) == 1);
  CHECK(markov_states(codes, 8, SampleGrid{3, 2}, 2) == std::vector<MarkovState>{1, 0});
  // no grid means a single context
  CHECK(markov_state(codes, 4, SampleGrid{}, 0) == 0);
}

TEST_CASE("plug-in statistics", "[sparse_coding][plugin]") {
  PlugInState st(3, kSigma2, 16.0, 1.0);
  // unseen atom after j-1 samples without ones: P = 0.5 / j
  for (int j = 1; j <= 5; ++j) {
    CHECK(st.rho(0, 0) == Approx(0.5 / j).epsilon(1e-12));
    plugin_update(st, SparseCode{}, Eigen::VectorXd::Zero(4), {});
  }

  PlugInState a(3, kSigma2, 16.0, 1.0), b(3, kSigma2, 16.0, 1.0);
  SparseCode c;
  c.atoms = {0, 2};
  c.q = {3, -1};
  const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  const std::vector<MarkovState> s{1, 4, 7};
  plugin_update(a, c, r, s);
  plugin_update(b, c, r, s);
  plugin_update(b, c, r, s);
  for (int k = 0; k < 3; ++k)
    for (int q = 0; q < 8; ++q) {
      CHECK(b.ones[k][q] == 2 * a.ones[k][q]);
      CHECK(b.totals[k][q] == 2 * a.totals[k][q]);
    }
  CHECK(b.residual_sq_sum == 2 * a.residual_sq_sum);
  CHECK(b.value_sum[0] == 2 * a.value_sum[0]);
  CHECK(a.value_sum[0] == 32.0);
  CHECK(a.theta_a(0) == 32.0);
  CHECK(a.theta_a(2) == Approx(0.16));  // floored magnitude scale
  CHECK(std::isnan(a.theta_a(1)));
  CHECK(a.ones[0][1] == 1);
  CHECK(a.totals[1][4] == 1);

  const nlohmann::json j = b;
  const PlugInState back = j.get<PlugInState>();
  CHECK(back.ones == b.ones);
  CHECK(back.totals == b.totals);
  CHECK(back.value_sum == b.value_sum);
  CHECK(back.residual_sq_sum == b.residual_sq_sum);
  nlohmann::json broken = j;
  broken["p"] = 4;
  CHECK_THROWS(broken.get<PlugInState>());
}

TEST_CASE("encoding modes", "[sparse_coding]") {
  const Dictionary d = random_dictionary(16, 20, 31);
  std::mt19937_64 rng(77);
  Eigen::MatrixXd Y(16, 60);
  for (int j = 0; j < 60; ++j) Y.col(j) = sparse_sample(d, 2, rng, 1.0);

  EncodeOptions opt;
  opt.sigma2 = kSigma2;
  opt.keep_residuals = true;
  const EncodeResult seq = encode_all(Y, d, opt);
  REQUIRE(seq.codes.size() == 60);
  CHECK(seq.state.samples_seen == 60);
  double sum = 0.0;
  for (double b : seq.sample_bits) sum += b;
  CHECK(seq.report.total == Approx(sum).epsilon(1e-12));
  CHECK((residual_matrix(Y, d, seq.codes) - seq.residuals).cwiseAbs().maxCoeff() <= 0.5 + 1e-9);

  // first sample is coded with the universal model
  const SampleModel uni = universal_model(d.p(), kSigma2, d.delta_a, d.delta_e);
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  CHECK(seq.sample_bits[0] == Approx(compa_encode(Y.col(0), d, gram, uni).report.total).epsilon(1e-12));

  // frozen mode is independent of the thread count
  EncodeOptions f = opt;
  f.mode = CodingMode::frozen;
  const EncodeResult f1 = encode_all(Y, d, f, &seq.state);
  f.threads = 3;
  const EncodeResult f3 = encode_all(Y, d, f, &seq.state);
  CHECK(f1.sample_bits == f3.sample_bits);
  CHECK_THROWS_AS(encode_all(Y, d, f), std::invalid_argument);

  const Eigen::MatrixXd A = coefficient_matrix(seq.codes, d.p());
  for (int j = 0; j < 60; ++j) CHECK((A.col(j) - seq.codes[j].dense(d.p())).isZero());
}
