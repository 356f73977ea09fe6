#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mdls/learning.hpp"

using namespace mdls;
using Catch::Approx;

namespace {

constexpr double kSigma2 = 1.0 / 12.0;

Eigen::MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
  return X;
}

Eigen::MatrixXd unit_columns(Eigen::MatrixXd X) {
  for (Eigen::Index k = 0; k < X.cols(); ++k) X.col(k).normalize();
  return X;
}

std::vector<SparseCode> random_codes(int n, int p, int k, std::mt19937_64& rng) {
  std::vector<SparseCode> codes(n);
  std::uniform_int_distribution<int> atom(0, p - 1), mult(1, 8);
  for (auto& c : codes) {
    std::vector<int> picked;
    while (static_cast<int>(picked.size()) < k) {
      const int a = atom(rng);
      if (std::find(picked.begin(), picked.end(), a) == picked.end()) picked.push_back(a);
    }
    std::sort(picked.begin(), picked.end());
    for (int a : picked) {
      c.atoms.push_back(a);
      c.q.push_back((rng() % 2 ? 1 : -1) * mult(rng));
    }
  }
  return codes;
}

}  // namespace

TEST_CASE("LG loss table tracks the exact codelength", "[learning]") {
  for (double theta : {0.3, 2.0, 10.0}) {
    const LGLoss f(kSigma2, theta);
    const LGParams prm{kSigma2, theta};
    for (double e = -60.0; e <= 60.0; e += 0.37) {
      CHECK(f.value(e) == Approx(lg_neg_log_density(std::abs(e), prm)).epsilon(1e-6).margin(1e-6));
      const double h = 1e-5;
      CHECK(f.derivative(e) == Approx((f.value(e + h) - f.value(e - h)) / (2 * h)).epsilon(1e-5).margin(1e-5));
    }
    CHECK(f.derivative(0.0) == Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("dictionary objective gradient matches finite differences", "[learning]") {
  std::mt19937_64 rng(4);
  for (int w : {0, 3}) {
    const int m = 9, p = 5, n = 40;
    const Eigen::MatrixXd Y = gaussian(m, n, rng, 30.0);
    const auto codes = random_codes(n, p, 2, rng);
    const DictionaryObjective obj(Y, codes, p, kSigma2, 2.5, w, 0.2);
    const Eigen::MatrixXd U = gaussian(m, p, rng, 0.3);
    Eigen::MatrixXd grad;
    obj.smooth(U, &grad);
    double err = 0.0, scale = 0.0;
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < p; ++k) {
        const double h = 1e-6;
        Eigen::MatrixXd up = U, dn = U;
        up(i, k) += h;
        dn(i, k) -= h;
        const double fd = (obj.smooth(up) - obj.smooth(dn)) / (2 * h);
        err = std::max(err, std::abs(fd - grad(i, k)));
        scale = std::max(scale, std::abs(grad(i, k)));
      }
    INFO("patch width " << w);
    CHECK(err / scale < 1e-5);
  }
}

TEST_CASE("dictionary update is monotone and keeps atoms in the unit ball", "[learning]") {
  std::mt19937_64 rng(10);
  const int w = 4, m = 16, p = 12, n = 300;
  Dictionary D;
  D.patch_width = w;
  D.atoms = unit_columns(gaussian(m, p, rng));
  const auto codes = random_codes(n, p, 3, rng);
  const Eigen::MatrixXd truth = unit_columns(gaussian(m, p, rng));
  const Eigen::MatrixXd Y = (truth * sparse_coefficients(codes, p)).array().round().matrix() + gaussian(m, n, rng, 2.0);
  UpdateOptions opt;
  opt.max_iterations = 60;
  const UpdateResult r = dictionary_update(D, codes, Y, 2.0, kSigma2, 0.1, opt);
  REQUIRE(r.objective.size() >= 2);
  for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1]);
  CHECK(r.objective.back() < r.objective.front());
  for (int k = 0; k < p; ++k) CHECK(r.dict.atoms.col(k).norm() <= 1.0 + 1e-9);
}

TEST_CASE("dictionary update recovers Y A^-1 without the sparsity penalty", "[learning][oracle]") {
  // identity predictor, invertible diagonal coefficients, negligible l1 weight
  std::mt19937_64 rng(12);
  const int m = 4, p = 4;
  const Eigen::MatrixXd Dstar = unit_columns(gaussian(m, p, rng)) * 0.8;
  std::vector<SparseCode> codes(p);
  for (int j = 0; j < p; ++j) {
    codes[j].atoms = {j};
    codes[j].q = {j % 2 ? -(j + 2) : (j + 2)};
  }
  const Eigen::MatrixXd A = sparse_coefficients(codes, p);
  const Eigen::MatrixXd Y = Dstar * A;
  const Eigen::MatrixXd oracle = Y * A.inverse();
  Dictionary D0;
  D0.atoms = unit_columns(gaussian(m, p, rng)) * 0.5;
  UpdateOptions opt;
  opt.max_iterations = 3000;
  opt.tolerance = 0.0;
  const UpdateResult r = dictionary_update(D0, codes, Y, 1.0, kSigma2, 1e12, opt);
  CHECK((r.dict.atoms - oracle).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("outer loop stopping", "[learning]") {
  std::mt19937_64 rng(3);
  const int m = 16, n = 200;
  const Eigen::VectorXd d = unit_columns(gaussian(m, 1, rng));
  Eigen::MatrixXd Y(m, n);
  for (int j = 0; j < n; ++j) Y.col(j) = (96.0 * d).array().round().matrix();
  Dictionary D;
  D.patch_width = 4;
  D.atoms = principal_direction(Y);
  LearnConfig cfg;
  cfg.sigma2 = kSigma2;

  SECTION("infinite tolerance stops after one outer iteration") {
    cfg.epsilon_converge = std::numeric_limits<double>::infinity();
    CHECK(learn_fixed_size(Y, D, cfg).outer_iterations == 1);
  }
  SECTION("repeated signal with one atom converges at once") {
    const LearnResult r = learn_fixed_size(Y, D, cfg);
    CHECK(r.outer_iterations <= 2);
    CHECK(r.history.size() == static_cast<std::size_t>(r.outer_iterations) + 1);
  }
}

TEST_CASE("forward selection stops at one atom on rank-one data", "[learning]") {
  std::mt19937_64 rng(8);
  const int m = 16, n = 300;
  const Eigen::VectorXd d = unit_columns(gaussian(m, 1, rng));
  std::uniform_int_distribution<int> amp(-12, 12);
  Eigen::MatrixXd Y(m, n);
  for (int j = 0; j < n; ++j) Y.col(j) = (16.0 * amp(rng) * d).array().round().matrix();
  LearnConfig cfg;
  cfg.sigma2 = kSigma2;
  const SizeSelectionResult r = learn_forward(Y, 4, cfg);
  CHECK(r.best.dict.p() == 1);
  CHECK(std::abs(r.best.dict.atoms.col(0).dot(d)) > 0.99);
  CHECK(r.path.front().first == 0);
}

TEST_CASE("backward selection prunes a duplicated atom", "[learning]") {
  std::mt19937_64 rng(9);
  const int m = 16, n = 300;
  const Eigen::MatrixXd basis = unit_columns(gaussian(m, 2, rng));
  std::uniform_int_distribution<int> amp(-10, 10);
  Eigen::MatrixXd Y(m, n);
  for (int j = 0; j < n; ++j) Y.col(j) = (16.0 * (amp(rng) * basis.col(0) + amp(rng) * basis.col(1))).array().round().matrix();
  Dictionary D;
  D.patch_width = 4;
  D.atoms.resize(m, 3);
  D.atoms << basis.col(0), basis.col(0), basis.col(1);
  LearnConfig cfg;
  cfg.sigma2 = kSigma2;
  cfg.max_outer_iters = 5;
  const SizeSelectionResult r = learn_backward(Y, D, cfg);
  CHECK(r.best.dict.p() <= 2);
  for (std::size_t i = 1; i < r.path.size(); ++i) CHECK(r.path[i].first < r.path[i - 1].first);
}

TEST_CASE("forward selection finds the generating dictionary size", "[learning]") {
  const int m = 16, n = 400;
  int ok = 0, trials = 0;
  for (int k0 = 1; k0 <= 5; ++k0)
    for (int seed = 0; seed < 2; ++seed) {
      std::mt19937_64 rng(1000 * k0 + seed);
      const Eigen::MatrixXd truth = unit_columns(gaussian(m, k0, rng));
      const auto codes = random_codes(n, k0, 1, rng);
      Eigen::MatrixXd Y = truth * sparse_coefficients(codes, k0) * 2.0;
      Y = Y.array().round().matrix();
      LearnConfig cfg;
      cfg.sigma2 = kSigma2;
      const SizeSelectionResult r = learn_forward(Y, 4, cfg);
      ++trials;
      if (std::abs(r.best.dict.p() - k0) <= 1) ++ok;
      UNSCOPED_INFO("k0 " << k0 << " seed " << seed << " selected p " << r.best.dict.p());
    }
  CHECK(ok >= 0.8 * trials);
}
