#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>

#include "mdls/dictionary.hpp"

using namespace mdls;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
  return X;
}

}  // namespace

TEST_CASE("predictor round trip and adjointness", "[dictionary]") {
  for (int w : {1, 3, 8}) {
    const int m = w * w;
    const Eigen::MatrixXd X = random_matrix(m, 5, 11 + w), G = random_matrix(m, 5, 97 + w);
    const Eigen::MatrixXd B = apply_predictor(X, w);
    CHECK((apply_predictor_inverse(B, w) - X).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((apply_predictor(apply_predictor_inverse(G, w), w) - G).cwiseAbs().maxCoeff() <= 1e-10);
    // <W x, g> == <x, W^T g>
    const double lhs = (B.array() * G.array()).sum();
    const double rhs = (X.array() * apply_predictor_transpose(G, w).array()).sum();
    CHECK(lhs == Approx(rhs).epsilon(1e-12));
    const Eigen::MatrixXd Z = apply_predictor_inverse_transpose(G, w);
    CHECK((apply_predictor_transpose(Z, w) - G).cwiseAbs().maxCoeff() <= 1e-10);
    const Eigen::MatrixXd W = predictor_matrix(w);
    CHECK((W * X - B).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((W.transpose() * G - apply_predictor_transpose(G, w)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("constant patch predicts to a single nonzero", "[dictionary]") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(9, 1, 1.0);
  const Eigen::MatrixXd B = apply_predictor(X, 3);
  CHECK(B(0, 0) == 1.0);
  for (int i = 1; i < 9; ++i) CHECK(B(i, 0) == 0.0);
}

TEST_CASE("generic data uses the identity predictor", "[dictionary]") {
  const Eigen::MatrixXd X = random_matrix(7, 3, 5);
  CHECK(apply_predictor(X, 0) == X);
  CHECK(apply_predictor_transpose(X, 0) == X);
  CHECK_THROWS_AS(apply_predictor(X, 2), std::invalid_argument);
}

TEST_CASE("DCT frame", "[dictionary]") {
  SECTION("square frame is orthonormal") {
    for (int w : {4, 8}) {
      const Dictionary d = overcomplete_dct_frame(w * w, w * w);
      const Eigen::MatrixXd G = d.atoms.transpose() * d.atoms;
      CHECK((G - Eigen::MatrixXd::Identity(w * w, w * w)).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(d.patch_width == w);
    }
  }
  SECTION("overcomplete frame has distinct unit atoms") {
    const Dictionary d = overcomplete_dct_frame(64, 256);
    REQUIRE(d.p() == 256);
    for (int k = 0; k < d.p(); ++k) CHECK(d.atoms.col(k).norm() == Approx(1.0).epsilon(1e-12));
    const Eigen::MatrixXd G = d.atoms.transpose() * d.atoms;
    double max_off = 0.0;
    for (int i = 0; i < 256; ++i)
      for (int j = i + 1; j < 256; ++j) max_off = std::max(max_off, std::abs(G(i, j)));
    CHECK(max_off < 1.0 - 1e-6);
    // first atom is the flat patch
    CHECK((d.atoms.col(0).array() - d.atoms(0, 0)).abs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(overcomplete_dct_frame(10, 4), std::invalid_argument);
}

TEST_CASE("dictionary text format round trips bit-exactly", "[dictionary]") {
  Dictionary d = overcomplete_dct_frame(16, 20);
  d.atoms.col(3) = random_matrix(16, 1, 3);
  d.theta_d = 0.123456789012345678;
  d.delta_a = 12.5;
  d.delta_e = 0.75;
  std::stringstream ss;
  save_dictionary(d, ss);
  const Dictionary e = load_dictionary(ss);
  CHECK(e.atoms == d.atoms);
  CHECK(e.patch_width == d.patch_width);
  CHECK(e.theta_d == d.theta_d);
  CHECK(e.delta_a == d.delta_a);
  CHECK(e.delta_e == d.delta_e);
  CHECK(e.delta_d == d.delta_d);

  std::stringstream bad("garbage 1\n");
  CHECK_THROWS(load_dictionary(bad));
}

TEST_CASE("dictionary codelength", "[dictionary]") {
  Dictionary empty;
  empty.atoms.resize(16, 0);
  CHECK(dictionary_codelength(empty, 100) == 0.0);

  const Dictionary d = overcomplete_dct_frame(16, 8);
  const double l1 = dictionary_codelength(d, 1000), l2 = dictionary_codelength(d, 2000);
  CHECK(l2 - l1 == Approx(16.0 * 8 / 2).epsilon(1e-12));

  Dictionary one;
  one.atoms = Eigen::MatrixXd::Constant(1, 1, 1.0);
  one.patch_width = 1;
  one.theta_d = 1.0;
  CHECK(dictionary_codelength(one, 64) == Approx(kLog2e + 0.5 * 6.0).epsilon(1e-12));
  CHECK_THROWS_AS(dictionary_codelength(one, 0), std::invalid_argument);
}
