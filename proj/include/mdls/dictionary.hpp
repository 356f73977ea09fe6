#pragma once
// Dictionaries, the causal bilinear predictor and the dictionary codelength.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mdls/coding_models.hpp"

namespace mdls {

/// m x p atom matrix with its quantization metadata. patch_width > 0 means
/// the atoms are w x w image patches in raster order (m = w*w) and the
/// bilinear predictor applies; patch_width == 0 is generic data with an
/// identity predictor.
struct Dictionary {
  Eigen::MatrixXd atoms;
  int patch_width = 0;
  double theta_d = 1.0;
  double delta_a = 16.0;
  double delta_e = 1.0;
  double delta_d = 1.0;

  int m() const { return static_cast<int>(atoms.rows()); }
  int p() const { return static_cast<int>(atoms.cols()); }
};

/// Dense predictor matrix W for w x w patches: (W d)_i = d_i - (N + W - NW),
/// with neighbors outside the patch read as zero.
inline Eigen::MatrixXd predictor_matrix(int patch_width) {
  if (patch_width < 1) throw std::invalid_argument("predictor_matrix: patch_width must be >= 1");
  const int w = patch_width, m = w * w;
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(m, m);
  for (int r = 0; r < w; ++r)
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      if (r > 0) W(i, i - w) -= 1.0;
      if (c > 0) W(i, i - 1) -= 1.0;
      if (r > 0 && c > 0) W(i, i - w - 1) += 1.0;
    }
  return W;
}

/// B = W X applied column-wise without forming W. patch_width == 0 copies.
inline Eigen::MatrixXd apply_predictor(const Eigen::MatrixXd& X, int patch_width) {
  if (patch_width == 0) return X;
  const int w = patch_width;
  if (X.rows() != w * w) throw std::invalid_argument("apply_predictor: row count must be w*w");
  Eigen::MatrixXd B = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < w; ++c) {
        const int i = r * w + c;
        double pred = 0.0;
        if (r > 0) pred += X(i - w, j);
        if (c > 0) pred += X(i - 1, j);
        if (r > 0 && c > 0) pred -= X(i - w - 1, j);
        B(i, j) = X(i, j) - pred;
      }
  return B;
}

/// X = W^{-1} B by forward substitution in raster order.
inline Eigen::MatrixXd apply_predictor_inverse(const Eigen::MatrixXd& B, int patch_width) {
  if (patch_width == 0) return B;
  const int w = patch_width;
  if (B.rows() != w * w) throw std::invalid_argument("apply_predictor_inverse: row count must be w*w");
  Eigen::MatrixXd X = B;
  for (Eigen::Index j = 0; j < B.cols(); ++j)
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < w; ++c) {
        const int i = r * w + c;
        double pred = 0.0;
        if (r > 0) pred += X(i - w, j);
        if (c > 0) pred += X(i - 1, j);
        if (r > 0 && c > 0) pred -= X(i - w - 1, j);
        X(i, j) = B(i, j) + pred;
      }
  return X;
}

/// W^T G column-wise (the adjoint of apply_predictor).
inline Eigen::MatrixXd apply_predictor_transpose(const Eigen::MatrixXd& G, int patch_width) {
  if (patch_width == 0) return G;
  const int w = patch_width;
  Eigen::MatrixXd X = G;
  for (Eigen::Index j = 0; j < G.cols(); ++j)
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < w; ++c) {
        const int i = r * w + c;
        // row i of W has -1 at i-w, -1 at i-1, +1 at i-w-1
        if (r > 0) X(i - w, j) -= G(i, j);
        if (c > 0) X(i - 1, j) -= G(i, j);
        if (r > 0 && c > 0) X(i - w - 1, j) += G(i, j);
      }
  return X;
}

/// W^{-T} G: backward substitution with the transposed stencil.
inline Eigen::MatrixXd apply_predictor_inverse_transpose(const Eigen::MatrixXd& G, int patch_width) {
  if (patch_width == 0) return G;
  const int w = patch_width, m = w * w;
  Eigen::MatrixXd X = G;
  for (Eigen::Index j = 0; j < G.cols(); ++j)
    for (int i = m - 1; i >= 0; --i) {
      // W^T x = g: x_i = g_i + x_{i+w} + x_{i+1} - x_{i+w+1} (where those rows reference i)
      const int r = i / w, c = i % w;
      double acc = G(i, j);
      if (r + 1 < w) acc += X(i + w, j);
      if (c + 1 < w) acc += X(i + 1, j);
      if (r + 1 < w && c + 1 < w) acc -= X(i + w + 1, j);
      X(i, j) = acc;
    }
  return X;
}

/// Mean absolute prediction residual of the atoms: the Laplacian MLE of theta_d.
inline double estimate_theta_d(const Dictionary& dict) {
  if (dict.p() == 0) return 1.0;
  const Eigen::MatrixXd U = apply_predictor(dict.atoms, dict.patch_width);
  return std::max(U.cwiseAbs().mean(), 1e-12);
}

/// L(D) = log2(e)/theta_d * sum_k |W d_k|_1 + (m p / 2) log2 n. The constant
/// term of the Laplacian code is taken as zero.
inline Bits dictionary_codelength(const Dictionary& dict, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("dictionary_codelength: n must be >= 1");
  if (dict.p() == 0) return 0.0;
  const double theta = std::max(dict.theta_d, 1e-12);
  const Eigen::MatrixXd U = apply_predictor(dict.atoms, dict.patch_width);
  return kLog2e / theta * U.cwiseAbs().sum() + 0.5 * double(dict.m()) * dict.p() * std::log2(double(n));
}

/// p atoms from a separable 2-D DCT grid with K = ceil(sqrt(p)) frequencies
/// per axis, lowest total frequency first, unit l2 norm. K = w gives the
/// orthonormal DCT-II basis.
inline Dictionary overcomplete_dct_frame(int m, int p) {
  const int w = static_cast<int>(std::lround(std::sqrt(double(m))));
  if (w * w != m) throw std::invalid_argument("overcomplete_dct_frame: m must be a perfect square");
  if (p < 1) throw std::invalid_argument("overcomplete_dct_frame: p must be >= 1");
  const int K = static_cast<int>(std::ceil(std::sqrt(double(p)) - 1e-12));
  Eigen::MatrixXd basis1d(w, K);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < w; ++i) basis1d(i, k) = std::cos((2.0 * i + 1.0) * k * M_PI / (2.0 * K));
    basis1d.col(k).normalize();
  }
  std::vector<std::pair<int, int>> freqs;
  for (int ky = 0; ky < K; ++ky)
    for (int kx = 0; kx < K; ++kx) freqs.emplace_back(ky, kx);
  std::stable_sort(freqs.begin(), freqs.end(),
                   [](auto a, auto b) { return a.first + a.second < b.first + b.second; });
  Dictionary dict;
  dict.patch_width = w;
  dict.atoms.resize(m, p);
  for (int j = 0; j < p; ++j) {
    const auto [ky, kx] = freqs[j];
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < w; ++c) dict.atoms(r * w + c, j) = basis1d(r, ky) * basis1d(c, kx);
    dict.atoms.col(j).normalize();
  }
  dict.theta_d = estimate_theta_d(dict);
  return dict;
}

// ---------------------------------------------------------------------------
// Text format: header lines "key value", then m lines of p atoms values.

inline void save_dictionary(const Dictionary& dict, std::ostream& out) {
  out << "mdls-dictionary 1\n";
  out << "m " << dict.m() << "\np " << dict.p() << "\npatch_width " << dict.patch_width << '\n';
  out << std::setprecision(17);
  out << "theta_d " << dict.theta_d << "\ndelta_a " << dict.delta_a << "\ndelta_e " << dict.delta_e
      << "\ndelta_d " << dict.delta_d << '\n';
  for (int i = 0; i < dict.m(); ++i) {
    for (int k = 0; k < dict.p(); ++k) out << (k ? " " : "") << dict.atoms(i, k);
    out << '\n';
  }
}

inline Dictionary load_dictionary(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "mdls-dictionary" || version != 1)
    throw std::runtime_error("not an mdls dictionary file");
  Dictionary dict;
  int m = -1, p = -1;
  auto expect = [&](const char* key, auto& value) {
    std::string k;
    if (!(in >> k >> value) || k != key) throw std::runtime_error(std::string("dictionary file: expected ") + key);
  };
  expect("m", m);
  expect("p", p);
  expect("patch_width", dict.patch_width);
  expect("theta_d", dict.theta_d);
  expect("delta_a", dict.delta_a);
  expect("delta_e", dict.delta_e);
  expect("delta_d", dict.delta_d);
  if (m < 1 || p < 0) throw std::runtime_error("dictionary file: bad dimensions");
  if (dict.patch_width > 0 && dict.patch_width * dict.patch_width != m)
    throw std::runtime_error("dictionary file: patch_width does not match m");
  dict.atoms.resize(m, p);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < p; ++k)
      if (!(in >> dict.atoms(i, k))) throw std::runtime_error("dictionary file: truncated atom data");
  return dict;
}

inline void save_dictionary(const Dictionary& dict, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_dictionary(dict, out);
}

inline Dictionary load_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load_dictionary(in);
}

}  // namespace mdls
