#pragma once
// Robust low-rank approximation (nuclear norm + l1) and codelength-based
// selection of the penalty and the factor precision.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "mdls/coding_models.hpp"
#include "mdls/parallel.hpp"

namespace mdls {

// ---------------------------------------------------------------------------
// RPCA: min ||A||_* + lambda ||E||_1  s.t.  A + E = Y

struct RpcaOptions {
  double tolerance = 1e-7;  // ||Y - A - E||_F / ||Y||_F
  int max_iterations = 10000;
  double dual_tolerance = 1e-7;
  double rho = 1.5;  // multiplicative step of the penalty parameter mu
  double mu_growth_cap = 1e7;  // mu stays below cap * 1.25 / ||Y||_2
  double balance = 10.0;  // residual ratio that triggers a mu change
};

struct RpcaResult {
  Eigen::MatrixXd A, E;
  Eigen::MatrixXd dual;  // Lagrange multiplier, kept for warm restarts
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

inline double soft_threshold_scalar(double x, double t) { return x > t ? x - t : (x < -t ? x + t : 0.0); }

inline double nuclear_norm(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues().sum();
}

inline double rpca_objective(const Eigen::MatrixXd& A, const Eigen::MatrixXd& E, double lambda) {
  return nuclear_norm(A) + lambda * E.cwiseAbs().sum();
}

namespace detail {

/// Singular value thresholding: U max(S - tau, 0) V^T.
inline Eigen::MatrixXd svt(const Eigen::MatrixXd& X, double tau) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::Index r = 0;
  while (r < s.size() && s[r] > tau) ++r;
  if (r == 0) return Eigen::MatrixXd::Zero(X.rows(), X.cols());
  const Eigen::VectorXd shrunk = (s.head(r).array() - tau).matrix();
  return svd.matrixU().leftCols(r) * shrunk.asDiagonal() * svd.matrixV().leftCols(r).transpose();
}

}  // namespace detail

/// Inexact augmented Lagrangian method. Converged when both the primal and
/// the dual residual are below tolerance. A warm start continues from a
/// previous solution (primal and dual) with the penalty parameter restarted.
inline RpcaResult rpca_solve(const Eigen::MatrixXd& Y, double lambda, const RpcaResult* warm = nullptr,
                             const RpcaOptions& opt = {}) {
  if (!(lambda > 0.0)) throw std::invalid_argument("rpca_solve: lambda must be positive");
  RpcaResult r;
  r.lambda = lambda;
  const double norm_f = Y.norm();
  if (norm_f == 0.0) {
    r.A = r.E = r.dual = Eigen::MatrixXd::Zero(Y.rows(), Y.cols());
    r.converged = true;
    return r;
  }
  const double norm2 = Eigen::BDCSVD<Eigen::MatrixXd>(Y).singularValues()[0];
  double mu = 1.25 / norm2;
  const double mu_max = mu * opt.mu_growth_cap;
  if (warm) {
    if (warm->A.rows() != Y.rows() || warm->A.cols() != Y.cols())
      throw std::invalid_argument("rpca_solve: warm start has the wrong shape");
    r.A = warm->A;
    r.E = warm->E;
    r.dual = warm->dual;
  } else {
    r.A = r.E = Eigen::MatrixXd::Zero(Y.rows(), Y.cols());
    r.dual = Y / std::max(norm2, Y.cwiseAbs().maxCoeff() / lambda);
  }
  for (r.iterations = 1; r.iterations <= opt.max_iterations; ++r.iterations) {
    const Eigen::MatrixXd E_prev = r.E;
    r.E = (Y - r.A + r.dual / mu).unaryExpr([&](double x) { return soft_threshold_scalar(x, lambda / mu); });
    r.A = detail::svt(Y - r.E + r.dual / mu, 1.0 / mu);
    const Eigen::MatrixXd Z = Y - r.A - r.E;
    r.dual += mu * Z;
    // The primal residual alone is met early when mu only grows; the dual
    // residual mu ||E_k - E_{k-1}|| certifies the fixed point. mu follows
    // residual balancing.
    const double primal_res = Z.norm() / norm_f;
    const double dual_res = mu * (r.E - E_prev).norm() / norm_f;
    if (primal_res <= opt.tolerance && dual_res <= opt.dual_tolerance) {
      r.converged = true;
      break;
    }
    if (primal_res > opt.balance * dual_res) mu = std::min(mu * opt.rho, mu_max);
    else if (dual_res > opt.balance * primal_res) mu /= opt.rho;
  }
  r.iterations = std::min(r.iterations, opt.max_iterations);
  r.objective = rpca_objective(r.A, r.E, lambda);
  return r;
}

// ---------------------------------------------------------------------------
// Codelength of a low-rank + sparse model

/// Layout of the columns of U: frames of height x width coded with the
/// causal bilinear predictor. height == 0 means no 2-D layout; U columns are
/// then coded without prediction.
struct FrameGeometry {
  int height = 0, width = 0;
};

/// Two-part code of an integer sequence: Laplacian with the ML scale plus
/// 0.5 log2(len) bits for the scale.
inline Bits laplace_two_part_codelength(const std::vector<std::int64_t>& k) {
  if (k.empty()) return 0.0;
  double sum_abs = 0.0;
  for (auto v : k) sum_abs += double(std::abs(v));
  const double theta = std::max(sum_abs / double(k.size()), 1e-3);
  Bits bits = 0.5 * std::log2(double(k.size()));
  for (auto v : k) bits += laplace_bin_codelength(v, 1.0, theta);
  return bits;
}

namespace detail {

/// Closed-loop DPCM of x laid out as h x w (raster) with the bilinear
/// predictor N + W - NW. h == 0 codes x directly. Returns the residual
/// indices; xq receives the reconstruction.
inline std::vector<std::int64_t> dpcm_encode(const Eigen::VectorXd& x, int h, int w, double delta,
                                             Eigen::VectorXd& xq) {
  const Eigen::Index n = x.size();
  std::vector<std::int64_t> k(n);
  xq.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double pred = 0.0;
    if (h > 0) {
      const Eigen::Index r = i / w, c = i % w;
      if (r > 0) pred += xq[i - w];
      if (c > 0) pred += xq[i - 1];
      if (r > 0 && c > 0) pred -= xq[i - w - 1];
    }
    k[i] = quantize_index(x[i] - pred, delta);
    xq[i] = pred + double(k[i]) * delta;
  }
  return k;
}

}  // namespace detail

struct LowRankCodelength {
  Bits l_u = 0, l_s = 0, l_v = 0, l_support = 0, l_e = 0, total = 0;
};

inline void to_json(nlohmann::json& j, const LowRankCodelength& c) {
  j = nlohmann::json{{"l_u", c.l_u},   {"l_sigma", c.l_s}, {"l_v", c.l_v},
                     {"l_e_support", c.l_support}, {"l_e_values", c.l_e}, {"total", c.total}};
}

struct LowRankModel {
  Eigen::MatrixXd U, V;    // SVD factors of A (orthonormal columns)
  Eigen::VectorXd S;       // singular values, decreasing
  Eigen::MatrixXd Uq, Vq;  // factors as decoded
  Eigen::MatrixXd E;       // coded residual of the decoded low-rank part (integers at delta_e = 1)
  double lambda = 0.0, Q = 0.0, delta_u = 0.0, delta_v = 0.0;
  int rank = 0;
  LowRankCodelength codelength;

  /// Decoded low-rank part Uq S Vq^T.
  Eigen::MatrixXd low_rank() const {
    if (rank == 0) return Eigen::MatrixXd::Zero(E.rows(), E.cols());
    return Uq * S.asDiagonal() * Vq.transpose();
  }
  /// Decoded data estimate.
  Eigen::MatrixXd reconstruction() const { return low_rank() + E; }
  /// Support of E as a 0/1 mask.
  Eigen::MatrixXi support() const { return (E.array() != 0.0).cast<int>(); }
};

inline constexpr double kSingularValuePrecision = 1e-16;
inline constexpr double kRankTruncation = 1e-12;

/// Encode (A, E): A by its reduced SVD with U columns at Q/sqrt(m) and V
/// columns at Q/sqrt(n), singular values with the integer code at 1e-16,
/// then the sparse part as the residual (A + E) - decoded(A) quantized at 1,
/// with an enumerative support and a two-part Laplacian for the nonzeros.
/// Coding the residual everywhere, not only on the support of E, charges
/// the factor quantization error; otherwise the coarsest Q always wins.
inline LowRankModel encode_lowrank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& E, double Q,
                                   FrameGeometry geom = {}) {
  if (!(Q > 0.0 && Q < 1.0)) throw std::invalid_argument("encode_lowrank: Q must be in (0, 1)");
  if (A.rows() != E.rows() || A.cols() != E.cols()) throw std::invalid_argument("encode_lowrank: shape mismatch");
  const Eigen::Index m = A.rows(), n = A.cols();
  if (geom.height > 0 && Eigen::Index(geom.height) * geom.width != m)
    throw std::invalid_argument("encode_lowrank: frame geometry does not match the row count");
  LowRankModel M;
  M.Q = Q;
  M.delta_u = Q / std::sqrt(double(m));
  M.delta_v = Q / std::sqrt(double(n));

  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  int r = 0;
  if (s.size() > 0 && s[0] > 0.0)
    while (r < s.size() && s[r] > kRankTruncation * s[0]) ++r;
  M.rank = r;
  M.U = svd.matrixU().leftCols(r);
  M.V = svd.matrixV().leftCols(r);
  M.S = s.head(r);
  M.Uq.resize(m, r);
  M.Vq.resize(n, r);
  LowRankCodelength& L = M.codelength;
  for (int i = 0; i < r; ++i) {
    Eigen::VectorXd uq, vq;
    L.l_u += laplace_two_part_codelength(detail::dpcm_encode(M.U.col(i), geom.height, geom.width, M.delta_u, uq));
    L.l_v += laplace_two_part_codelength(detail::dpcm_encode(M.V.col(i), int(n), 1, M.delta_v, vq));
    M.Uq.col(i) = uq;
    M.Vq.col(i) = vq;
    L.l_s += integer_universal_codelength_real(std::ceil(M.S[i] / kSingularValuePrecision));
  }

  M.E = Eigen::MatrixXd::Zero(m, n);
  const Eigen::MatrixXd R = A + E - M.low_rank();
  std::vector<std::int64_t> values;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const std::int64_t k = quantize_index(R(i, j), 1.0);
      if (k == 0) continue;
      values.push_back(k);
      M.E(i, j) = double(k);
    }
  L.l_support = support_codelength(m * n, std::int64_t(values.size()));
  L.l_e = laplace_two_part_codelength(values);
  L.total = L.l_u + L.l_s + L.l_v + L.l_support + L.l_e;
  return M;
}

// ---------------------------------------------------------------------------
// Model selection

inline double reference_lambda(Eigen::Index m, Eigen::Index n) { return 1.0 / std::sqrt(double(std::max(m, n))); }

struct LowRankSelectOptions {
  std::vector<double> lambda_scales{0.25, 0.5, 1.0, 2.0, 4.0};  // multiples of 1/sqrt(max(m, n))
  std::vector<double> Q_grid{0.05, 0.1, 0.2, 0.4, 0.8};
  FrameGeometry geometry{};
  RpcaOptions rpca{};
  int threads = 1;
};

/// One point of the L(lambda) curve: the best Q at this lambda.
struct LambdaPoint {
  double lambda = 0.0, Q = 0.0;
  int rank = 0;
  std::int64_t support = 0;
  int rpca_iterations = 0;
  bool converged = false;
  double objective = 0.0;
  LowRankCodelength codelength;
};

struct LowRankSelection {
  LowRankModel best;
  std::vector<LambdaPoint> curve;
  bool all_converged = true;
};

/// Sweep lambda ascending with warm restarts and Q for each lambda; keep the
/// minimum total codelength (ties to the smaller lambda, then smaller Q).
inline LowRankSelection select_model(const Eigen::MatrixXd& Y, const LowRankSelectOptions& opt = {}) {
  if (opt.lambda_scales.empty() || opt.Q_grid.empty()) throw std::invalid_argument("select_model: empty grid");
  std::vector<double> scales = opt.lambda_scales, Qs = opt.Q_grid;
  std::sort(scales.begin(), scales.end());
  std::sort(Qs.begin(), Qs.end());
  const double lambda0 = reference_lambda(Y.rows(), Y.cols());
  LowRankSelection out;
  std::optional<RpcaResult> prev;
  double best_total = std::numeric_limits<double>::infinity();
  for (double scale : scales) {
    RpcaResult rp = rpca_solve(Y, scale * lambda0, prev ? &*prev : nullptr, opt.rpca);
    out.all_converged = out.all_converged && rp.converged;
    std::vector<LowRankModel> models(Qs.size());
    parallel_for(std::int64_t(Qs.size()), opt.threads,
                 [&](std::int64_t i) { models[i] = encode_lowrank(rp.A, rp.E, Qs[i], opt.geometry); });
    std::size_t arg = 0;
    for (std::size_t i = 1; i < models.size(); ++i)
      if (models[i].codelength.total < models[arg].codelength.total) arg = i;
    LowRankModel& m = models[arg];
    m.lambda = rp.lambda;
    LambdaPoint pt;
    pt.lambda = rp.lambda;
    pt.Q = m.Q;
    pt.rank = m.rank;
    pt.support = m.support().sum();
    pt.rpca_iterations = rp.iterations;
    pt.converged = rp.converged;
    pt.objective = rp.objective;
    pt.codelength = m.codelength;
    out.curve.push_back(pt);
    if (m.codelength.total < best_total) {
      best_total = m.codelength.total;
      out.best = std::move(m);
    }
    prev = std::move(rp);
  }
  return out;
}

inline void to_json(nlohmann::json& j, const LambdaPoint& p) {
  j = nlohmann::json{{"lambda", p.lambda},       {"Q", p.Q},
                     {"rank", p.rank},           {"support", p.support},
                     {"rpca_iterations", p.rpca_iterations}, {"converged", p.converged},
                     {"objective", p.objective}, {"codelength", p.codelength}};
}

}  // namespace mdls
