#pragma once
// Dictionary learning by codelength minimization: the proximal-gradient
// dictionary update, alternate minimization at fixed size, forward
// selection and backward pruning.

#include <Eigen/Sparse>
#include <chrono>
#include <functional>
#include <iostream>

#include "mdls/dictionary.hpp"
#include "mdls/sparse_coding.hpp"

namespace mdls {

/// Cubic-Hermite table of the continuous LG codelength f(e) = -log2 p_LG(e)
/// and its derivative, used inside the dictionary update. f' is the exact
/// derivative of the interpolant so gradients are consistent with values.
class LGLoss {
 public:
  LGLoss(double sigma2, double theta) : params_{sigma2, std::max(theta, kThetaErrorFloor)} {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("LGLoss: sigma2 must be positive");
    const double sigma = std::sqrt(sigma2);
    step_ = std::min(sigma, params_.theta) / 16.0;
    const double scale = lg_nominal_scale(params_);
    const int nodes = static_cast<int>(std::min(60.0 * scale / step_, 200000.0)) + 2;
    values_.resize(nodes);
    slopes_.resize(nodes);
    for (int i = 0; i < nodes; ++i) {
      values_[i] = lg_neg_log_density(i * step_, params_);
      slopes_[i] = lg_neg_log_density_derivative(i * step_, params_);
    }
    limit_ = (nodes - 1) * step_;
    curvature_bound_ = 0.0;
    for (int i = 0; i + 1 < nodes; ++i)
      curvature_bound_ = std::max(curvature_bound_, std::abs(slopes_[i + 1] - slopes_[i]) / step_);
    curvature_bound_ *= 1.5;
  }

  const LGParams& params() const { return params_; }
  /// Upper bound on |f''| (with margin), used for the initial step size.
  double curvature_bound() const { return curvature_bound_; }

  double value(double e) const {
    const double x = std::abs(e);
    if (x >= limit_) return lg_neg_log_density(x, params_);
    const int i = static_cast<int>(x / step_);
    const double t = x / step_ - i, t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * values_[i] + (t3 - 2 * t2 + t) * step_ * slopes_[i] +
           (-2 * t3 + 3 * t2) * values_[i + 1] + (t3 - t2) * step_ * slopes_[i + 1];
  }

  double derivative(double e) const {
    const double x = std::abs(e);
    const double sign = e < 0.0 ? -1.0 : 1.0;
    if (x >= limit_) return sign * lg_neg_log_density_derivative(x, params_);
    const int i = static_cast<int>(x / step_);
    const double t = x / step_ - i, t2 = t * t;
    const double d = (6 * t2 - 6 * t) * (values_[i] - values_[i + 1]) / step_ + (3 * t2 - 4 * t + 1) * slopes_[i] +
                     (3 * t2 - 2 * t) * slopes_[i + 1];
    return sign * d;
  }

 private:
  LGParams params_;
  double step_ = 1.0, limit_ = 0.0, curvature_bound_ = 0.0;
  std::vector<double> values_, slopes_;
};

inline Eigen::SparseMatrix<double> sparse_coefficients(const std::vector<SparseCode>& codes, int p) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t j = 0; j < codes.size(); ++j)
    for (int i = 0; i < codes[j].nnz(); ++i)
      trip.emplace_back(codes[j].atoms[i], static_cast<int>(j), double(codes[j].q[i]) * codes[j].delta_a);
  Eigen::SparseMatrix<double> A(p, static_cast<Eigen::Index>(codes.size()));
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Objective of the dictionary update in the prediction-residual variable
/// U = W D: sum f_LG(Y - W^{-1} U A) + lambda |U|_1, lambda = log2(e)/theta_d.
struct DictionaryObjective {
  const Eigen::MatrixXd& Y;
  Eigen::SparseMatrix<double> A;
  Eigen::SparseMatrix<double> At;
  LGLoss loss;
  int patch_width;
  double lambda;

  DictionaryObjective(const Eigen::MatrixXd& Y_, const std::vector<SparseCode>& codes, int p, double sigma2,
                      double theta_e, int patch_width_, double theta_d)
      : Y(Y_), A(sparse_coefficients(codes, p)), At(A.transpose()), loss(sigma2, theta_e),
        patch_width(patch_width_), lambda(kLog2e / std::max(theta_d, 1e-12)) {}

  /// Smooth part; fills the gradient with respect to U when requested.
  double smooth(const Eigen::MatrixXd& U, Eigen::MatrixXd* grad = nullptr) const {
    const Eigen::MatrixXd D = apply_predictor_inverse(U, patch_width);
    const Eigen::MatrixXd E = Y - D * A;
    double value = 0.0;
    if (grad) {
      Eigen::MatrixXd F(E.rows(), E.cols());
      for (Eigen::Index i = 0; i < E.size(); ++i) {
        value += loss.value(E.data()[i]);
        F.data()[i] = loss.derivative(E.data()[i]);
      }
      *grad = -apply_predictor_inverse_transpose(Eigen::MatrixXd(F * At), patch_width);
    } else {
      for (Eigen::Index i = 0; i < E.size(); ++i) value += loss.value(E.data()[i]);
    }
    return value;
  }
  double penalty(const Eigen::MatrixXd& U) const { return lambda * U.cwiseAbs().sum(); }
  double total(const Eigen::MatrixXd& U) const { return smooth(U) + penalty(U); }
};

/// Largest eigenvalue of W^{-T} W^{-1} by power iteration.
inline double predictor_inverse_norm2(int patch_width) {
  if (patch_width == 0) return 1.0;
  const int m = patch_width * patch_width;
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(m, 1, 1.0 / std::sqrt(double(m)));
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::MatrixXd y = apply_predictor_inverse_transpose(apply_predictor_inverse(x, patch_width), patch_width);
    const double next = y.norm();
    x = y / next;
    if (std::abs(next - lambda) <= 1e-12 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

struct UpdateOptions {
  int max_iterations = 30;
  double tolerance = 1e-6;  // relative objective change
  double backtrack = 0.5;
};

struct UpdateResult {
  Dictionary dict;
  std::vector<double> objective;  // monotone sequence, first entry at the input
  int iterations = 0;
  double step = 0.0;
};

/// Monotone FISTA with backtracking on U = W D. Atoms whose l2 norm exceeds
/// one afterwards are projected back onto the unit sphere.
inline UpdateResult dictionary_update(const Dictionary& dict, const std::vector<SparseCode>& codes,
                                      const Eigen::MatrixXd& Y, double theta_e, double sigma2, double theta_d,
                                      const UpdateOptions& opt = {}) {
  if (Y.rows() != dict.m() || Y.cols() != static_cast<Eigen::Index>(codes.size()))
    throw std::invalid_argument("dictionary_update: data/code size mismatch");
  UpdateResult res;
  res.dict = dict;
  if (dict.p() == 0) return res;
  const DictionaryObjective obj(Y, codes, dict.p(), sigma2, theta_e, dict.patch_width, theta_d);

  // initial step from sup f'' * |W^{-1}|^2 * |A|^2
  Eigen::MatrixXd AAt = Eigen::MatrixXd(obj.A * obj.At);
  const double a_norm2 = AAt.size() ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(AAt, Eigen::EigenvaluesOnly)
                                          .eigenvalues()
                                          .maxCoeff()
                                    : 0.0;
  const double lip = obj.loss.curvature_bound() * predictor_inverse_norm2(dict.patch_width) * a_norm2;
  if (!(lip > 0.0)) {
    res.objective.push_back(obj.total(apply_predictor(dict.atoms, dict.patch_width)));
    return res;  // no coefficients: nothing to fit
  }
  double step = 1.0 / lip;

  Eigen::MatrixXd x = apply_predictor(dict.atoms, dict.patch_width);
  Eigen::MatrixXd y = x, grad;
  double fx = obj.total(x);
  res.objective.push_back(fx);
  double t = 1.0;
  auto prox = [&](const Eigen::MatrixXd& v, double s) {
    return v.unaryExpr([tau = s * obj.lambda](double u) { return u > tau ? u - tau : (u < -tau ? u + tau : 0.0); });
  };
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double fy = obj.smooth(y, &grad);
    if (!grad.allFinite()) throw std::runtime_error("dictionary_update: non-finite gradient");
    Eigen::MatrixXd z;
    double fz_smooth = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      z = prox(y - step * grad, step);
      fz_smooth = obj.smooth(z);
      const Eigen::MatrixXd d = z - y;
      if (fz_smooth <= fy + (grad.array() * d.array()).sum() + d.squaredNorm() / (2.0 * step) + 1e-12 * std::abs(fy))
        break;
      step *= opt.backtrack;
    }
    const double fz = fz_smooth + obj.penalty(z);
    const Eigen::MatrixXd x_old = x;
    const double f_old = fx;
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_old);
    t = t_next;
    res.objective.push_back(fx);
    res.iterations = it + 1;
    if (std::abs(f_old - fx) <= opt.tolerance * std::abs(fx) && fz <= f_old) break;
  }
  res.step = step;
  res.dict.atoms = apply_predictor_inverse(x, dict.patch_width);
  for (int k = 0; k < res.dict.p(); ++k) {
    const double nrm = res.dict.atoms.col(k).norm();
    if (nrm > 1.0) res.dict.atoms.col(k) /= nrm;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Alternate minimization and size selection

struct LearnConfig {
  double epsilon_converge = 1e-3;
  int max_outer_iters = 50;
  int partial_update_iters = 10;
  /// Outer iterations after each backward pruning step.
  int prune_outer_iters = 3;
  int p_max = 512;
  /// Gaussian part of the residual model (sensor or quantization noise).
  double sigma2 = 1.0;
  SampleGrid grid{};
  int threads = 1;
  UpdateOptions update{};
  bool verbose = false;
};

struct LearnResult {
  Dictionary dict;
  std::vector<SparseCode> codes;
  PlugInState state;
  CodelengthReport report;  // includes L(D)
  int outer_iterations = 0;
  std::vector<double> history;  // total codelength of each evaluated iterate
  double seconds = 0.0;
};

/// Sequentially code Y with dict and add L(D); theta_d is set to the
/// Laplacian MLE of the dictionary's own prediction residuals.
inline LearnResult evaluate_model(const Eigen::MatrixXd& Y, Dictionary dict, const LearnConfig& cfg) {
  EncodeOptions eo;
  eo.mode = CodingMode::sequential;
  eo.sigma2 = cfg.sigma2;
  eo.grid = cfg.grid;
  dict.theta_d = estimate_theta_d(dict);
  EncodeResult enc = encode_all(Y, dict, eo);
  LearnResult r;
  r.report = enc.report;
  r.report.l_dictionary = dictionary_codelength(dict, std::max<std::int64_t>(Y.cols(), 1));
  r.report.finalize_total();
  r.report.bits_per_pixel = r.report.total / double(Y.size());
  r.codes = std::move(enc.codes);
  r.state = std::move(enc.state);
  r.dict = std::move(dict);
  return r;
}

/// Alternate coding and dictionary updates for a fixed number of atoms.
/// Returns the best evaluated (codes, dictionary) pair.
inline LearnResult learn_fixed_size(const Eigen::MatrixXd& Y, const Dictionary& D0, const LearnConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  LearnResult best = evaluate_model(Y, D0, cfg);
  best.history.push_back(best.report.total);
  LearnResult current = best;
  int outer = 0;
  for (; outer < cfg.max_outer_iters && current.dict.p() > 0; ++outer) {
    // theta_d from D(t-1), theta_e from the coding pass just completed
    const double theta_d = estimate_theta_d(current.dict);
    UpdateResult up = dictionary_update(current.dict, current.codes, Y, current.state.theta_e(), cfg.sigma2,
                                        theta_d, cfg.update);
    const double change = (up.dict.atoms - current.dict.atoms).norm() / std::max(up.dict.atoms.norm(), 1e-300);
    LearnResult next = evaluate_model(Y, up.dict, cfg);
    best.history.push_back(next.report.total);
    if (cfg.verbose)
      std::cerr << "  p=" << next.dict.p() << " outer " << outer + 1 << " bits " << next.report.total << " bpp "
                << next.report.bits_per_pixel << " change " << change << '\n';
    if (next.report.total < best.report.total) {
      auto hist = std::move(best.history);
      best = next;
      best.history = std::move(hist);
    }
    current = std::move(next);
    if (change <= cfg.epsilon_converge) {
      ++outer;
      break;
    }
  }
  best.outer_iterations = outer;
  best.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

/// Top left singular vector of E via the eigen-decomposition of E E^T.
inline Eigen::VectorXd principal_direction(const Eigen::MatrixXd& E) {
  const Eigen::MatrixXd C = E * E.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  Eigen::VectorXd u = eig.eigenvectors().col(C.rows() - 1);
  // deterministic sign: largest-magnitude entry positive
  Eigen::Index idx;
  u.cwiseAbs().maxCoeff(&idx);
  if (u[idx] < 0) u = -u;
  return u;
}

struct SizeSelectionResult {
  LearnResult best;
  std::vector<std::pair<int, double>> path;  // (p, total bits) of every evaluated size
  double seconds = 0.0;
};

/// Forward selection: grow from the empty dictionary one principal residual
/// direction at a time; stop when the codelength increases. partial = true
/// runs only partial_update_iters outer iterations per size.
inline SizeSelectionResult learn_forward(const Eigen::MatrixXd& Y, int patch_width, const LearnConfig& cfg,
                                         bool partial = true, double delta_a = 16.0, double delta_e = 1.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Dictionary empty;
  empty.patch_width = patch_width;
  empty.atoms.resize(Y.rows(), 0);
  empty.delta_a = delta_a;
  empty.delta_e = delta_e;
  empty.delta_d = 1.0 / std::sqrt(double(std::max<Eigen::Index>(Y.cols(), 1)));
  SizeSelectionResult out;
  out.best = evaluate_model(Y, empty, cfg);
  out.path.emplace_back(0, out.best.report.total);
  LearnConfig inner = cfg;
  if (partial) inner.max_outer_iters = cfg.partial_update_iters;
  while (out.best.dict.p() < cfg.p_max) {
    const Eigen::MatrixXd E = residual_matrix(Y, out.best.dict, out.best.codes);
    if (E.squaredNorm() == 0.0) break;
    Dictionary D0 = out.best.dict;
    D0.atoms.conservativeResize(Eigen::NoChange, D0.p() + 1);
    D0.atoms.col(D0.p() - 1) = principal_direction(E);
    LearnResult r = learn_fixed_size(Y, D0, inner);
    out.path.emplace_back(r.dict.p(), r.report.total);
    if (cfg.verbose) std::cerr << "forward p=" << r.dict.p() << " bits " << r.report.total << '\n';
    if (r.report.total >= out.best.report.total) break;
    out.best = std::move(r);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.best.seconds = out.seconds;
  return out;
}

/// Drop the listed atoms (sorted ascending) from a dictionary.
inline Dictionary remove_atoms(const Dictionary& dict, const std::vector<int>& drop) {
  Dictionary out = dict;
  out.atoms.resize(dict.m(), dict.p() - static_cast<int>(drop.size()));
  int c = 0;
  for (int k = 0, i = 0; k < dict.p(); ++k) {
    if (i < static_cast<int>(drop.size()) && drop[i] == k) {
      ++i;
      continue;
    }
    out.atoms.col(c++) = dict.atoms.col(k);
  }
  return out;
}

/// Backward selection: learn at the initial size, then prune the least used
/// atom (all unused atoms at once when there are any) while the total
/// codelength decreases.
inline SizeSelectionResult learn_backward(const Eigen::MatrixXd& Y, const Dictionary& D_init, const LearnConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SizeSelectionResult out;
  Dictionary init = D_init;
  init.delta_d = 1.0 / std::sqrt(double(std::max<Eigen::Index>(Y.cols(), 1)));
  out.best = learn_fixed_size(Y, init, cfg);
  out.path.emplace_back(out.best.dict.p(), out.best.report.total);
  if (cfg.verbose) std::cerr << "backward p=" << out.best.dict.p() << " bits " << out.best.report.total << '\n';
  LearnConfig prune = cfg;
  prune.max_outer_iters = cfg.prune_outer_iters;
  while (out.best.dict.p() > 0) {
    const auto& use = out.best.state.atom_use_counts;
    std::vector<int> drop;
    for (int k = 0; k < out.best.dict.p(); ++k)
      if (use[k] == 0) drop.push_back(k);
    if (drop.empty()) drop.push_back(static_cast<int>(std::min_element(use.begin(), use.end()) - use.begin()));
    LearnResult r = learn_fixed_size(Y, remove_atoms(out.best.dict, drop), prune);
    out.path.emplace_back(r.dict.p(), r.report.total);
    if (cfg.verbose) std::cerr << "backward p=" << r.dict.p() << " bits " << r.report.total << '\n';
    if (r.report.total >= out.best.report.total) break;
    out.best = std::move(r);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.best.seconds = out.seconds;
  return out;
}

}  // namespace mdls
