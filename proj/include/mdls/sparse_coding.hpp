#pragma once
// Per-sample codelengths, the codelength-minimizing pursuit (COMPA) and
// sequential plug-in estimation with a Markov support model.

#include <array>
#include <map>
#include <mutex>
#include <ostream>
#include <tuple>

#include <Eigen/Dense>

#include "json.hpp"
#include "mdls/coding_models.hpp"
#include "mdls/dictionary.hpp"
#include "mdls/parallel.hpp"

namespace mdls {

/// Sparse coefficient vector stored as (atom, signed multiple of delta_a)
/// pairs sorted by atom. a_k = q_k * delta_a = z_k s_k (v_k + delta_a).
struct SparseCode {
  std::vector<int> atoms;
  std::vector<std::int64_t> q;
  double delta_a = 16.0;

  int nnz() const { return static_cast<int>(atoms.size()); }

  Eigen::VectorXd dense(int p) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < atoms.size(); ++i) a[atoms[i]] = double(q[i]) * delta_a;
    return a;
  }
  std::vector<std::uint8_t> support(int p) const {
    std::vector<std::uint8_t> z(p, 0);
    for (int k : atoms) z[k] = 1;
    return z;
  }
  std::vector<int> signs(int p) const {
    std::vector<int> s(p, 0);
    for (std::size_t i = 0; i < atoms.size(); ++i) s[atoms[i]] = q[i] > 0 ? 1 : -1;
    return s;
  }
  /// v_k = max(|a_k| - delta_a, 0), zero off the support.
  std::vector<double> magnitudes(int p) const {
    std::vector<double> v(p, 0.0);
    for (std::size_t i = 0; i < atoms.size(); ++i) v[atoms[i]] = double(std::abs(q[i]) - 1) * delta_a;
    return v;
  }
  bool has(int k) const { return std::binary_search(atoms.begin(), atoms.end(), k); }

  /// Rebuild from (z, s, v); inverse of support()/signs()/magnitudes().
  static SparseCode from_parts(const std::vector<std::uint8_t>& z, const std::vector<int>& s,
                               const std::vector<double>& v, double delta_a) {
    SparseCode c;
    c.delta_a = delta_a;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (!z[k]) continue;
      if (s[k] == 0) throw std::invalid_argument("SparseCode: active atom without a sign");
      c.atoms.push_back(static_cast<int>(k));
      c.q.push_back(s[k] * (std::llround(v[k] / delta_a) + 1));
    }
    return c;
  }
};

/// Bit accounting of one or many samples.
struct CodelengthReport {
  Bits l_support = 0, l_signs = 0, l_values = 0, l_error = 0, l_dictionary = 0;
  Bits total = 0;
  double bits_per_pixel = 0;
  /// Support bits under the alternative log2(p) size field (universal samples only differ).
  Bits l_support_log_p = 0;
  std::int64_t samples = 0;

  void add(const CodelengthReport& o) {
    l_support += o.l_support;
    l_signs += o.l_signs;
    l_values += o.l_values;
    l_error += o.l_error;
    l_dictionary += o.l_dictionary;
    l_support_log_p += o.l_support_log_p;
    samples += o.samples;
    finalize_total();
  }
  void finalize_total() { total = l_support + l_signs + l_values + l_error + l_dictionary; }
};

inline void to_json(nlohmann::json& j, const CodelengthReport& r) {
  j = nlohmann::json{{"l_support", r.l_support},       {"l_signs", r.l_signs},
                     {"l_values", r.l_values},         {"l_error", r.l_error},
                     {"l_dictionary", r.l_dictionary}, {"total", r.total},
                     {"bits_per_pixel", r.bits_per_pixel}, {"l_support_log_p_size_field", r.l_support_log_p},
                     {"samples", r.samples}};
}

// ---------------------------------------------------------------------------
// Plug-in state

/// Markov context of atom k: bits (north, west, northwest) packed as n*4+w*2+nw.
using MarkovState = int;

struct PlugInState {
  int p = 0;
  double sigma2 = 0.0;
  double delta_a = 16.0;
  double delta_e = 1.0;
  double residual_sq_sum = 0.0;
  std::int64_t residual_count = 0;
  std::int64_t samples_seen = 0;
  std::vector<std::array<std::int64_t, 8>> ones, totals;
  std::vector<double> value_sum;
  std::vector<std::int64_t> value_count;
  std::vector<std::int64_t> atom_use_counts;

  PlugInState() = default;
  PlugInState(int atoms, double sigma2_, double delta_a_, double delta_e_)
      : p(atoms), sigma2(sigma2_), delta_a(delta_a_), delta_e(delta_e_), ones(atoms), totals(atoms),
        value_sum(atoms, 0.0), value_count(atoms, 0), atom_use_counts(atoms, 0) {
    for (int k = 0; k < atoms; ++k) ones[k].fill(0), totals[k].fill(0);
  }

  double theta_e() const {
    if (residual_count == 0) return kThetaErrorFloor;
    return std::max(lg_theta_estimate(residual_sq_sum, residual_count, sigma2), kThetaErrorFloor);
  }
  /// KT estimate of P(z_k = 1) in a Markov state, clamped.
  double rho(int k, MarkovState s) const { return clamp_probability(kt_probability(ones[k][s], totals[k][s] + 1)); }
  /// KT estimate pooled over all states.
  double rho_marginal(int k) const {
    std::int64_t o = 0, t = 0;
    for (int s = 0; s < 8; ++s) o += ones[k][s], t += totals[k][s];
    return clamp_probability(kt_probability(o, t + 1));
  }
  /// Exponential ML scale of the magnitudes of atom k; NaN when unused.
  double theta_a(int k) const {
    if (value_count[k] == 0) return std::numeric_limits<double>::quiet_NaN();
    return std::max(value_sum[k] / double(value_count[k]), delta_a / 100.0);
  }
};

inline void to_json(nlohmann::json& j, const PlugInState& s) {
  j = nlohmann::json{{"p", s.p},
                     {"sigma2", s.sigma2},
                     {"delta_a", s.delta_a},
                     {"delta_e", s.delta_e},
                     {"residual_sq_sum", s.residual_sq_sum},
                     {"residual_count", s.residual_count},
                     {"samples_seen", s.samples_seen},
                     {"ones", s.ones},
                     {"totals", s.totals},
                     {"value_sum", s.value_sum},
                     {"value_count", s.value_count},
                     {"atom_use_counts", s.atom_use_counts}};
}

inline void from_json(const nlohmann::json& j, PlugInState& s) {
  j.at("p").get_to(s.p);
  j.at("sigma2").get_to(s.sigma2);
  j.at("delta_a").get_to(s.delta_a);
  j.at("delta_e").get_to(s.delta_e);
  j.at("residual_sq_sum").get_to(s.residual_sq_sum);
  j.at("residual_count").get_to(s.residual_count);
  j.at("samples_seen").get_to(s.samples_seen);
  j.at("ones").get_to(s.ones);
  j.at("totals").get_to(s.totals);
  j.at("value_sum").get_to(s.value_sum);
  j.at("value_count").get_to(s.value_count);
  j.at("atom_use_counts").get_to(s.atom_use_counts);
  const std::size_t p = static_cast<std::size_t>(s.p);
  if (s.ones.size() != p || s.totals.size() != p || s.value_sum.size() != p || s.value_count.size() != p ||
      s.atom_use_counts.size() != p)
    throw std::runtime_error("plug-in state: per-atom arrays do not match p");
}

// ---------------------------------------------------------------------------
// Frozen per-sample model

/// Code tables shared by every candidate evaluated for one sample.
struct SampleModel {
  std::shared_ptr<const ResidualCodeTable> error;
  int p = 0;
  double delta_a = 16.0;
  bool enumerative_support = true;
  std::vector<double> on_bits, off_bits;  // sequential support code per atom
  double off_bits_sum = 0.0;
  MOEParams moe{};
  std::vector<double> theta_a;  // NaN entries fall back to MOE; empty = all MOE

  Bits support_bits(int nnz) const {
    if (p == 0) return 0.0;
    return support_codelength(p, nnz);
  }
  /// Bits of the magnitude index j = |q| - 1 of atom k.
  Bits value_bits(int k, std::int64_t j) const {
    if (!theta_a.empty() && !std::isnan(theta_a[k])) return exponential_bin_codelength(j, delta_a, theta_a[k]);
    return moe_bin_codelength(j, delta_a, moe);
  }
};

namespace detail {

inline std::mutex& table_cache_mutex() {
  static std::mutex m;
  return m;
}

/// Snap theta to a 2^(1/64) geometric grid so sequential coding reuses tables.
inline double snap_theta(double theta) { return std::exp2(std::round(64.0 * std::log2(theta)) / 64.0); }

}  // namespace detail

/// Cached discretized LG table for (sigma2, snapped theta, delta_e).
inline std::shared_ptr<const ResidualCodeTable> lg_table(double sigma2, double theta, double delta_e) {
  const double th = detail::snap_theta(std::max(theta, kThetaErrorFloor));
  static std::map<std::tuple<double, double, double>, std::shared_ptr<const ResidualCodeTable>> cache;
  const auto key = std::make_tuple(sigma2, th, delta_e);
  {
    std::lock_guard lock(detail::table_cache_mutex());
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto t = ResidualCodeTable::lg(LGParams{sigma2, th}, QuantizationStep{delta_e});
  std::lock_guard lock(detail::table_cache_mutex());
  return cache.emplace(key, t).first->second;
}

/// Cached discretized MOEG table with beta_e = delta_e.
inline std::shared_ptr<const ResidualCodeTable> moeg_table(double sigma2, double delta_e, double kappa = 3.0) {
  static std::map<std::tuple<double, double, double>, std::shared_ptr<const ResidualCodeTable>> cache;
  const auto key = std::make_tuple(sigma2, delta_e, kappa);
  {
    std::lock_guard lock(detail::table_cache_mutex());
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto t = ResidualCodeTable::moeg(MOEGParams{sigma2, kappa, delta_e}, QuantizationStep{delta_e});
  std::lock_guard lock(detail::table_cache_mutex());
  return cache.emplace(key, t).first->second;
}

/// Universal model: MOEG residuals, enumerative support, MOE magnitudes.
inline SampleModel universal_model(int p, double sigma2, double delta_a, double delta_e) {
  SampleModel m;
  m.error = moeg_table(sigma2, delta_e);
  m.p = p;
  m.delta_a = delta_a;
  m.enumerative_support = true;
  return m;
}

/// Plug-in model for one sample. states[k] is atom k's Markov state; an
/// empty vector pools all states (no neighbor dependence).
inline SampleModel plugin_model(const PlugInState& st, const std::vector<MarkovState>& states) {
  SampleModel m;
  m.error = lg_table(st.sigma2, st.theta_e(), st.delta_e);
  m.p = st.p;
  m.delta_a = st.delta_a;
  m.enumerative_support = false;
  m.on_bits.resize(st.p);
  m.off_bits.resize(st.p);
  m.theta_a.resize(st.p);
  for (int k = 0; k < st.p; ++k) {
    const double r = states.empty() ? st.rho_marginal(k) : st.rho(k, states[k]);
    m.on_bits[k] = -std::log2(r);
    m.off_bits[k] = -std::log2(1.0 - r);
    m.off_bits_sum += m.off_bits[k];
    m.theta_a[k] = st.theta_a(k);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Codelength of a given code

struct SampleCodelength {
  CodelengthReport report;
  Eigen::VectorXd residual;  // quantized at delta_e
};

/// Coefficient part (support, signs, values) of a code under a model.
inline CodelengthReport coefficient_codelength(const SparseCode& code, const SampleModel& model) {
  CodelengthReport r;
  const int k = code.nnz();
  if (model.enumerative_support) {
    r.l_support = model.support_bits(k);
    r.l_support_log_p = model.p > 0 ? r.l_support - std::log2(double(model.p) + 1.0) + std::log2(double(model.p)) : 0.0;
  } else {
    r.l_support = model.off_bits_sum;
    for (int a : code.atoms) r.l_support += model.on_bits[a] - model.off_bits[a];
    r.l_support_log_p = r.l_support;
  }
  r.l_signs = k;
  for (int i = 0; i < k; ++i) r.l_values += model.value_bits(code.atoms[i], std::abs(code.q[i]) - 1);
  r.samples = 1;
  r.finalize_total();
  return r;
}

inline SampleCodelength sample_codelength(const Eigen::Ref<const Eigen::VectorXd>& y, const SparseCode& code,
                                          const Dictionary& dict, const SampleModel& model) {
  if (y.size() != dict.m()) throw std::invalid_argument("sample_codelength: dimension mismatch");
  if (model.p != dict.p()) throw std::invalid_argument("sample_codelength: model/dictionary atom count mismatch");
  for (int a : code.atoms)
    if (a < 0 || a >= dict.p()) throw std::invalid_argument("sample_codelength: atom index out of range");
  SampleCodelength out;
  Eigen::VectorXd r = y;
  for (int i = 0; i < code.nnz(); ++i) r -= double(code.q[i]) * code.delta_a * dict.atoms.col(code.atoms[i]);
  const double de = model.error->delta();
  out.residual.resize(r.size());
  out.report = coefficient_codelength(code, model);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const std::int64_t b = quantize_index(r[i], de);
    out.residual[i] = double(b) * de;
    out.report.l_error += model.error->bits(b);
  }
  out.report.finalize_total();
  return out;
}

// ---------------------------------------------------------------------------
// COMPA

struct CompaOptions {
  enum class Stop { codelength, distortion };
  Stop stop = Stop::codelength;
  /// Squared-norm budget of the quantized residual for the distortion stop.
  double distortion_budget = 0.0;
  int max_iterations = 4096;
  bool record_trace = false;
};

struct CompaResult {
  SparseCode code;
  Eigen::VectorXd residual;  // quantize(y - D a, delta_e)
  CodelengthReport report;
  int iterations = 0;
  bool budget_met = true;
  std::vector<double> trace;  // accepted total codelengths, starting with L(y, 0)
};

/// Codelength-minimizing pursuit. gram must be D^T D.
inline CompaResult compa_encode(const Eigen::Ref<const Eigen::VectorXd>& y, const Dictionary& dict,
                                const Eigen::MatrixXd& gram, const SampleModel& model,
                                const CompaOptions& opt = {}) {
  const int m = dict.m(), p = dict.p();
  if (y.size() != m) throw std::invalid_argument("compa_encode: dimension mismatch");
  if (model.p != p) throw std::invalid_argument("compa_encode: model/dictionary atom count mismatch");
  if (!y.allFinite()) throw std::invalid_argument("compa_encode: non-finite input");
  const double da = model.delta_a;
  const ResidualCodeTable& err = *model.error;
  const double de = err.delta();

  Eigen::VectorXd r = y;
  std::vector<std::int64_t> bin(m);
  std::vector<double> bin_bits(m);
  double l_err = 0.0, sq = 0.0;
  for (int i = 0; i < m; ++i) {
    bin[i] = quantize_index(r[i], de);
    bin_bits[i] = err.bits(bin[i]);
    l_err += bin_bits[i];
    sq += double(bin[i]) * double(bin[i]) * de * de;
  }
  Eigen::VectorXd g = p > 0 ? Eigen::VectorXd(dict.atoms.transpose() * y) : Eigen::VectorXd();
  std::vector<std::int64_t> coef(p, 0);
  int nnz = 0;
  double l_support = model.enumerative_support ? model.support_bits(0) : model.off_bits_sum;
  double l_values = 0.0;
  double total = l_err + l_support + l_values;

  CompaResult res;
  if (opt.record_trace) res.trace.push_back(total);
  const bool rd = opt.stop == CompaOptions::Stop::distortion;

  std::vector<std::int64_t> cand_bin(m);
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (rd && sq <= opt.distortion_budget) break;
    int best_k = -1;
    double best_total = std::numeric_limits<double>::infinity(), best_err = 0.0, best_val = 0.0, best_sup = 0.0;
    std::int64_t best_dq = 0;
    for (int k = 0; k < p; ++k) {
      const std::int64_t dq = quantize_index(g[k], da);
      if (dq == 0) continue;
      const std::int64_t q_old = coef[k], q_new = q_old + dq;
      const int dnnz = (q_new != 0) - (q_old != 0);
      double sup = l_support;
      if (dnnz != 0) {
        if (model.enumerative_support) sup = model.support_bits(nnz + dnnz);
        else sup += dnnz * (model.on_bits[k] - model.off_bits[k]);
      }
      double val = l_values;
      if (q_old != 0) val -= model.value_bits(k, std::abs(q_old) - 1);
      if (q_new != 0) val += model.value_bits(k, std::abs(q_new) - 1);
      const double coef_part = sup + (nnz + dnnz) + val;
      if (coef_part >= best_total) continue;  // error part is nonnegative
      const double step = double(dq) * da;
      const double* d = dict.atoms.col(k).data();
      double e_new = 0.0;
      for (int i = 0; i < m; ++i) e_new += err.bits(quantize_index(r[i] - step * d[i], de));
      const double cand = coef_part + e_new;
      if (cand < best_total) {
        best_total = cand;
        best_k = k;
        best_dq = dq;
        best_err = e_new;
        best_val = val;
        best_sup = sup;
      }
    }
    if (best_k < 0) break;                      // every increment quantizes to zero
    if (!rd && best_total >= total) break;      // keep the previous iterate
    const double step = double(best_dq) * da;
    r -= step * dict.atoms.col(best_k);
    g -= step * gram.col(best_k);
    const std::int64_t q_old = coef[best_k];
    coef[best_k] += best_dq;
    nnz += (coef[best_k] != 0) - (q_old != 0);
    l_support = best_sup;
    l_values = best_val;
    l_err = 0.0;
    sq = 0.0;
    for (int i = 0; i < m; ++i) {
      bin[i] = quantize_index(r[i], de);
      l_err += err.bits(bin[i]);
      sq += double(bin[i]) * double(bin[i]) * de * de;
    }
    (void)best_err;
    total = l_err + l_support + nnz + l_values;
    if (opt.record_trace) res.trace.push_back(total);
  }
  res.iterations = it;
  res.budget_met = !rd || sq <= opt.distortion_budget;
  res.code.delta_a = da;
  for (int k = 0; k < p; ++k)
    if (coef[k] != 0) {
      res.code.atoms.push_back(k);
      res.code.q.push_back(coef[k]);
    }
  res.residual.resize(m);
  for (int i = 0; i < m; ++i) res.residual[i] = double(bin[i]) * de;
  res.report = coefficient_codelength(res.code, model);
  res.report.l_error = l_err;
  res.report.finalize_total();
  return res;
}

// ---------------------------------------------------------------------------
// Sequential coding of many samples

/// Raster geometry of the samples, used for the Markov support contexts.
/// width == 0 means no spatial layout (every context is (0,0,0)). offset is
/// the distance, in grid cells, of the north/west neighbors.
struct SampleGrid {
  std::int64_t width = 0;
  std::int64_t offset = 1;
};

/// Markov state of atom k for sample j: occupancy of atom k at the north,
/// west and northwest samples; missing neighbors read as 0.
inline MarkovState markov_state(const std::vector<SparseCode>& codes, std::int64_t j, SampleGrid grid, int k) {
  if (grid.width <= 0) return 0;
  const std::int64_t row = j / grid.width, col = j % grid.width, o = grid.offset;
  const bool n = row >= o && codes[j - o * grid.width].has(k);
  const bool w = col >= o && codes[j - o].has(k);
  const bool nw = row >= o && col >= o && codes[j - o * grid.width - o].has(k);
  return (n ? 4 : 0) + (w ? 2 : 0) + (nw ? 1 : 0);
}

inline std::vector<MarkovState> markov_states(const std::vector<SparseCode>& codes, std::int64_t j, SampleGrid grid,
                                              int p) {
  std::vector<MarkovState> s(p, 0);
  if (grid.width <= 0) return s;
  const std::int64_t row = j / grid.width, col = j % grid.width, o = grid.offset;
  auto mark = [&](std::int64_t idx, int bit) {
    for (int a : codes[idx].atoms) s[a] |= bit;
  };
  if (row >= o) mark(j - o * grid.width, 4);
  if (col >= o) mark(j - o, 2);
  if (row >= o && col >= o) mark(j - o * grid.width - o, 1);
  return s;
}

/// Accumulate the just-coded sample into the plug-in statistics.
inline void plugin_update(PlugInState& st, const SparseCode& code, const Eigen::Ref<const Eigen::VectorXd>& residual,
                          const std::vector<MarkovState>& states) {
  st.residual_sq_sum += residual.squaredNorm();
  st.residual_count += residual.size();
  st.samples_seen += 1;
  for (int k = 0; k < st.p; ++k) st.totals[k][states.empty() ? 0 : states[k]] += 1;
  for (int i = 0; i < code.nnz(); ++i) {
    const int k = code.atoms[i];
    st.ones[k][states.empty() ? 0 : states[k]] += 1;
    st.value_sum[k] += std::max(std::abs(double(code.q[i])) * code.delta_a - st.delta_a, 0.0);
    st.value_count[k] += 1;
    st.atom_use_counts[k] += 1;
  }
}

enum class CodingMode { universal, sequential, frozen };

struct EncodeOptions {
  CodingMode mode = CodingMode::sequential;
  double sigma2 = 0.0;  // Gaussian part of the residual model
  SampleGrid grid{};
  CompaOptions compa{};
  int threads = 1;
  bool keep_residuals = false;
};

struct EncodeResult {
  std::vector<SparseCode> codes;
  std::vector<double> sample_bits;
  Eigen::MatrixXd residuals;  // only with keep_residuals
  CodelengthReport report;    // coefficients and residuals, no dictionary
  PlugInState state;
};

/// Encode the columns of Y. Sequential mode starts from an empty state and
/// codes the first sample with the universal model; frozen mode codes every
/// sample against the supplied state with pooled support contexts.
inline EncodeResult encode_all(const Eigen::MatrixXd& Y, const Dictionary& dict, const EncodeOptions& opt,
                               const PlugInState* frozen = nullptr) {
  if (Y.rows() != dict.m()) throw std::invalid_argument("encode_all: data rows must equal atom dimension");
  const std::int64_t n = Y.cols();
  const int p = dict.p();
  const Eigen::MatrixXd gram = dict.atoms.transpose() * dict.atoms;
  EncodeResult out;
  out.codes.resize(n);
  out.sample_bits.resize(n);
  if (opt.keep_residuals) out.residuals.resize(Y.rows(), n);
  std::vector<CodelengthReport> parts(n);

  if (opt.mode == CodingMode::sequential) {
    out.state = PlugInState(p, opt.sigma2, dict.delta_a, dict.delta_e);
    const SampleModel first = universal_model(p, opt.sigma2, dict.delta_a, dict.delta_e);
    for (std::int64_t j = 0; j < n; ++j) {
      const auto states = markov_states(out.codes, j, opt.grid, p);
      const SampleModel model = j == 0 ? first : plugin_model(out.state, states);
      CompaResult r = compa_encode(Y.col(j), dict, gram, model, opt.compa);
      plugin_update(out.state, r.code, r.residual, states);
      parts[j] = r.report;
      if (opt.keep_residuals) out.residuals.col(j) = r.residual;
      out.codes[j] = std::move(r.code);
    }
  } else {
    SampleModel model;
    if (opt.mode == CodingMode::universal) {
      model = universal_model(p, opt.sigma2, dict.delta_a, dict.delta_e);
    } else {
      if (!frozen || frozen->p != p) throw std::invalid_argument("encode_all: frozen mode needs a matching state");
      model = plugin_model(*frozen, {});
    }
    parallel_for(n, opt.threads, [&](std::int64_t j) {
      CompaResult r = compa_encode(Y.col(j), dict, gram, model, opt.compa);
      parts[j] = r.report;
      if (opt.keep_residuals) out.residuals.col(j) = r.residual;
      out.codes[j] = std::move(r.code);
    });
    if (frozen) out.state = *frozen;
  }
  for (std::int64_t j = 0; j < n; ++j) {
    out.sample_bits[j] = parts[j].total;
    out.report.add(parts[j]);
  }
  return out;
}

/// Dense p x n coefficient matrix of a set of codes.
inline Eigen::MatrixXd coefficient_matrix(const std::vector<SparseCode>& codes, int p) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(codes.size()));
  for (std::size_t j = 0; j < codes.size(); ++j)
    for (int i = 0; i < codes[j].nnz(); ++i) A(codes[j].atoms[i], j) = double(codes[j].q[i]) * codes[j].delta_a;
  return A;
}

/// Y - D A for sparse codes, without forming A.
inline Eigen::MatrixXd residual_matrix(const Eigen::MatrixXd& Y, const Dictionary& dict,
                                       const std::vector<SparseCode>& codes) {
  Eigen::MatrixXd E = Y;
  for (std::size_t j = 0; j < codes.size(); ++j)
    for (int i = 0; i < codes[j].nnz(); ++i)
      E.col(j) -= double(codes[j].q[i]) * codes[j].delta_a * dict.atoms.col(codes[j].atoms[i]);
  return E;
}

/// One CSV record per sample: index, then atom:multiple pairs separated by
/// spaces. Multiples are signed integers in delta_a units.
inline void write_codes_csv(const std::vector<SparseCode>& codes, std::ostream& out) {
  out << "sample,atoms,multiples\n";
  for (std::size_t j = 0; j < codes.size(); ++j) {
    out << j << ',';
    for (int i = 0; i < codes[j].nnz(); ++i) out << (i ? " " : "") << codes[j].atoms[i];
    out << ',';
    for (int i = 0; i < codes[j].nnz(); ++i) out << (i ? " " : "") << codes[j].q[i];
    out << '\n';
  }
}

}  // namespace mdls
