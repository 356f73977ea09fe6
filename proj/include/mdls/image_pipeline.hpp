#pragma once
// Patch extraction and reassembly, denoising and texture segmentation.

#include <Eigen/Dense>
#include <atomic>

#include "mdls/dictionary.hpp"
#include "mdls/image.hpp"
#include "mdls/parallel.hpp"
#include "mdls/sparse_coding.hpp"

namespace mdls {

/// One w x w patch per pixel, raster scanned, DC removed. Column i belongs
/// to pixel i (row-major). anchor says which pixel of the patch sits on
/// the owning pixel: (0,0) for top-left anchored patches, (w/2,w/2) for
/// centered ones.
struct PatchGrid {
  Eigen::MatrixXd patches;
  std::vector<double> dc;
  int image_height = 0, image_width = 0;
  int patch_width = 0;
  int anchor = 0;
};

/// Symmetric reflection of an index into [0, n).
inline int reflect_index(int x, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  x %= period;
  if (x < 0) x += period;
  return x < n ? x : period - 1 - x;
}

namespace detail {

/// Copy the w x w block with top-left (r0, c0), reflected at the borders,
/// into col; optionally subtract its mean. Returns the removed mean.
inline double copy_patch(const Image& img, int r0, int c0, int w, bool remove_dc, double* col) {
  double sum = 0.0;
  for (int i = 0; i < w; ++i) {
    const int rr = reflect_index(r0 + i, img.height);
    for (int k = 0; k < w; ++k) {
      const double v = img(rr, reflect_index(c0 + k, img.width));
      col[i * w + k] = v;
      sum += v;
    }
  }
  if (!remove_dc) return 0.0;
  const double mean = sum / double(w * w);
  for (int i = 0; i < w * w; ++i) col[i] -= mean;
  return mean;
}

}  // namespace detail

/// Patch at pixel (r, c) covers rows r-anchor .. r-anchor+w-1 (likewise for
/// columns), reflected at the borders.
inline PatchGrid extract_patches(const Image& img, int w, bool remove_dc = true, int anchor = 0) {
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("extract_patches: empty image");
  if (w < 1 || w > std::min(img.height, img.width)) throw std::invalid_argument("extract_patches: bad patch width");
  PatchGrid g;
  g.image_height = img.height;
  g.image_width = img.width;
  g.patch_width = w;
  g.anchor = anchor;
  const std::int64_t n = std::int64_t(img.height) * img.width;
  g.patches.resize(w * w, n);
  g.dc.assign(n, 0.0);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const std::int64_t j = std::int64_t(r) * img.width + c;
      g.dc[j] = detail::copy_patch(img, r - anchor, c - anchor, w, remove_dc, g.patches.col(j).data());
    }
  return g;
}

/// DC-removed top-left anchored patches at the pixels whose row and column
/// are multiples of stride, raster order. grid_width receives the number of
/// patches per row; stride 1 gives the columns of extract_patches.
inline Eigen::MatrixXd extract_strided_patches(const Image& img, int w, int stride,
                                               std::int64_t* grid_width = nullptr) {
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("extract_strided_patches: empty image");
  if (w < 1 || w > std::min(img.height, img.width))
    throw std::invalid_argument("extract_strided_patches: bad patch width");
  if (stride < 1) throw std::invalid_argument("extract_strided_patches: stride must be >= 1");
  const int gh = (img.height + stride - 1) / stride, gw = (img.width + stride - 1) / stride;
  Eigen::MatrixXd Y(w * w, std::int64_t(gh) * gw);
  for (int i = 0; i < gh; ++i)
    for (int k = 0; k < gw; ++k) detail::copy_patch(img, i * stride, k * stride, w, true, Y.col(std::int64_t(i) * gw + k).data());
  if (grid_width) *grid_width = gw;
  return Y;
}

/// Average of all patch estimates covering each pixel (DC restored), blended
/// with the noisy pixel by lambda and clamped to [0, 255]. Reflected patch
/// pixels are folded back onto their source pixel.
inline Image reconstruct_average(const PatchGrid& g, const Eigen::MatrixXd& estimates, const Image& noisy,
                                 double lambda_blend = 0.0) {
  if (estimates.rows() != g.patches.rows() || estimates.cols() != g.patches.cols())
    throw std::invalid_argument("reconstruct_average: estimate size mismatch");
  if (noisy.height != g.image_height || noisy.width != g.image_width)
    throw std::invalid_argument("reconstruct_average: image size mismatch");
  const int w = g.patch_width;
  Image sum(g.image_height, g.image_width), count(g.image_height, g.image_width);
  for (int r = 0; r < g.image_height; ++r)
    for (int c = 0; c < g.image_width; ++c) {
      const std::int64_t j = std::int64_t(r) * g.image_width + c;
      const double* col = estimates.col(j).data();
      for (int i = 0; i < w; ++i) {
        const int rr = reflect_index(r - g.anchor + i, g.image_height);
        for (int k = 0; k < w; ++k) {
          const int cc = reflect_index(c - g.anchor + k, g.image_width);
          sum(rr, cc) += col[i * w + k] + g.dc[j];
          count(rr, cc) += 1.0;
        }
      }
    }
  Image out(g.image_height, g.image_width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double avg = sum.pixels[i] / count.pixels[i];
    out.pixels[i] = std::clamp((1.0 - lambda_blend) * avg + lambda_blend * noisy.pixels[i], 0.0, 255.0);
  }
  return out;
}

/// Non-overlapping w x w tiles in raster order (no DC removal). The image
/// is extended by reflection to a multiple of w.
inline Eigen::MatrixXd extract_tiles(const Image& img, int w, std::int64_t* tiles_per_row = nullptr) {
  const int th = (img.height + w - 1) / w, tw = (img.width + w - 1) / w;
  Eigen::MatrixXd Y(w * w, std::int64_t(th) * tw);
  for (int tr = 0; tr < th; ++tr)
    for (int tc = 0; tc < tw; ++tc) {
      const std::int64_t j = std::int64_t(tr) * tw + tc;
      for (int i = 0; i < w; ++i)
        for (int k = 0; k < w; ++k)
          Y(i * w + k, j) = img(reflect_index(tr * w + i, img.height), reflect_index(tc * w + k, img.width));
    }
  if (tiles_per_row) *tiles_per_row = tw;
  return Y;
}

/// Coordinate-wise soft thresholding, the prox of tau |.|_1.
inline double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

// ---------------------------------------------------------------------------
// Denoising

struct DenoiseConfig {
  enum class Variant { rd, pt };
  double sigma = 10.0;
  Variant variant = Variant::rd;
  double C = 1.0;
  /// Budget C m sigma^2 when true, C sigma^2 when false.
  bool budget_scales_with_m = true;
  double lambda_blend = 0.0;
  int threads = 0;
  int max_iterations = 1024;
  /// With a plug-in state: > 0 codes patches in raster order with Markov
  /// support contexts whose neighbors sit this many pixels away (the
  /// subsampling stride the state was learned at); 0 pools the contexts and
  /// codes patches independently.
  int markov_offset = 0;
};

struct DenoiseStats {
  double mean_nnz = 0.0;
  double mean_iterations = 0.0;
  double budget_met_fraction = 1.0;
  double mean_bits = 0.0;
};

/// PT correction of one patch residual: theta = sqrt(0.5 max(0, var - sigma^2))
/// and threshold sigma^2 / (2 theta); zero when theta is zero.
inline Eigen::VectorXd pt_residual(const Eigen::VectorXd& resid, double sigma) {
  const double var = resid.squaredNorm() / double(resid.size());
  const double theta = std::sqrt(0.5 * std::max(0.0, var - sigma * sigma));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(resid.size());
  if (theta <= 0.0) return out;
  const double tau = sigma * sigma / (2.0 * theta);
  for (Eigen::Index i = 0; i < resid.size(); ++i) out[i] = soft_threshold(resid[i], tau);
  return out;
}

/// Denoise with a patch dictionary. With a plug-in state the sample model is
/// frozen from it (pooled support contexts); otherwise the universal model
/// with sigma^2 as the Gaussian part is used.
inline Image denoise(const Image& noisy, const Dictionary& dict, const DenoiseConfig& cfg,
                     const PlugInState* state = nullptr, DenoiseStats* stats = nullptr) {
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("denoise: sigma must be positive");
  if (!(cfg.C > 0.0)) throw std::invalid_argument("denoise: C must be positive");
  if (dict.patch_width < 1) throw std::invalid_argument("denoise: dictionary must be a patch dictionary");
  const int w = dict.patch_width, m = w * w;
  const PatchGrid grid = extract_patches(noisy, w, true, 0);
  const double s2 = cfg.sigma * cfg.sigma;
  const bool markov = state && cfg.markov_offset > 0;
  const SampleModel model = !state ? universal_model(dict.p(), s2, dict.delta_a, dict.delta_e)
                            : markov ? SampleModel{}
                                     : plugin_model(*state, {});
  const Eigen::MatrixXd gram = dict.atoms.transpose() * dict.atoms;
  CompaOptions opt;
  opt.max_iterations = cfg.max_iterations;
  if (cfg.variant == DenoiseConfig::Variant::rd) {
    opt.stop = CompaOptions::Stop::distortion;
    opt.distortion_budget = cfg.C * s2 * (cfg.budget_scales_with_m ? m : 1);
  }
  const std::int64_t n = grid.patches.cols();
  Eigen::MatrixXd est(m, n);
  std::vector<int> nnz(n), iters(n);
  std::vector<char> met(n);
  std::vector<double> bits(n);
  std::vector<SparseCode> codes(markov ? n : 0);
  const SampleGrid sgrid{noisy.width, cfg.markov_offset};
  auto code_one = [&](std::int64_t j) {
    const Eigen::VectorXd y = grid.patches.col(j);
    const CompaResult r =
        markov ? compa_encode(y, dict, gram, plugin_model(*state, markov_states(codes, j, sgrid, dict.p())), opt)
               : compa_encode(y, dict, gram, model, opt);
    if (markov) codes[j] = r.code;
    Eigen::VectorXd approx = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < r.code.nnz(); ++i)
      approx += double(r.code.q[i]) * r.code.delta_a * dict.atoms.col(r.code.atoms[i]);
    if (cfg.variant == DenoiseConfig::Variant::pt) approx += pt_residual(y - approx, cfg.sigma);
    est.col(j) = approx;
    nnz[j] = r.code.nnz();
    iters[j] = r.iterations;
    met[j] = r.budget_met;
    bits[j] = r.report.total;
  };
  if (markov) {
    for (std::int64_t j = 0; j < n; ++j) code_one(j);
  } else {
    parallel_for(n, cfg.threads, code_one);
  }
  if (stats) {
    double a = 0, b = 0, c = 0, d = 0;
    for (std::int64_t j = 0; j < n; ++j) a += nnz[j], b += iters[j], c += met[j], d += bits[j];
    *stats = {a / double(n), b / double(n), c / double(n), d / double(n)};
  }
  return reconstruct_average(grid, est, noisy, cfg.lambda_blend);
}

// ---------------------------------------------------------------------------
// Texture segmentation

/// A class model: dictionary and the plug-in state it was learned with.
struct TextureClass {
  Dictionary dict;
  PlugInState state;
  double sigma2 = 0.0;
};

/// Mean of values over the disk of the given radius around each pixel
/// (clipped to the image). radius 0 returns the input.
inline std::vector<double> disk_average(const std::vector<double>& v, int h, int w, int radius) {
  if (radius <= 0) return v;
  std::vector<double> prefix(std::size_t(h) * (w + 1), 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) prefix[std::size_t(r) * (w + 1) + c + 1] = prefix[std::size_t(r) * (w + 1) + c] + v[std::size_t(r) * w + c];
  std::vector<double> out(v.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double sum = 0.0, cnt = 0.0;
      for (int dr = -radius; dr <= radius; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= h) continue;
        const int half = static_cast<int>(std::floor(std::sqrt(double(radius) * radius - double(dr) * dr)));
        const int c0 = std::max(0, c - half), c1 = std::min(w - 1, c + half);
        sum += prefix[std::size_t(rr) * (w + 1) + c1 + 1] - prefix[std::size_t(rr) * (w + 1) + c0];
        cnt += c1 - c0 + 1;
      }
      out[std::size_t(r) * w + c] = sum / cnt;
    }
  return out;
}

/// Per-pixel codelength of the centered patch under each class.
inline std::vector<std::vector<double>> class_codelengths(const Image& mosaic, const std::vector<TextureClass>& classes,
                                                          int threads = 0) {
  std::vector<std::vector<double>> bits;
  for (const auto& cls : classes) {
    const int w = cls.dict.patch_width;
    const PatchGrid grid = extract_patches(mosaic, w, true, w / 2);
    const SampleModel model = plugin_model(cls.state, {});
    const Eigen::MatrixXd gram = cls.dict.atoms.transpose() * cls.dict.atoms;
    std::vector<double> b(grid.patches.cols());
    parallel_for(grid.patches.cols(), threads, [&](std::int64_t j) {
      b[j] = compa_encode(grid.patches.col(j), cls.dict, gram, model).report.total;
    });
    bits.push_back(std::move(b));
  }
  return bits;
}

/// Label map from per-class codelength maps: argmin of the disk-averaged
/// codelength, ties to the lowest class index.
inline std::vector<int> segment_from_codelengths(const std::vector<std::vector<double>>& bits, int h, int w,
                                                 int radius) {
  if (bits.size() < 2) throw std::invalid_argument("segmentation needs at least two classes");
  std::vector<std::vector<double>> avg;
  for (const auto& b : bits) avg.push_back(disk_average(b, h, w, radius));
  std::vector<int> labels(std::size_t(h) * w, 0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t c = 1; c < avg.size(); ++c)
      if (avg[c][i] < avg[labels[i]][i]) labels[i] = static_cast<int>(c);
  return labels;
}

inline std::vector<int> segment_textures(const Image& mosaic, const std::vector<TextureClass>& classes, int radius,
                                         int threads = 0) {
  if (classes.size() < 2) throw std::invalid_argument("segment_textures: need at least two classes");
  return segment_from_codelengths(class_codelengths(mosaic, classes, threads), mosaic.height, mosaic.width, radius);
}

}  // namespace mdls
