// mdls: command-line front end (learn, compress-report, denoise, segment,
// lowrank, noise). Exit codes: 0 success, 2 usage or input error,
// 3 numerical failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mdls/mdls.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

mdls::Image load_image(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("no such file: " + path);
  try {
    return mdls::read_image(path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError(what + " is not finite");
}

// A learned model is a dictionary file plus an optional JSON sidecar
// "<dictionary>.state.json" holding the plug-in state and the pixel offset
// of the Markov neighbors it was learned with.
struct Model {
  mdls::Dictionary dict;
  std::optional<mdls::PlugInState> state;
  int neighbor_offset = 0;
};

std::string sidecar_path(const std::string& dict_path) { return dict_path + ".state.json"; }

void save_model(const std::string& path, const mdls::Dictionary& dict, const mdls::PlugInState& state,
                int neighbor_offset) {
  mdls::save_dictionary(dict, path);
  std::ofstream out(sidecar_path(path));
  if (!out) throw InputError("cannot write " + sidecar_path(path));
  out << json{{"schema", mdls::kReportSchema}, {"neighbor_offset", neighbor_offset}, {"state", state}}.dump() << '\n';
}

Model load_model(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("no such file: " + path);
  Model m;
  try {
    m.dict = mdls::load_dictionary(path);
    if (fs::is_regular_file(sidecar_path(path))) {
      std::ifstream in(sidecar_path(path));
      const json j = json::parse(in);
      m.state = j.at("state").get<mdls::PlugInState>();
      m.neighbor_offset = j.value("neighbor_offset", 0);
      if (m.state->p != m.dict.p()) throw std::runtime_error("state does not match the dictionary size");
    }
  } catch (const std::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return m;
}

json dictionary_summary(const mdls::Dictionary& d) {
  return json{{"m", d.m()}, {"p", d.p()}, {"patch_width", d.patch_width}, {"theta_d", d.theta_d},
              {"delta_a", d.delta_a}, {"delta_e", d.delta_e}};
}

/// "dct<p>" builds an overcomplete DCT frame; anything else is a dictionary file.
mdls::Dictionary initial_dictionary(const std::string& spec, int patch_width, double delta_a) {
  mdls::Dictionary d;
  if (spec.rfind("dct", 0) == 0) {
    int p = 0;
    try {
      p = std::stoi(spec.substr(3));
    } catch (const std::exception&) {
      throw InputError("bad --init value: " + spec);
    }
    if (p < 1) throw InputError("bad --init value: " + spec);
    d = mdls::overcomplete_dct_frame(patch_width * patch_width, p);
  } else {
    d = load_model(spec).dict;
    if (d.patch_width != patch_width) throw InputError("--init dictionary has a different patch width");
  }
  d.delta_a = delta_a;
  return d;
}

/// Training samples of several images, stacked in raster order. Markov
/// contexts need one common sample-grid width; otherwise they are disabled.
struct Samples {
  Eigen::MatrixXd Y;
  mdls::SampleGrid grid;
  int neighbor_offset = 0;  // pixels between Markov neighbors
};

Samples training_samples(const std::vector<std::string>& paths, int w, const std::string& sampling, int stride) {
  Samples s;
  std::vector<Eigen::MatrixXd> parts;
  std::int64_t width = -1;
  bool common = true;
  for (const auto& p : paths) {
    const mdls::Image img = load_image(p);
    if (w > std::min(img.height, img.width)) throw InputError(p + ": image smaller than the patch width");
    std::int64_t gw = 0;
    parts.push_back(sampling == "tiles" ? mdls::extract_tiles(img, w, &gw)
                                        : mdls::extract_strided_patches(img, w, stride, &gw));
    if (width >= 0 && gw != width) common = false;
    width = gw;
  }
  std::int64_t n = 0;
  for (const auto& P : parts) n += P.cols();
  s.Y.resize(w * w, n);
  std::int64_t at = 0;
  for (const auto& P : parts) {
    s.Y.middleCols(at, P.cols()) = P;
    at += P.cols();
  }
  if (common) {
    s.grid.width = width;
    s.neighbor_offset = sampling == "tiles" ? w : stride;
  }
  return s;
}

// ---------------------------------------------------------------------------

struct Common {
  int threads = mdls::default_thread_count();
  std::string report = "-";
  bool verbose = false;
};

struct LearnArgs {
  std::vector<std::string> images;
  std::string out, method = "backward", init = "dct256", sampling = "tiles";
  int patch_width = 8, inner_iters = 10, outer_iters = 50, prune_iters = 3, p_max = 512, stride = 1;
  double delta_a = 16.0, sigma = 0.0, epsilon = 1e-3;
};

int cmd_learn(const LearnArgs& a, const Common& c) {
  mdls::Stopwatch clock;
  const Samples s = training_samples(a.images, a.patch_width, a.sampling, a.stride);
  mdls::LearnConfig cfg;
  cfg.epsilon_converge = a.epsilon;
  cfg.max_outer_iters = a.outer_iters;
  cfg.partial_update_iters = a.inner_iters;
  cfg.prune_outer_iters = a.prune_iters;
  cfg.p_max = a.p_max;
  cfg.sigma2 = a.sigma > 0 ? a.sigma * a.sigma : 1.0 / 12.0;
  cfg.grid = s.grid;
  cfg.threads = c.threads;
  cfg.verbose = c.verbose;
  mdls::SizeSelectionResult r;
  if (a.method == "backward") {
    r = mdls::learn_backward(s.Y, initial_dictionary(a.init, a.patch_width, a.delta_a), cfg);
  } else {
    r = mdls::learn_forward(s.Y, a.patch_width, cfg, a.method == "forward-partial", a.delta_a);
  }
  require_finite(r.best.report.total, "codelength");
  save_model(a.out, r.best.dict, r.best.state, s.neighbor_offset);

  json config{{"images", a.images},         {"method", a.method},        {"init", a.init},
              {"patch_width", a.patch_width}, {"delta_a", a.delta_a},    {"sigma2", cfg.sigma2},
              {"sampling", a.sampling},     {"stride", a.stride},        {"inner_iters", a.inner_iters},
              {"outer_iters", a.outer_iters}, {"prune_iters", a.prune_iters}, {"p_max", a.p_max},
              {"epsilon", a.epsilon},       {"threads", c.threads},      {"out", a.out}};
  json rep = mdls::make_report("learn", config);
  json path = json::array();
  for (auto [p, bits] : r.path) path.push_back({{"p", p}, {"total_bits", bits}});
  rep["results"] = {{"dictionary", dictionary_summary(r.best.dict)},
                    {"samples", s.Y.cols()},
                    {"markov_contexts", s.grid.width > 0},
                    {"bits_per_pixel", r.best.report.bits_per_pixel},
                    {"codelength", r.best.report},
                    {"size_path", path},
                    {"learn_seconds", r.seconds}};
  rep["timing"] = {{"wall_seconds", clock.seconds()}};
  mdls::write_report(rep, c.report);
  return 0;
}

// ---------------------------------------------------------------------------

struct CompressArgs {
  std::vector<std::string> images;
  std::string dict;
  double sigma2 = 1.0 / 12.0;
};

int cmd_compress(const CompressArgs& a, const Common& c) {
  mdls::Stopwatch clock;
  const Model model = load_model(a.dict);
  const int w = model.dict.patch_width;
  if (w < 1) throw InputError("compress-report needs a patch dictionary");
  json per_image = json::array();
  mdls::CodelengthReport all;
  std::int64_t pixels_all = 0;
  for (const auto& path : a.images) {
    const mdls::Image img = load_image(path);
    if (w > std::min(img.height, img.width)) throw InputError(path + ": image smaller than the dictionary patches");
    std::int64_t tw = 0;
    const Eigen::MatrixXd Y = mdls::extract_tiles(img, w, &tw);
    mdls::EncodeOptions eo;
    eo.mode = mdls::CodingMode::sequential;
    eo.sigma2 = a.sigma2;
    eo.grid.width = tw;
    const mdls::EncodeResult enc = mdls::encode_all(Y, model.dict, eo);
    mdls::CodelengthReport rep = enc.report;
    rep.bits_per_pixel = rep.total / double(img.size());
    require_finite(rep.total, "codelength");
    const double l_dict = mdls::dictionary_codelength(model.dict, Y.cols());
    per_image.push_back({{"image", path},
                         {"pixels", img.size()},
                         {"codelength", rep},
                         {"bits_per_pixel", rep.bits_per_pixel},
                         {"dictionary_bits", l_dict},
                         {"bits_per_pixel_with_dictionary", (rep.total + l_dict) / double(img.size())}});
    all.add(rep);
    pixels_all += std::int64_t(img.size());
  }
  all.bits_per_pixel = all.total / double(std::max<std::int64_t>(pixels_all, 1));
  json rep = mdls::make_report("compress-report", json{{"images", a.images}, {"dict", a.dict}, {"sigma2", a.sigma2},
                                                       {"threads", c.threads}});
  rep["results"] = {{"dictionary", dictionary_summary(model.dict)},
                    {"images", per_image},
                    {"total", all},
                    {"bits_per_pixel", all.bits_per_pixel}};
  rep["timing"] = {{"wall_seconds", clock.seconds()}};
  mdls::write_report(rep, c.report);
  return 0;
}

// ---------------------------------------------------------------------------

struct DenoiseArgs {
  std::string input, out, dict, reference, variant = "rd", adapt = "fixed", budget = "m", save_dict;
  double sigma = 0.0, C = 1.0, lambda_blend = 0.0;
  int learn_iters = 5, stride = 4, max_iterations = 1024;
  bool markov = true;
};

int cmd_denoise(const DenoiseArgs& a, const Common& c) {
  mdls::Stopwatch clock;
  if (!(a.sigma > 0)) throw InputError("--sigma must be positive");
  const mdls::Image noisy = load_image(a.input);
  std::optional<mdls::Image> ref;
  if (!a.reference.empty()) {
    ref = load_image(a.reference);
    if (ref->height != noisy.height || ref->width != noisy.width) throw InputError("reference size differs");
  }
  Model model;
  double learn_seconds = 0.0;
  if (!a.dict.empty()) {
    model = load_model(a.dict);
  } else {
    model.dict = mdls::overcomplete_dct_frame(64, 256);
    if (a.adapt != "none") {
      std::int64_t gw = 0;
      const Eigen::MatrixXd Y = mdls::extract_strided_patches(noisy, 8, a.stride, &gw);
      mdls::LearnConfig cfg;
      cfg.sigma2 = a.sigma * a.sigma;
      cfg.grid.width = gw;
      cfg.max_outer_iters = a.learn_iters;
      cfg.threads = c.threads;
      cfg.verbose = c.verbose;
      mdls::SizeSelectionResult r;
      if (a.adapt == "backward") r = mdls::learn_backward(Y, model.dict, cfg);
      else r.best = mdls::learn_fixed_size(Y, model.dict, cfg);
      model.dict = r.best.dict;
      model.state = r.best.state;
      model.neighbor_offset = a.stride;
      learn_seconds = r.best.seconds;
      if (!a.save_dict.empty()) save_model(a.save_dict, model.dict, *model.state, a.stride);
    }
  }
  if (model.dict.patch_width < 1 || model.dict.patch_width > std::min(noisy.height, noisy.width))
    throw InputError("dictionary patches do not fit the image");
  mdls::DenoiseConfig cfg;
  cfg.sigma = a.sigma;
  cfg.variant = a.variant == "pt" ? mdls::DenoiseConfig::Variant::pt : mdls::DenoiseConfig::Variant::rd;
  cfg.C = a.C;
  cfg.budget_scales_with_m = a.budget == "m";
  cfg.lambda_blend = a.lambda_blend;
  cfg.threads = c.threads;
  cfg.max_iterations = a.max_iterations;
  cfg.markov_offset = a.markov && model.state ? model.neighbor_offset : 0;
  mdls::DenoiseStats stats;
  const mdls::Image out = mdls::denoise(noisy, model.dict, cfg, model.state ? &*model.state : nullptr, &stats);
  if (!a.out.empty()) mdls::write_image(out, a.out);

  json config{{"input", a.input},     {"out", a.out},           {"dict", a.dict},       {"reference", a.reference},
              {"variant", a.variant}, {"sigma", a.sigma},       {"C", a.C},             {"budget", a.budget},
              {"lambda_blend", a.lambda_blend}, {"adapt", a.adapt}, {"learn_iters", a.learn_iters},
              {"stride", a.stride},   {"markov", a.markov},     {"max_iterations", a.max_iterations},
              {"threads", c.threads}};
  json rep = mdls::make_report("denoise", config);
  rep["results"] = {{"dictionary", dictionary_summary(model.dict)},
                    {"model", model.state ? (cfg.markov_offset > 0 ? "plug-in, markov" : "plug-in, pooled")
                                          : "universal"},
                    {"mean_nnz", stats.mean_nnz},
                    {"mean_iterations", stats.mean_iterations},
                    {"budget_met_fraction", stats.budget_met_fraction},
                    {"mean_bits_per_patch", stats.mean_bits}};
  if (ref) {
    rep["results"]["psnr"] = mdls::json_number(mdls::psnr(*ref, out));
    rep["results"]["psnr_noisy"] = mdls::json_number(mdls::psnr(*ref, noisy));
  }
  rep["timing"] = {{"learn_seconds", learn_seconds}, {"wall_seconds", clock.seconds()}};
  mdls::write_report(rep, c.report);
  return 0;
}

// ---------------------------------------------------------------------------

struct SegmentArgs {
  std::string mosaic, truth, out;
  std::vector<std::string> dicts;
  int radius = 20;
  double sigma2 = 1.0 / 12.0;
};

/// Label k of c classes is stored as gray level round(k * 255 / (c - 1)).
std::uint8_t label_gray(int k, int classes) { return static_cast<std::uint8_t>(std::lround(255.0 * k / (classes - 1))); }
int gray_label(double v, int classes) { return std::clamp(int(std::lround(v * (classes - 1) / 255.0)), 0, classes - 1); }

int cmd_segment(const SegmentArgs& a, const Common& c) {
  mdls::Stopwatch clock;
  if (a.dicts.size() < 2) throw InputError("segment needs at least two dictionaries");
  if (a.radius < 0) throw InputError("--radius must be >= 0");
  const mdls::Image mosaic = load_image(a.mosaic);
  std::vector<mdls::TextureClass> classes;
  for (const auto& d : a.dicts) {
    Model m = load_model(d);
    if (m.dict.patch_width < 1 || m.dict.patch_width > std::min(mosaic.height, mosaic.width))
      throw InputError(d + ": patches do not fit the mosaic");
    if (!m.state) throw InputError(d + ": no plug-in state (" + sidecar_path(d) + ")");
    mdls::TextureClass tc;
    tc.dict = m.dict;
    tc.state = *m.state;
    tc.sigma2 = tc.state.sigma2;
    classes.push_back(std::move(tc));
  }
  const int nc = int(classes.size());
  const auto bits = mdls::class_codelengths(mosaic, classes, c.threads);
  const auto labels = mdls::segment_from_codelengths(bits, mosaic.height, mosaic.width, a.radius);
  if (!a.out.empty()) {
    mdls::Image map(mosaic.height, mosaic.width);
    for (std::size_t i = 0; i < labels.size(); ++i) map.pixels[i] = label_gray(labels[i], nc);
    mdls::write_image(map, a.out);
  }
  json config{{"mosaic", a.mosaic}, {"dicts", a.dicts}, {"radius", a.radius}, {"truth", a.truth}, {"out", a.out},
              {"threads", c.threads}};
  json rep = mdls::make_report("segment", config);
  std::vector<std::int64_t> counts(nc, 0);
  for (int l : labels) counts[l]++;
  rep["results"] = {{"classes", nc}, {"label_counts", counts}};
  if (!a.truth.empty()) {
    const mdls::Image truth = load_image(a.truth);
    if (truth.height != mosaic.height || truth.width != mosaic.width) throw InputError("ground truth size differs");
    const auto patchwise = mdls::segment_from_codelengths(bits, mosaic.height, mosaic.width, 0);
    std::int64_t ok = 0, ok_patch = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int t = gray_label(truth.pixels[i], nc);
      ok += labels[i] == t;
      ok_patch += patchwise[i] == t;
    }
    rep["results"]["accuracy"] = double(ok) / double(labels.size());
    rep["results"]["patchwise_accuracy"] = double(ok_patch) / double(labels.size());
  }
  rep["timing"] = {{"wall_seconds", clock.seconds()}};
  mdls::write_report(rep, c.report);
  return 0;
}

// ---------------------------------------------------------------------------

struct LowrankArgs {
  std::string frames_dir, raw, dims, out_dir;
  std::vector<double> lambda_scales{0.25, 0.5, 1.0, 2.0, 4.0}, q_grid{0.05, 0.1, 0.2, 0.4, 0.8};
  int max_frames = 0;
};

struct Frames {
  Eigen::MatrixXd Y;  // one column per frame
  int height = 0, width = 0;
  std::vector<std::string> names;
};

Frames read_frames(const LowrankArgs& a) {
  Frames f;
  std::vector<mdls::Image> imgs;
  if (!a.raw.empty()) {
    int h = 0, w = 0, n = 0;
    char x1 = 0, x2 = 0;
    std::istringstream ds(a.dims);
    if (!(ds >> h >> x1 >> w >> x2 >> n) || x1 != 'x' || x2 != 'x' || h < 1 || w < 1 || n < 1)
      throw InputError("--dims must be HxWxN");
    std::ifstream in(a.raw, std::ios::binary);
    if (!in) throw InputError("cannot read " + a.raw);
    std::vector<unsigned char> buf(std::size_t(h) * w);
    for (int k = 0; k < n; ++k) {
      if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
        throw InputError(a.raw + ": fewer frames than --dims says");
      mdls::Image img(h, w);
      for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i];
      imgs.push_back(std::move(img));
      f.names.push_back(a.raw + "#" + std::to_string(k));
    }
  } else {
    if (!fs::is_directory(a.frames_dir)) throw InputError("not a directory: " + a.frames_dir);
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(a.frames_dir)) {
      const std::string p = e.path().string();
      if (e.is_regular_file() && (mdls::has_suffix(p, ".pgm") || mdls::has_suffix(p, ".png"))) paths.push_back(p);
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      imgs.push_back(load_image(p));
      f.names.push_back(p);
    }
  }
  if (a.max_frames > 0 && int(imgs.size()) > a.max_frames) {
    imgs.resize(a.max_frames);
    f.names.resize(a.max_frames);
  }
  if (imgs.empty()) throw InputError("no frames found");
  f.height = imgs[0].height;
  f.width = imgs[0].width;
  f.Y.resize(std::int64_t(f.height) * f.width, std::int64_t(imgs.size()));
  for (std::size_t k = 0; k < imgs.size(); ++k) {
    if (imgs[k].height != f.height || imgs[k].width != f.width) throw InputError("frames differ in size");
    f.Y.col(std::int64_t(k)) = Eigen::Map<const Eigen::VectorXd>(imgs[k].pixels.data(), std::int64_t(imgs[k].size()));
  }
  return f;
}

int cmd_lowrank(const LowrankArgs& a, const Common& c) {
  mdls::Stopwatch clock;
  const Frames f = read_frames(a);
  mdls::LowRankSelectOptions opt;
  opt.lambda_scales = a.lambda_scales;
  opt.Q_grid = a.q_grid;
  for (double q : opt.Q_grid)
    if (!(q > 0 && q < 1)) throw InputError("--q-grid values must be in (0, 1)");
  for (double l : opt.lambda_scales)
    if (!(l > 0)) throw InputError("--lambda-scales values must be positive");
  opt.geometry = {f.height, f.width};
  opt.threads = c.threads;
  const mdls::LowRankSelection sel = mdls::select_model(f.Y, opt);
  require_finite(sel.best.codelength.total, "codelength");

  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    const Eigen::MatrixXd B = sel.best.low_rank();
    for (Eigen::Index k = 0; k < f.Y.cols(); ++k) {
      mdls::Image bg(f.height, f.width), fg(f.height, f.width);
      for (std::size_t i = 0; i < bg.size(); ++i) {
        bg.pixels[i] = B(Eigen::Index(i), k);
        fg.pixels[i] = std::abs(sel.best.E(Eigen::Index(i), k));
      }
      char name[64];
      std::snprintf(name, sizeof name, "background_%04d.pgm", int(k));
      mdls::write_pgm(bg, (fs::path(a.out_dir) / name).string());
      std::snprintf(name, sizeof name, "foreground_%04d.pgm", int(k));
      mdls::write_pgm(fg, (fs::path(a.out_dir) / name).string());
    }
    std::ofstream csv(fs::path(a.out_dir) / "lambda_curve.csv");
    csv << "lambda,Q,rank,support,total,l_u,l_sigma,l_v,l_e_support,l_e_values,rpca_iterations,converged\n";
    csv << std::setprecision(12);
    for (const auto& p : sel.curve)
      csv << p.lambda << ',' << p.Q << ',' << p.rank << ',' << p.support << ',' << p.codelength.total << ','
          << p.codelength.l_u << ',' << p.codelength.l_s << ',' << p.codelength.l_v << ','
          << p.codelength.l_support << ',' << p.codelength.l_e << ',' << p.rpca_iterations << ','
          << (p.converged ? 1 : 0) << '\n';
  }
  json config{{"frames_dir", a.frames_dir}, {"raw", a.raw},       {"dims", a.dims},
              {"lambda_scales", a.lambda_scales}, {"q_grid", a.q_grid}, {"max_frames", a.max_frames},
              {"out_dir", a.out_dir},       {"threads", c.threads}};
  json rep = mdls::make_report("lowrank", config);
  rep["results"] = {{"frames", f.Y.cols()},
                    {"frame_height", f.height},
                    {"frame_width", f.width},
                    {"lambda", sel.best.lambda},
                    {"Q", sel.best.Q},
                    {"rank", sel.best.rank},
                    {"support", sel.best.support().sum()},
                    {"codelength", sel.best.codelength},
                    {"curve", sel.curve},
                    {"all_converged", sel.all_converged}};
  rep["timing"] = {{"wall_seconds", clock.seconds()}};
  mdls::write_report(rep, c.report);
  return 0;
}

// ---------------------------------------------------------------------------

struct NoiseArgs {
  std::string input, out;
  double sigma = 0.0;
  std::uint64_t seed = 1;
};

int cmd_noise(const NoiseArgs& a, const Common& c) {
  if (!(a.sigma >= 0)) throw InputError("--sigma must be >= 0");
  const mdls::Image img = load_image(a.input);
  const mdls::Image noisy = mdls::add_gaussian_noise(img, a.sigma, a.seed);
  mdls::write_image(noisy, a.out);
  json rep = mdls::make_report("noise", json{{"input", a.input}, {"out", a.out}, {"sigma", a.sigma}, {"seed", a.seed}});
  rep["results"] = {{"psnr", mdls::json_number(mdls::psnr(img, noisy))}};
  mdls::write_report(rep, c.report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse modeling by minimum description length"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (default: MDLS_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--report", common.report, "JSON report path ('-' = stdout)");
  app.add_flag("-v,--verbose", common.verbose, "Progress on stderr");

  LearnArgs learn;
  auto* l = app.add_subcommand("learn", "Learn a dictionary and its plug-in state");
  l->add_option("images", learn.images, "Training images (PGM/PNG)")->required();
  l->add_option("-o,--out", learn.out, "Dictionary file (the state goes to <out>.state.json)")->required();
  l->add_option("--method", learn.method)->check(CLI::IsMember({"backward", "forward", "forward-partial"}));
  l->add_option("--init", learn.init, "Initial dictionary for backward: dct<p> or a dictionary file");
  l->add_option("--inner-iters", learn.inner_iters, "Outer iterations per size for forward-partial")
      ->check(CLI::PositiveNumber);
  l->add_option("--outer-iters", learn.outer_iters, "Cap on coding/update alternations")->check(CLI::PositiveNumber);
  l->add_option("--prune-iters", learn.prune_iters, "Alternations after each backward pruning step")
      ->check(CLI::NonNegativeNumber);
  l->add_option("--p-max", learn.p_max)->check(CLI::PositiveNumber);
  l->add_option("--patch-width", learn.patch_width)->check(CLI::Range(1, 64));
  l->add_option("--delta-a", learn.delta_a, "Coefficient quantization step")->check(CLI::PositiveNumber);
  l->add_option("--sigma", learn.sigma, "Noise std of the training data (0: clean 8-bit data)")
      ->check(CLI::NonNegativeNumber);
  l->add_option("--sampling", learn.sampling, "tiles (non-overlapping) or patches (one per stride)")
      ->check(CLI::IsMember({"tiles", "patches"}));
  l->add_option("--stride", learn.stride, "Patch stride for --sampling patches")->check(CLI::PositiveNumber);
  l->add_option("--epsilon", learn.epsilon, "Relative dictionary change that ends the alternation")
      ->check(CLI::NonNegativeNumber);

  CompressArgs comp;
  auto* cr = app.add_subcommand("compress-report", "Codelength of images under a dictionary");
  cr->add_option("images", comp.images)->required();
  cr->add_option("--dict", comp.dict)->required();
  cr->add_option("--sigma2", comp.sigma2, "Gaussian part of the residual model")->check(CLI::NonNegativeNumber);

  DenoiseArgs dn;
  auto* d = app.add_subcommand("denoise", "Remove white Gaussian noise of known sigma");
  d->add_option("input", dn.input)->required();
  d->add_option("--sigma", dn.sigma)->required();
  d->add_option("-o,--out", dn.out, "Denoised image");
  d->add_option("--variant", dn.variant)->check(CLI::IsMember({"rd", "pt"}));
  d->add_option("--dict", dn.dict, "Dictionary file (default: adapt a DCT frame to the noisy image)");
  d->add_option("--reference", dn.reference, "Clean image for PSNR");
  d->add_option("--adapt", dn.adapt, "Adaptation without --dict")->check(CLI::IsMember({"none", "fixed", "backward"}));
  d->add_option("--learn-iters", dn.learn_iters)->check(CLI::NonNegativeNumber);
  d->add_option("--stride", dn.stride, "Training patch stride when adapting")->check(CLI::PositiveNumber);
  d->add_option("--save-dict", dn.save_dict, "Write the adapted dictionary");
  d->add_option("--C", dn.C, "RD distortion constant")->check(CLI::PositiveNumber);
  d->add_option("--budget", dn.budget, "RD budget C m sigma^2 (m) or C sigma^2 (plain)")
      ->check(CLI::IsMember({"m", "plain"}));
  d->add_option("--lambda-blend", dn.lambda_blend)->check(CLI::Range(0.0, 1.0));
  d->add_option("--max-iterations", dn.max_iterations)->check(CLI::PositiveNumber);
  d->add_flag("--markov,!--no-markov", dn.markov, "Markov support contexts when a state is available");

  SegmentArgs sg;
  auto* s = app.add_subcommand("segment", "Texture segmentation by codelength");
  s->add_option("mosaic", sg.mosaic)->required();
  s->add_option("dicts", sg.dicts, "One dictionary per class (with .state.json sidecars)")->required();
  s->add_option("--radius", sg.radius)->check(CLI::NonNegativeNumber);
  s->add_option("--truth", sg.truth, "Ground-truth label image (gray k*255/(c-1) for class k)");
  s->add_option("-o,--out", sg.out, "Label map image");

  LowrankArgs lr;
  auto* r = app.add_subcommand("lowrank", "Low-rank + sparse model of a frame sequence");
  r->add_option("frames_dir", lr.frames_dir, "Directory of PGM/PNG frames (sorted by name)");
  r->add_option("--raw", lr.raw, "Raw 8-bit planar video instead of a directory");
  r->add_option("--dims", lr.dims, "HxWxN for --raw");
  r->add_option("--out-dir", lr.out_dir, "Background/foreground frames and lambda_curve.csv");
  r->add_option("--lambda-scales", lr.lambda_scales, "Multiples of 1/sqrt(max(m, n))");
  r->add_option("--q-grid", lr.q_grid, "Factor precisions Q in (0, 1)");
  r->add_option("--max-frames", lr.max_frames)->check(CLI::NonNegativeNumber);

  NoiseArgs nz;
  auto* n = app.add_subcommand("noise", "Add seeded white Gaussian noise (rounded, not clipped before writing)");
  n->add_option("input", nz.input)->required();
  n->add_option("-o,--out", nz.out)->required();
  n->add_option("--sigma", nz.sigma)->required();
  n->add_option("--seed", nz.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  try {
    if (*l) return cmd_learn(learn, common);
    if (*cr) return cmd_compress(comp, common);
    if (*d) return cmd_denoise(dn, common);
    if (*s) return cmd_segment(sg, common);
    if (*r) {
      if (lr.raw.empty() == lr.frames_dir.empty()) throw InputError("give either frames_dir or --raw");
      return cmd_lowrank(lr, common);
    }
    if (*n) return cmd_noise(nz, common);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
