// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is 0 only when all of them pass.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "nxnflow/cli.hpp"
#include "nxnflow/data.hpp"
#include "nxnflow/layers.hpp"
#include "nxnflow/model.hpp"
#include "nxnflow/training.hpp"
#include "nxnflow/verify.hpp"

using namespace nxnflow;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2024;

struct Verdict {
  bool passed = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Worst metric among report lines whose name starts with `prefix`.
Verdict from_report(const verify::Report& report, const std::string& prefix) {
  Verdict v{true, ""};
  std::size_t n = 0;
  for (const verify::CheckLine& line : report.lines()) {
    if (line.name.rfind(prefix, 0) != 0) continue;
    ++n;
    if (!line.passed) {
      v.passed = false;
      v.detail += " " + line.name + "=" + fmt("%.3e", line.metric) + ">" + fmt("%.0e", line.threshold);
    }
  }
  if (n == 0) return {false, " no checks named " + prefix};
  if (v.passed) v.detail = " " + std::to_string(n) + " checks";
  return v;
}

double worst(const verify::Report& report, const std::string& prefix) {
  double w = 0.0;
  for (const verify::CheckLine& line : report.lines())
    if (line.name.rfind(prefix, 0) == 0) w = std::max(w, line.metric);
  return w;
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("nxnflow_acceptance_" + std::to_string(::getpid()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "nxnflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::fprintf(stderr, "nxnflow %s failed (%d): %s\n", args[1].c_str(), code, err.str().c_str());
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Re-expresses points from one normalized dataset in the frame of another.
Tensor reframe(const Dataset2D& from, const Dataset2D& to) {
  Tensor out = from.points;
  for (std::size_t n = 0; n < out.batch(); ++n)
    for (std::size_t c = 0; c < 2; ++c) {
      const double raw = from.points.at(n, c) * from.scale[c] + from.offset[c];
      out.at(n, c) = (raw - to.offset[c]) / to.scale[c];
    }
  return out;
}

double standard_normal_nll(const Tensor& x) {
  double s = 0.0;
  for (const double v : x.data()) s += 0.5 * v * v;
  return s / static_cast<double>(x.batch()) + std::log(2.0 * std::numbers::pi);
}

// Largest per-channel |mean| and |std - 1| of every ActNorm output on `batch`.
std::pair<double, double> actnorm_output_stats(const MultiScaleModel& model, const Tensor& batch) {
  ForwardTrace trace;
  model.forward(batch, &trace);
  const auto layers = model.layers();
  if (trace.caches.size() != layers.size()) return {INFINITY, INFINITY};
  double mu_max = 0.0, sd_max = 0.0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].second->kind() != "actnorm") continue;
    const Tensor& y = trace.caches[i + 1].input;
    const std::size_t channels = y.shape()[1];
    const std::size_t per = y.size() / (y.batch() * channels);
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (std::size_t n = 0; n < y.batch(); ++n)
        for (std::size_t p = 0; p < per; ++p) m += y[(n * channels + c) * per + p];
      m /= static_cast<double>(y.batch() * per);
      double v = 0.0;
      for (std::size_t n = 0; n < y.batch(); ++n)
        for (std::size_t p = 0; p < per; ++p) v += std::pow(y[(n * channels + c) * per + p] - m, 2);
      v /= static_cast<double>(y.batch() * per);
      mu_max = std::max(mu_max, std::abs(m));
      sd_max = std::max(sd_max, std::abs(std::sqrt(v) - 1.0));
    }
  }
  return {mu_max, sd_max};
}

ModelConfig points_model() {
  ModelConfig c;
  c.rank = DataRank::kRank2;
  c.depth = 8;
  c.levels = 1;
  c.hidden = 32;
  c.channels = 2;
  c.height = c.width = 1;
  return c;
}

void report(int id, const char* name, const Verdict& v, double seconds) {
  std::printf("criterion %2d %-26s %s  (%.1fs)%s\n", id, name, v.passed ? "PASS" : "FAIL", seconds, v.detail.c_str());
  std::fflush(stdout);
}

}  // namespace

int main() {
  bool all = true;
  auto record = [&](int id, const char* name, const Verdict& v, double seconds) {
    all = all && v.passed;
    report(id, name, v, seconds);
  };

  // 1-3: one pass of the layer suite covers round trips, log-dets and the shift Jacobian.
  {
    Stopwatch sw;
    const verify::Report layers = verify::run_layer_suite(kSeed, verify::default_layer_cases());
    const double t = sw.seconds();
    Verdict inv = from_report(layers, "roundtrip.");
    const Verdict anti = from_report(layers, "logdet_antisymmetry.");
    inv.passed = inv.passed && anti.passed && t <= 120.0;
    inv.detail += " layer max " + fmt("%.2e", worst(layers, "roundtrip.") ) + " model max " +
                  fmt("%.2e", worst(layers, "roundtrip.model"));
    record(1, "invertibility", inv, t);

    Verdict ld = from_report(layers, "logdet.");
    ld.passed = ld.passed && t <= 120.0;
    ld.detail += " max rel " + fmt("%.2e", worst(layers, "logdet."));
    record(2, "logdet_exactness", ld, t);

    Verdict diag = from_report(layers, "jacobian_diagonal.");
    diag.detail += " off-diagonal " + fmt("%.2e", worst(layers, "jacobian_diagonal."));
    record(3, "shift_diagonality", diag, t);
  }

  {
    Stopwatch sw;
    const verify::Report conv = verify::run_conv_equiv_suite(kSeed);
    Verdict v = from_report(conv, "conv_equiv.");
    v.detail += " max dev " + fmt("%.2e", worst(conv, "conv_equiv."));
    record(4, "conv_equivalence", v, sw.seconds());
  }

  {
    Stopwatch sw;
    const verify::Report grads = verify::run_gradient_suite(kSeed, verify::default_layer_cases());
    Verdict v = from_report(grads, "gradient.");
    v.detail += " max rel " + fmt("%.2e", worst(grads, "gradient."));
    record(5, "gradients", v, sw.seconds());
  }

  // 6, 7 and 9 share one eight_gaussians run with the K=8 desk model.
  Rng data_rng = Rng(kSeed).split("data");
  const Dataset2D train_set = gen_2d(Density2D::kEightGaussians, 10000, data_rng);
  Rng held_rng = Rng(kSeed).split("held_out");
  const Dataset2D held_raw = gen_2d(Density2D::kEightGaussians, 4096, held_rng);
  const Tensor held_out = reframe(held_raw, train_set);
  const PointSource points(train_set.points);

  TrainConfig tc;
  tc.seed = kSeed;
  tc.steps = 5000;
  TrainState state = make_train_state(points_model(), tc);
  const Tensor first_points = training_batch(points, state.rng, 0, tc.batch_size);

  double init_mass = 0.0, init_seconds = 0.0;
  {
    Stopwatch sw;
    MultiScaleModel fresh = state.model;
    fresh.initialize(first_points);
    init_mass = verify::quadrature_normalization(fresh, -6.0, 6.0, 0.05);
    init_seconds = sw.seconds();
  }

  Stopwatch train_clock;
  bool train_ok = true;
  std::string train_error;
  try {
    train(state, points, tc);
  } catch (const std::exception& e) {
    train_ok = false;
    train_error = e.what();
  }
  const double train_seconds = train_clock.seconds();

  {
    Stopwatch sw;
    const double trained_mass = train_ok ? verify::quadrature_normalization(state.model, -6.0, 6.0, 0.05) : NAN;
    const double t = init_seconds + sw.seconds();
    const auto in = [](double m) { return m >= 0.98 && m <= 1.02; };
    Verdict v{in(init_mass) && in(trained_mass) && t <= 60.0,
              " mass at init " + fmt("%.5f", init_mass) + " after training " + fmt("%.5f", trained_mass)};
    record(6, "density_normalization", v, t);
  }

  {
    Stopwatch sw;
    Verdict v{false, " training aborted: " + train_error};
    if (train_ok) {
      const double baseline = standard_normal_nll(held_out) / 2.0;
      const double nll = mean_nll(state.model, held_out) / 2.0;
      Rng sample_rng = Rng(kSeed).split("sample");
      const Tensor s = state.model.sample(1024, 1.0, sample_rng);
      const auto modes = eight_gaussians_modes();
      double spacing = INFINITY;
      for (std::size_t a = 0; a < modes.size(); ++a)
        for (std::size_t b = a + 1; b < modes.size(); ++b)
          spacing = std::min(spacing, std::hypot(modes[a][0] - modes[b][0], modes[a][1] - modes[b][1]));
      std::vector<std::size_t> hits(modes.size(), 0);
      for (std::size_t n = 0; n < s.batch(); ++n) {
        const double x = s.at(n, 0) * train_set.scale[0] + train_set.offset[0];
        const double y = s.at(n, 1) * train_set.scale[1] + train_set.offset[1];
        std::size_t best = 0;
        double d = INFINITY;
        for (std::size_t k = 0; k < modes.size(); ++k) {
          const double dk = std::hypot(x - modes[k][0], y - modes[k][1]);
          if (dk < d) d = dk, best = k;
        }
        if (d <= spacing / 2.0) ++hits[best];
      }
      const auto covered = static_cast<std::size_t>(
          std::count_if(hits.begin(), hits.end(), [&](std::size_t h) { return h >= 0.02 * s.batch(); }));
      const double t = train_seconds + sw.seconds();
      v.passed = baseline - nll >= 0.5 && covered >= 6 && t <= 600.0;
      v.detail = " held-out nll/dim " + fmt("%.4f", nll) + " baseline " + fmt("%.4f", baseline) + " gain " +
                 fmt("%.4f", baseline - nll) + " modes " + std::to_string(covered) + "/8";
    }
    record(7, "toy_density_training", v, train_seconds + sw.seconds());
  }

  TempDir tmp;
  const auto at = [&](const std::string& name) { return (tmp.path / name).string(); };

  // 8: textures through the command line, as a user would run it.
  {
    Stopwatch sw;
    Verdict v{false, " train or eval failed"};
    const std::vector<std::string> data{"--set", "data.kind=textures", "--set", "data.channels=3", "--set",
                                        "data.height=8", "--set", "data.width=8", "--set", "data.bits=5",
                                        "--set", "model.mode=rank4"};
    std::vector<std::string> train_args{"train", "--seed", std::to_string(kSeed), "--set", "train.steps=500",
                                        "-o", at("tex.nxnf"), "--metrics", at("tex.csv")};
    train_args.insert(train_args.end(), data.begin(), data.end());
    std::vector<std::string> eval_args{"eval", at("tex.nxnf"), "--seed", std::to_string(kSeed)};
    eval_args.insert(eval_args.end(), data.begin(), data.end());
    std::string out;
    if (run_cli(train_args) == 0 && run_cli(eval_args, &out) == 0) {
      const auto pos = out.find("bpd ");
      const double bpd = pos == std::string::npos ? NAN : std::stod(out.substr(pos + 4));
      v.passed = bpd < 5.0 && sw.seconds() <= 1800.0;
      v.detail = " eval bpd " + fmt("%.4f", bpd) + (bpd <= 4.5 ? " (meets 4.5 target)" : " (above 4.5 target)");
    }
    record(8, "toy_image_training", v, sw.seconds());
  }

  // 9: first-batch statistics after data-dependent init, for both data ranks.
  {
    Stopwatch sw;
    TrainState fresh = make_train_state(points_model(), tc);
    fresh.model.initialize(first_points);
    const auto [mu2, sd2] = actnorm_output_stats(fresh.model, first_points);

    Rng tex_rng = Rng(kSeed).split("data");
    const ImageDataset tex = gen_textures(256, 3, 8, 8, 5, tex_rng);
    const ImageSource images(tex);
    ModelConfig image_model;
    image_model.depth = 8;
    image_model.levels = 2;
    image_model.hidden = 32;
    TrainState img = make_train_state(image_model, tc);
    const Tensor first_images = training_batch(images, img.rng, 0, tc.batch_size);
    img.model.initialize(first_images);
    const auto [mu4, sd4] = actnorm_output_stats(img.model, first_images);

    const double mu = std::max(mu2, mu4), sd = std::max(sd2, sd4);
    record(9, "actnorm_init", {mu <= 1e-9 && sd <= 1e-6, " max |mean| " + fmt("%.2e", mu) + " max |std-1| " +
                                                            fmt("%.2e", sd)},
           sw.seconds());
  }

  // 10: repeated runs agree byte for byte.
  {
    Stopwatch sw;
    bool ok = true;
    std::string detail;
    const auto train_run = [&](const std::string& tag, const std::vector<std::string>& extra) {
      std::vector<std::string> a{"train", "--seed", "7", "-o", at(tag + ".nxnf"), "--metrics", at(tag + ".csv")};
      a.insert(a.end(), extra.begin(), extra.end());
      return run_cli(a) == 0;
    };
    const std::vector<std::string> pts{"--set", "model.mode=rank2", "--set", "model.levels_l=1", "--set",
                                       "train.steps=300", "--set", "train.checkpoint_every=100"};
    const std::vector<std::string> img{"--set", "data.kind=textures", "--set", "data.count=512", "--set",
                                       "train.steps=5"};
    ok = train_run("p1", pts) && train_run("p2", pts) && train_run("i1", img) && train_run("i2", img);
    const bool ckpt_same = ok && slurp(at("p1.nxnf")) == slurp(at("p2.nxnf")) &&
                           slurp(at("i1.nxnf")) == slurp(at("i2.nxnf")) &&
                           slurp(at("p1.csv")).size() > 0;
    ok = ok && ckpt_same;
    detail += ckpt_same ? " checkpoints identical" : " checkpoints differ";

    std::string e1, e2;
    const std::vector<std::string> eval{"--set", "model.mode=rank2", "--seed", "7"};
    std::vector<std::string> ea{"eval", at("p1.nxnf")}, eb{"eval", at("p2.nxnf")};
    ea.insert(ea.end(), eval.begin(), eval.end());
    eb.insert(eb.end(), eval.begin(), eval.end());
    const bool eval_same = run_cli(ea, &e1) == 0 && run_cli(eb, &e2) == 0 && e1 == e2 && !e1.empty();
    detail += eval_same ? ", eval identical" : ", eval differs";

    const bool sample_same =
        run_cli({"sample", at("p1.nxnf"), "-n", "256", "--seed", "9", "-o", at("s1.csv")}) == 0 &&
        run_cli({"sample", at("p2.nxnf"), "-n", "256", "--seed", "9", "-o", at("s2.csv")}) == 0 &&
        run_cli({"sample", at("i1.nxnf"), "-n", "16", "--seed", "9", "-o", at("s1.nxni")}) == 0 &&
        run_cli({"sample", at("i2.nxnf"), "-n", "16", "--seed", "9", "-o", at("s2.nxni")}) == 0 &&
        slurp(at("s1.csv")) == slurp(at("s2.csv")) && slurp(at("s1.nxni")) == slurp(at("s2.nxni"));
    detail += sample_same ? ", samples identical" : ", samples differ";
    record(10, "determinism", {ok && eval_same && sample_same, detail}, sw.seconds());
  }

  std::printf("acceptance %s\n", all ? "PASS" : "FAIL");
  return all ? 0 : 1;
}
