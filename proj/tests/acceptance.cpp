// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "transferlab/attacks.hpp"
#include "transferlab/config.hpp"
#include "transferlab/metrics.hpp"
#include "transferlab/pipeline.hpp"
#include "transferlab/postprocess.hpp"
#include "transferlab/preprocess.hpp"
#include "transferlab/report.hpp"
#include "transferlab/runtime.hpp"

using namespace tl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

void log(const std::string& line) { std::cerr << "  " << line << std::endl; }

// A full default run plus the intermediate objects the checks need.
struct StandardRun {
  RunConfig cfg;
  std::vector<std::shared_ptr<const TrainedModel>> networks;
  std::optional<Roster> roster;
  CuratedDataset curated;
  ExperimentResult result;
  double sweep_seconds = 0.0;
};

StandardRun standard_run(RunConfig cfg, bool timed) {
  StandardRun run;
  run.cfg = cfg;
  const auto t0 = Clock::now();
  run.networks = train_networks(cfg, training_data(cfg), log);
  run.roster.emplace(run.networks, cfg.models);
  run.curated = curate_pool(cfg, pool_data(cfg), *run.roster);
  log("seed " + std::to_string(cfg.seed) + ": " + std::to_string(run.curated.data.size()) + " curated images, setup " +
      fmt(seconds_since(t0), 1) + "s");
  const auto t1 = Clock::now();
  run.result = run_experiment(run.curated, *run.roster, cfg.experiment_config(), timed ? ProgressFn(log) : ProgressFn());
  run.sweep_seconds = seconds_since(t1);
  log("seed " + std::to_string(cfg.seed) + ": sweep " + fmt(run.sweep_seconds, 1) + "s");
  return run;
}

// 1. Randomized-graph finite differences.
Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng(20240601);
  double worst = 0.0, worst_component = 0.0;
  long components = 0;
  const int graphs = 200;
  for (int i = 0; i < graphs; ++i) {
    const auto g = testkit::smooth_random_graph(rng);
    const auto rep = testkit::finite_difference_check(g);
    worst = std::max(worst, rep.max_relative_error);
    worst_component = std::max(worst_component, rep.max_component_error);
    components += rep.components;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 60.0, std::to_string(graphs) + " graphs, " + std::to_string(components) +
                                            " components, max relative error " + sci(worst) +
                                            " (largest single-component ratio " + sci(worst_component) +
                                            "), " +
                                            fmt(secs, 1) + "s"};
}

// 2. Norm contracts on the first 100 curated images.
Verdict attack_contracts(const StandardRun& run) {
  const auto t0 = Clock::now();
  const std::size_t n = std::min<std::size_t>(100, run.curated.data.size());
  const std::span<const PixelImage> images(run.curated.data.images.data(), n);
  const std::span<const int> labels(run.curated.data.labels.data(), n);
  const AttackSuite suite = run.cfg.experiment_config().suite;
  int violations = 0, cw_successes = 0;
  double worst_margin_gap = 0.0;
  Rng rng(99);
  for (const std::string& name : {std::string("A-16"), std::string("B-residual")}) {
    const Classifier& m = run.roster->model(name);
    const Tensor x = preprocess_batch(images, m.family());
    const double eps = suite.fgsm.epsilon * pixel_scale(m.family());
    const Box box = valid_box(m.family());

    const InputGradient g = loss_gradient(m, x, labels);
    const auto f = fgsm(m, x, labels, suite.fgsm);
    double lin = 0.0, l1 = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      const double gi = g.gradient[i], xi = x[i];
      const double stepped = gi > 0 ? xi + eps : gi < 0 ? xi - eps : xi;
      const int c = static_cast<int>(i % 3);
      const double adv = f[i / 3072].adversarial[i % 3072];
      if (adv != std::clamp(stepped, box.lo[c], box.hi[c])) ++violations;
      if (std::abs(adv - xi) > eps) ++violations;
      lin += gi * (stepped - xi);
      l1 += std::abs(gi);
    }
    if (std::abs(lin - eps * l1) > 1e-9 * std::max(1.0, std::abs(lin))) ++violations;
    for (int k = 0; k < 100; ++k) {
      double dot = 0.0;
      for (Index i = 0; i < x.size(); ++i) dot += g.gradient[i] * rng.uniform(-eps, eps);
      if (dot > lin) ++violations;
    }

    IfgsmConfig one;
    one.alpha = suite.fgsm.epsilon;
    one.iterations = 1;
    const auto it = ifgsm(m, x, labels, one);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = it[i].adversarial;
      const auto& b = f[i].adversarial;
      if (a.size() != b.size() || std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) != 0) ++violations;
    }

    for (std::size_t s = 0; s < n; s += 32) {
      const std::size_t e = std::min(n, s + 32);
      const Tensor xb = preprocess_batch(images.subspan(s, e - s), m.family());
      const auto cw = cw_l2(m, xb, labels.subspan(s, e - s), suite.cw);
      for (std::size_t i = 0; i < cw.size(); ++i) {
        if (!cw[i].success) continue;
        ++cw_successes;
        const Tensor z = logits_of(m, cw[i].adversarial);
        const double margin = logit_margin(std::span<const double>(z.data(), z.size()), labels[s + i]);
        const double gap = suite.cw.confidence - margin;
        worst_margin_gap = std::max(worst_margin_gap, gap);
        if (margin < suite.cw.confidence - 1e-9) ++violations;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 300.0,
          std::to_string(n) + " images on A-16 and B-residual, " + std::to_string(violations) + " violations, " +
              std::to_string(cw_successes) + " C&W successes checked, " + fmt(secs, 1) + "s"};
}

// 3. Raw white-box accuracy per attack and source.
Verdict whitebox_strength(const StandardRun& run) {
  double worst = 0.0;
  std::string worst_name;
  std::ostringstream per_attack;
  for (const std::string& attack : run.result.matrix.attacks()) {
    double attack_worst = 0.0;
    for (const auto& row : run.result.whitebox) {
      if (row.attack != attack) continue;
      attack_worst = std::max(attack_worst, row.accuracy());
      if (row.accuracy() > worst) {
        worst = row.accuracy();
        worst_name = row.attack + " on " + row.source;
      }
    }
    per_attack << attack << " max " << fmt(100 * attack_worst, 1) << "%; ";
  }
  const bool fast = run.sweep_seconds < 1800.0;
  return {worst <= 0.05 && fast, per_attack.str() + "worst " + (worst_name.empty() ? "-" : worst_name) + ", sweep " +
                                      fmt(run.sweep_seconds / 60.0, 1) + " min on " +
                                      std::to_string(run.curated.data.size()) + " images"};
}

// 4. Exhaustive one-dimensional postprocessing check.
Verdict postprocess_exactness() {
  const auto t0 = Clock::now();
  const ClipSchedule s = ClipSchedule::standard();
  long checks = 0, violations = 0;
  auto pixel1 = [](double v) { return FloatImage(1, 1, 1, FloatImage::Array::Constant(1, v)); };
  auto byte1 = [](int v) { return PixelImage(1, 1, 1, PixelImage::Array::Constant(1, static_cast<std::uint8_t>(v))); };
  for (int orig = 0; orig <= 255; ++orig) {
    const PixelImage o = byte1(orig);
    for (int delta = -300; delta <= 300; ++delta) {
      const double adv = std::clamp(double(orig + delta), 0.0, 255.0);
      for (int r : s.radii()) {
        ++checks;
        const double clipped = linf_clip(pixel1(adv), o, double(r)).data[0];
        const int out = round_to_pixels(pixel1(clipped)).data[0];
        // Nearest point of the ball found by enumeration.
        int best = orig - r;
        for (int c = orig - r; c <= orig + r; ++c) {
          if (std::abs(c - adv) < std::abs(best - adv)) best = c;
        }
        bool ok = std::abs(out - orig) <= r && clipped == best && out == best;
        ok = ok && round_to_pixels(linf_clip(pixel1(out), o, double(r))).data[0] == out;
        if (r == 0) ok = ok && out == orig;
        if (!ok) ++violations;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 60.0,
          std::to_string(checks) + " cases, " + std::to_string(violations) + " violations, " + fmt(secs, 1) + "s"};
}

// 5. Calibration curves of every (attack, source).
Verdict calibration_shape(const StandardRun& run) {
  const auto& cal = run.result.calibration;
  int bad = 0, curves = 0;
  double worst_ssim_rise = 0.0;
  for (std::size_t a = 0; a < cal.attacks.size(); ++a) {
    for (std::size_t s = 0; s < cal.sources.size(); ++s) {
      const auto& rows = cal.at(a, s);
      ++curves;
      bool ok = rows.front().mean_ssim == 1.0 && rows.front().mean_mad == 0.0;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        ok = ok && rows[r].mean_mad >= rows[r - 1].mean_mad;
        worst_ssim_rise = std::max(worst_ssim_rise, rows[r].mean_ssim - rows[r - 1].mean_ssim);
        ok = ok && rows[r].mean_ssim <= rows[r - 1].mean_ssim + 0.01;
      }
      if (!ok) ++bad;
    }
  }
  return {bad == 0, std::to_string(curves) + " curves, " + std::to_string(bad) + " out of shape, largest SSIM rise " +
                        fmt(worst_ssim_rise, 5)};
}

// 6. Rank correlation with radius of the mean IS and mean SSIM over every
// (attack, source) curve.
Verdict inception_negative(const StandardRun& run) {
  const auto& cal = run.result.calibration;
  const auto& radii = run.result.matrix.radii();
  std::vector<double> r(radii.begin(), radii.end()), is(radii.size(), 0.0), ss(radii.size(), 0.0);
  const double curves = static_cast<double>(cal.curves.size());
  for (const auto& curve : cal.curves) {
    for (std::size_t k = 0; k < radii.size(); ++k) {
      is[k] += curve[k].inception_score.value_or(0.0) / curves;
      ss[k] += curve[k].mean_ssim / curves;
    }
  }
  const double rho_is = spearman(is, r), rho_ssim = spearman(ss, r);
  return {std::abs(rho_is) < 0.5 && std::abs(rho_ssim) >= 0.9,
          "rho(IS, radius) " + fmt(rho_is) + ", rho(SSIM, radius) " + fmt(rho_ssim)};
}

double reference_ssim(const PixelImage& a, const PixelImage& b) {
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  auto gray = [](const PixelImage& img, Index y, Index x) {
    return (double(img.at(y, x, 0)) + double(img.at(y, x, 1)) + double(img.at(y, x, 2))) / 3.0;
  };
  double total = 0.0;
  int count = 0;
  for (Index y = 0; y + 7 <= a.height; ++y) {
    for (Index x = 0; x + 7 <= a.width; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (Index dy = 0; dy < 7; ++dy) {
        for (Index dx = 0; dx < 7; ++dx) {
          const double u = gray(a, y + dy, x + dx), v = gray(b, y + dy, x + dx);
          sa += u;
          sb += v;
          saa += u * u;
          sbb += v * v;
          sab += u * v;
        }
      }
      const double n = 49.0;
      const double va = (saa - sa * sa / n) / (n - 1), vb = (sbb - sb * sb / n) / (n - 1);
      const double cov = (sab - sa * sb / n) / (n - 1), ma = sa / n, mb = sb / n;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

// 7. Metric oracles.
Verdict metric_oracles(const StandardRun& run) {
  Rng rng(31);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    PixelImage a(32, 32, 3), b(32, 32, 3);
    const int spread = 1 + static_cast<int>(rng.below(120));
    for (Index i = 0; i < a.size(); ++i) {
      a.data[i] = static_cast<std::uint8_t>(rng.below(256));
      b.data[i] = static_cast<std::uint8_t>(std::clamp<int>(a.data[i] + int(rng.below(2 * spread + 1)) - spread, 0, 255));
    }
    worst = std::max(worst, std::abs(ssim(a, b) - reference_ssim(a, b)));
  }
  bool ok = worst <= 1e-9;

  const double c1 = std::pow(0.01 * 255, 2);
  double closed = 0.0;
  for (auto [u, v] : {std::pair{0, 255}, std::pair{17, 200}, std::pair{90, 90}}) {
    PixelImage a(32, 32, 3), b(32, 32, 3);
    a.data.setConstant(static_cast<std::uint8_t>(u));
    b.data.setConstant(static_cast<std::uint8_t>(v));
    closed = std::max(closed, std::abs(ssim(a, b) - (2.0 * u * v + c1) / (double(u) * u + double(v) * v + c1)));
  }
  ok = ok && closed <= 1e-12;

  Tensor onehot = Tensor::zeros({5, 5});
  for (Index i = 0; i < 5; ++i) onehot.matrix()(i, i) = 1.0;
  const double is_uniform = inception_score(Tensor::constant({10, 5}, 0.2));
  const double is_onehot = inception_score(onehot);
  ok = ok && std::abs(is_uniform - 1.0) <= 1e-12 && std::abs(is_onehot - 5.0) <= 1e-12;

  int out_of_bounds = 0;
  for (const auto& curve : run.result.calibration.curves) {
    for (const auto& row : curve) {
      const double is = row.inception_score.value_or(0.0);
      if (is < 1.0 || is > 5.0) ++out_of_bounds;
    }
  }
  ok = ok && out_of_bounds == 0;
  return {ok, "SSIM max deviation " + sci(worst) + ", closed form " + sci(closed) +
                  ", IS uniform " + fmt(is_uniform, 12) + ", one-hot " + fmt(is_onehot, 12) + ", " +
                  std::to_string(out_of_bounds) + " IS values out of [1, 5]"};
}

// 8. Within-family against cross-family transfer accuracy at radii 20-60,
// pooled over seeds.
Verdict transfer_structure(const std::vector<const ExperimentResult*>& runs) {
  const auto& names = runs.front()->matrix.attacks();
  int attacks_ok = 0;
  std::ostringstream detail;
  for (const std::string& attack : names) {
    double within = 0.0, cross = 0.0;
    int nw = 0, nc = 0;
    for (const ExperimentResult* res : runs) {
      const TransferMatrix& m = res->matrix;
      const std::size_t a = m.attack_index(attack);
      for (std::size_t r = 0; r < m.radii().size(); ++r) {
        if (m.radii()[r] < 20 || m.radii()[r] > 60) continue;
        for (std::size_t s = 0; s < m.models().size(); ++s) {
          for (std::size_t t = 0; t < m.models().size(); ++t) {
            if (s == t) continue;
            const double acc = m.accuracy(a, s, t, r);
            if (m.models()[s][0] == m.models()[t][0]) {
              within += acc;
              ++nw;
            } else {
              cross += acc;
              ++nc;
            }
          }
        }
      }
    }
    within /= std::max(nw, 1);
    cross /= std::max(nc, 1);
    if (nw > 0 && nc > 0 && within <= cross) ++attacks_ok;
    detail << attack << " within " << fmt(within) << " cross " << fmt(cross) << "; ";
  }
  detail << runs.size() << " seeds";
  return {attacks_ok >= 2 && runs.size() >= 3, detail.str()};
}

RunConfig small_config(const fs::path& out) {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.out = out;
  cfg.models = {"A-16", "A-19", "A-ensemble", "B-plain", "B-residual"};
  cfg.scorer = "B-residual";
  cfg.train_per_class = 80;
  cfg.pool_per_class = 20;
  cfg.epochs = 8;
  cfg.accuracy_gate = 0.0;
  cfg.curation_threshold = 0.5;
  cfg.min_survivors = 1;
  cfg.radii = {0, 10, 40, 100};
  cfg.ifgsm_iterations = 5;
  cfg.ifgsm_alpha = 5;
  cfg.cw_max_iterations = 10;
  cfg.cw_binary_search_steps = 2;
  return cfg;
}

// 9. Two end-to-end runs, the second configured only from the first's
// manifest, compared byte for byte.
Verdict determinism(const fs::path& work) {
  const fs::path first = work / "determinism_a", second = work / "determinism_b";
  fs::remove_all(first);
  fs::remove_all(second);
  run_pipeline(small_config(first));
  const Layout la{first}, lb{second};
  RunConfig again;
  apply_config_text(again, read_text(la.reports() / ReportFiles::kManifest));
  again.out = second;
  run_pipeline(again);
  int files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(la.reports())) {
    ++files;
    const fs::path other = lb.reports() / entry.path().filename();
    if (!fs::exists(other) || read_text(entry.path()) != read_text(other)) ++differing;
  }
  return {files > 0 && differing == 0,
          std::to_string(files) + " report files, " + std::to_string(differing) + " differ"};
}

// 10. Radius-0 cells and outcome conservation.
Verdict matrix_sanity(const StandardRun& run) {
  const TransferMatrix& m = run.result.matrix;
  const std::size_t r0 = m.radius_index(0);
  int bad_zero = 0, bad_sum = 0, cells = 0;
  for (std::size_t a = 0; a < m.attacks().size(); ++a) {
    for (std::size_t s = 0; s < m.models().size(); ++s) {
      for (std::size_t t = 0; t < m.models().size(); ++t) {
        if (m.accuracy(a, s, t, r0) != 1.0) ++bad_zero;
        for (std::size_t r = 0; r < m.radii().size(); ++r) {
          ++cells;
          if (m.at(a, s, t, r).total() != m.curated()) ++bad_sum;
        }
      }
    }
  }
  const auto mono = diagonal_monotonicity_violations(m);
  for (const auto& v : mono) log("monotonicity: " + v);
  return {bad_zero == 0 && bad_sum == 0, std::to_string(cells) + " cells, " + std::to_string(bad_zero) +
                                              " radius-0 cells below 1.0, " + std::to_string(bad_sum) +
                                              " with counts not summing to " + std::to_string(m.curated()) + ", " +
                                              std::to_string(mono.size()) + " diagonal monotonicity notes"};
}

}  // namespace

int main(int argc, char** argv) {
  keep_heap_mapped();
  CLI::App app("acceptance checks");
  fs::path work = fs::temp_directory_path() / "transferlab_acceptance";
  std::vector<int> only;
  int extra_seeds = 2;
  int extra_images = 100;
  app.add_option("--work-dir", work, "directory for run outputs");
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--extra-seeds", extra_seeds, "additional training seeds for the transfer-structure check");
  app.add_option("--extra-images", extra_images, "curated images per additional seed");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  const bool need_standard = [&] {
    for (int c : {2, 3, 5, 6, 7, 8, 10}) {
      if (wanted(c)) return true;
    }
    return false;
  }();

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Verdict()>& check) {
    if (!wanted(id)) return;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << " " << name << ": " << v.detail
              << std::endl;
  };

  report(1, "gradient correctness", gradient_correctness);
  report(4, "postprocessing exactness", postprocess_exactness);

  std::optional<StandardRun> standard;
  if (need_standard) {
    RunConfig cfg;
    cfg.out = work / "standard";
    standard.emplace(standard_run(cfg, true));
    const Layout layout{cfg.out};
    emit_reports(standard->result,
                 manifest_json(cfg, *standard->roster, standard->curated, standard->result), layout.reports());
  }

  report(2, "attack norm contracts", [&] { return attack_contracts(*standard); });
  report(3, "white-box strength", [&] { return whitebox_strength(*standard); });
  report(5, "calibration shape", [&] { return calibration_shape(*standard); });
  report(6, "inception score negative result", [&] { return inception_negative(*standard); });
  report(7, "metric oracles", [&] { return metric_oracles(*standard); });
  report(8, "transfer structure", [&] {
    std::vector<StandardRun> extra;
    for (int k = 1; k <= extra_seeds; ++k) {
      RunConfig cfg;
      cfg.seed = standard->cfg.seed + static_cast<std::uint64_t>(k);
      cfg.radii = {0, 20, 30, 40, 50, 60};
      cfg.max_images = extra_images;
      extra.push_back(standard_run(cfg, false));
    }
    std::vector<const ExperimentResult*> runs{&standard->result};
    for (const auto& e : extra) runs.push_back(&e.result);
    return transfer_structure(runs);
  });
  report(9, "determinism", [&] { return determinism(work); });
  report(10, "matrix sanity", [&] { return matrix_sanity(*standard); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
