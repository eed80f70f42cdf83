#include "transferlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace tl {

const std::vector<std::string>& roster_names() {
  static const std::vector<std::string> names = {"A-16",   "A-19",       "A-ensemble", "B-plain",
                                                 "B-wide", "B-residual", "B-ensemble"};
  return names;
}

std::vector<std::string> roster_members(std::string_view name) {
  if (name == "A-ensemble") return {"A-16", "A-19"};
  if (name == "B-ensemble") return {"B-plain", "B-wide", "B-residual"};
  for (const auto& n : roster_names()) {
    if (n == name) return {n};
  }
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

Roster::Roster(std::vector<std::shared_ptr<const TrainedModel>> base, std::vector<std::string> names)
    : base_(std::move(base)), names_(std::move(names)) {
  if (names_.empty()) throw std::invalid_argument("roster is empty");
  for (const auto& name : names_) {
    if (std::count(names_.begin(), names_.end(), name) > 1) {
      throw std::invalid_argument("model '" + name + "' listed twice");
    }
    const auto members = roster_members(name);
    if (members.size() == 1) {
      models_.push_back(this->base(name));
      continue;
    }
    std::vector<std::shared_ptr<const TrainedModel>> m;
    for (const auto& member : members) m.push_back(this->base(member));
    models_.push_back(std::make_shared<Ensemble>(name, std::move(m)));
  }
}

std::shared_ptr<const TrainedModel> Roster::base(std::string_view name) const {
  for (const auto& m : base_) {
    if (m->name() == name) return m;
  }
  throw std::invalid_argument("no trained model named '" + std::string(name) + "'");
}

std::size_t Roster::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::invalid_argument("model '" + std::string(name) + "' is not in the roster");
}

const Classifier& Roster::model(std::string_view name) const { return *models_[index_of(name)]; }

std::vector<Tensor> Roster::evaluate(std::span<const PixelImage> images, std::span<const std::string> names) const {
  std::map<std::string, Tensor> cache;
  Tensor input[2];
  auto base_logits = [&](const std::string& name) -> const Tensor& {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    const auto m = base(name);
    Tensor& x = input[m->family() == Family::A ? 0 : 1];
    if (x.empty()) x = preprocess_batch(images, m->family());
    return cache.emplace(name, logits_of(*m, x)).first->second;
  };
  std::vector<Tensor> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    const auto members = roster_members(name);
    if (members.size() == 1) {
      out.push_back(base_logits(name));
      continue;
    }
    std::vector<Tensor> parts;
    for (const auto& member : members) parts.push_back(base_logits(member));
    out.push_back(average_logits(parts));
  }
  return out;
}

CuratedDataset curate(const Dataset& pool, const Roster& roster, double threshold, std::size_t min_survivors,
                      Index batch_size) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("curate: threshold must be in [0, 1]");
  CuratedDataset out;
  out.pool_size = pool.size();
  out.threshold = threshold;
  out.models = roster.names();
  out.confidence.resize(roster.size());
  out.passed.assign(roster.size(), 0);

  const auto n = static_cast<Index>(pool.size());
  std::vector<std::vector<double>> prob(roster.size(), std::vector<double>(pool.size()));
  std::vector<bool> keep(pool.size(), true);
  for (Index start = 0; start < n; start += batch_size) {
    const Index len = std::min(batch_size, n - start);
    const auto images = std::span(pool.images).subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len));
    const std::vector<Tensor> logits = roster.evaluate(images, roster.names());
    for (std::size_t m = 0; m < roster.size(); ++m) {
      const Tensor p = softmax_rows(logits[m]);
      const std::vector<int> cls = argmax_rows(logits[m]);
      for (Index j = 0; j < len; ++j) {
        const auto i = static_cast<std::size_t>(start + j);
        const int y = pool.labels[i];
        prob[m][i] = p.matrix()(j, y);
        const bool ok = cls[static_cast<std::size_t>(j)] == y && prob[m][i] >= threshold;
        out.passed[m] += ok ? 1 : 0;
        if (!ok) keep[i] = false;
      }
    }
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!keep[i]) continue;
    out.pool_index.push_back(i);
    out.data.push_back(pool.images[i], pool.labels[i]);
    for (std::size_t m = 0; m < roster.size(); ++m) out.confidence[m].push_back(prob[m][i]);
  }
  out.data.seed = pool.seed;
  if (out.data.size() < min_survivors) {
    std::string msg = "curation kept " + std::to_string(out.data.size()) + " of " + std::to_string(pool.size()) +
                      " images, minimum is " + std::to_string(min_survivors) + "; per model:";
    for (std::size_t m = 0; m < roster.size(); ++m) {
      msg += " " + roster.names()[m] + "=" + std::to_string(out.passed[m]);
    }
    throw CurationError(msg);
  }
  return out;
}

TransferMatrix::TransferMatrix(std::vector<std::string> attacks, std::vector<std::string> models,
                               std::vector<int> radii, int curated)
    : attacks_(std::move(attacks)), models_(std::move(models)), radii_(std::move(radii)), curated_(curated) {
  cells_.resize(attacks_.size() * models_.size() * models_.size() * radii_.size());
}

std::size_t TransferMatrix::flat(std::size_t a, std::size_t s, std::size_t t, std::size_t r) const {
  if (a >= attacks_.size() || s >= models_.size() || t >= models_.size() || r >= radii_.size()) {
    throw std::out_of_range("transfer matrix index out of range");
  }
  return ((a * models_.size() + s) * models_.size() + t) * radii_.size() + r;
}

CellCounts& TransferMatrix::at(std::size_t a, std::size_t s, std::size_t t, std::size_t r) {
  return cells_[flat(a, s, t, r)];
}

const CellCounts& TransferMatrix::at(std::size_t a, std::size_t s, std::size_t t, std::size_t r) const {
  return cells_[flat(a, s, t, r)];
}

double TransferMatrix::accuracy(std::size_t a, std::size_t s, std::size_t t, std::size_t r) const {
  const CellCounts& c = at(a, s, t, r);
  return c.evaluated() > 0 ? static_cast<double>(c.correct) / c.evaluated() : 0.0;
}

namespace {

template <typename T>
std::size_t find_index(const std::vector<T>& v, const T& x, const char* what) {
  const auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) throw std::out_of_range(std::string(what) + " not in transfer matrix");
  return static_cast<std::size_t>(it - v.begin());
}

}  // namespace

std::size_t TransferMatrix::attack_index(std::string_view name) const {
  return find_index(attacks_, std::string(name), "attack");
}
std::size_t TransferMatrix::model_index(std::string_view name) const {
  return find_index(models_, std::string(name), "model");
}
std::size_t TransferMatrix::radius_index(int radius) const { return find_index(radii_, radius, "radius"); }

const std::vector<CalibrationRow>& CalibrationTable::at(std::size_t attack, std::size_t source) const {
  return curves.at(attack * sources.size() + source);
}

std::vector<CalibrationRow>& CalibrationTable::at(std::size_t attack, std::size_t source) {
  return curves.at(attack * sources.size() + source);
}

ExperimentResult run_experiment(const CuratedDataset& data, const Roster& roster, const ExperimentConfig& config,
                                const ProgressFn& progress) {
  if (data.data.size() == 0) throw std::invalid_argument("run_experiment: curated dataset is empty");
  if (config.batch_size < 1) throw std::invalid_argument("run_experiment: batch size must be >= 1");
  validate(config.suite.fgsm);
  validate(config.suite.ifgsm);
  validate(config.suite.cw);

  const ClipSchedule& schedule = config.schedule;
  const auto n = static_cast<Index>(data.data.size());
  std::vector<std::string> attack_names;
  for (AttackKind k : config.attacks) attack_names.emplace_back(attack_name(k));

  ExperimentResult res;
  res.matrix = TransferMatrix(attack_names, roster.names(), schedule.radii(), static_cast<int>(n));
  res.calibration.attacks = attack_names;
  res.calibration.sources = roster.names();
  res.calibration.curves.resize(attack_names.size() * roster.size());

  // Targets first, then the scorer, evaluated together on each image set.
  std::vector<std::string> eval_names = roster.names();
  eval_names.push_back(config.scorer);
  const std::size_t scorer_slot = eval_names.size() - 1;
  (void)roster.base(config.scorer);

  for (std::size_t a = 0; a < config.attacks.size(); ++a) {
    for (std::size_t s = 0; s < roster.size(); ++s) {
      const Classifier& source = roster.model(s);
      WhiteBoxRow wb{attack_names[a], source.name()};
      CalibrationAccumulator calib(schedule);
      std::vector<std::vector<double>> scorer_probs(schedule.size());
      int failed_images = 0;

      for (Index start = 0; start < n; start += config.batch_size) {
        const Index len = std::min(config.batch_size, n - start);
        const auto first = static_cast<std::size_t>(start);
        const auto images = std::span(data.data.images).subspan(first, static_cast<std::size_t>(len));
        const auto labels = std::span(data.data.labels).subspan(first, static_cast<std::size_t>(len));
        const Tensor inputs = preprocess_batch(images, source.family());
        const std::vector<AttackResult> results =
            run_attack(config.attacks[a], config.suite, source, inputs, labels);

        Tensor adv(inputs.shape());
        const Index m = inputs.size() / len;
        for (Index j = 0; j < len; ++j) adv.array().segment(j * m, m) = results[static_cast<std::size_t>(j)].adversarial.array();
        const std::vector<int> raw_cls = argmax_rows(logits_of(source, adv));

        // Postprocessed images of the images the attack ran on, by radius.
        std::vector<std::size_t> ran;
        std::vector<std::vector<PixelImage>> by_radius(schedule.size());
        for (Index j = 0; j < len; ++j) {
          const auto jj = static_cast<std::size_t>(j);
          const AttackResult& r = results[jj];
          if (r.failed) {
            ++wb.failed;
            ++failed_images;
            if (progress) progress("  " + r.error);
            continue;
          }
          ++wb.evaluated;
          wb.correct += raw_cls[jj] == labels[jj] ? 1 : 0;
          wb.successes += r.success ? 1 : 0;
          ran.push_back(jj);
          std::vector<PixelImage> pp = postprocess_schedule(r.adversarial, images[jj], source.family(), schedule);
          calib.add(images[jj], pp);
          for (std::size_t k = 0; k < schedule.size(); ++k) by_radius[k].push_back(std::move(pp[k]));
        }
        if (ran.empty()) continue;

        for (std::size_t k = 0; k < schedule.size(); ++k) {
          const std::vector<Tensor> logits = roster.evaluate(by_radius[k], eval_names);
          for (std::size_t t = 0; t < roster.size(); ++t) {
            const std::vector<int> cls = argmax_rows(logits[t]);
            CellCounts& cell = res.matrix.at(a, s, t, k);
            for (std::size_t q = 0; q < ran.size(); ++q) {
              if (cls[q] == labels[ran[q]]) ++cell.correct;
              else ++cell.incorrect;
            }
          }
          const Tensor p = softmax_rows(logits[scorer_slot]);
          scorer_probs[k].insert(scorer_probs[k].end(), p.data(), p.data() + p.size());
        }
      }

      for (std::size_t t = 0; t < roster.size(); ++t) {
        for (std::size_t k = 0; k < schedule.size(); ++k) res.matrix.at(a, s, t, k).failed = failed_images;
      }
      if (calib.count() > 0) {
        std::vector<CalibrationRow> rows = calib.rows();
        for (std::size_t k = 0; k < schedule.size(); ++k) {
          const auto count = static_cast<Index>(scorer_probs[k].size() / kNumClasses);
          Tensor probs({count, kNumClasses});
          std::copy(scorer_probs[k].begin(), scorer_probs[k].end(), probs.data());
          rows[k].inception_score = inception_score(probs);
        }
        res.calibration.at(a, s) = std::move(rows);
      }
      if (progress) {
        char line[160];
        std::snprintf(line, sizeof line, "%s on %s: white-box accuracy %d/%d, successes %d, failures %d",
                      wb.attack.c_str(), wb.source.c_str(), wb.correct, wb.evaluated, wb.successes, wb.failed);
        progress(line);
      }
      res.whitebox.push_back(std::move(wb));
    }
  }
  return res;
}

std::vector<SsimCurve> reorganize_by_ssim(const TransferMatrix& matrix, const CalibrationTable& calibration) {
  std::vector<SsimCurve> out;
  for (std::size_t a = 0; a < matrix.attacks().size(); ++a) {
    const std::size_t ca = find_index(calibration.attacks, matrix.attacks()[a], "attack");
    for (std::size_t s = 0; s < matrix.models().size(); ++s) {
      const std::size_t cs = find_index(calibration.sources, matrix.models()[s], "source");
      const auto& rows = calibration.at(ca, cs);
      if (rows.size() != matrix.radii().size()) {
        throw std::invalid_argument("reorganize_by_ssim: calibration for " + matrix.attacks()[a] + "/" +
                                    matrix.models()[s] + " does not cover the schedule");
      }
      for (std::size_t t = 0; t < matrix.models().size(); ++t) {
        SsimCurve curve{matrix.attacks()[a], matrix.models()[s], matrix.models()[t], {}};
        for (std::size_t r = 0; r < matrix.radii().size(); ++r) {
          curve.points.push_back({rows[r].mean_ssim, matrix.radii()[r], matrix.accuracy(a, s, t, r)});
        }
        std::stable_sort(curve.points.begin(), curve.points.end(),
                         [](const SsimPoint& x, const SsimPoint& y) { return x.mean_ssim > y.mean_ssim; });
        out.push_back(std::move(curve));
      }
    }
  }
  return out;
}

std::string appendix_row(int radius, double transferability) {
  return "Clip range - " + std::to_string(radius) + ", avg. transferability - " +
         std::to_string(static_cast<int>(std::lround(100.0 * transferability))) + "%";
}

AggregateReport aggregate(const TransferMatrix& matrix, const CalibrationTable* calibration) {
  const std::size_t na = matrix.attacks().size(), nm = matrix.models().size(), nr = matrix.radii().size();
  if (na == 0 || nm == 0 || nr == 0) throw std::invalid_argument("aggregate: empty transfer matrix");
  AggregateReport rep;
  rep.radii = matrix.radii();
  rep.has_ssim = calibration != nullptr;
  rep.average_case.assign(nr, 0.0);
  rep.mean_ssim.assign(nr, 0.0);

  for (std::size_t a = 0; a < na; ++a) {
    AttackAggregate agg;
    agg.attack = matrix.attacks()[a];
    // source_mean[s][r]: mean transferability of source s over all targets.
    std::vector<std::vector<double>> source_mean(nm, std::vector<double>(nr, 0.0));
    for (std::size_t s = 0; s < nm; ++s) {
      for (std::size_t r = 0; r < nr; ++r) {
        double sum = 0.0;
        for (std::size_t t = 0; t < nm; ++t) sum += 1.0 - matrix.accuracy(a, s, t, r);
        source_mean[s][r] = sum / static_cast<double>(nm);
      }
    }
    std::size_t ca = 0;
    if (calibration) ca = find_index(calibration->attacks, agg.attack, "attack");
    for (std::size_t r = 0; r < nr; ++r) {
      AggregatePoint p;
      p.radius = matrix.radii()[r];
      std::size_t best = 0;
      double sum = 0.0;
      for (std::size_t s = 0; s < nm; ++s) {
        if (source_mean[s][r] > source_mean[best][r]) best = s;
        sum += source_mean[s][r];
      }
      p.best_source = matrix.models()[best];
      p.best_case = source_mean[best][r];
      p.average_case = sum / static_cast<double>(nm);
      if (calibration) {
        double ssim_sum = 0.0;
        for (std::size_t s = 0; s < nm; ++s) {
          const std::size_t cs = find_index(calibration->sources, matrix.models()[s], "source");
          ssim_sum += calibration->at(ca, cs).at(r).mean_ssim;
        }
        p.mean_ssim = ssim_sum / static_cast<double>(nm);
        agg.mean_ssim_all += p.mean_ssim / static_cast<double>(nr);
        rep.mean_ssim[r] += p.mean_ssim / static_cast<double>(na);
      }
      rep.average_case[r] += p.average_case / static_cast<double>(na);
      agg.points.push_back(p);
    }
    std::size_t strongest = 0;
    std::vector<double> overall(nm, 0.0);
    for (std::size_t s = 0; s < nm; ++s) {
      for (std::size_t r = 0; r < nr; ++r) overall[s] += source_mean[s][r];
      if (overall[s] > overall[strongest]) strongest = s;
    }
    agg.appendix_source = matrix.models()[strongest];
    for (std::size_t r = 0; r < nr; ++r) agg.appendix.push_back(appendix_row(matrix.radii()[r], source_mean[strongest][r]));
    rep.attacks.push_back(std::move(agg));
  }
  return rep;
}

std::vector<std::string> diagonal_monotonicity_violations(const TransferMatrix& matrix, double tolerance) {
  std::vector<std::string> out;
  for (std::size_t a = 0; a < matrix.attacks().size(); ++a) {
    for (std::size_t s = 0; s < matrix.models().size(); ++s) {
      for (std::size_t r = 1; r < matrix.radii().size(); ++r) {
        const double prev = matrix.accuracy(a, s, s, r - 1), cur = matrix.accuracy(a, s, s, r);
        if (cur > prev + tolerance) {
          char line[200];
          std::snprintf(line, sizeof line, "%s/%s: accuracy rises from %.4f at radius %d to %.4f at radius %d",
                        matrix.attacks()[a].c_str(), matrix.models()[s].c_str(), prev, matrix.radii()[r - 1], cur,
                        matrix.radii()[r]);
          out.emplace_back(line);
        }
      }
    }
  }
  return out;
}

}  // namespace tl
