#include "transferlab/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "transferlab/checkpoint.hpp"
#include "transferlab/report.hpp"

namespace tl {

namespace {

Roster make_roster(const RunConfig& cfg, std::vector<std::shared_ptr<const TrainedModel>> networks) {
  return Roster(std::move(networks), cfg.models);
}

std::vector<std::shared_ptr<const TrainedModel>> load_networks(const RunConfig& cfg) {
  const Layout layout{cfg.out};
  std::vector<std::shared_ptr<const TrainedModel>> out;
  for (const auto& name : required_networks(cfg)) {
    out.push_back(std::make_shared<TrainedModel>(load_checkpoint(layout.model(name))));
  }
  return out;
}

void make_parent(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p.parent_path(), ec);
  if (ec) throw FormatError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
}

CuratedDataset load_curated(const RunConfig& cfg) {
  CuratedDataset c;
  c.data = read_dataset(Layout{cfg.out}.curated());
  c.models = cfg.models;
  c.threshold = cfg.curation_threshold;
  return c;
}

}  // namespace

std::vector<std::string> required_networks(const RunConfig& cfg) {
  std::vector<std::string> need;
  for (const auto& m : cfg.models) {
    for (auto& member : roster_members(m)) need.push_back(std::move(member));
  }
  need.push_back(cfg.scorer);
  std::vector<std::string> out;
  for (Arch a : {Arch::A16, Arch::A19, Arch::BPlain, Arch::BWide, Arch::BResidual}) {
    const std::string name(arch_name(a));
    if (std::find(need.begin(), need.end(), name) != need.end()) out.push_back(name);
  }
  return out;
}

Dataset training_data(const RunConfig& cfg) { return generate_dataset(cfg.seed, cfg.train_per_class); }

Dataset pool_data(const RunConfig& cfg) { return generate_dataset(cfg.pool_seed(), cfg.pool_per_class); }

std::vector<std::shared_ptr<const TrainedModel>> train_networks(const RunConfig& cfg, const Dataset& data,
                                                                const ProgressFn& progress) {
  std::vector<std::shared_ptr<const TrainedModel>> out;
  for (const auto& name : required_networks(cfg)) {
    auto model = std::make_shared<TrainedModel>(train(make_spec(parse_arch(name)), data, cfg.train_config()));
    if (progress) {
      char line[128];
      std::snprintf(line, sizeof line, "trained %s: held-out accuracy %.4f", name.c_str(), model->clean_accuracy());
      progress(line);
    }
    out.push_back(std::move(model));
  }
  return out;
}

CuratedDataset curate_pool(const RunConfig& cfg, const Dataset& pool, const Roster& roster) {
  CuratedDataset c = curate(pool, roster, cfg.curation_threshold, static_cast<std::size_t>(cfg.min_survivors));
  if (cfg.max_images > 0 && c.data.size() > static_cast<std::size_t>(cfg.max_images)) {
    const auto keep = static_cast<std::size_t>(cfg.max_images);
    c.data.images.resize(keep);
    c.data.labels.resize(keep);
    c.pool_index.resize(keep);
    for (auto& conf : c.confidence) conf.resize(keep);
  }
  return c;
}

std::string curation_csv(const CuratedDataset& curated) {
  std::string out = "pool_index,label";
  for (const auto& m : curated.models) out += "," + m;
  out += "\n";
  for (std::size_t i = 0; i < curated.data.size(); ++i) {
    out += std::to_string(curated.pool_index[i]) + "," + std::to_string(curated.data.labels[i]);
    for (const auto& conf : curated.confidence) out += "," + format_double(conf[i]);
    out += "\n";
  }
  return out;
}

std::string manifest_json(const RunConfig& cfg, const Roster& roster, const CuratedDataset& curated,
                          const ExperimentResult& result) {
  nlohmann::ordered_json doc;
  doc["tool"] = "transferlab";
  doc["version"] = "0.1.0";
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.entries()) config[k] = v;
  doc["config"] = config;
  doc["seeds"] = {{"training", cfg.seed}, {"pool", cfg.pool_seed()}};
  doc["curated"] = {{"survivors", curated.data.size()},
                    {"pool_size", curated.pool_size},
                    {"checksum", checksum(curated.data)}};
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& m : roster.base_models()) {
    models.push_back({{"name", m->name()},
                      {"seed", m->seed()},
                      {"parameters", m->network().parameter_count()},
                      {"clean_accuracy", m->clean_accuracy()}});
  }
  doc["networks"] = models;
  doc["roster"] = roster.names();
  int failures = 0;
  for (const auto& wb : result.whitebox) failures += wb.failed;
  doc["attack_failures"] = failures;
  doc["files"] = {ReportFiles::kTransferMatrix, ReportFiles::kCalibration, ReportFiles::kWhiteBox,
                  ReportFiles::kAggregate,      ReportFiles::kSsimCurves,  ReportFiles::kAppendix};
  return doc.dump(2) + "\n";
}

PipelineRun run_pipeline(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  PipelineRun run;
  run.networks = train_networks(cfg, training_data(cfg), progress);
  const Roster roster = make_roster(cfg, run.networks);
  run.curated = curate_pool(cfg, pool_data(cfg), roster);
  if (progress) progress("curated " + std::to_string(run.curated.data.size()) + " images");
  run.result = run_experiment(run.curated, roster, cfg.experiment_config(), progress);
  if (!cfg.out.empty()) {
    emit_reports(run.result, manifest_json(cfg, roster, run.curated, run.result), Layout{cfg.out}.reports());
  }
  return run;
}

void stage_gen_data(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const Layout layout{cfg.out};
  make_parent(layout.train_data());
  const Dataset train = training_data(cfg);
  write_dataset(train, layout.train_data());
  const Dataset pool = pool_data(cfg);
  write_dataset(pool, layout.pool_data());
  if (progress) {
    progress("wrote " + std::to_string(train.size()) + " training images and " + std::to_string(pool.size()) +
             " pool images");
  }
}

void stage_train(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const Layout layout{cfg.out};
  const Dataset data = read_dataset(layout.train_data());
  for (const auto& model : train_networks(cfg, data, progress)) {
    make_parent(layout.model(model->name()));
    save_checkpoint(*model, layout.model(model->name()));
  }
}

void stage_curate(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const Layout layout{cfg.out};
  const Roster roster = make_roster(cfg, load_networks(cfg));
  const CuratedDataset curated = curate_pool(cfg, read_dataset(layout.pool_data()), roster);
  make_parent(layout.curated());
  write_dataset(curated.data, layout.curated());
  write_text_atomic(layout.curation_report(), curation_csv(curated));
  if (progress) {
    progress("curated " + std::to_string(curated.data.size()) + " of " + std::to_string(curated.pool_size) +
             " pool images");
  }
}

int stage_run(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const Layout layout{cfg.out};
  const Roster roster = make_roster(cfg, load_networks(cfg));
  CuratedDataset curated = load_curated(cfg);
  curated.pool_size = read_dataset(layout.pool_data()).size();
  const ExperimentResult result = run_experiment(curated, roster, cfg.experiment_config(), progress);
  emit_reports(result, manifest_json(cfg, roster, curated, result), layout.reports());
  for (const auto& v : diagonal_monotonicity_violations(result.matrix)) {
    if (progress) progress("non-monotone self-attack: " + v);
  }
  int failures = 0;
  for (const auto& wb : result.whitebox) failures += wb.failed;
  return failures;
}

void stage_report(const RunConfig& cfg, const ProgressFn& progress) {
  const Layout layout{cfg.out};
  const TransferMatrix matrix =
      parse_transfer_matrix_csv(read_text(layout.reports() / ReportFiles::kTransferMatrix));
  const CalibrationTable calibration = parse_calibration_csv(read_text(layout.reports() / ReportFiles::kCalibration));
  const auto files = emit_derived_reports(matrix, calibration, layout.reports());
  const AggregateReport rep = aggregate(matrix, &calibration);
  if (progress) {
    for (const auto& agg : rep.attacks) {
      progress(agg.attack + ": strongest source " + agg.appendix_source);
      for (const auto& line : agg.appendix) progress("  " + line);
    }
    progress("wrote " + std::to_string(files.size()) + " report files to " + layout.reports().string());
  }
}

}  // namespace tl
