#include "transferlab/config.hpp"

#include <charconv>
#include "json.hpp"
#include <sstream>

#include "transferlab/random.hpp"
#include "transferlab/report.hpp"

namespace tl {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw FormatError("config: bad value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

template <typename T>
T number(std::string_view key, std::string_view value) {
  T v{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value);
  return v;
}

bool boolean(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

}  // namespace

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string_view item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "seed") seed = number<std::uint64_t>(key, value);
  else if (key == "out") out = std::string(value);
  else if (key == "radii") {
    radii.clear();
    for (const auto& item : split_list(value)) radii.push_back(number<int>(key, item));
  } else if (key == "attacks") attacks = split_list(value);
  else if (key == "models") models = split_list(value);
  else if (key == "train_per_class") train_per_class = number<int>(key, value);
  else if (key == "pool_per_class") pool_per_class = number<int>(key, value);
  else if (key == "epochs") epochs = number<int>(key, value);
  else if (key == "train_batch_size") train_batch_size = number<int>(key, value);
  else if (key == "train_learning_rate") train_learning_rate = number<double>(key, value);
  else if (key == "accuracy_gate") accuracy_gate = number<double>(key, value);
  else if (key == "curation_threshold") curation_threshold = number<double>(key, value);
  else if (key == "min_survivors") min_survivors = number<int>(key, value);
  else if (key == "max_images") max_images = number<int>(key, value);
  else if (key == "batch_size") batch_size = number<int>(key, value);
  else if (key == "scorer") scorer = std::string(value);
  else if (key == "fgsm_epsilon") fgsm_epsilon = number<double>(key, value);
  else if (key == "ifgsm_alpha") ifgsm_alpha = number<double>(key, value);
  else if (key == "ifgsm_iterations") ifgsm_iterations = number<int>(key, value);
  else if (key == "ifgsm_per_iteration_clip") ifgsm_per_iteration_clip = boolean(key, value);
  else if (key == "cw_max_iterations") cw_max_iterations = number<int>(key, value);
  else if (key == "cw_learning_rate") cw_learning_rate = number<double>(key, value);
  else if (key == "cw_confidence") cw_confidence = number<double>(key, value);
  else if (key == "cw_initial_const") cw_initial_const = number<double>(key, value);
  else if (key == "cw_binary_search_steps") cw_binary_search_steps = number<int>(key, value);
  else if (key == "cw_distance_scale") cw_distance_scale = number<double>(key, value);
  else if (key == "cw_abort_early") cw_abort_early = boolean(key, value);
  else throw FormatError("config: unknown key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"seed", std::to_string(seed)},
      {"radii", join(radii)},
      {"attacks", join(attacks)},
      {"models", join(models)},
      {"train_per_class", std::to_string(train_per_class)},
      {"pool_per_class", std::to_string(pool_per_class)},
      {"epochs", std::to_string(epochs)},
      {"train_batch_size", std::to_string(train_batch_size)},
      {"train_learning_rate", format_double(train_learning_rate)},
      {"accuracy_gate", format_double(accuracy_gate)},
      {"curation_threshold", format_double(curation_threshold)},
      {"min_survivors", std::to_string(min_survivors)},
      {"max_images", std::to_string(max_images)},
      {"batch_size", std::to_string(batch_size)},
      {"scorer", scorer},
      {"fgsm_epsilon", format_double(fgsm_epsilon)},
      {"ifgsm_alpha", format_double(ifgsm_alpha)},
      {"ifgsm_iterations", std::to_string(ifgsm_iterations)},
      {"ifgsm_per_iteration_clip", b(ifgsm_per_iteration_clip)},
      {"cw_max_iterations", std::to_string(cw_max_iterations)},
      {"cw_learning_rate", format_double(cw_learning_rate)},
      {"cw_confidence", format_double(cw_confidence)},
      {"cw_initial_const", format_double(cw_initial_const)},
      {"cw_binary_search_steps", std::to_string(cw_binary_search_steps)},
      {"cw_distance_scale", format_double(cw_distance_scale)},
      {"cw_abort_early", b(cw_abort_early)},
  };
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::validate() const {
  (void)ClipSchedule(radii);
  if (attacks.empty()) throw std::invalid_argument("no attacks selected");
  for (const auto& a : attacks) (void)parse_attack(a);
  if (models.empty()) throw std::invalid_argument("no models selected");
  for (const auto& m : models) (void)roster_members(m);
  if (roster_members(scorer).size() != 1) throw std::invalid_argument("scorer must be a single trained model");
  if (train_per_class < 1 || pool_per_class < 1) throw std::invalid_argument("per-class image counts must be >= 1");
  if (epochs < 1 || train_batch_size < 1 || batch_size < 1) {
    throw std::invalid_argument("epochs and batch sizes must be >= 1");
  }
  if (min_survivors < 0 || max_images < 0) throw std::invalid_argument("min_survivors and max_images must be >= 0");
  validate_attack_configs();
}

void RunConfig::validate_attack_configs() const {
  const ExperimentConfig e = experiment_config();
  tl::validate(e.suite.fgsm);
  tl::validate(e.suite.ifgsm);
  tl::validate(e.suite.cw);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = train_batch_size;
  t.learning_rate = train_learning_rate;
  t.accuracy_gate = accuracy_gate;
  t.seed = seed;
  return t;
}

ExperimentConfig RunConfig::experiment_config() const {
  ExperimentConfig e;
  e.attacks.clear();
  for (const auto& a : attacks) e.attacks.push_back(parse_attack(a));
  e.schedule = ClipSchedule(radii);
  e.batch_size = batch_size;
  e.scorer = scorer;
  e.suite.fgsm.epsilon = fgsm_epsilon;
  e.suite.ifgsm.alpha = ifgsm_alpha;
  e.suite.ifgsm.iterations = ifgsm_iterations;
  e.suite.ifgsm.per_iteration_clip = ifgsm_per_iteration_clip;
  e.suite.cw.max_iterations = cw_max_iterations;
  e.suite.cw.learning_rate = cw_learning_rate;
  e.suite.cw.confidence = cw_confidence;
  e.suite.cw.initial_const = cw_initial_const;
  e.suite.cw.binary_search_steps = cw_binary_search_steps;
  e.suite.cw.distance_scale = cw_distance_scale;
  e.suite.cw.abort_early = cw_abort_early;
  return e;
}

std::uint64_t RunConfig::pool_seed() const { return mix_seed(seed, 0x706f6f6cULL); }

void apply_config_text(RunConfig& cfg, const std::string& text) {
  const std::string_view body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("config: invalid manifest JSON: ") + e.what());
    }
    if (!doc.contains("config") || !doc["config"].is_object()) throw FormatError("config: manifest has no config object");
    for (const auto& [k, v] : doc["config"].items()) {
      if (!v.is_string()) throw FormatError("config: manifest value for '" + k + "' is not a string");
      cfg.set(k, v.get<std::string>());
    }
    return;
  }
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    const std::string_view l = trim(std::string_view(line).substr(0, hash));
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw FormatError("config: line " + std::to_string(n) + " has no '='");
    cfg.set(trim(l.substr(0, eq)), l.substr(eq + 1));
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_config_text(cfg, read_text(path));
  return cfg;
}

}  // namespace tl
