#include "transferlab/checkpoint.hpp"

#include <cstdio>
#include <sstream>

#include "binary_io.hpp"

namespace tl {

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  char acc[64];
  std::snprintf(acc, sizeof acc, "%.17g", model.clean_accuracy());
  const std::string description = model.spec().describe() + "seed " + std::to_string(model.seed()) + "\n" +
                                  "clean_accuracy " + acc + "\n";
  io::Writer w;
  w.bytes("ADVM", 4);
  w.u16(kCheckpointVersion);
  w.string(description);
  for (const Parameter& p : model.network().parameters()) {
    w.string(p.name);
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (Index d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < p.value.size(); ++i) w.f64(p.value[i]);
  }
  io::write_file_atomic(path, w.buffer().data(), w.buffer().size());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  const std::string what = "checkpoint " + path.string();
  io::Reader r(io::read_file(path), what);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "ADVM") throw FormatError(what + ": bad magic");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::string description = r.string();

  // Split off the metadata lines; the remainder is the network spec.
  std::istringstream in(description);
  std::string line, spec_text;
  std::uint64_t seed = 0;
  double clean_accuracy = 0.0;
  bool have_seed = false, have_acc = false;
  while (std::getline(in, line)) {
    if (line.rfind("seed ", 0) == 0) {
      seed = std::stoull(line.substr(5));
      have_seed = true;
    } else if (line.rfind("clean_accuracy ", 0) == 0) {
      clean_accuracy = std::stod(line.substr(15));
      have_acc = true;
    } else {
      spec_text += line + "\n";
    }
  }
  if (!have_seed || !have_acc) throw FormatError(what + ": description lacks seed or clean_accuracy");
  NetworkSpec spec;
  try {
    spec = NetworkSpec::parse(spec_text);
  } catch (const std::exception& e) {
    throw FormatError(what + ": " + e.what());
  }

  std::vector<Parameter> params;
  for (const auto& [name, shape] : parameter_layout(spec)) {
    if (r.at_end()) throw FormatError(what + ": truncated before parameter '" + name + "'");
    const std::string got = r.string();
    if (got != name) throw FormatError(what + ": expected parameter '" + name + "', found '" + got + "'");
    Shape s(r.u8());
    for (Index& d : s) d = r.u32();
    if (s != shape) throw FormatError(what + ": parameter '" + name + "' has shape " + shape_string(s));
    Tensor value(shape);
    for (Index i = 0; i < value.size(); ++i) value[i] = r.f64();
    params.emplace_back(name, std::move(value));
  }
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after last parameter");
  return TrainedModel(Network(std::move(spec), std::move(params)), seed, clean_accuracy);
}

}  // namespace tl
