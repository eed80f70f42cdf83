#include "transferlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "binary_io.hpp"

namespace tl {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

struct CsvRow {
  std::vector<std::string> cells;
  int line = 0;
};

std::vector<CsvRow> parse_csv(const std::string& text, const std::string& expected_header, const char* what) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != expected_header) {
    throw FormatError(std::string(what) + ": expected header '" + expected_header + "'");
  }
  std::vector<CsvRow> rows;
  const auto columns = static_cast<std::size_t>(std::count(expected_header.begin(), expected_header.end(), ',') + 1);
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    CsvRow row{{}, n};
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      row.cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (row.cells.size() != columns) {
      throw FormatError(std::string(what) + ": line " + std::to_string(n) + " has " + std::to_string(row.cells.size()) +
                        " fields, expected " + std::to_string(columns));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
T parse_number(const std::string& s, const CsvRow& row, const char* what) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(std::string(what) + ": line " + std::to_string(row.line) + ": bad number '" + s + "'");
  }
  return v;
}

// Order of first appearance.
std::size_t intern(std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  names.push_back(name);
  return names.size() - 1;
}

std::size_t intern(std::vector<int>& values, int v) {
  const auto it = std::find(values.begin(), values.end(), v);
  if (it != values.end()) return static_cast<std::size_t>(it - values.begin());
  values.push_back(v);
  return values.size() - 1;
}

const char* kMatrixHeader = "attack,source,target,radius,correct,incorrect,failed,evaluated,accuracy";
const char* kCalibrationHeader = "attack,source,radius,mean_ssim,mean_mad,mean_mse,mean_linf,inception_score";

}  // namespace

std::string transfer_matrix_csv(const TransferMatrix& m) {
  std::string out = std::string(kMatrixHeader) + "\n";
  for (std::size_t a = 0; a < m.attacks().size(); ++a) {
    for (std::size_t s = 0; s < m.models().size(); ++s) {
      for (std::size_t t = 0; t < m.models().size(); ++t) {
        for (std::size_t r = 0; r < m.radii().size(); ++r) {
          const CellCounts& c = m.at(a, s, t, r);
          out += m.attacks()[a] + "," + m.models()[s] + "," + m.models()[t] + "," + std::to_string(m.radii()[r]) + "," +
                 std::to_string(c.correct) + "," + std::to_string(c.incorrect) + "," + std::to_string(c.failed) + "," +
                 std::to_string(c.evaluated()) + "," + format_double(m.accuracy(a, s, t, r)) + "\n";
        }
      }
    }
  }
  return out;
}

TransferMatrix parse_transfer_matrix_csv(const std::string& text) {
  constexpr const char* what = "transfer_matrix.csv";
  const std::vector<CsvRow> rows = parse_csv(text, kMatrixHeader, what);
  if (rows.empty()) throw FormatError(std::string(what) + ": no rows");
  std::vector<std::string> attacks, models;
  std::vector<int> radii;
  for (const auto& row : rows) {
    intern(attacks, row.cells[0]);
    intern(models, row.cells[1]);
    intern(models, row.cells[2]);
    intern(radii, parse_number<int>(row.cells[3], row, what));
  }
  const std::size_t expected = attacks.size() * models.size() * models.size() * radii.size();
  if (rows.size() != expected) {
    throw FormatError(std::string(what) + ": " + std::to_string(rows.size()) + " rows, expected " +
                      std::to_string(expected) + " for a full grid");
  }
  const CsvRow& first = rows.front();
  const int curated = parse_number<int>(first.cells[4], first, what) + parse_number<int>(first.cells[5], first, what) +
                      parse_number<int>(first.cells[6], first, what);
  TransferMatrix m(attacks, models, radii, curated);
  std::vector<bool> seen(expected, false);
  for (const auto& row : rows) {
    const std::size_t a = m.attack_index(row.cells[0]), s = m.model_index(row.cells[1]),
                      t = m.model_index(row.cells[2]), r = m.radius_index(parse_number<int>(row.cells[3], row, what));
    const std::size_t key = ((a * models.size() + s) * models.size() + t) * radii.size() + r;
    if (seen[key]) throw FormatError(std::string(what) + ": line " + std::to_string(row.line) + " repeats a cell");
    seen[key] = true;
    CellCounts& c = m.at(a, s, t, r);
    c.correct = parse_number<int>(row.cells[4], row, what);
    c.incorrect = parse_number<int>(row.cells[5], row, what);
    c.failed = parse_number<int>(row.cells[6], row, what);
    if (parse_number<int>(row.cells[7], row, what) != c.evaluated()) {
      throw FormatError(std::string(what) + ": line " + std::to_string(row.line) + ": evaluated != correct + incorrect");
    }
  }
  return m;
}

std::string calibration_csv(const CalibrationTable& cal) {
  std::string out = std::string(kCalibrationHeader) + "\n";
  for (std::size_t a = 0; a < cal.attacks.size(); ++a) {
    for (std::size_t s = 0; s < cal.sources.size(); ++s) {
      for (const CalibrationRow& row : cal.at(a, s)) {
        out += cal.attacks[a] + "," + cal.sources[s] + "," + std::to_string(row.radius) + "," +
               format_double(row.mean_ssim) + "," + format_double(row.mean_mad) + "," + format_double(row.mean_mse) +
               "," + format_double(row.mean_linf) + "," +
               (row.inception_score ? format_double(*row.inception_score) : std::string()) + "\n";
      }
    }
  }
  return out;
}

CalibrationTable parse_calibration_csv(const std::string& text) {
  constexpr const char* what = "calibration.csv";
  const std::vector<CsvRow> rows = parse_csv(text, kCalibrationHeader, what);
  CalibrationTable cal;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<CalibrationRow>> curves;
  for (const auto& row : rows) {
    const std::size_t a = intern(cal.attacks, row.cells[0]);
    const std::size_t s = intern(cal.sources, row.cells[1]);
    CalibrationRow c;
    c.radius = parse_number<int>(row.cells[2], row, what);
    c.mean_ssim = parse_number<double>(row.cells[3], row, what);
    c.mean_mad = parse_number<double>(row.cells[4], row, what);
    c.mean_mse = parse_number<double>(row.cells[5], row, what);
    c.mean_linf = parse_number<double>(row.cells[6], row, what);
    if (!row.cells[7].empty()) c.inception_score = parse_number<double>(row.cells[7], row, what);
    curves[{a, s}].push_back(c);
  }
  cal.curves.resize(cal.attacks.size() * cal.sources.size());
  for (auto& [key, curve] : curves) cal.at(key.first, key.second) = std::move(curve);
  return cal;
}

std::string whitebox_csv(const std::vector<WhiteBoxRow>& rows) {
  std::string out = "attack,source,evaluated,correct,accuracy,successes,failed\n";
  for (const auto& r : rows) {
    out += r.attack + "," + r.source + "," + std::to_string(r.evaluated) + "," + std::to_string(r.correct) + "," +
           format_double(r.accuracy()) + "," + std::to_string(r.successes) + "," + std::to_string(r.failed) + "\n";
  }
  return out;
}

std::string aggregate_csv(const AggregateReport& rep) {
  std::string out =
      "attack,radius,best_source,best_case_transferability,average_case_transferability,mean_ssim_sources,"
      "mean_ssim_sources_radii\n";
  auto ssim = [&](double v) { return rep.has_ssim ? format_double(v) : std::string(); };
  for (const auto& agg : rep.attacks) {
    for (const auto& p : agg.points) {
      out += agg.attack + "," + std::to_string(p.radius) + "," + p.best_source + "," + format_double(p.best_case) + "," +
             format_double(p.average_case) + "," + ssim(p.mean_ssim) + "," + ssim(agg.mean_ssim_all) + "\n";
    }
  }
  double overall = 0.0;
  for (double v : rep.mean_ssim) overall += v / static_cast<double>(rep.mean_ssim.size());
  for (std::size_t r = 0; r < rep.radii.size(); ++r) {
    out += "all," + std::to_string(rep.radii[r]) + ",,," + format_double(rep.average_case[r]) + "," +
           ssim(rep.mean_ssim[r]) + "," + ssim(overall) + "\n";
  }
  return out;
}

std::string ssim_curves_csv(const std::vector<SsimCurve>& curves) {
  std::string out = "attack,source,target,radius,mean_ssim,accuracy\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out += c.attack + "," + c.source + "," + c.target + "," + std::to_string(p.radius) + "," +
             format_double(p.mean_ssim) + "," + format_double(p.accuracy) + "\n";
    }
  }
  return out;
}

std::string appendix_text(const AggregateReport& rep) {
  std::string out;
  for (const auto& agg : rep.attacks) {
    out += agg.attack + " (source " + agg.appendix_source + ")\n";
    for (const auto& line : agg.appendix) out += line + "\n";
    out += "\n";
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  io::write_file_atomic(path, text);
}

std::string read_text(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

namespace {

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw FormatError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

}  // namespace

std::vector<std::string> emit_derived_reports(const TransferMatrix& matrix, const CalibrationTable& calibration,
                                              const std::filesystem::path& dir) {
  prepare_dir(dir);
  const AggregateReport rep = aggregate(matrix, &calibration);
  write_text_atomic(dir / ReportFiles::kAggregate, aggregate_csv(rep));
  write_text_atomic(dir / ReportFiles::kSsimCurves, ssim_curves_csv(reorganize_by_ssim(matrix, calibration)));
  write_text_atomic(dir / ReportFiles::kAppendix, appendix_text(rep));
  return {ReportFiles::kAggregate, ReportFiles::kSsimCurves, ReportFiles::kAppendix};
}

std::vector<std::string> emit_reports(const ExperimentResult& result, const std::string& manifest,
                                      const std::filesystem::path& dir) {
  prepare_dir(dir);
  write_text_atomic(dir / ReportFiles::kTransferMatrix, transfer_matrix_csv(result.matrix));
  write_text_atomic(dir / ReportFiles::kCalibration, calibration_csv(result.calibration));
  write_text_atomic(dir / ReportFiles::kWhiteBox, whitebox_csv(result.whitebox));
  std::vector<std::string> files = {ReportFiles::kTransferMatrix, ReportFiles::kCalibration, ReportFiles::kWhiteBox};
  for (auto& f : emit_derived_reports(result.matrix, result.calibration, dir)) files.push_back(std::move(f));
  write_text_atomic(dir / ReportFiles::kManifest, manifest);
  files.emplace_back(ReportFiles::kManifest);
  return files;
}

}  // namespace tl
