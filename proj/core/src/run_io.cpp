#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grader/error.hpp"
#include "grader/trainer.hpp"

#ifndef GRADER_VERSION
#define GRADER_VERSION "0.0.0"
#endif
#ifndef GRADER_GIT_REV
#define GRADER_GIT_REV "unknown"
#endif

namespace grader {

namespace {

const std::vector<std::string> kColumns = {
    "iteration",  "train_success", "test_success", "evaluated",   "shd_to_reference", "edges",
    "mean_log_likelihood", "kl_sparsity", "tv_distance", "elbo_gap", "train_loss", "buffer_size"};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& file, long line, const std::string& column) {
  if (s == "nan") return std::nan("");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ParseError(file, line, "bad value '" + s + "' in column " + column);
  return v;
}

long parse_long(const std::string& s, const std::string& file, long line, const std::string& column) {
  const double v = parse_double(s, file, line, column);
  if (std::floor(v) != v) throw ParseError(file, line, "non-integer value '" + s + "' in column " + column);
  return static_cast<long>(v);
}

}  // namespace

std::string build_fingerprint() {
#if defined(__clang__)
  const std::string compiler = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  const std::string compiler = std::string("gcc ") + __VERSION__;
#else
  const std::string compiler = "unknown";
#endif
  return std::string("grader ") + GRADER_VERSION + " rev " + GRADER_GIT_REV + " (" + compiler + ")";
}

void to_json(nlohmann::json& j, const ExperimentManifest& m) {
  j = nlohmann::json{{"id", m.id},
                     {"config", m.config},
                     {"seeds", m.seeds},
                     {"outputs", m.outputs},
                     {"fingerprint", m.fingerprint}};
}

void from_json(const nlohmann::json& j, ExperimentManifest& m) {
  m.id = j.at("id").get<std::string>();
  m.config = j.at("config");
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.outputs = j.value("outputs", nlohmann::json::object());
  m.fingerprint = j.value("fingerprint", std::string());
}

std::string unique_experiment_id(const std::string& dir, const std::string& base) {
  namespace fs = std::filesystem;
  std::string id = base;
  for (int n = 2; fs::exists(fs::path(dir) / (id + ".manifest.json")); ++n) id = base + "-" + std::to_string(n);
  return id;
}

void write_manifest(const std::string& path, const ExperimentManifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path);
  out << nlohmann::json(m).dump(2) << '\n';
}

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records, bool include_timing) {
  out << "# fingerprint: " << build_fingerprint() << '\n';
  for (std::size_t c = 0; c < kColumns.size(); ++c) out << (c ? "," : "") << kColumns[c];
  if (include_timing) out << ",wall_clock_seconds";
  out << '\n';
  for (const auto& r : records) {
    out << r.iteration << ',' << (r.train_success ? 1 : 0) << ',' << fmt(r.test_success) << ','
        << (r.evaluated ? 1 : 0) << ',' << r.shd_to_reference << ',' << r.edges << ',' << fmt(r.mean_log_likelihood)
        << ',' << fmt(r.kl_sparsity) << ',' << fmt(r.tv_distance) << ',' << fmt(r.elbo_gap) << ','
        << fmt(r.train_loss) << ',' << r.buffer_size;
    if (include_timing) out << ',' << fmt(r.wall_clock_seconds);
    out << '\n';
  }
}

void save_records_csv(const std::string& path, const std::vector<RunRecord>& records, bool include_timing) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_records_csv(out, records, include_timing);
}

std::vector<RunRecord> read_records_csv(std::istream& in, const std::string& name) {
  std::vector<RunRecord> records;
  std::string line;
  long lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> cells = split(line, ',');
    if (header.empty()) {
      header = cells;
      if (header.size() < kColumns.size() || !std::equal(kColumns.begin(), kColumns.end(), header.begin())) {
        throw ParseError(name, lineno, "unexpected header");
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw ParseError(name, lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                                         std::to_string(cells.size()));
    }
    RunRecord r;
    r.iteration = static_cast<int>(parse_long(cells[0], name, lineno, kColumns[0]));
    r.train_success = parse_long(cells[1], name, lineno, kColumns[1]) != 0;
    r.test_success = parse_double(cells[2], name, lineno, kColumns[2]);
    r.evaluated = parse_long(cells[3], name, lineno, kColumns[3]) != 0;
    r.shd_to_reference = static_cast<int>(parse_long(cells[4], name, lineno, kColumns[4]));
    r.edges = static_cast<int>(parse_long(cells[5], name, lineno, kColumns[5]));
    r.mean_log_likelihood = parse_double(cells[6], name, lineno, kColumns[6]);
    r.kl_sparsity = parse_double(cells[7], name, lineno, kColumns[7]);
    r.tv_distance = parse_double(cells[8], name, lineno, kColumns[8]);
    r.elbo_gap = parse_double(cells[9], name, lineno, kColumns[9]);
    r.train_loss = parse_double(cells[10], name, lineno, kColumns[10]);
    r.buffer_size = static_cast<std::size_t>(parse_long(cells[11], name, lineno, kColumns[11]));
    if (header.size() > kColumns.size()) {
      r.wall_clock_seconds = parse_double(cells[12], name, lineno, "wall_clock_seconds");
    }
    if (r.test_success < 0.0 || r.test_success > 1.0) throw ParseError(name, lineno, "test_success outside [0, 1]");
    if (r.shd_to_reference < 0) throw ParseError(name, lineno, "negative shd_to_reference");
    records.push_back(r);
  }
  if (header.empty()) throw ParseError(name, lineno, "missing header");
  return records;
}

std::vector<RunRecord> load_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_records_csv(in, path);
}

nlohmann::json records_summary(const std::vector<RunRecord>& records) {
  nlohmann::json j{{"iterations", records.size()}, {"fingerprint", build_fingerprint()}};
  if (records.empty()) return j;
  const RunRecord& last = records.back();
  int train_successes = 0;
  for (const auto& r : records) train_successes += r.train_success ? 1 : 0;
  j["final_test_success"] = last.test_success;
  j["final_shd_to_reference"] = last.shd_to_reference;
  j["final_edges"] = last.edges;
  j["final_mean_log_likelihood"] = last.mean_log_likelihood;
  j["final_tv_distance"] = last.tv_distance;
  j["train_success_rate"] = static_cast<double>(train_successes) / static_cast<double>(records.size());
  j["wall_clock_seconds"] = last.wall_clock_seconds;
  return j;
}

const std::vector<std::string>& record_metric_names() {
  static const std::vector<std::string> names = {"test_success", "train_success", "shd",        "edges",
                                                 "log_likelihood", "kl_sparsity",   "tv_distance", "elbo_gap",
                                                 "train_loss"};
  return names;
}

std::vector<LongRow> to_long_rows(const std::vector<RunRecord>& records, std::uint64_t seed,
                                  const std::string& metric_filter) {
  const auto& names = record_metric_names();
  if (!metric_filter.empty() && std::find(names.begin(), names.end(), metric_filter) == names.end()) {
    throw ConfigError("unknown metric '" + metric_filter + "'");
  }
  std::vector<LongRow> rows;
  for (const auto& r : records) {
    const double values[] = {r.test_success,        r.train_success ? 1.0 : 0.0,
                             double(r.shd_to_reference), double(r.edges),
                             r.mean_log_likelihood, r.kl_sparsity,
                             r.tv_distance,         r.elbo_gap,
                             r.train_loss};
    for (std::size_t m = 0; m < names.size(); ++m) {
      if (!metric_filter.empty() && names[m] != metric_filter) continue;
      rows.push_back(LongRow{r.iteration, seed, names[m], values[m]});
    }
  }
  return rows;
}

void write_long_csv(std::ostream& out, const std::vector<LongRow>& rows) {
  out << "# fingerprint: " << build_fingerprint() << '\n';
  out << "iteration,seed,metric,value\n";
  for (const auto& r : rows) out << r.iteration << ',' << r.seed << ',' << r.metric << ',' << fmt(r.value) << '\n';
}

}  // namespace grader
