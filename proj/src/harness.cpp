#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "errors.hpp"
#include "schedule.hpp"
#include "stats.hpp"

namespace levyub {

namespace {

using nlohmann::json;

// Substream labels under the master seed. Every command family owns one, so
// e.g. ground-truth replicates never share draws with experiment replicates.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kUnbiasedStream = 2;
constexpr std::uint64_t kTruthStream = 3;
constexpr std::uint64_t kPmmhStream = 4;
constexpr std::uint64_t kSweepStream = 5;
constexpr std::uint64_t kRateProbeStream = 6;

// ---------------------------------------------------------------------------
// SHA-1 (for the config digest; hashes the git blob framing of the canonical
// JSON so the digest matches `git hash-object` on the same bytes).

class Sha1 {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_ += len;
    while (len > 0) {
      const std::size_t take = std::min(len, std::size_t{64} - buffered_);
      std::memcpy(buffer_ + buffered_, p, take);
      buffered_ += take;
      p += take;
      len -= take;
      if (buffered_ == 64) {
        process_block(buffer_);
        buffered_ = 0;
      }
    }
  }

  std::string hex_digest() {
    const std::uint64_t bits = total_ * 8;
    const unsigned char one = 0x80;
    update(&one, 1);
    const unsigned char zero = 0x00;
    while (buffered_ != 56) update(&zero, 1);
    unsigned char len_be[8];
    for (int i = 0; i < 8; ++i)
      len_be[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len_be, 8);
    char out[41];
    for (int i = 0; i < 5; ++i)
      std::snprintf(out + 8 * i, sizeof(out) - 8 * i, "%08x", h_[i]);
    return std::string(out, 40);
  }

 private:
  static std::uint32_t rol(std::uint32_t x, int s) {
    return (x << s) | (x >> (32 - s));
  }

  void process_block(const unsigned char* block) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t{block[4 * i]} << 24) |
             (std::uint32_t{block[4 * i + 1]} << 16) |
             (std::uint32_t{block[4 * i + 2]} << 8) |
             std::uint32_t{block[4 * i + 3]};
    for (int i = 16; i < 80; ++i)
      w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      const std::uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = t;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::uint32_t h_[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u,
                         0xC3D2E1F0u};
  unsigned char buffer_[64];
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Config <-> JSON

[[noreturn]] void config_fail(const std::string& where, const std::string& what) {
  throw ConfigError("config: " + where + ": " + what);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_fail(where, "expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) config_fail(where, "unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read_field(const json& j, const std::string& where, const char* key,
                T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    config_fail(where, std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_reference(const json& j, const std::string& where, const char* key,
                    std::optional<double>& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (it->is_null()) {
    out.reset();
    return;
  }
  try {
    out = it->get<double>();
  } catch (const json::exception& e) {
    config_fail(where, std::string("bad value for '") + key + "': " + e.what());
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = xs[i];
  return v;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(std::isfinite(measure.c) && measure.c > 0.0,
          "measure.c must be positive");
  require(measure.alpha > 0.0 && measure.alpha < 2.0,
          "measure.alpha must lie in (0, 2)");
  require(std::isfinite(measure.u) && measure.u >= 1.0,
          "measure.u must be at least 1");

  require(model.kind == "geometric", "model.kind must be 'geometric'");
  require(!model.y0.empty(), "model.y0 must be non-empty");
  for (double v : model.y0) require(std::isfinite(v), "model.y0 must be finite");

  require(std::isfinite(observation.noise_sd) && observation.noise_sd > 0.0,
          "observation.noise_sd must be positive");

  require(data.source == "synthetic" || data.source == "csv",
          "data.source must be 'synthetic' or 'csv'");
  require(data.kind == "returns" || data.kind == "prices",
          "data.kind must be 'returns' or 'prices'");
  if (data.source == "csv")
    require(!data.path.empty(), "data.path required when data.source is 'csv'");
  require(data.synthetic.steps >= 1, "data.synthetic.steps must be >= 1");
  require(data.synthetic.level >= 1, "data.synthetic.level must be >= 1");
  require(!data.synthetic.theta.empty(), "data.synthetic.theta must be non-empty");
  for (double v : data.synthetic.theta)
    require(std::isfinite(v), "data.synthetic.theta must be finite");

  const std::size_t p = prior.lower.size();
  require(p >= 1, "prior bounds must be non-empty");
  require(prior.upper.size() == p && prior.step.size() == p &&
              prior.initial.size() == p,
          "prior.lower/upper/step/initial must share a length");

  require(pmmh.iterations >= 1, "pmmh.iterations must be >= 1");
  require(pmmh.particles >= 1, "pmmh.particles must be >= 1");
  require(std::isfinite(pmmh.evidence_floor) && pmmh.evidence_floor > 0.0,
          "pmmh.evidence_floor must be positive");
  require(pmmh.level >= 0, "pmmh.level must be >= 0");

  require(unbiased.min_level >= 0, "unbiased.min_level must be >= 0");
  require(unbiased.max_level > unbiased.min_level,
          "unbiased.max_level must exceed unbiased.min_level");
  require(std::isfinite(unbiased.level_decay) && unbiased.level_decay > 0.0,
          "unbiased.level_decay must be positive");
  require(unbiased.correction_particles >= 1,
          "unbiased.correction_particles must be >= 1");

  require(experiment.replicates >= 1, "experiment.replicates must be >= 1");
  require(experiment.workers >= 1, "experiment.workers must be >= 1");
  require(!experiment.out_dir.empty(), "experiment.out_dir must be non-empty");
  require(experiment.functional.kind == "theta" ||
              experiment.functional.kind == "terminal_state",
          "experiment.functional.kind must be 'theta' or 'terminal_state'");
  require(experiment.functional.index >= 0,
          "experiment.functional.index must be >= 0");
  if (experiment.reference)
    require(std::isfinite(*experiment.reference),
            "experiment.reference must be finite");

  require(truth.max_level > unbiased.min_level,
          "truth.max_level must exceed unbiased.min_level");
  require(truth.replicates >= 1, "truth.replicates must be >= 1");

  require(!sweep.budgets.empty(), "sweep.budgets must be non-empty");
  for (int b : sweep.budgets) require(b >= 1, "sweep.budgets must be >= 1");
  require(!sweep.pmmh_levels.empty(), "sweep.pmmh_levels must be non-empty");
  for (int l : sweep.pmmh_levels) require(l >= 0, "sweep.pmmh_levels must be >= 0");

  require(rate_probe.min_level >= 1, "rate_probe.min_level must be >= 1");
  require(rate_probe.max_level >= rate_probe.min_level,
          "rate_probe.max_level must be >= rate_probe.min_level");
  require(rate_probe.samples >= 2, "rate_probe.samples must be >= 2");
  require(!rate_probe.theta.empty(), "rate_probe.theta must be non-empty");

  require(debug.schedule_level >= 0, "debug.schedule_level must be >= 0");
}

nlohmann::json ExperimentConfig::to_json() const {
  json j;
  j["measure"] = {{"c", measure.c}, {"alpha", measure.alpha}, {"u", measure.u}};
  j["model"] = {{"kind", model.kind}, {"y0", model.y0}};
  j["observation"] = {{"noise_sd", observation.noise_sd}};
  j["data"] = {{"source", data.source},
               {"path", data.path},
               {"value_column", data.value_column},
               {"kind", data.kind},
               {"date_column", data.date_column},
               {"synthetic",
                {{"steps", data.synthetic.steps},
                 {"theta", data.synthetic.theta},
                 {"level", data.synthetic.level}}}};
  j["prior"] = {{"lower", prior.lower},
                {"upper", prior.upper},
                {"step", prior.step},
                {"initial", prior.initial}};
  j["pmmh"] = {{"iterations", pmmh.iterations},
               {"burn_in", pmmh.burn_in},
               {"particles", pmmh.particles},
               {"evidence_floor", pmmh.evidence_floor},
               {"level", pmmh.level}};
  j["unbiased"] = {
      {"min_level", unbiased.min_level},
      {"max_level", unbiased.max_level},
      {"level_decay", unbiased.level_decay},
      {"correction_particles", unbiased.correction_particles},
      {"scale_corrections_by_repeats", unbiased.scale_corrections_by_repeats},
      {"per_iteration_assembly", unbiased.per_iteration_assembly}};
  j["experiment"] = {
      {"replicates", experiment.replicates},
      {"seed", experiment.seed},
      {"workers", experiment.workers},
      {"out_dir", experiment.out_dir},
      {"deterministic_reduction", experiment.deterministic_reduction},
      {"reference",
       experiment.reference ? json(*experiment.reference) : json(nullptr)},
      {"functional",
       {{"kind", experiment.functional.kind},
        {"index", experiment.functional.index}}}};
  j["truth"] = {{"max_level", truth.max_level},
                {"replicates", truth.replicates},
                {"iterations", truth.iterations}};
  j["sweep"] = {{"budgets", sweep.budgets}, {"pmmh_levels", sweep.pmmh_levels}};
  j["rate_probe"] = {{"min_level", rate_probe.min_level},
                     {"max_level", rate_probe.max_level},
                     {"samples", rate_probe.samples},
                     {"theta", rate_probe.theta}};
  j["debug"] = {{"schedule_dump", debug.schedule_dump},
                {"schedule_level", debug.schedule_level}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  check_keys(j, "top level",
             {"measure", "model", "observation", "data", "prior", "pmmh",
              "unbiased", "experiment", "truth", "sweep", "rate_probe",
              "debug"});

  if (auto it = j.find("measure"); it != j.end()) {
    check_keys(*it, "measure", {"c", "alpha", "u"});
    read_field(*it, "measure", "c", c.measure.c);
    read_field(*it, "measure", "alpha", c.measure.alpha);
    read_field(*it, "measure", "u", c.measure.u);
  }
  if (auto it = j.find("model"); it != j.end()) {
    check_keys(*it, "model", {"kind", "y0"});
    read_field(*it, "model", "kind", c.model.kind);
    read_field(*it, "model", "y0", c.model.y0);
  }
  if (auto it = j.find("observation"); it != j.end()) {
    check_keys(*it, "observation", {"noise_sd"});
    read_field(*it, "observation", "noise_sd", c.observation.noise_sd);
  }
  if (auto it = j.find("data"); it != j.end()) {
    check_keys(*it, "data",
               {"source", "path", "value_column", "kind", "date_column",
                "synthetic"});
    read_field(*it, "data", "source", c.data.source);
    read_field(*it, "data", "path", c.data.path);
    read_field(*it, "data", "value_column", c.data.value_column);
    read_field(*it, "data", "kind", c.data.kind);
    read_field(*it, "data", "date_column", c.data.date_column);
    if (auto s = it->find("synthetic"); s != it->end()) {
      check_keys(*s, "data.synthetic", {"steps", "theta", "level"});
      read_field(*s, "data.synthetic", "steps", c.data.synthetic.steps);
      read_field(*s, "data.synthetic", "theta", c.data.synthetic.theta);
      read_field(*s, "data.synthetic", "level", c.data.synthetic.level);
    }
  }
  if (auto it = j.find("prior"); it != j.end()) {
    check_keys(*it, "prior", {"lower", "upper", "step", "initial"});
    read_field(*it, "prior", "lower", c.prior.lower);
    read_field(*it, "prior", "upper", c.prior.upper);
    read_field(*it, "prior", "step", c.prior.step);
    read_field(*it, "prior", "initial", c.prior.initial);
  }
  if (auto it = j.find("pmmh"); it != j.end()) {
    check_keys(*it, "pmmh",
               {"iterations", "burn_in", "particles", "evidence_floor",
                "level"});
    read_field(*it, "pmmh", "iterations", c.pmmh.iterations);
    read_field(*it, "pmmh", "burn_in", c.pmmh.burn_in);
    read_field(*it, "pmmh", "particles", c.pmmh.particles);
    read_field(*it, "pmmh", "evidence_floor", c.pmmh.evidence_floor);
    read_field(*it, "pmmh", "level", c.pmmh.level);
  }
  if (auto it = j.find("unbiased"); it != j.end()) {
    check_keys(*it, "unbiased",
               {"min_level", "max_level", "level_decay", "correction_particles",
                "scale_corrections_by_repeats", "per_iteration_assembly"});
    read_field(*it, "unbiased", "min_level", c.unbiased.min_level);
    read_field(*it, "unbiased", "max_level", c.unbiased.max_level);
    read_field(*it, "unbiased", "level_decay", c.unbiased.level_decay);
    read_field(*it, "unbiased", "correction_particles",
               c.unbiased.correction_particles);
    read_field(*it, "unbiased", "scale_corrections_by_repeats",
               c.unbiased.scale_corrections_by_repeats);
    read_field(*it, "unbiased", "per_iteration_assembly",
               c.unbiased.per_iteration_assembly);
  }
  if (auto it = j.find("experiment"); it != j.end()) {
    check_keys(*it, "experiment",
               {"replicates", "seed", "workers", "out_dir",
                "deterministic_reduction", "reference", "functional"});
    read_field(*it, "experiment", "replicates", c.experiment.replicates);
    read_field(*it, "experiment", "seed", c.experiment.seed);
    read_field(*it, "experiment", "workers", c.experiment.workers);
    read_field(*it, "experiment", "out_dir", c.experiment.out_dir);
    read_field(*it, "experiment", "deterministic_reduction",
               c.experiment.deterministic_reduction);
    read_reference(*it, "experiment", "reference", c.experiment.reference);
    if (auto f = it->find("functional"); f != it->end()) {
      check_keys(*f, "experiment.functional", {"kind", "index"});
      read_field(*f, "experiment.functional", "kind",
                 c.experiment.functional.kind);
      read_field(*f, "experiment.functional", "index",
                 c.experiment.functional.index);
    }
  }
  if (auto it = j.find("truth"); it != j.end()) {
    check_keys(*it, "truth", {"max_level", "replicates", "iterations"});
    read_field(*it, "truth", "max_level", c.truth.max_level);
    read_field(*it, "truth", "replicates", c.truth.replicates);
    read_field(*it, "truth", "iterations", c.truth.iterations);
  }
  if (auto it = j.find("sweep"); it != j.end()) {
    check_keys(*it, "sweep", {"budgets", "pmmh_levels"});
    read_field(*it, "sweep", "budgets", c.sweep.budgets);
    read_field(*it, "sweep", "pmmh_levels", c.sweep.pmmh_levels);
  }
  if (auto it = j.find("rate_probe"); it != j.end()) {
    check_keys(*it, "rate_probe", {"min_level", "max_level", "samples", "theta"});
    read_field(*it, "rate_probe", "min_level", c.rate_probe.min_level);
    read_field(*it, "rate_probe", "max_level", c.rate_probe.max_level);
    read_field(*it, "rate_probe", "samples", c.rate_probe.samples);
    read_field(*it, "rate_probe", "theta", c.rate_probe.theta);
  }
  if (auto it = j.find("debug"); it != j.end()) {
    check_keys(*it, "debug", {"schedule_dump", "schedule_level"});
    read_field(*it, "debug", "schedule_dump", c.debug.schedule_dump);
    read_field(*it, "debug", "schedule_level", c.debug.schedule_level);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::hash() const {
  const std::string body = to_json().dump();
  const std::string header = "blob " + std::to_string(body.size());
  Sha1 sha;
  sha.update(header.data(), header.size());
  const char zero = '\0';
  sha.update(&zero, 1);
  sha.update(body.data(), body.size());
  return sha.hex_digest();
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Data ingestion

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& cell, std::size_t line_number,
                    const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    std::ostringstream msg;
    msg << "line " << line_number << ": non-numeric value '" << cell
        << "' in column '" << column << "'";
    throw IoError(msg.str());
  }
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "line " << line_number << ": non-finite value in column '" << column
        << "'";
    throw IoError(msg.str());
  }
  return value;
}

}  // namespace

ObservationSeries load_returns(const std::string& path,
                               const std::string& value_column,
                               const std::string& kind,
                               const std::string& date_column) {
  if (kind != "returns" && kind != "prices")
    throw ConfigError("load_returns: kind must be 'returns' or 'prices'");
  std::ifstream f(path);
  if (!f) throw IoError("cannot open data file '" + path + "'");

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();  // trailing EOL
  if (lines.empty()) throw IoError("data file '" + path + "' is empty");

  const std::vector<std::string> header = split_line(lines[0]);
  const auto find_column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    std::ostringstream msg;
    msg << "column '" << name << "' not found in header of '" << path << "'";
    throw ConfigError(msg.str());
  };
  const std::size_t value_idx = find_column(value_column);
  const bool want_dates = !date_column.empty();
  const std::size_t date_idx = want_dates ? find_column(date_column) : 0;

  std::vector<double> raw;
  std::vector<std::string> dates;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_number = i + 1;
    if (lines[i].empty()) {
      std::ostringstream msg;
      msg << "line " << line_number << ": blank row";
      throw IoError(msg.str());
    }
    const std::vector<std::string> cells = split_line(lines[i]);
    if (value_idx >= cells.size() || (want_dates && date_idx >= cells.size())) {
      std::ostringstream msg;
      msg << "line " << line_number << ": expected at least " << header.size()
          << " columns, found " << cells.size();
      throw IoError(msg.str());
    }
    raw.push_back(parse_number(cells[value_idx], line_number, value_column));
    if (want_dates) dates.push_back(cells[date_idx]);
  }

  ObservationSeries series;
  if (kind == "returns") {
    if (raw.empty()) throw IoError("data file '" + path + "' has no data rows");
    series.values = std::move(raw);
    series.timestamps = std::move(dates);
  } else {
    if (raw.size() < 2)
      throw IoError("price series in '" + path +
                    "' needs at least two rows to form returns");
    series.values.reserve(raw.size() - 1);
    for (std::size_t i = 1; i < raw.size(); ++i) {
      if (!(raw[i] > 0.0) || !(raw[i - 1] > 0.0)) {
        std::ostringstream msg;
        msg << "line " << i + 2 << ": prices must be positive to take log-returns";
        throw IoError(msg.str());
      }
      series.values.push_back(std::log(raw[i] / raw[i - 1]));
    }
    if (want_dates)
      series.timestamps.assign(dates.begin() + 1, dates.end());
  }
  return series;
}

// ---------------------------------------------------------------------------
// Model assembly and synthetic data

BuiltModel build_model(const ExperimentConfig& config,
                       const ObservationSeries& series, int max_level) {
  if (series.values.empty()) throw ConfigError("observations: empty series");
  for (double v : series.values)
    if (!std::isfinite(v)) throw ConfigError("observations: non-finite value");

  BuiltModel built;
  built.measure = std::make_unique<TruncatedStableMeasure>(
      config.measure.c, config.measure.alpha, config.measure.u);
  if (config.model.kind != "geometric")
    throw ConfigError("model kind '" + config.model.kind + "' is not supported");
  built.model =
      std::make_unique<SdeModel>(make_geometric_model(built.measure.get()));
  const Eigen::VectorXd y0 = to_vector(config.model.y0);
  if (y0.size() != built.model->state_dim)
    throw DimensionError("model.y0 size does not match the model state dimension");
  built.levels = std::make_unique<LevelTable>(*built.measure, max_level);

  const double sd = config.observation.noise_sd;
  const double log_norm = -std::log(sd) - 0.5 * std::log(2.0 * M_PI);
  built.hmm.model = built.model.get();
  built.hmm.log_potential = [sd, log_norm](int, const Eigen::VectorXd&,
                                           const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& z) {
    const double r = (z[0] - y[0]) / sd;
    return log_norm - 0.5 * r * r;
  };
  built.hmm.observations.reserve(series.values.size());
  for (double v : series.values) {
    Eigen::VectorXd z(1);
    z[0] = v;
    built.hmm.observations.push_back(std::move(z));
  }
  built.hmm.y0 = y0;
  return built;
}

SyntheticData generate_synthetic(const ExperimentConfig& config) {
  const SyntheticConfig& syn = config.data.synthetic;
  if (syn.level < config.unbiased.max_level)
    throw ConfigError(
        "data.synthetic.level must be >= unbiased.max_level so the data's own "
        "discretization bias is negligible for the analysis");

  TruncatedStableMeasure measure(config.measure.c, config.measure.alpha,
                                 config.measure.u);
  if (config.model.kind != "geometric")
    throw ConfigError("model kind '" + config.model.kind + "' is not supported");
  const SdeModel model = make_geometric_model(&measure);
  const Eigen::VectorXd y0 = to_vector(config.model.y0);
  if (y0.size() != model.state_dim)
    throw DimensionError("model.y0 size does not match the model state dimension");
  const Eigen::VectorXd theta = to_vector(syn.theta);
  const LevelTable levels(measure, syn.level);

  const StreamKey data_key =
      StreamKey{config.experiment.seed}.child(kDataStream);
  RngStream path_stream(data_key.child(0));
  RngStream noise_stream(data_key.child(1));

  SyntheticData out;
  out.latent.resize(syn.steps, model.state_dim);
  out.observations.values.resize(static_cast<std::size_t>(syn.steps));
  Eigen::VectorXd y = y0;
  for (int i = 0; i < syn.steps; ++i) {
    UnitPathResult res =
        propagate_unit(y, theta, levels.at(syn.level), model, path_stream);
    y = std::move(res.terminal);
    out.latent.row(i) = y.transpose();
    out.observations.values[static_cast<std::size_t>(i)] =
        y[0] + config.observation.noise_sd * noise_stream.normal();
  }
  return out;
}

ObservationSeries resolve_observations(const ExperimentConfig& config) {
  if (config.data.source == "synthetic")
    return generate_synthetic(config).observations;
  if (config.data.source == "csv")
    return load_returns(config.data.path, config.data.value_column,
                        config.data.kind, config.data.date_column);
  throw ConfigError("data.source must be 'synthetic' or 'csv'");
}

// ---------------------------------------------------------------------------
// Parallel execution

void parallel_for(int workers, int count, const std::function<void(int)>& task,
                  std::vector<int>* completion_order) {
  if (count <= 0) return;
  if (completion_order) {
    completion_order->clear();
    completion_order->reserve(static_cast<std::size_t>(count));
  }
  if (workers <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) {
      task(i);
      if (completion_order) completion_order->push_back(i);
    }
    return;
  }

  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::mutex mutex;
  std::exception_ptr first_error;
  const auto body = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
        return;
      }
      if (completion_order) {
        std::lock_guard<std::mutex> lock(mutex);
        completion_order->push_back(i);
      }
    }
  };
  std::vector<std::thread> team;
  const int size = std::min(workers, count);
  team.reserve(static_cast<std::size_t>(size));
  for (int t = 0; t < size; ++t) team.emplace_back(body);
  for (auto& th : team) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Replicated runs

namespace {

PathFunctional make_functional(const FunctionalConfig& f) {
  if (f.kind == "theta") return theta_component(f.index);
  if (f.kind == "terminal_state") return terminal_state_component(f.index);
  throw ConfigError("functional kind '" + f.kind + "' is not supported");
}

// Primary functional first, then every parameter component for the summary.
std::vector<PathFunctional> build_functionals(const ExperimentConfig& config) {
  std::vector<PathFunctional> fs;
  fs.push_back(make_functional(config.experiment.functional));
  for (std::size_t j = 0; j < config.prior.lower.size(); ++j)
    fs.push_back(theta_component(static_cast<int>(j)));
  return fs;
}

ParamModel build_prior(const ExperimentConfig& config) {
  return uniform_box_gaussian_walk(
      to_vector(config.prior.lower), to_vector(config.prior.upper),
      to_vector(config.prior.step), to_vector(config.prior.initial));
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

ExperimentSummary summarize(std::vector<ReplicateRecord> records,
                            const std::vector<int>& order,
                            std::optional<double> reference) {
  ExperimentSummary s;
  std::vector<double> estimates;
  estimates.reserve(order.size());
  for (int idx : order)
    estimates.push_back(records[static_cast<std::size_t>(idx)].estimate);
  const MeanSe m = mean_and_se(estimates);
  s.mean = m.mean;
  s.se = m.se;
  s.reference_from_mean = !reference.has_value();
  s.reference = reference.value_or(m.mean);
  double acc = 0.0;
  for (double e : estimates) acc += (e - s.reference) * (e - s.reference);
  s.mse = acc / static_cast<double>(estimates.size());
  for (int idx : order) {
    s.total_euler_steps += records[static_cast<std::size_t>(idx)].euler_steps;
    s.total_wall_seconds += records[static_cast<std::size_t>(idx)].wall_seconds;
  }
  s.records.reserve(order.size());
  for (int idx : order)
    s.records.push_back(std::move(records[static_cast<std::size_t>(idx)]));
  return s;
}

std::vector<int> reduction_order(const ExperimentConfig& config, int count,
                                 std::vector<int> completion) {
  if (config.experiment.deterministic_reduction ||
      completion.size() != static_cast<std::size_t>(count)) {
    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    return order;
  }
  return completion;
}

}  // namespace

ExperimentSummary run_unbiased_replicates(const ExperimentConfig& config,
                                          const ObservationSeries& series,
                                          int replicates, int iterations,
                                          int max_level, StreamKey base_key) {
  const BuiltModel built = build_model(config, series, max_level);
  const ParamModel prior = build_prior(config);
  const std::vector<PathFunctional> functionals = build_functionals(config);

  UnbiasedOptions options;
  options.pmmh.iterations = iterations;
  options.pmmh.burn_in = config.pmmh.burn_in;
  options.pmmh.particles = config.pmmh.particles;
  options.pmmh.evidence_floor = config.pmmh.evidence_floor;
  options.correction_particles = config.unbiased.correction_particles;
  options.levels = make_level_pmf(config.unbiased.min_level, max_level,
                                  config.unbiased.level_decay);
  options.scale_corrections_by_repeats =
      config.unbiased.scale_corrections_by_repeats;
  options.per_iteration_assembly = config.unbiased.per_iteration_assembly;

  std::vector<ReplicateRecord> records(static_cast<std::size_t>(replicates));
  const auto run_one = [&](int r, const TaskRunner& inner) {
    const auto start = std::chrono::steady_clock::now();
    const UnbiasedResult res =
        unbiased_estimate(built.hmm, prior, functionals, *built.levels, options,
                          base_key.child(static_cast<std::uint64_t>(r)), inner);
    ReplicateRecord rec;
    rec.replicate = r;
    rec.estimate = res.estimates[0];
    rec.wall_seconds = elapsed_seconds(start);
    rec.euler_steps = res.euler_steps;
    rec.distinct_states = res.distinct_states;
    rec.accept_rate = res.accept_rate;
    rec.extra_estimates = res.estimates.tail(res.estimates.size() - 1);
    records[static_cast<std::size_t>(r)] = std::move(rec);
  };

  std::vector<int> completion;
  const int workers = config.experiment.workers;
  if (replicates == 1) {
    TaskRunner inner;
    if (workers > 1)
      inner = [workers](int count, const std::function<void(int)>& task) {
        parallel_for(workers, count, task);
      };
    run_one(0, inner);
    completion = {0};
  } else {
    parallel_for(workers, replicates, [&](int r) { run_one(r, {}); },
                 &completion);
  }
  return summarize(std::move(records),
                   reduction_order(config, replicates, std::move(completion)),
                   config.experiment.reference);
}

ExperimentSummary run_pmmh_replicates(const ExperimentConfig& config,
                                      const ObservationSeries& series,
                                      int replicates, int iterations, int level,
                                      StreamKey base_key) {
  const BuiltModel built = build_model(config, series, level);
  const ParamModel prior = build_prior(config);
  const std::vector<PathFunctional> functionals = build_functionals(config);

  PmmhOptions options;
  options.iterations = iterations;
  options.burn_in = config.pmmh.burn_in;
  options.particles = config.pmmh.particles;
  options.evidence_floor = config.pmmh.evidence_floor;

  std::vector<ReplicateRecord> records(static_cast<std::size_t>(replicates));
  const Eigen::MatrixXd no_path(0, 0);
  const auto run_one = [&](int r) {
    const auto start = std::chrono::steady_clock::now();
    const PmmhResult res =
        pmmh_run(built.hmm, prior, built.levels->at(level), options,
                 base_key.child(static_cast<std::uint64_t>(r)));
    std::vector<double> values(res.theta_trace.size());
    for (std::size_t s = 0; s < res.theta_trace.size(); ++s)
      values[s] = functionals[0](res.theta_trace[s], no_path);
    ReplicateRecord rec;
    rec.replicate = r;
    rec.estimate = mean_and_se(values).mean;
    rec.within_se = values.size() >= 4 ? batch_means_se(values) : 0.0;
    rec.wall_seconds = elapsed_seconds(start);
    rec.euler_steps = res.euler_steps;
    rec.distinct_states = static_cast<int>(res.states.size());
    rec.accept_rate = res.accept_rate;
    rec.extra_estimates.resize(static_cast<Eigen::Index>(functionals.size()) - 1);
    for (std::size_t f = 1; f < functionals.size(); ++f) {
      double acc = 0.0;
      for (const auto& theta : res.theta_trace)
        acc += functionals[f](theta, no_path);
      rec.extra_estimates[static_cast<Eigen::Index>(f - 1)] =
          acc / static_cast<double>(res.theta_trace.size());
    }
    records[static_cast<std::size_t>(r)] = std::move(rec);
  };

  std::vector<int> completion;
  parallel_for(config.experiment.workers, replicates, run_one, &completion);
  return summarize(std::move(records),
                   reduction_order(config, replicates, std::move(completion)),
                   config.experiment.reference);
}

GroundTruth estimate_ground_truth(const ExperimentConfig& config,
                                  const ObservationSeries& series) {
  const int iterations =
      config.truth.iterations < 0 ? config.pmmh.iterations : config.truth.iterations;
  ExperimentSummary summary = run_unbiased_replicates(
      config, series, config.truth.replicates, iterations,
      config.truth.max_level,
      StreamKey{config.experiment.seed}.child(kTruthStream));
  GroundTruth truth;
  truth.reference = summary.mean;
  truth.se = summary.se;
  truth.summary = std::move(summary);
  return truth;
}

// ---------------------------------------------------------------------------
// Command dispatch and emission

namespace {

std::string unbiased_csv(const std::vector<ReplicateRecord>& records) {
  std::ostringstream out;
  out << "replicate,estimate,wall_seconds,euler_steps,K_hat,accept_rate\n";
  for (const auto& r : records)
    out << r.replicate << ',' << format_double(r.estimate) << ','
        << format_double(r.wall_seconds) << ',' << r.euler_steps << ','
        << r.distinct_states << ',' << format_double(r.accept_rate) << '\n';
  return out.str();
}

std::string pmmh_csv(const std::vector<ReplicateRecord>& records) {
  std::ostringstream out;
  out << "replicate,estimate,se,wall_seconds,euler_steps,accept_rate\n";
  for (const auto& r : records)
    out << r.replicate << ',' << format_double(r.estimate) << ','
        << format_double(r.within_se) << ',' << format_double(r.wall_seconds)
        << ',' << r.euler_steps << ',' << format_double(r.accept_rate) << '\n';
  return out.str();
}

json summary_json(const ExperimentSummary& s) {
  json j;
  j["replicates"] = s.records.size();
  j["mean"] = s.mean;
  j["se"] = s.se;
  j["mse"] = s.mse;
  j["reference"] = s.reference;
  j["reference_from_mean"] = s.reference_from_mean;
  j["total_euler_steps"] = s.total_euler_steps;
  j["total_wall_seconds"] = s.total_wall_seconds;
  json estimates = json::array();
  json secondary = json::array();
  for (const auto& r : s.records) {
    estimates.push_back(r.estimate);
    json extra = json::array();
    for (Eigen::Index i = 0; i < r.extra_estimates.size(); ++i)
      extra.push_back(r.extra_estimates[i]);
    secondary.push_back(std::move(extra));
  }
  j["estimates"] = std::move(estimates);
  j["secondary_estimates"] = std::move(secondary);
  return j;
}

json envelope(const ExperimentConfig& config, const std::string& command) {
  json j;
  j["command"] = command;
  j["config_hash"] = config.hash();
  j["config"] = config.to_json();
  return j;
}

CommandResult command_simulate(const ExperimentConfig& config) {
  const SyntheticData data = generate_synthetic(config);

  std::ostringstream obs;
  obs << "index," << config.data.value_column << '\n';
  for (std::size_t i = 0; i < data.observations.values.size(); ++i)
    obs << i << ',' << format_double(data.observations.values[i]) << '\n';

  std::ostringstream latent;
  latent << "index";
  for (Eigen::Index d = 0; d < data.latent.cols(); ++d) latent << ",state_" << d;
  latent << '\n';
  for (Eigen::Index i = 0; i < data.latent.rows(); ++i) {
    latent << i;
    for (Eigen::Index d = 0; d < data.latent.cols(); ++d)
      latent << ',' << format_double(data.latent(i, d));
    latent << '\n';
  }

  CommandResult result;
  result.files.emplace_back("observations.csv", obs.str());
  result.files.emplace_back("latent.csv", latent.str());

  if (!config.debug.schedule_dump.empty()) {
    TruncatedStableMeasure measure(config.measure.c, config.measure.alpha,
                                   config.measure.u);
    const LevelParams level = level_params(measure, config.debug.schedule_level);
    RngStream stream(
        StreamKey{config.experiment.seed}.child(kDataStream).child(2));
    const JumpSchedule schedule = single_level_schedule(level, measure, stream);
    std::ostringstream dump;
    dump << "t,dL\n";
    for (std::size_t i = 0; i < schedule.cells(); ++i)
      dump << format_double(schedule.times[i + 1]) << ','
           << format_double(schedule.heights[i]) << '\n';
    result.files.emplace_back(config.debug.schedule_dump, dump.str());
  }

  json j = envelope(config, "simulate");
  j["observations"] = data.observations.values.size();
  j["synthetic_level"] = config.data.synthetic.level;
  j["theta"] = config.data.synthetic.theta;
  j["state_dim"] = data.latent.cols();
  result.summary = j.dump(2);
  return result;
}

CommandResult command_unbiased(const ExperimentConfig& config) {
  const ObservationSeries series = resolve_observations(config);
  const ExperimentSummary summary = run_unbiased_replicates(
      config, series, config.experiment.replicates, config.pmmh.iterations,
      config.unbiased.max_level,
      StreamKey{config.experiment.seed}.child(kUnbiasedStream));

  CommandResult result;
  result.files.emplace_back("unbiased_results.csv", unbiased_csv(summary.records));
  json j = envelope(config, "unbiased");
  j["summary"] = summary_json(summary);
  j["iterations"] = config.pmmh.iterations;
  j["min_level"] = config.unbiased.min_level;
  j["max_level"] = config.unbiased.max_level;
  result.summary = j.dump(2);
  return result;
}

CommandResult command_truth(const ExperimentConfig& config) {
  const ObservationSeries series = resolve_observations(config);
  const GroundTruth truth = estimate_ground_truth(config, series);

  CommandResult result;
  result.files.emplace_back("truth_results.csv",
                            unbiased_csv(truth.summary.records));
  json j = envelope(config, "truth");
  j["summary"] = summary_json(truth.summary);
  j["reference"] = truth.reference;
  j["reference_se"] = truth.se;
  j["max_level"] = config.truth.max_level;
  result.summary = j.dump(2);
  return result;
}

CommandResult command_pmmh(const ExperimentConfig& config) {
  const ObservationSeries series = resolve_observations(config);
  const ExperimentSummary summary = run_pmmh_replicates(
      config, series, config.experiment.replicates, config.pmmh.iterations,
      config.pmmh.level, StreamKey{config.experiment.seed}.child(kPmmhStream));

  CommandResult result;
  result.files.emplace_back("pmmh_results.csv", pmmh_csv(summary.records));
  json j = envelope(config, "pmmh");
  j["summary"] = summary_json(summary);
  j["level"] = config.pmmh.level;
  j["iterations"] = config.pmmh.iterations;
  result.summary = j.dump(2);
  return result;
}

struct SweepRow {
  std::string method;
  int level = 0;
  int iterations = 0;
  double estimate = 0.0;
  double mse = 0.0;
  double mean_euler_steps = 0.0;
  double mean_wall_seconds = 0.0;
  double cost_ratio = 0.0;
  std::vector<double> estimates;
};

double mse_against(const std::vector<double>& estimates, double reference) {
  double acc = 0.0;
  for (double e : estimates) acc += (e - reference) * (e - reference);
  return acc / static_cast<double>(estimates.size());
}

CommandResult command_sweep(const ExperimentConfig& config) {
  const ObservationSeries series = resolve_observations(config);
  const StreamKey sweep_key =
      StreamKey{config.experiment.seed}.child(kSweepStream);
  const int replicates = config.experiment.replicates;

  std::vector<SweepRow> rows;
  std::uint64_t row_index = 0;

  for (int budget : config.sweep.budgets) {
    const ExperimentSummary s = run_unbiased_replicates(
        config, series, replicates, budget, config.unbiased.max_level,
        sweep_key.child(row_index++));
    SweepRow row;
    row.method = "unbiased";
    row.level = config.unbiased.max_level;
    row.iterations = budget;
    row.estimate = s.mean;
    row.mean_euler_steps = static_cast<double>(s.total_euler_steps) /
                           static_cast<double>(replicates);
    row.mean_wall_seconds = s.total_wall_seconds / replicates;
    for (const auto& r : s.records) row.estimates.push_back(r.estimate);
    rows.push_back(std::move(row));
  }
  const std::size_t unbiased_rows = rows.size();

  for (int level : config.sweep.pmmh_levels) {
    for (int budget : config.sweep.budgets) {
      const ExperimentSummary s =
          run_pmmh_replicates(config, series, replicates, budget, level,
                              sweep_key.child(row_index++));
      SweepRow row;
      row.method = "pmmh";
      row.level = level;
      row.iterations = budget;
      row.estimate = s.mean;
      row.mean_euler_steps = static_cast<double>(s.total_euler_steps) /
                             static_cast<double>(replicates);
      row.mean_wall_seconds = s.total_wall_seconds / replicates;
      for (const auto& r : s.records) row.estimates.push_back(r.estimate);
      rows.push_back(std::move(row));
    }
  }

  // Reference: configured value, or the largest-budget debiased row's mean.
  double reference;
  if (config.experiment.reference) {
    reference = *config.experiment.reference;
  } else {
    std::size_t best = 0;
    for (std::size_t i = 1; i < unbiased_rows; ++i)
      if (rows[i].iterations > rows[best].iterations) best = i;
    reference = rows[best].estimate;
  }
  for (auto& row : rows) row.mse = mse_against(row.estimates, reference);

  // Cost ratio of a baseline row: its Euler cost scaled (MSE ~ 1/cost) to hit
  // the debiased MSE at the same budget, divided by the debiased cost.
  for (std::size_t i = unbiased_rows; i < rows.size(); ++i) {
    const SweepRow& p = rows[i];
    const SweepRow* match = nullptr;
    for (std::size_t u = 0; u < unbiased_rows; ++u)
      if (rows[u].iterations == p.iterations) match = &rows[u];
    if (match != nullptr && p.mse > 0.0 && match->mse > 0.0 &&
        match->mean_euler_steps > 0.0) {
      rows[i].cost_ratio =
          (p.mean_euler_steps * p.mse / match->mse) / match->mean_euler_steps;
    }
  }
  for (std::size_t i = 0; i < unbiased_rows; ++i) rows[i].cost_ratio = 1.0;

  std::ostringstream csv;
  csv << "method,level,iterations,estimate,mse,mean_euler_steps,"
         "mean_wall_seconds,cost_ratio\n";
  for (const auto& r : rows)
    csv << r.method << ',' << r.level << ',' << r.iterations << ','
        << format_double(r.estimate) << ',' << format_double(r.mse) << ','
        << format_double(r.mean_euler_steps) << ','
        << format_double(r.mean_wall_seconds) << ','
        << format_double(r.cost_ratio) << '\n';

  CommandResult result;
  result.files.emplace_back("sweep_results.csv", csv.str());
  json j = envelope(config, "sweep");
  j["reference"] = reference;
  j["reference_from_config"] = config.experiment.reference.has_value();
  json jrows = json::array();
  for (const auto& r : rows) {
    jrows.push_back({{"method", r.method},
                     {"level", r.level},
                     {"iterations", r.iterations},
                     {"estimate", r.estimate},
                     {"mse", r.mse},
                     {"mean_euler_steps", r.mean_euler_steps},
                     {"mean_wall_seconds", r.mean_wall_seconds},
                     {"cost_ratio", r.cost_ratio},
                     {"estimates", r.estimates}});
  }
  j["rows"] = std::move(jrows);
  result.summary = j.dump(2);
  return result;
}

CommandResult command_rate_probe(const ExperimentConfig& config) {
  TruncatedStableMeasure measure(config.measure.c, config.measure.alpha,
                                 config.measure.u);
  if (config.model.kind != "geometric")
    throw ConfigError("model kind '" + config.model.kind + "' is not supported");
  const SdeModel model = make_geometric_model(&measure);
  const Eigen::VectorXd y0 = to_vector(config.model.y0);
  if (y0.size() != model.state_dim)
    throw DimensionError("model.y0 size does not match the model state dimension");
  const Eigen::VectorXd theta = to_vector(config.rate_probe.theta);
  const LevelTable levels(measure, config.rate_probe.max_level);
  const StreamKey probe_key =
      StreamKey{config.experiment.seed}.child(kRateProbeStream);

  const int first = config.rate_probe.min_level;
  const int count = config.rate_probe.max_level - first + 1;
  std::vector<double> means(static_cast<std::size_t>(count));
  std::vector<double> ses(static_cast<std::size_t>(count));
  parallel_for(config.experiment.workers, count, [&](int i) {
    const int level = first + i;
    RngStream stream(probe_key.child(static_cast<std::uint64_t>(level)));
    double sum = 0.0, sum_sq = 0.0;
    const auto n = config.rate_probe.samples;
    for (std::int64_t s = 0; s < n; ++s) {
      const CoupledUnitPathResult res = propagate_unit_coupled(
          y0, y0, theta, levels.at(level), levels.at(level - 1), model, stream);
      const double d2 = (res.fine_terminal - res.coarse_terminal).squaredNorm();
      sum += d2;
      sum_sq += d2 * d2;
    }
    const double mean = sum / static_cast<double>(n);
    const double var =
        (sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
    means[static_cast<std::size_t>(i)] = mean;
    ses[static_cast<std::size_t>(i)] =
        std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  });

  std::vector<double> xs, ys;
  for (int i = 0; i < count; ++i) {
    if (!(means[static_cast<std::size_t>(i)] > 0.0))
      throw NumericError("rate probe: degenerate mean square difference");
    xs.push_back(static_cast<double>(first + i));
    ys.push_back(std::log2(means[static_cast<std::size_t>(i)]));
  }
  const LinearFit fit = least_squares_fit(xs, ys);

  std::ostringstream csv;
  csv << "level,mean_square_difference,standard_error,samples\n";
  for (int i = 0; i < count; ++i)
    csv << first + i << ',' << format_double(means[static_cast<std::size_t>(i)])
        << ',' << format_double(ses[static_cast<std::size_t>(i)]) << ','
        << config.rate_probe.samples << '\n';

  CommandResult result;
  result.files.emplace_back("rate_probe_results.csv", csv.str());
  json j = envelope(config, "rate-probe");
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["slope_se"] = fit.slope_se;
  j["levels"] = xs;
  j["mean_square_differences"] = means;
  j["standard_errors"] = ses;
  j["samples"] = config.rate_probe.samples;
  result.summary = j.dump(2);
  return result;
}

}  // namespace

CommandResult run_command(const ExperimentConfig& config,
                          const std::string& command) {
  config.validate();
  if (command == "simulate") return command_simulate(config);
  if (command == "unbiased") return command_unbiased(config);
  if (command == "truth") return command_truth(config);
  if (command == "pmmh") return command_pmmh(config);
  if (command == "sweep") return command_sweep(config);
  if (command == "rate-probe") return command_rate_probe(config);
  throw ConfigError("unknown command '" + command +
                    "' (expected simulate|pmmh|unbiased|truth|sweep|rate-probe)");
}

void write_artifacts(const CommandResult& result, const std::string& out_dir,
                     const std::string& command) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw IoError("cannot create output directory '" + out_dir +
                  "': " + ec.message());
  const auto write = [&](const std::string& name, const std::string& body) {
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << body;
    f.flush();
    if (!f) throw IoError("failed while writing '" + path.string() + "'");
  };
  for (const auto& [name, body] : result.files) write(name, body);
  std::string summary_name = command + "_summary.json";
  std::replace(summary_name.begin(), summary_name.end(), '-', '_');
  write(summary_name, result.summary + "\n");
}

}  // namespace levyub
