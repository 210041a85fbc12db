// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"  // nlohmann/json, vendored

#include "spreadometer/csv.hpp"
#include "spreadometer/designs.hpp"
#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/genpop.hpp"
#include "spreadometer/indices.hpp"
#include "spreadometer/rng.hpp"
#include "spreadometer/weights.hpp"

namespace spreadometer {

enum class PopulationKind { kCsr, kAggregated, kRegular, kCsv };
enum class SizeModel { kNone, kLognormal, kColumn };
enum class DesignKind { kSrs, kLpm, kKclust, kUmes };

struct DesignSpec {
  DesignKind kind = DesignKind::kSrs;
  std::string label;  ///< name used in reports, e.g. "LPM" or "uLPM"
};

struct ExperimentConfig {
  PopulationKind population = PopulationKind::kCsr;
  std::string population_label = "CSR";
  std::size_t population_size = 1000;
  double window_side = 1.0;
  std::size_t clusters = 100;
  std::size_t per_cluster = 10;
  double cluster_radius = 0.03;
  double inhibition = 0.015;
  std::string csv_path;

  /// Unequal probabilities proportional to a size variable, when not kNone.
  SizeModel size_model = SizeModel::kNone;
  double size_sigma = 1.0;

  std::vector<DesignSpec> designs;
  std::vector<std::size_t> sample_sizes;
  std::size_t replications = 1000;
  std::uint64_t seed = 0;
  /// Set when the seed came from the config text rather than the default.
  bool seed_given = false;
  std::size_t k = 5;
  std::size_t grid = 5;
  LpmVariant lpm_variant = LpmVariant::kNearestOfRandom;
  /// Worker threads; 0 picks the hardware count. SPREADOMETER_THREADS caps it.
  std::size_t threads = 0;
  bool keep_raw = false;
  std::string output_csv;
  std::string output_json;

  /// Units supplied directly instead of being generated or read.
  std::optional<Population> population_override;
  std::optional<std::vector<double>> sizes_override;
};

struct IndexSummary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
  std::size_t degenerate = 0;
};

struct CellReport {
  std::string population;
  std::string design;
  std::size_t n = 0;
  std::size_t replications = 0;
  IndexSummary b;
  IndexSummary i_m;
  IndexSummary i_b;
  /// Empty unless the cell was aborted.
  std::string error;
  std::vector<double> raw_b;
  std::vector<double> raw_i_m;
  std::vector<double> raw_i_b;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::size_t population_size = 0;
  std::vector<CellReport> cells;

  const CellReport& cell(std::string_view design, std::size_t n) const {
    for (const auto& c : cells) {
      if (c.design == design && c.n == n) return c;
    }
    throw LookupError("no cell for design " + std::string(design) + " and n = " + std::to_string(n));
  }
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(value)};
  while (std::getline(in, item, ',')) {
    item = csv::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t workers = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPREADOMETER_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) workers = std::min(workers, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(workers, jobs));
}

/// Mean and standard error over values, summed in index order.
inline IndexSummary summarize(const std::vector<std::optional<double>>& values) {
  IndexSummary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++s.count;
    } else {
      ++s.degenerate;
    }
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - s.mean) * (*v - s.mean);
  }
  s.se = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1) / static_cast<double>(s.count)) : 0.0;
  return s;
}

}  // namespace detail

inline DesignSpec parse_design(std::string_view name) {
  const auto key = detail::lower(name);
  if (key == "srs") return {DesignKind::kSrs, "SRS"};
  if (key == "lpm") return {DesignKind::kLpm, "LPM"};
  if (key == "ulpm") return {DesignKind::kLpm, "uLPM"};
  if (key == "kclust") return {DesignKind::kKclust, "kCLUST"};
  if (key == "umes" || key == "mes") return {DesignKind::kUmes, "uMES"};
  throw ConfigError("unknown design \"" + std::string(name) + "\" (expected srs, lpm, ulpm, kclust, umes)");
}

/// Reads `key = value` lines; '#' starts a comment. Lists are comma
/// separated.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  bool window_set = false;
  std::optional<std::string> label;
  std::string line;
  std::size_t line_no = 0;
  const auto to_size = [&](const std::string& v) {
    try {
      std::size_t pos = 0;
      const auto out = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return static_cast<std::size_t>(out);
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected a nonnegative integer, got \"" + v + "\"");
    }
  };
  const auto to_double = [&](const std::string& v) {
    try {
      return csv::parse_double(v, line_no, "value");
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  };
  const auto to_bool = [&](const std::string& v) {
    const auto l = detail::lower(v);
    if (l == "true" || l == "yes" || l == "1") return true;
    if (l == "false" || l == "no" || l == "0") return false;
    throw ConfigError("line " + std::to_string(line_no) + ": expected true/false, got \"" + v + "\"");
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = csv::detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = detail::lower(csv::detail::trim(text.substr(0, eq)));
    const auto value = csv::detail::trim(text.substr(eq + 1));

    if (key == "population") {
      static const std::map<std::string, std::pair<PopulationKind, const char*>> kinds = {
          {"csr", {PopulationKind::kCsr, "CSR"}},
          {"aggregated", {PopulationKind::kAggregated, "AGGREGATED"}},
          {"regular", {PopulationKind::kRegular, "REGULAR"}},
          {"csv", {PopulationKind::kCsv, "CSV"}}};
      const auto it = kinds.find(detail::lower(value));
      if (it == kinds.end()) {
        throw ConfigError("unknown population \"" + value + "\" (expected csr, aggregated, regular, csv)");
      }
      cfg.population = it->second.first;
      cfg.population_label = it->second.second;
    } else if (key == "label") {
      label = value;
    } else if (key == "population_size") {
      cfg.population_size = to_size(value);
    } else if (key == "window") {
      cfg.window_side = to_double(value);
      window_set = true;
    } else if (key == "clusters") {
      cfg.clusters = to_size(value);
    } else if (key == "per_cluster") {
      cfg.per_cluster = to_size(value);
    } else if (key == "radius") {
      cfg.cluster_radius = to_double(value);
    } else if (key == "inhibition") {
      cfg.inhibition = to_double(value);
    } else if (key == "csv") {
      cfg.csv_path = value;
    } else if (key == "size_model") {
      const auto v = detail::lower(value);
      if (v == "none") {
        cfg.size_model = SizeModel::kNone;
      } else if (v == "lognormal") {
        cfg.size_model = SizeModel::kLognormal;
      } else if (v == "column") {
        cfg.size_model = SizeModel::kColumn;
      } else {
        throw ConfigError("unknown size_model \"" + value + "\" (expected none, lognormal, column)");
      }
    } else if (key == "size_sigma") {
      cfg.size_sigma = to_double(value);
    } else if (key == "designs" || key == "design") {
      cfg.designs.clear();
      for (const auto& d : detail::split_list(value)) cfg.designs.push_back(parse_design(d));
    } else if (key == "n") {
      cfg.sample_sizes.clear();
      for (const auto& v : detail::split_list(value)) cfg.sample_sizes.push_back(to_size(v));
    } else if (key == "replications" || key == "reps") {
      cfg.replications = to_size(value);
    } else if (key == "seed") {
      cfg.seed = to_size(value);
      cfg.seed_given = true;
    } else if (key == "k") {
      cfg.k = to_size(value);
    } else if (key == "grid") {
      cfg.grid = to_size(value);
    } else if (key == "lpm_variant") {
      const auto v = detail::lower(value);
      if (v == "nearest") {
        cfg.lpm_variant = LpmVariant::kNearestOfRandom;
      } else if (v == "mutual") {
        cfg.lpm_variant = LpmVariant::kMutualNearest;
      } else {
        throw ConfigError("unknown lpm_variant \"" + value + "\" (expected nearest, mutual)");
      }
    } else if (key == "threads") {
      cfg.threads = to_size(value);
    } else if (key == "keep_raw") {
      cfg.keep_raw = to_bool(value);
    } else if (key == "output_csv") {
      cfg.output_csv = value;
    } else if (key == "output_json") {
      cfg.output_json = value;
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    }
  }
  if (!window_set && cfg.population == PopulationKind::kRegular) cfg.window_side = 1.5;
  if (label) cfg.population_label = *label;
  return cfg;
}

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.replications == 0) throw ConfigError("replications must be at least 1");
  if (cfg.designs.empty()) throw ConfigError("no designs given");
  if (cfg.sample_sizes.empty()) throw ConfigError("no sample sizes given");
  if (std::find(cfg.sample_sizes.begin(), cfg.sample_sizes.end(), std::size_t{0}) != cfg.sample_sizes.end()) {
    throw ConfigError("sample sizes must be positive");
  }
  if (!cfg.population_override && cfg.population == PopulationKind::kCsv) {
    if (cfg.csv_path.empty()) throw ConfigError("population = csv needs a csv path");
    if (!std::ifstream(cfg.csv_path)) throw ConfigError("cannot open population file " + cfg.csv_path);
  }
}

/// The population and, when probabilities are unequal, its size variable.
struct ScenarioPopulation {
  Population population;
  std::optional<std::vector<double>> sizes;
};

inline ScenarioPopulation build_population(const ExperimentConfig& cfg) {
  RngStream rng(cfg.seed, stream_id(detail::fnv1a("population"), 0));
  ScenarioPopulation out;
  std::optional<std::vector<double>> csv_sizes;
  if (cfg.population_override) {
    out.population = *cfg.population_override;
  } else {
    const auto window = Window::square(cfg.window_side);
    switch (cfg.population) {
      case PopulationKind::kCsr:
        out.population = gen_csr(cfg.population_size, window, rng);
        break;
      case PopulationKind::kAggregated:
        out.population = gen_neyman_scott(cfg.clusters, cfg.per_cluster, cfg.cluster_radius, window, rng);
        break;
      case PopulationKind::kRegular:
        out.population = gen_matern1(cfg.population_size, cfg.inhibition, window, rng);
        break;
      case PopulationKind::kCsv: {
        std::ifstream in(cfg.csv_path);
        if (!in) throw ConfigError("cannot open population file " + cfg.csv_path);
        PopulationSchema schema;
        schema.allow_coordinates_only = true;
        auto loaded = load_population(in, schema);
        out.population = std::move(loaded.population);
        csv_sizes = std::move(loaded.size);
        break;
      }
    }
  }

  switch (cfg.size_model) {
    case SizeModel::kNone:
      break;
    case SizeModel::kLognormal: {
      RngStream size_rng(cfg.seed, stream_id(detail::fnv1a("sizes"), 0));
      std::vector<double> sizes(out.population.size());
      for (auto& v : sizes) {
        // Box-Muller on the stream's own uniforms keeps draws portable.
        const double u1 = 1.0 - size_rng.uniform();
        const double u2 = size_rng.uniform();
        const double normal = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        v = std::exp(cfg.size_sigma * normal);
      }
      out.sizes = std::move(sizes);
      break;
    }
    case SizeModel::kColumn:
      if (cfg.sizes_override) {
        out.sizes = cfg.sizes_override;
      } else if (csv_sizes) {
        out.sizes = std::move(csv_sizes);
      } else {
        throw ConfigError("size_model = column needs a population file with a size column");
      }
      break;
  }
  return out;
}

namespace detail {

struct Draw {
  std::optional<double> b;
  std::optional<double> i_m;
  std::optional<double> i_b;
};

inline Draw evaluate(const PopulationFrame& frame, const SampleSelection& sample, const WeightsMatrix& w) {
  const auto report = measure_balance(frame, sample.units(), w);
  return {report.b, report.i_m, report.i_b};
}

}  // namespace detail

/// Runs every (design, n) cell: the frame and W are built once per n, then
/// `replications` samples are drawn on independent streams and measured.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto scenario = build_population(cfg);
  ExperimentReport report;
  report.config = cfg;
  report.population_size = scenario.population.size();

  for (const auto n : cfg.sample_sizes) {
    std::optional<PopulationFrame> frame;
    std::optional<WeightsMatrix> weights;
    std::string frame_error;
    try {
      if (scenario.sizes) {
        frame = make_pps_frame(scenario.population, *scenario.sizes, n).frame;
      } else {
        frame = PopulationFrame::equal_probability(scenario.population, static_cast<double>(n));
      }
      weights = build_weights(*frame);
    } catch (const Error& e) {
      frame_error = std::string(e.kind()) + ": " + e.what();
    }

    for (const auto& design : cfg.designs) {
      CellReport cell;
      cell.population = cfg.population_label;
      cell.design = design.label;
      cell.n = n;
      cell.replications = cfg.replications;
      if (!frame_error.empty()) {
        cell.error = frame_error;
        report.cells.push_back(std::move(cell));
        continue;
      }

      const auto cell_stream = detail::fnv1a(design.label + "/" + std::to_string(n));
      std::vector<detail::Draw> draws(cfg.replications);
      std::vector<std::string> errors(cfg.replications);
      try {
        std::optional<ConditionalPoissonDesign> cps;
        if (design.kind == DesignKind::kUmes) cps.emplace(*frame);

        const auto run_one = [&](std::size_t rep) {
          RngStream rng(cfg.seed, stream_id(cell_stream, rep));
          try {
            SampleSelection sample;
            switch (design.kind) {
              case DesignKind::kSrs:
                sample = srs(*frame, n, rng);
                break;
              case DesignKind::kLpm:
                sample = lpm(*frame, rng, cfg.lpm_variant);
                break;
              case DesignKind::kKclust:
                sample = kclust(*frame, n, cfg.k, cfg.grid, rng);
                break;
              case DesignKind::kUmes:
                sample = cps->draw(rng);
                break;
            }
            draws[rep] = detail::evaluate(*frame, sample, *weights);
          } catch (const Error& e) {
            errors[rep] = std::string(e.kind()) + ": " + e.what();
          }
        };

        const auto workers = detail::worker_count(cfg.threads, cfg.replications);
        if (workers == 1) {
          for (std::size_t rep = 0; rep < cfg.replications; ++rep) run_one(rep);
        } else {
          std::vector<std::thread> pool;
          for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
              for (std::size_t rep = t; rep < cfg.replications; rep += workers) run_one(rep);
            });
          }
          for (auto& th : pool) th.join();
        }
      } catch (const Error& e) {
        cell.error = std::string(e.kind()) + ": " + e.what();
      }
      if (cell.error.empty()) {
        for (const auto& err : errors) {
          if (!err.empty()) {
            cell.error = err;
            break;
          }
        }
      }
      if (cell.error.empty()) {
        std::vector<std::optional<double>> b, i_m, i_b;
        b.reserve(draws.size());
        i_m.reserve(draws.size());
        i_b.reserve(draws.size());
        for (const auto& d : draws) {
          b.push_back(d.b);
          i_m.push_back(d.i_m);
          i_b.push_back(d.i_b);
        }
        cell.b = detail::summarize(b);
        cell.i_m = detail::summarize(i_m);
        cell.i_b = detail::summarize(i_b);
        if (cfg.keep_raw) {
          const auto nan = std::numeric_limits<double>::quiet_NaN();
          for (const auto& d : draws) {
            cell.raw_b.push_back(d.b.value_or(nan));
            cell.raw_i_m.push_back(d.i_m.value_or(nan));
            cell.raw_i_b.push_back(d.i_b.value_or(nan));
          }
        }
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

/// Long-format CSV: population,design,n,index,mean,se,reps. `reps` counts
/// the non-degenerate replications behind the mean.
inline void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "population,design,n,index,mean,se,reps\n";
  for (const auto& cell : report.cells) {
    const std::pair<const char*, const IndexSummary*> rows[] = {{"B", &cell.b}, {"I_M", &cell.i_m}, {"I_B", &cell.i_b}};
    for (const auto& [name, s] : rows) {
      out << cell.population << ',' << cell.design << ',' << cell.n << ',' << name << ','
          << (s->count ? csv::format_double(s->mean) : "NA") << ','
          << (s->count ? csv::format_double(s->se) : "NA") << ',' << s->count << '\n';
    }
  }
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  static const std::map<PopulationKind, const char*> kinds = {{PopulationKind::kCsr, "csr"},
                                                              {PopulationKind::kAggregated, "aggregated"},
                                                              {PopulationKind::kRegular, "regular"},
                                                              {PopulationKind::kCsv, "csv"}};
  static const std::map<SizeModel, const char*> size_models = {
      {SizeModel::kNone, "none"}, {SizeModel::kLognormal, "lognormal"}, {SizeModel::kColumn, "column"}};
  nlohmann::json designs = nlohmann::json::array();
  for (const auto& d : cfg.designs) designs.push_back(d.label);
  return {{"population", cfg.population_override ? "supplied" : kinds.at(cfg.population)},
          {"label", cfg.population_label},
          {"population_size", cfg.population_size},
          {"window", cfg.window_side},
          {"clusters", cfg.clusters},
          {"per_cluster", cfg.per_cluster},
          {"radius", cfg.cluster_radius},
          {"inhibition", cfg.inhibition},
          {"csv", cfg.csv_path},
          {"size_model", size_models.at(cfg.size_model)},
          {"size_sigma", cfg.size_sigma},
          {"designs", designs},
          {"n", cfg.sample_sizes},
          {"replications", cfg.replications},
          {"seed", cfg.seed},
          {"k", cfg.k},
          {"grid", cfg.grid},
          {"lpm_variant", cfg.lpm_variant == LpmVariant::kNearestOfRandom ? "nearest" : "mutual"}};
}

inline nlohmann::json to_json(const ExperimentReport& report) {
  const auto summary = [](const IndexSummary& s) {
    const auto num = [&](double v) { return s.count ? nlohmann::json(v) : nlohmann::json(); };
    return nlohmann::json{{"mean", num(s.mean)}, {"se", num(s.se)}, {"count", s.count}, {"degenerate", s.degenerate}};
  };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json cell = {{"population", c.population},
                           {"design", c.design},
                           {"n", c.n},
                           {"replications", c.replications},
                           {"B", summary(c.b)},
                           {"I_M", summary(c.i_m)},
                           {"I_B", summary(c.i_b)}};
    if (!c.error.empty()) cell["error"] = c.error;
    if (!c.raw_b.empty()) {
      const auto raw = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json() : nlohmann::json(x));
        return a;
      };
      cell["raw"] = {{"B", raw(c.raw_b)}, {"I_M", raw(c.raw_i_m)}, {"I_B", raw(c.raw_i_b)}};
    }
    cells.push_back(std::move(cell));
  }
  return {{"config", config_to_json(report.config)}, {"N", report.population_size}, {"cells", cells}};
}

}  // namespace spreadometer
