// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"  // nlohmann/json, vendored

#include "spreadometer/designs.hpp"
#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/genpop.hpp"
#include "spreadometer/indices.hpp"
#include "spreadometer/simharness.hpp"
#include "spreadometer/weights.hpp"

namespace spreadometer::cli {

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

/// Writes through `write` to `path`, or to `fallback` when path is empty.
template <class Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write(out);
}

/// Frame from a population file: the pi column when present, otherwise PPS
/// on the size column, otherwise equal probabilities n/N.
inline PopulationFrame frame_from_file(const std::string& path, std::optional<double> n,
                                       std::ostream& err) {
  auto in = open_in(path);
  PopulationSchema schema;
  schema.allow_coordinates_only = true;
  auto loaded = load_population(in, schema);
  if (loaded.pi) return PopulationFrame(std::move(loaded.population), std::move(*loaded.pi));
  if (!n) throw SchemaError(path + " has no pi column; pass --n to derive inclusion probabilities");
  if (loaded.size) {
    const auto whole = static_cast<std::size_t>(std::llround(*n));
    auto pps = make_pps_frame(loaded.population, *loaded.size, whole);
    if (!pps.dropped_ids.empty()) {
      err << "warning: dropped " << pps.dropped_ids.size() << " zero-size unit(s)\n";
    }
    return std::move(pps.frame);
  }
  return PopulationFrame::equal_probability(std::move(loaded.population), *n);
}

}  // namespace detail

/// Runs the command line. Returns 0 on success, 1 on a library error and 2
/// on a usage error; diagnostics go to `err` as one line.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Spatial balance of survey samples: B, Moran's I and the normalized index I_B"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Simulate a population and write it as CSV");
  std::string gen_kind;
  std::size_t gen_n = 1000;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  std::optional<double> gen_window;
  std::size_t gen_clusters = 100;
  double gen_radius = 0.03;
  double gen_inhibition = 0.015;
  std::optional<double> gen_sample_size;
  generate->add_option("kind", gen_kind, "csr, aggregated or regular")
      ->required()
      ->check(CLI::IsMember({"csr", "aggregated", "regular"}));
  generate->add_option("--n", gen_n, "Number of units")->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen_seed, "Random seed")->required();
  generate->add_option("--out", gen_out, "Output file (default: stdout)");
  generate->add_option("--window", gen_window, "Side of the square window (default 1, or 1.5 for regular)");
  generate->add_option("--clusters", gen_clusters, "Parents of the aggregated process")->check(CLI::PositiveNumber);
  generate->add_option("--radius", gen_radius, "Offspring disc radius of the aggregated process");
  generate->add_option("--inhibition", gen_inhibition, "Minimum distance of the regular process");
  generate->add_option("--sample-size", gen_sample_size, "Also write pi = sample-size / N");

  // sample
  auto* sample = app.add_subcommand("sample", "Draw one sample and write the selected ids as CSV");
  std::string smp_population;
  std::string smp_design;
  std::optional<double> smp_n;
  std::size_t smp_k = 5;
  std::size_t smp_grid = 5;
  std::optional<std::uint64_t> smp_seed;
  std::string smp_out;
  sample->add_option("--population", smp_population, "Population CSV")->required();
  sample->add_option("--design", smp_design, "srs, lpm, kclust or umes")
      ->required()
      ->check(CLI::IsMember({"srs", "lpm", "ulpm", "kclust", "umes"}));
  sample->add_option("--n", smp_n, "Sample size (derives pi when the file has none)");
  sample->add_option("--k", smp_k, "Cells drawn by kclust")->check(CLI::PositiveNumber);
  sample->add_option("--grid", smp_grid, "Cells per side for kclust")->check(CLI::PositiveNumber);
  sample->add_option("--seed", smp_seed, "Random seed")->required();
  sample->add_option("--out", smp_out, "Output file (default: stdout)");

  // measure
  auto* measure = app.add_subcommand("measure", "Print B, I_M and I_B of a sample as JSON");
  std::string msr_population;
  std::string msr_sample;
  std::optional<double> msr_n;
  std::string msr_weights;
  measure->add_option("--population", msr_population, "Population CSV")->required();
  measure->add_option("--sample", msr_sample, "Selected ids CSV")->required();
  measure->add_option("--n", msr_n, "Sample size used to derive pi (default: size of the sample)");
  measure->add_option("--dump-weights", msr_weights, "Write the weights matrix as i,j,w triplets");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a repeated-sampling experiment");
  std::string sim_config;
  std::optional<std::uint64_t> sim_seed;
  std::optional<std::size_t> sim_reps;
  std::string sim_out;
  simulate->add_option("--config", sim_config, "Experiment configuration file")->required();
  simulate->add_option("--seed", sim_seed, "Master seed (overrides the config)");
  simulate->add_option("--reps", sim_reps, "Replications per cell (overrides the config)");
  simulate->add_option("--out", sim_out, "Output prefix: writes <out>.csv and <out>.json");

  std::vector<const char*> argv;
  argv.push_back("spreadometer");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (generate->parsed()) {
      RngStream rng(*gen_seed, 0);
      Population population;
      if (gen_kind == "csr") {
        population = gen_csr(gen_n, Window::square(gen_window.value_or(1.0)), rng);
      } else if (gen_kind == "aggregated") {
        if (gen_n % gen_clusters != 0) {
          throw DomainError("aggregated: --n must be a multiple of --clusters");
        }
        population = gen_neyman_scott(gen_clusters, gen_n / gen_clusters, gen_radius,
                                      Window::square(gen_window.value_or(1.0)), rng);
      } else {
        population = gen_matern1(gen_n, gen_inhibition, Window::square(gen_window.value_or(1.5)), rng);
      }
      detail::emit(gen_out, out, [&](std::ostream& os) {
        if (gen_sample_size) {
          write_population(os, PopulationFrame::equal_probability(population, *gen_sample_size));
        } else {
          write_population(os, population);
        }
      });
    } else if (sample->parsed()) {
      const auto frame = detail::frame_from_file(smp_population, smp_n, err);
      const auto n = static_cast<std::size_t>(std::llround(smp_n.value_or(frame.n_target())));
      RngStream rng(*smp_seed, 0);
      SampleSelection selection;
      if (smp_design == "srs") {
        selection = srs(frame, n, rng);
      } else if (smp_design == "lpm" || smp_design == "ulpm") {
        selection = lpm(frame, rng);
      } else if (smp_design == "kclust") {
        selection = kclust(frame, n, smp_k, smp_grid, rng);
      } else {
        selection = umes(frame, rng);
      }
      detail::emit(smp_out, out, [&](std::ostream& os) { write_sample(os, selection, frame.population()); });
    } else if (measure->parsed()) {
      // The sample file is needed first when pi has to be derived from |S|.
      std::optional<double> n = msr_n;
      if (!n) {
        auto in = detail::open_in(msr_sample);
        n = static_cast<double>(csv::read(in).rows.size());
      }
      const auto frame = detail::frame_from_file(msr_population, n, err);
      auto sample_in = detail::open_in(msr_sample);
      const auto selection = read_sample(sample_in, frame.population());
      const auto weights = build_weights(frame);
      if (!msr_weights.empty()) {
        detail::emit(msr_weights, out,
                     [&](std::ostream& os) { write_weight_triplets(os, weights, frame.population()); });
      }
      out << to_json(measure_balance(frame, selection.units(), weights)).dump() << "\n";
    } else if (simulate->parsed()) {
      auto in = detail::open_in(sim_config);
      auto cfg = parse_config(in);
      if (sim_seed) {
        cfg.seed = *sim_seed;
        cfg.seed_given = true;
      }
      if (!cfg.seed_given) throw ConfigError("a seed is required (config key 'seed' or --seed)");
      if (sim_reps) cfg.replications = *sim_reps;
      if (!sim_out.empty()) {
        cfg.output_csv = sim_out + ".csv";
        cfg.output_json = sim_out + ".json";
      }
      const auto report = run_experiment(cfg);
      detail::emit(cfg.output_csv, out, [&](std::ostream& os) { write_report_csv(os, report); });
      if (!cfg.output_json.empty()) {
        detail::emit(cfg.output_json, out, [&](std::ostream& os) { os << to_json(report).dump(2) << "\n"; });
      }
      for (const auto& cell : report.cells) {
        if (!cell.error.empty()) err << "warning: cell " << cell.design << " n=" << cell.n << ": " << cell.error << "\n";
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace spreadometer::cli
