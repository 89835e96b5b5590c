// Command-line front end: single episodes, penetration sweeps, boundary
// training and result analysis.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rtr/harness.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

struct CommonFlags {
  std::string config;
  std::string policy;
  double penetration = -1.0;
  int n = -1;
  long long seed = -1;
  std::string scenario;
  int iterations = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--n", f.n, "Vehicles per episode")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", f.seed, "Base seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--scenario", f.scenario, "Fixed scenario file (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--iterations", f.iterations, "Planner iterations per search")->check(CLI::PositiveNumber);
}

rtr::RunConfig resolve(const CommonFlags& f) {
  rtr::RunConfig c = f.config.empty() ? rtr::RunConfig{} : rtr::load_run_config(f.config);
  if (!f.scenario.empty()) {
    c.scenario = rtr::load_scenario(rtr::read_text_file(f.scenario));
    c.dt = c.scenario->dt;
    c.horizon = c.scenario->horizon;
  }
  if (!f.policy.empty()) c.policy = rtr::parse_policy(f.policy);
  if (f.penetration >= 0.0) c.penetration = f.penetration;
  if (f.n >= 0) c.n_vehicles = f.n;
  if (f.seed >= 0) c.seed = static_cast<std::uint64_t>(f.seed);
  if (f.iterations > 0) c.planner.iterations = f.iterations;
  rtr::validate(c);
  return c;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string cell(double x) {
  if (std::isnan(x)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

void print_report(const rtr::AggregateReport& report, const std::vector<std::string>& metrics) {
  std::cout << "policy      penetration  runs";
  for (const auto& m : metrics) {
    if (m == "success") std::cout << "  success";
    if (m == "collision") std::cout << "  collision";
    if (m == "pet") std::cout << "  pet_mean  pet_median  pet<3s";
    if (m == "deadlock") std::cout << "  deadlock";
    if (m == "time") std::cout << "  planner_ms  invocations  rollouts";
  }
  std::cout << "\n";
  for (const auto& c : report.cells) {
    char head[64];
    std::snprintf(head, sizeof head, "%-11s %11.2f %5d", std::string(rtr::to_string(c.policy)).c_str(), c.penetration,
                  c.runs);
    std::cout << head;
    for (const auto& m : metrics) {
      if (m == "success") std::cout << "  " << cell(c.success_rate);
      if (m == "collision") std::cout << "  " << cell(c.collision_rate);
      if (m == "pet") std::cout << "  " << cell(c.mean_pet) << "  " << cell(c.median_pet) << "  " << cell(c.pet_share_below_3);
      if (m == "deadlock") std::cout << "  " << cell(c.deadlock_rate);
      if (m == "time") {
        std::cout << "  " << cell(c.mean_planner_time_ms) << "  " << cell(c.mean_invocations) << "  "
                  << cell(c.mean_rollouts);
      }
    }
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-traffic intersection simulator with intention-aware cooperative planning"};
  app.require_subcommand(1);

  CommonFlags sim_flags;
  std::string sim_out, sim_steps;
  bool sim_timing = false;
  auto* sim = app.add_subcommand("sim", "Run one episode");
  add_common(sim, sim_flags);
  sim->add_option("--policy", sim_flags.policy, "single|triggered|consistent|fcfs|idfst");
  sim->add_option("--penetration", sim_flags.penetration, "CAV fraction")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--out", sim_out, "Episode record (JSONL)");
  sim->add_option("--steps", sim_steps, "Step log (JSONL)");
  sim->add_flag("--timing", sim_timing, "Record wall-clock planner time");

  CommonFlags sweep_flags;
  std::string sweep_pens = "0.3,0.5,0.7,1.0";
  std::string sweep_policies = "triggered,consistent,single,fcfs,idfst";
  int sweep_runs = 100;
  std::string sweep_out;
  bool sweep_timing = false;
  auto* sw = app.add_subcommand("sweep", "Run a penetration sweep with paired seeds");
  add_common(sw, sweep_flags);
  sw->add_option("--penetrations", sweep_pens, "Comma-separated CAV fractions");
  sw->add_option("--policies", sweep_policies, "Comma-separated policies");
  sw->add_option("--runs", sweep_runs, "Episodes per cell")->check(CLI::PositiveNumber);
  sw->add_option("--out", sweep_out, "Output directory")->required();
  sw->add_flag("--timing", sweep_timing, "Record wall-clock planner time");

  std::string train_data, train_out;
  double train_reg = 1e-3;
  int train_epochs = 4000;
  auto* train = app.add_subcommand("train-bipg", "Fit the intention boundary to a labeled CSV dataset");
  train->add_option("--data", train_data, "CSV with ttcp_i,ttcp_j,ac_j,label")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Boundary file (JSON)");
  train->add_option("--reg", train_reg, "L2 regularization")->check(CLI::NonNegativeNumber);
  train->add_option("--epochs", train_epochs, "Sub-gradient epochs")->check(CLI::PositiveNumber);

  std::string gen_out;
  rtr::SyntheticOptions gen;
  bool gen_ac = false;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a separable synthetic interaction dataset");
  gen_cmd->add_option("--n", gen.n, "Rows")->check(CLI::Range(2, 10000000));
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--margin", gen.margin, "Minimum TTCP gap, s")->check(CLI::NonNegativeNumber);
  gen_cmd->add_flag("--with-ac", gen_ac, "Derive a_c from sampled kinematics instead of 0");
  gen_cmd->add_option("--out", gen_out, "CSV path")->required();

  std::string an_in, an_metrics = "success,pet,deadlock,time", an_out;
  auto* analyze = app.add_subcommand("analyze", "Aggregate episode records");
  analyze->add_option("--in", an_in, "Episode records (JSONL)")->required()->check(CLI::ExistingFile);
  analyze->add_option("--metrics", an_metrics, "success,collision,pet,deadlock,time");
  analyze->add_option("--out", an_out, "Aggregate table (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (sim->parsed()) {
      const rtr::RunConfig c = resolve(sim_flags);
      const rtr::Episode ep = rtr::run_episode(c);
      rtr::EpisodeRecord rec{c.policy, c.penetration, c.seed,
                             c.scenario ? static_cast<int>(c.scenario->vehicles.size()) : c.n_vehicles, ep.result};
      const std::string line = rtr::episode_to_jsonl(rec, sim_timing);
      if (sim_out.empty()) {
        std::cout << line;
      } else {
        rtr::write_text_file(sim_out, line);
      }
      if (!sim_steps.empty()) rtr::write_text_file(sim_steps, rtr::step_log_to_jsonl(ep.log));
      std::cerr << "success=" << ep.result.success << " collision=" << ep.result.collision
                << " deadlock=" << ep.result.deadlock << " invocations=" << ep.result.planner_invocations << "\n";
    } else if (sw->parsed()) {
      const rtr::RunConfig c = resolve(sweep_flags);
      std::vector<double> pens;
      for (const auto& p : split_list(sweep_pens)) {
        double x = 0.0;
        try {
          x = std::stod(p);
        } catch (const std::exception&) {
          throw rtr::ConfigError("penetrations", "not a number: " + p);
        }
        if (!(x >= 0.0 && x <= 1.0)) throw rtr::ConfigError("penetrations", "must lie in [0, 1]");
        pens.push_back(x);
      }
      std::vector<rtr::Policy> policies;
      for (const auto& p : split_list(sweep_policies)) policies.push_back(rtr::parse_policy(p));
      const rtr::SweepOutput out = rtr::sweep(c, policies, pens, sweep_runs);
      std::filesystem::create_directories(sweep_out);
      const std::filesystem::path dir(sweep_out);
      rtr::write_text_file((dir / "episodes.jsonl").string(), rtr::episodes_to_jsonl(out.episodes, sweep_timing));
      rtr::AggregateReport report = out.report;
      if (!sweep_timing) {
        for (auto& cellv : report.cells) cellv.mean_planner_time_ms = std::nan("");
      }
      rtr::write_text_file((dir / "aggregate.csv").string(), rtr::report_to_csv(report));
      rtr::write_text_file((dir / "pets.csv").string(), rtr::pets_to_csv(out.episodes));
      print_report(out.report, {"success", "collision", "pet", "deadlock", "time"});
    } else if (train->parsed()) {
      const auto data = rtr::load_dataset_csv(train_data);
      rtr::TrainOptions opt;
      opt.epochs = train_epochs;
      const rtr::IntentionBoundary b = rtr::train_boundary(data, train_reg, opt);
      const std::string text = rtr::boundary_to_json(b);
      if (train_out.empty()) {
        std::cout << text;
      } else {
        rtr::save_boundary_file(b, train_out);
      }
      std::cerr << "rows=" << data.size() << " accuracy=" << rtr::training_accuracy(data, b)
                << " hinge=" << rtr::hinge_loss(data, b) << "\n";
    } else if (gen_cmd->parsed()) {
      gen.zero_ac = !gen_ac;
      rtr::write_text_file(gen_out, rtr::dataset_to_csv(rtr::synthetic_dataset(gen)));
    } else if (analyze->parsed()) {
      const auto records = rtr::episodes_from_jsonl(rtr::read_text_file(an_in));
      const rtr::AggregateReport report = rtr::aggregate(records);
      const auto metrics = split_list(an_metrics);
      for (const auto& m : metrics) {
        if (m != "success" && m != "collision" && m != "pet" && m != "deadlock" && m != "time") {
          throw rtr::ConfigError("metrics", "unknown metric '" + m + "'");
        }
      }
      print_report(report, metrics);
      if (!an_out.empty()) rtr::write_text_file(an_out, rtr::report_to_csv(report));
    }
  } catch (const rtr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
