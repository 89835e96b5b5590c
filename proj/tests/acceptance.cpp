// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "planner_fixtures.hpp"
#include "rtr/harness.hpp"

using namespace rtr;

namespace {

constexpr double kUcbTol = 1e-3;
constexpr double kCurveTol = 1e-9;
constexpr double kSvmRatioTol = 0.10;
constexpr double kAblationGap = 0.05;
constexpr double kTimeRatio = 0.6;
constexpr int kOracleMin = 95;
constexpr int kRuns = 100;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void units() {
  const auto t0 = Clock::now();
  const double ac = cooperative_acceleration(30.0, 10.0, 2.0);
  const double tt = ttcp(20.0, 10.0).seconds;
  const double ucb = ucb_score(1.0, 10, 2, std::sqrt(2.0));
  const auto p = fixtures::problem_of({4.0, 4.5}, true);
  PassingOrder o;
  o.order = {1, 2};
  const double r7 = simulate_reward(o, {{2, 1, 2}}, p, MctsConfig{});
  const double dt = seconds_since(t0);
  const bool ok = ac == 5.0 && tt == 2.0 && std::abs(ucb - 3.146) <= kUcbTol && r7 == -101.5 && dt < 1.0;
  report(1, ok, fmt("a_c=%.17g ttcp=%.17g ucb=%.6f reward=%.17g", ac, tt, ucb, r7) + fmt(" (%.3f s)", dt));
}

void boundary_consistency() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> w(-2.0, 2.0), t(0.2, 12.0), d(0.0, 120.0), v(0.0, 20.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    IntentionBoundary b{w(gen), w(gen), w(gen), w(gen)};
    if (std::abs(b.w1) < 1e-3) b.w1 = 1.0;
    const double ttcp_j = t(gen), d_s = d(gen), v_s = v(gen);
    const double ttcp_i = boundary_curve(ttcp_j, d_s, v_s, b);
    const double margin = decision_value(b, ttcp_i, ttcp_j, cooperative_acceleration(d_s, v_s, ttcp_j));
    worst = std::max(worst, std::abs(margin));
  }
  const double dt = seconds_since(t0);
  report(2, worst < kCurveTol && dt < 1.0, fmt("max |margin| = %.3g over 1000 draws (%.3f s)", worst, dt));
}

void svm() {
  const auto t0 = Clock::now();
  SyntheticOptions opt;
  opt.n = 400;
  opt.margin = 0.5;
  const auto data = synthetic_dataset(opt);
  const IntentionBoundary b = train_boundary(data, 1e-3);
  const double acc = training_accuracy(data, b);
  const double ratio = b.w1 / b.w2;
  const double dt = seconds_since(t0);
  // The generator separates on ttcp_i = ttcp_j, i.e. w1/w2 = -1.
  const bool ok = acc == 1.0 && std::abs(ratio + 1.0) <= kSvmRatioTol && dt < 5.0;
  report(3, ok, fmt("accuracy=%.4f w1/w2=%.4f (%.3f s)", acc, ratio, dt));
}

BipgSample sample(double t, double ttcp_i, double ttcp_j) {
  return make_sample(t, 1, 2, make_features(10.0 * ttcp_j, 10.0, 10.0 * ttcp_i, 10.0), IntentionBoundary{1, -1, 0, 0},
                     6.0);
}

BipgTrace trace_of(const std::vector<BipgSample>& s) {
  BipgTrace tr;
  tr.ego = 1;
  tr.opponent = 2;
  for (const auto& x : s) tr.push(x);
  return tr;
}

void detectors() {
  int grid_bad = 0;
  for (int a = 0; a <= 40; ++a) {
    for (int b = 0; b <= 40; ++b) {
      InteractionFeatures f;
      f.ttcp_i = 1.0 + 0.1 * a;
      f.ttcp_j = 1.0 + 0.1 * b;
      grid_bad += detect_dangerous(f) != (f.ttcp_i < 3.0 && f.ttcp_j < 3.0);
    }
  }
  auto series = [](double i0, double i1, double j0, double j1) {
    std::vector<BipgSample> out;
    for (int k = 0; k <= 10; ++k) out.push_back(sample(0.1 * k, i0 + (i1 - i0) * k / 10.0, j0 + (j1 - j0) * k / 10.0));
    return trace_of(out);
  };
  struct Row {
    bool got, want;
  };
  const std::vector<Row> ineff{{detect_inefficient(series(2, 3, 2, 3), 1.0).fired, true},
                               {detect_inefficient(series(2, 3, 3, 2), 1.0).fired, false},
                               {detect_inefficient(series(2.5, 2.5, 2.5, 2.5), 1.0).fired, false}};
  auto a = [](double t) { return sample(t, 5.0, 4.0); };
  auto b = [](double t) { return sample(t, 4.0, 5.0); };
  const std::vector<Row> unc{{detect_uncertain(trace_of({a(0), a(0.7), b(1.4), a(2.0)}), 2.0).fired, true},
                             {detect_uncertain(trace_of({a(0), a(0.7), b(1.4), b(2.0)}), 2.0).fired, false},
                             {detect_uncertain(trace_of({a(0), a(0.7), a(1.4), a(2.0)}), 2.0).fired, false}};
  int table_bad = 0;
  for (const auto& r : ineff) table_bad += r.got != r.want;
  for (const auto& r : unc) table_bad += r.got != r.want;
  report(4, grid_bad == 0 && table_bad == 0,
         fmt("dangerous grid mismatches=%g of 1681, truth-table mismatches=%g of 6", grid_bad, table_bad));
}

void planner_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  int matched = 0, small = 0, small_matched = 0, violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    const auto inst = fixtures::random_instance(gen, n);
    MctsConfig cfg;
    cfg.iterations = 10000;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const SearchResult r = search(inst.problem, inst.constraints, cfg);
    const bool ok = std::abs(r.reward - fixtures::brute_force_optimum(inst, cfg.delta_safe)) < 1e-9;
    matched += ok;
    if (n <= 3) {
      ++small;
      small_matched += ok;
    }
    violations += count_violations(r.order, inst.constraints);
  }
  const double dt = seconds_since(t0);
  const bool ok = matched >= kOracleMin && small_matched == small && violations == 0 && dt < 60.0;
  report(5, ok,
         fmt("optimal on %g/100, small %g/%g, violations %g", matched, small_matched, small, violations) +
             fmt(" (%.2f s)", dt));
}

struct Cells {
  std::map<std::pair<Policy, double>, AggregateCell> cell;
  std::map<std::pair<Policy, double>, double> seconds;
  const AggregateCell& at(Policy p, double pen) const { return cell.at({p, pen}); }
};

Cells run_sweep() {
  Cells out;
  RunConfig base;
  base.seed = 0;
  for (Policy p : {Policy::Triggered, Policy::Consistent, Policy::Single, Policy::FCFS, Policy::iDFST}) {
    for (double pen : {0.3, 0.5, 0.7, 1.0}) {
      const auto t0 = Clock::now();
      const SweepOutput s = sweep(base, {p}, {pen}, kRuns);
      out.seconds[{p, pen}] = seconds_since(t0);
      out.cell[{p, pen}] = s.report.cells.at(0);
    }
  }
  return out;
}

double total_seconds(const Cells& c, std::initializer_list<Policy> ps, std::initializer_list<double> pens) {
  double t = 0.0;
  for (Policy p : ps) {
    for (double pen : pens) t += c.seconds.at({p, pen});
  }
  return t;
}

void full_penetration(const Cells& c) {
  const AggregateCell& x = c.at(Policy::Triggered, 1.0);
  const double t = c.seconds.at({Policy::Triggered, 1.0});
  report(6, x.success_rate == 1.0 && t < 120.0, fmt("triggered success at 1.0 = %.2f (%.1f s)", x.success_rate, t));
}

void ablation(const Cells& c) {
  bool ok = true;
  std::string detail;
  for (double pen : {0.3, 0.5, 0.7, 1.0}) {
    const double tr = c.at(Policy::Triggered, pen).success_rate;
    const double co = c.at(Policy::Consistent, pen).success_rate;
    const double si = c.at(Policy::Single, pen).success_rate;
    ok = ok && tr >= si && co >= si && std::abs(tr - co) <= kAblationGap + 1e-12;
    detail += fmt("p=%.1f T/C/S=%.2f/%.2f/%.2f; ", pen, tr, co, si);
  }
  const double tt = c.at(Policy::Triggered, 1.0).mean_planner_time_ms;
  const double tc = c.at(Policy::Consistent, 1.0).mean_planner_time_ms;
  ok = ok && tt <= kTimeRatio * tc;
  const double secs = total_seconds(c, {Policy::Triggered, Policy::Consistent, Policy::Single}, {0.3, 0.5, 0.7, 1.0});
  ok = ok && secs < 900.0;
  report(7, ok, detail + fmt("time ratio %.3f (%.2f / %.2f ms) (%.1f s)", tt / tc, tt, tc, secs));
}

void baselines(const Cells& c) {
  bool ok = true;
  std::string detail;
  for (double pen : {0.3, 0.5, 0.7}) {
    const double tr = c.at(Policy::Triggered, pen).success_rate;
    const double fc = c.at(Policy::FCFS, pen).success_rate;
    const double id = c.at(Policy::iDFST, pen).success_rate;
    ok = ok && tr > fc && tr > id;
    detail += fmt("p=%.1f T/FCFS/iDFST=%.2f/%.2f/%.2f; ", pen, tr, fc, id);
  }
  const double fc1 = c.at(Policy::FCFS, 1.0).success_rate;
  const double id1 = c.at(Policy::iDFST, 1.0).success_rate;
  ok = ok && fc1 == 1.0 && id1 == 1.0;
  const double secs = total_seconds(c, {Policy::Triggered, Policy::FCFS, Policy::iDFST}, {0.3, 0.5, 0.7}) +
                      total_seconds(c, {Policy::FCFS, Policy::iDFST}, {1.0});
  ok = ok && secs < 900.0;
  report(8, ok, detail + fmt("at 1.0 FCFS/iDFST=%.2f/%.2f (%.1f s)", fc1, id1, secs));
}

void safety(const Cells& c) {
  const double st = c.at(Policy::Triggered, 0.7).pet_share_below_3;
  const double sf = c.at(Policy::FCFS, 0.7).pet_share_below_3;
  const double si = c.at(Policy::iDFST, 0.7).pet_share_below_3;
  bool ok = st <= sf && st <= si;
  std::string detail = fmt("PET<3s share at 0.7 T/FCFS/iDFST=%.3f/%.3f/%.3f; deadlock ", st, sf, si);
  for (double pen : {0.3, 0.5, 0.7}) {
    const double dt = c.at(Policy::Triggered, pen).deadlock_rate;
    const double df = c.at(Policy::FCFS, pen).deadlock_rate;
    const double di = c.at(Policy::iDFST, pen).deadlock_rate;
    ok = ok && dt <= df && dt <= di;
    detail += fmt("p=%.1f %.2f/%.2f/%.2f; ", pen, dt, df, di);
  }
  report(9, ok, detail);
}

std::string untimed_csv(AggregateReport r) {
  for (auto& cell : r.cells) cell.mean_planner_time_ms = std::nan("");
  return report_to_csv(r);
}

void determinism() {
  const auto t0 = Clock::now();
  RunConfig sim;
  sim.policy = Policy::Triggered;
  sim.penetration = 1.0;
  sim.n_vehicles = 4;
  sim.seed = 7;
  auto sim_files = [&] {
    const Episode ep = run_episode(sim);
    const EpisodeRecord rec{sim.policy, sim.penetration, sim.seed, sim.n_vehicles, ep.result};
    return episode_to_jsonl(rec, false) + step_log_to_jsonl(ep.log);
  };
  RunConfig base;
  base.seed = 3;
  auto sweep_files = [&] {
    const SweepOutput s = sweep(base, {Policy::Triggered, Policy::Consistent, Policy::Single, Policy::FCFS, Policy::iDFST},
                                {0.3, 1.0}, 5);
    return episodes_to_jsonl(s.episodes, false) + untimed_csv(s.report) + pets_to_csv(s.episodes);
  };
  const bool ok = sim_files() == sim_files() && sweep_files() == sweep_files();
  report(10, ok, fmt("sim and sweep outputs byte-identical across repeats (%.1f s)", seconds_since(t0)));
}

}  // namespace

int main() {
  units();
  boundary_consistency();
  svm();
  detectors();
  planner_oracle();
  const auto t0 = Clock::now();
  const Cells cells = run_sweep();
  std::printf("sweep: 5 policies x 4 penetrations x %d runs in %.1f s\n", kRuns, seconds_since(t0));
  full_penetration(cells);
  ablation(cells);
  baselines(cells);
  safety(cells);
  determinism();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
