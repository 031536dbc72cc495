// Acceptance runner: `acceptance N` checks one criterion and prints a single
// "criterion N: PASS|FAIL ..." line. Exit status is 0 only on PASS.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "hetsched/hetsched.hpp"
#include "support/oracles.hpp"
#include "support/random_graphs.hpp"
#include "support/trace_checker.hpp"

using namespace hetsched;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

GeneratorParams experiment_graph(const std::string& kind) {
  GeneratorParams p;
  p.n_kernels = 38;
  p.n_edges = 75;
  p.kind = kind;
  return p;
}

const CompareRow& row_for(const std::vector<CompareRow>& rows, int size, std::string_view policy) {
  for (const auto& r : rows) {
    if (r.size == size && r.policy == policy) return r;
  }
  throw std::out_of_range("missing compare row");
}

// Ratio law: r_cpu + r_gpu == 1 exactly, r_cpu within 1e-12 of a
// compensated reference sum. Budget 5 s.
Outcome ratio_law() {
  Outcome out;
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto g = testkit::random_weighted_graph(rng, {1, 60});
    const auto t = workload_ratio(g);
    out.require(t.r_cpu() + t.r_gpu() == 1.0, "r_cpu + r_gpu != 1 on graph " + std::to_string(i));
    worst = std::max(worst, std::abs(t.r_cpu() - testkit::reference_r_cpu(g)));
  }
  out.require(worst <= 1e-12, "reference deviation " + fmt(worst));
  if (out.pass) out.detail = "1000 graphs, max deviation " + fmt(worst);
  return out;
}

std::vector<CompareRow> mm_sweep() {
  CompareConfig cfg;
  cfg.iterations = 100;
  return compare_sweep(experiment_graph("MM"), default_sweep_sizes(), CostModel::synthetic(), cfg);
}

std::vector<CompareRow> ma_run() {
  CompareConfig cfg;
  cfg.iterations = 100;
  auto p = experiment_graph("MA");
  p.size = 1024;
  return compare(p, CostModel::synthetic(), cfg);
}

// Degenerate MM regime. At sizes >= 1024 r_cpu <= 0.05 and gp pins every
// kernel to the GPU; gp and dmda means agree within 5%; eager exceeds both by
// at least 30% at every grid size and the excess grows with size. Budget 30 s.
Outcome matmul_regime() {
  Outcome out;
  const auto model = CostModel::synthetic();
  for (int size : default_sweep_sizes()) {
    if (size < 1024) continue;
    auto p = experiment_graph("MM");
    p.size = size;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      p.seed = seed;
      const auto g = attach_weights(generate_random_dag(p), model);
      PartitionConfig cfg;
      cfg.seed = seed;
      const auto plan = gp_build(g, cfg);
      out.require(plan.targets.r_cpu() <= 0.05,
                  "r_cpu " + fmt(plan.targets.r_cpu()) + " at size " + std::to_string(size));
      out.require(plan.pins.count(Device::kGpu) == g.kernel_count(),
                  "gp left kernels on the CPU at size " + std::to_string(size));
    }
  }
  const auto rows = mm_sweep();
  double prev_excess = 0.0;
  std::ostringstream excesses;
  for (int size : default_sweep_sizes()) {
    const double e = row_for(rows, size, "eager").mean_makespan;
    const double d = row_for(rows, size, "dmda").mean_makespan;
    const double g = row_for(rows, size, "gp").mean_makespan;
    const auto at = " at size " + std::to_string(size);
    if (size >= 1024) {
      out.require(std::abs(g - d) <= 0.05 * std::min(g, d),
                  "gp " + fmt(g) + " vs dmda " + fmt(d) + at);
    }
    const double excess = e / std::max(d, g) - 1.0;
    out.require(excess >= 0.30, "eager excess " + fmt(excess) + at);
    out.require(excess > prev_excess, "eager excess shrinks" + at);
    prev_excess = excess;
    excesses << ' ' << fmt(excess);
  }
  if (out.pass) out.detail = "eager excess over grid:" + excesses.str();
  return out;
}

// MA regime on the 38/75 graph, 100 seeds. Every mean makespan within 15% of
// the best; mean transfers gp <= dmda <= eager with gp < eager. Budget 30 s.
Outcome matadd_regime() {
  Outcome out;
  const auto rows = ma_run();
  const auto& e = row_for(rows, 1024, "eager");
  const auto& d = row_for(rows, 1024, "dmda");
  const auto& g = row_for(rows, 1024, "gp");
  const double best = std::min({e.mean_makespan, d.mean_makespan, g.mean_makespan});
  for (const auto* r : {&e, &d, &g}) {
    out.require(r->mean_makespan <= 1.15 * best,
                r->policy + " makespan " + fmt(r->mean_makespan) + " vs best " + fmt(best));
  }
  out.require(g.mean_transfers <= d.mean_transfers, "gp transfers above dmda");
  out.require(d.mean_transfers <= e.mean_transfers, "dmda transfers above eager");
  out.require(g.mean_transfers < e.mean_transfers, "gp transfers not below eager");
  if (out.pass) {
    out.detail = "makespan e/d/g " + fmt(e.mean_makespan) + "/" + fmt(d.mean_makespan) + "/" +
                 fmt(g.mean_makespan) + ", transfers " + fmt(e.mean_transfers) + "/" +
                 fmt(d.mean_transfers) + "/" + fmt(g.mean_transfers);
  }
  return out;
}

// Partitioner against exhaustive search on 200 graphs with <= 12 kernels.
// Budget 60 s.
Outcome partitioner_oracle() {
  Outcome out;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  PartitionConfig cfg;
  double worst = 1.0;
  for (int i = 0; i < 200; ++i) {
    const auto g = testkit::random_weighted_graph(rng, {1, 12, 0.3});
    const PartitionTargets t(ratio(rng));
    cfg.seed = static_cast<std::uint64_t>(i);
    const auto tag = " on graph " + std::to_string(i);
    const auto oracle = brute_force_partition(g, t, cfg.imbalance_tolerance);
    const auto ref = testkit::enumerate_partitions(g, t.r_cpu(), cfg.imbalance_tolerance);
    out.require(oracle.feasible == ref.feasible, "oracle feasibility disagrees" + tag);
    if (ref.feasible) {
      out.require(std::abs(oracle.edge_cut - ref.best_cut) <= 1e-9 * (1 + ref.best_cut),
                  "oracle cut disagrees" + tag);
    } else {
      out.require(std::abs(oracle.balance_error - ref.best_error) <= 1e-12,
                  "oracle balance disagrees" + tag);
    }
    const auto h = partition_heuristic(g, t, cfg);
    if (oracle.feasible) {
      out.require(h.balance_error <= cfg.imbalance_tolerance + 1e-12, "heuristic infeasible" + tag);
      out.require(h.edge_cut <= 1.5 * oracle.edge_cut + 1e-9,
                  "heuristic cut " + fmt(h.edge_cut) + " vs " + fmt(oracle.edge_cut) + tag);
      if (oracle.edge_cut > 0) worst = std::max(worst, h.edge_cut / oracle.edge_cut);
    }
  }
  if (out.pass) out.detail = "200 graphs, worst cut ratio " + fmt(worst);
  return out;
}

// Simulator invariants on 500 random (graph, policy, seed) triples. Budget 60 s.
Outcome simulator_invariants() {
  Outcome out;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int i = 0; i < 500 && out.pass; ++i) {
    const auto g = testkit::random_weighted_graph(rng, {1, 40});
    const auto kind = static_cast<PolicyKind>(pick(rng));
    PartitionConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    auto policy = make_policy(kind, g, cfg);
    const auto check = testkit::check_trace(g, simulate(g, *policy));
    out.require(check.ok(), std::string(to_string(kind)) + " on triple " + std::to_string(i) +
                                ": " + (check.ok() ? "" : check.violations.front()));
  }
  if (out.pass) out.detail = "500 triples";
  return out;
}

// DOT round-trip, METIS export structure and partition-file re-import.
// Budget 10 s.
Outcome format_round_trips() {
  Outcome out;
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 500 && out.pass; ++i) {
    const auto tag = " on graph " + std::to_string(i);
    const auto g = testkit::random_weighted_graph(rng, {1, 30, 0.2, true});
    const auto text = emit_dot(g);
    const auto back = parse_dot(text);
    out.require(back == g, "DOT round-trip changed the graph" + tag);
    out.require(emit_dot(back) == text, "DOT re-emit differs" + tag);

    const auto m = to_metis(g);
    out.require(m.kernel_ids.size() == g.kernel_count(), "METIS vertex count" + tag);
    std::set<std::pair<KernelId, KernelId>> pairs;
    for (const auto& e : g.edges()) {
      if (!g.is_root(e.src)) pairs.emplace(std::min(e.src, e.dst), std::max(e.src, e.dst));
    }
    out.require(m.edge_count() == pairs.size(), "METIS edge count" + tag);
    for (std::size_t v = 0; v < m.neighbours.size(); ++v) {
      for (const auto& [u, w] : m.neighbours[v]) {
        const auto it = m.neighbours[u].find(v);
        out.require(it != m.neighbours[u].end() && it->second == w, "METIS asymmetry" + tag);
      }
    }
    const auto header = m.text().substr(0, m.text().find('\n'));
    out.require(header == std::to_string(g.kernel_count()) + " " + std::to_string(pairs.size()) +
                              " 011",
                "METIS header" + tag);

    Assignment a;
    for (auto id : g.kernel_ids()) a[id] = coin(rng) ? Device::kGpu : Device::kCpu;
    const PartitionTargets t(0.4);
    const auto direct = make_partition(g, a, t, WeightSource::kGpu, 0.03);
    const auto reread = partition_from_file(emit_partition_file(g, a), g, t);
    const auto ev = evaluate(g, reread);
    out.require(reread.assignment == a, "partition file changed the assignment" + tag);
    out.require(ev.edge_cut == direct.edge_cut && ev.balance_error == direct.balance_error,
                "re-imported partition evaluates differently" + tag);
  }
  if (out.pass) out.detail = "500 graphs";
  return out;
}

// Criteria 2 and 3 repeated give byte-identical CSV.
Outcome determinism() {
  Outcome out;
  out.require(compare_csv(mm_sweep()) == compare_csv(mm_sweep()), "MM sweep CSV differs");
  out.require(compare_csv(ma_run()) == compare_csv(ma_run()), "MA CSV differs");
  if (out.pass) out.detail = "MM sweep and MA run repeat byte for byte";
  return out;
}

struct Criterion {
  std::function<Outcome()> run;
  double budget_s;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {ratio_law, 5},           {matmul_regime, 30},        {matadd_regime, 30},
      {partitioner_oracle, 60}, {simulator_invariants, 60}, {format_round_trips, 10},
      {determinism, 120},
  };
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1-%zu>\n", criteria.size());
    return 2;
  }
  const int n = std::atoi(argv[1]);
  if (n < 1 || n > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "unknown criterion %s\n", argv[1]);
    return 2;
  }
  const auto& c = criteria[static_cast<std::size_t>(n - 1)];
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = c.run();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= c.budget_s) {
    out.pass = false;
    out.detail = "took " + fmt(secs) + " s, budget " + fmt(c.budget_s) + " s; " + out.detail;
  }
  std::printf("criterion %d: %s (%.2f s) %s\n", n, out.pass ? "PASS" : "FAIL", secs,
              out.detail.c_str());
  return out.pass ? 0 : 1;
}
