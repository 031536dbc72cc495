#pragma once

// Repeated policy comparison: mean and standard deviation of makespan and
// transfer count over iterations, optionally swept across problem sizes.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hetsched/cost_model.hpp"
#include "hetsched/detail/text.hpp"
#include "hetsched/partitioner.hpp"
#include "hetsched/schedulers.hpp"
#include "hetsched/simulator.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

/// A fixed weighted graph, or generator parameters re-seeded per iteration.
using GraphSource = std::variant<TaskGraph, GeneratorParams>;

struct CompareConfig {
  std::vector<PolicyKind> policies{PolicyKind::kEager, PolicyKind::kDmda, PolicyKind::kGp};
  MachineModel machine;
  PartitionConfig partition;
  std::optional<PartitionTargets> targets;  // overrides the workload ratio for gp
  int iterations = 100;
  std::uint64_t seed = 0;
};

struct CompareRow {
  std::string policy;
  int size = 0;
  double mean_makespan = 0.0;
  double sd_makespan = 0.0;
  double mean_transfers = 0.0;
  double sd_transfers = 0.0;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // population
};

// Shifted by the first sample, so identical samples give exactly that mean and 0.
inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  const double k = xs.front();
  const auto n = static_cast<double>(xs.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double x : xs) {
    sum += x - k;
    sum_sq += (x - k) * (x - k);
  }
  s.mean = k + sum / n;
  s.sd = std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / n));
  return s;
}

/// Problem size reported for a graph: the largest kernel size in it.
inline int graph_size(const TaskGraph& g) {
  int size = 0;
  for (const auto& n : g.nodes()) size = std::max(size, n.size);
  return size;
}

/// With generator parameters, iteration i uses seed + i for both the graph and
/// the partitioner. A fixed graph keeps the partitioner seed at `seed`, so
/// every iteration repeats the same run. One row per policy, in the order
/// requested.
inline std::vector<CompareRow> compare(const GraphSource& source, const CostModel& model,
                                       const CompareConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (cfg.policies.empty()) throw std::invalid_argument("no policies to compare");
  cfg.machine.check();
  cfg.partition.check();

  std::vector<std::vector<double>> makespans(cfg.policies.size());
  std::vector<std::vector<double>> transfers(cfg.policies.size());
  int size = 0;
  for (int i = 0; i < cfg.iterations; ++i) {
    const auto seed = cfg.seed + static_cast<std::uint64_t>(i);
    TaskGraph g;
    auto partition = cfg.partition;
    if (const auto* params = std::get_if<GeneratorParams>(&source)) {
      auto p = *params;
      p.seed = seed;
      g = attach_weights(generate_random_dag(p), model);
      partition.seed = seed;
    } else {
      g = std::get<TaskGraph>(source);
      partition.seed = cfg.seed;
    }
    size = graph_size(g);
    for (std::size_t p = 0; p < cfg.policies.size(); ++p) {
      auto policy = make_policy(cfg.policies[p], g, partition, cfg.targets);
      const auto m = metrics(simulate(g, *policy, cfg.machine));
      makespans[p].push_back(m.makespan);
      transfers[p].push_back(static_cast<double>(m.transfer_count));
    }
  }

  std::vector<CompareRow> rows;
  for (std::size_t p = 0; p < cfg.policies.size(); ++p) {
    const auto ms = summarize(makespans[p]);
    const auto tr = summarize(transfers[p]);
    rows.push_back(CompareRow{std::string(to_string(cfg.policies[p])), size, ms.mean, ms.sd,
                              tr.mean, tr.sd});
  }
  return rows;
}

/// compare() at each size of the generator grid; rows ordered by size, then
/// policy as requested.
inline std::vector<CompareRow> compare_sweep(const GeneratorParams& params,
                                             const std::vector<int>& sizes, const CostModel& model,
                                             const CompareConfig& cfg) {
  std::vector<CompareRow> rows;
  for (int s : sizes) {
    auto p = params;
    p.size = s;
    auto part = compare(p, model, cfg);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

/// Sizes used when a sweep is requested without an explicit list.
inline const std::vector<int>& default_sweep_sizes() {
  static const std::vector<int> sizes{256, 384, 512, 768, 1024, 1536, 2048};
  return sizes;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "policy,size,mean_makespan,sd_makespan,mean_transfers,sd_transfers\n";
  for (const auto& r : rows) {
    os << r.policy << ',' << r.size << ',' << detail::format_double(r.mean_makespan) << ','
       << detail::format_double(r.sd_makespan) << ',' << detail::format_double(r.mean_transfers)
       << ',' << detail::format_double(r.sd_transfers) << '\n';
  }
  return os.str();
}

}  // namespace hetsched
