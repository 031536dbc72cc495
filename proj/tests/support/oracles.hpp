#pragma once

// Independent reference computations used to cross-check the library. None of
// these call into the code they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "hetsched/task_graph.hpp"

namespace hetsched::testkit {

/// r_cpu by compensated (Neumaier) summation over the raw node list.
inline double reference_r_cpu(const TaskGraph& g) {
  auto kahan = [](const std::vector<double>& xs) {
    double sum = 0.0;
    double c = 0.0;
    for (double x : xs) {
      const double t = sum + x;
      c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
      sum = t;
    }
    return sum + c;
  };
  std::vector<double> cpu;
  std::vector<double> gpu;
  for (const auto& n : g.nodes()) {
    if (n.kind == "SOURCE") continue;
    cpu.push_back(n.weight_cpu);
    gpu.push_back(n.weight_gpu);
  }
  const double t_gpu = kahan(gpu);
  return t_gpu / (t_gpu + kahan(cpu));
}

struct EnumeratedOptimum {
  bool feasible = false;
  double best_cut = std::numeric_limits<double>::infinity();  // over feasible assignments
  double best_error = std::numeric_limits<double>::infinity();  // over all assignments
  std::size_t feasible_count = 0;
};

/// Depth-first enumeration over kernels in id order, tracking the cut
/// incrementally from edges to already-placed kernels.
inline EnumeratedOptimum enumerate_partitions(const TaskGraph& g, double r_cpu, double tolerance,
                                              bool gpu_weights = true) {
  std::vector<KernelId> ids;
  for (const auto& n : g.nodes()) {
    if (n.kind != "SOURCE") ids.push_back(n.id);
  }
  std::map<KernelId, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
  // edges to earlier kernels, by later endpoint
  std::vector<std::vector<std::pair<std::size_t, double>>> back(ids.size());
  for (const auto& e : g.edges()) {
    if (!pos.contains(e.src) || !pos.contains(e.dst)) continue;
    auto a = pos[e.src];
    auto b = pos[e.dst];
    if (a > b) std::swap(a, b);
    back[b].emplace_back(a, e.weight_xfer * e.items);
  }
  double total = 0.0;
  std::vector<double> w;
  for (auto id : ids) {
    const auto& n = g.node(id);
    w.push_back(gpu_weights ? n.weight_gpu : n.weight_cpu);
    total += w.back();
  }

  EnumeratedOptimum out;
  std::vector<int> side(ids.size());
  std::function<void(std::size_t, double, double)> rec = [&](std::size_t i, double cpu, double cut) {
    if (i == ids.size()) {
      const double share = total > 0 ? cpu / total : r_cpu;
      const double err = std::abs(share - r_cpu);
      out.best_error = std::min(out.best_error, err);
      if (err <= tolerance + 1e-12) {
        out.feasible = true;
        ++out.feasible_count;
        out.best_cut = std::min(out.best_cut, cut);
      }
      return;
    }
    for (int s : {0, 1}) {
      side[i] = s;
      double extra = 0.0;
      for (const auto& [j, x] : back[i]) {
        if (side[j] != s) extra += x;
      }
      rec(i + 1, s == 0 ? cpu + w[i] : cpu, cut + extra);
    }
  };
  rec(0, 0.0, 0.0);
  return out;
}

/// Longest path with each kernel at its faster device and free transfers.
inline double critical_path_bound(const TaskGraph& g) {
  std::map<KernelId, double> finish;
  for (auto id : topological_order(g)) {
    double start = 0.0;
    for (auto e : g.in_edges(id)) start = std::max(start, finish[g.edges()[e].src]);
    const auto& n = g.node(id);
    finish[id] = start + (n.kind == "SOURCE" ? 0.0 : std::min(n.weight_cpu, n.weight_gpu));
  }
  double best = 0.0;
  for (const auto& [id, t] : finish) best = std::max(best, t);
  return best;
}

}  // namespace hetsched::testkit
