#pragma once

// Two-way partitioning of the kernel graph: balance node weight against the
// workload targets, minimise the transfer weight of cut edges.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsched/cost_model.hpp"
#include "hetsched/metis.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

struct PartitionConfig {
  WeightSource node_weight_source = WeightSource::kGpu;
  double imbalance_tolerance = 0.03;
  int restarts = 8;
  std::uint64_t seed = 0;

  void check() const {
    if (!(imbalance_tolerance >= 0.0 && imbalance_tolerance < 1.0)) {
      throw std::invalid_argument("imbalance tolerance must lie in [0, 1)");
    }
    if (restarts < 1) throw std::invalid_argument("restarts must be at least 1");
  }
};

using Assignment = std::map<KernelId, Device>;

struct Partition {
  Assignment assignment;  // non-root kernels only
  double edge_cut = 0.0;  // ms
  double balance_error = 0.0;
  bool feasible = true;   // balance_error within the tolerance it was built for
  PartitionTargets targets{0.0};
  WeightSource weight_source = WeightSource::kGpu;
};

struct PartitionEval {
  double edge_cut = 0.0;
  double balance_error = 0.0;
  double cpu_weight = 0.0;
  double gpu_weight = 0.0;
};

/// Recomputes cut and balance from scratch.
inline PartitionEval evaluate(const TaskGraph& g, const Assignment& assignment,
                              const PartitionTargets& targets, WeightSource source) {
  const auto ids = g.kernel_ids();
  if (assignment.size() != ids.size()) {
    throw std::invalid_argument("partition covers " + std::to_string(assignment.size()) +
                                " kernels, graph has " + std::to_string(ids.size()));
  }
  PartitionEval ev;
  const auto device = weight_device(source);
  for (auto id : ids) {
    auto it = assignment.find(id);
    if (it == assignment.end()) {
      throw std::invalid_argument("partition does not cover kernel " + std::to_string(id));
    }
    (it->second == Device::kCpu ? ev.cpu_weight : ev.gpu_weight) += g.node(id).weight(device);
  }
  for (const auto& e : g.edges()) {
    if (g.is_root(e.src)) continue;
    if (assignment.at(e.src) != assignment.at(e.dst)) ev.edge_cut += e.transfer_weight();
  }
  const double total = ev.cpu_weight + ev.gpu_weight;
  const double share = total > 0.0 ? ev.cpu_weight / total : targets.r_cpu();
  ev.balance_error = std::abs(share - targets.r_cpu());
  return ev;
}

inline PartitionEval evaluate(const TaskGraph& g, const Partition& p) {
  return evaluate(g, p.assignment, p.targets, p.weight_source);
}

inline Partition make_partition(const TaskGraph& g, Assignment assignment,
                                const PartitionTargets& targets, WeightSource source,
                                double tolerance) {
  const auto ev = evaluate(g, assignment, targets, source);
  Partition p;
  p.assignment = std::move(assignment);
  p.edge_cut = ev.edge_cut;
  p.balance_error = ev.balance_error;
  p.feasible = ev.balance_error <= tolerance + 1e-12;
  p.targets = targets;
  p.weight_source = source;
  return p;
}

namespace detail {

// Dense, undirected view of the kernel graph (root dropped, parallel edges merged).
struct PartitionProblem {
  std::vector<KernelId> ids;
  std::vector<double> weight;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  double total = 0.0;
  double r_cpu = 0.0;
  double tolerance = 0.0;
  double eps = 1e-9;

  PartitionProblem(const TaskGraph& g, const PartitionTargets& targets, WeightSource source,
                   double tol)
      : ids(g.kernel_ids()), r_cpu(targets.r_cpu()), tolerance(tol) {
    std::map<KernelId, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
    const auto device = weight_device(source);
    for (auto id : ids) weight.push_back(g.node(id).weight(device));
    total = std::accumulate(weight.begin(), weight.end(), 0.0);
    std::map<std::pair<std::size_t, std::size_t>, double> merged;
    double edge_total = 0.0;
    for (const auto& e : g.edges()) {
      if (g.is_root(e.src) || e.src == e.dst) continue;
      auto a = index.at(e.src);
      auto b = index.at(e.dst);
      if (a > b) std::swap(a, b);
      merged[{a, b}] += e.transfer_weight();
      edge_total += e.transfer_weight();
    }
    adj.resize(ids.size());
    for (const auto& [pair, w] : merged) {
      adj[pair.first].emplace_back(pair.second, w);
      adj[pair.second].emplace_back(pair.first, w);
    }
    eps = 1e-9 * (1.0 + edge_total);
  }

  std::size_t size() const { return ids.size(); }

  double balance_error(double cpu_weight) const {
    const double share = total > 0.0 ? cpu_weight / total : r_cpu;
    return std::abs(share - r_cpu);
  }

  // side[v] == 0 is CPU
  double cpu_weight(const std::vector<std::uint8_t>& side) const {
    double w = 0.0;
    for (std::size_t v = 0; v < size(); ++v) {
      if (side[v] == 0) w += weight[v];
    }
    return w;
  }

  double cut(const std::vector<std::uint8_t>& side) const {
    double c = 0.0;
    for (std::size_t v = 0; v < size(); ++v) {
      for (const auto& [u, w] : adj[v]) {
        if (u > v && side[u] != side[v]) c += w;
      }
    }
    return c;
  }

  // Cut reduction obtained by moving v to the other side.
  double gain(const std::vector<std::uint8_t>& side, std::size_t v) const {
    double g = 0.0;
    for (const auto& [u, w] : adj[v]) g += side[u] != side[v] ? w : -w;
    return g;
  }

  Assignment to_assignment(const std::vector<std::uint8_t>& side) const {
    Assignment a;
    for (std::size_t v = 0; v < size(); ++v) a[ids[v]] = side[v] == 0 ? Device::kCpu : Device::kGpu;
    return a;
  }

  std::vector<std::uint8_t> from_assignment(const Assignment& a) const {
    std::vector<std::uint8_t> side(size());
    for (std::size_t v = 0; v < size(); ++v) side[v] = a.at(ids[v]) == Device::kCpu ? 0 : 1;
    return side;
  }
};

// One Fiduccia-Mattheyses pass: move every node at most once, always taking the
// highest-gain move that stays within `slack` of balance, then roll back to the
// best prefix whose error is within `bound`. Returns true if the state improved.
inline bool fm_pass(const PartitionProblem& prob, std::vector<std::uint8_t>& side, double bound,
                    double slack) {
  const std::size_t n = prob.size();
  std::vector<double> gain(n);
  std::vector<bool> locked(n, false);
  // gain buckets: (gain desc, id asc)
  std::set<std::pair<double, std::size_t>> buckets;
  for (std::size_t v = 0; v < n; ++v) {
    gain[v] = prob.gain(side, v);
    buckets.emplace(-gain[v], v);
  }
  double cpu = prob.cpu_weight(side);
  double cut = prob.cut(side);
  const double start_cut = cut;
  const double start_err = prob.balance_error(cpu);
  double best_cut = start_cut;
  double best_err = start_err;
  std::size_t best_len = 0;
  std::vector<std::size_t> moves;

  while (true) {
    auto chosen = buckets.end();
    for (auto it = buckets.begin(); it != buckets.end(); ++it) {
      const auto v = it->second;
      const double next_cpu = side[v] == 0 ? cpu - prob.weight[v] : cpu + prob.weight[v];
      if (prob.balance_error(next_cpu) <= slack + 1e-12) {
        chosen = it;
        break;
      }
    }
    if (chosen == buckets.end()) break;
    const auto v = chosen->second;
    buckets.erase(chosen);
    locked[v] = true;
    cut -= gain[v];
    cpu = side[v] == 0 ? cpu - prob.weight[v] : cpu + prob.weight[v];
    side[v] ^= 1;
    moves.push_back(v);
    for (const auto& [u, w] : prob.adj[v]) {
      if (locked[u]) continue;
      buckets.erase({-gain[u], u});
      gain[u] = prob.gain(side, u);
      buckets.emplace(-gain[u], u);
    }
    const double err = prob.balance_error(cpu);
    if (err > bound + 1e-12) continue;
    if (cut < best_cut - prob.eps || (cut <= best_cut + prob.eps && err < best_err - 1e-12)) {
      best_cut = cut;
      best_err = err;
      best_len = moves.size();
    }
  }
  for (std::size_t i = moves.size(); i > best_len; --i) side[moves[i - 1]] ^= 1;
  return best_len > 0;
}

// Best-improvement pair exchange: swap one CPU node with one GPU node when the
// swap lowers the cut and keeps the error within `bound`. Single moves rarely
// stay balanced when node weights differ widely; exchanges do.
inline bool swap_pass(const PartitionProblem& prob, std::vector<std::uint8_t>& side, double bound) {
  const std::size_t n = prob.size();
  std::vector<double> gain(n);
  for (std::size_t v = 0; v < n; ++v) gain[v] = prob.gain(side, v);
  std::map<std::pair<std::size_t, std::size_t>, double> between;
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& [u, w] : prob.adj[v]) between[{v, u}] = w;
  }
  const double cpu = prob.cpu_weight(side);
  double best = prob.eps;
  std::optional<std::pair<std::size_t, std::size_t>> pick;
  for (std::size_t a = 0; a < n; ++a) {
    if (side[a] != 0) continue;
    for (std::size_t b = 0; b < n; ++b) {
      if (side[b] != 1) continue;
      if (prob.balance_error(cpu - prob.weight[a] + prob.weight[b]) > bound + 1e-12) continue;
      double g = gain[a] + gain[b];
      if (auto it = between.find({a, b}); it != between.end()) g -= 2.0 * it->second;
      if (g > best) {
        best = g;
        pick = {a, b};
      }
    }
  }
  if (!pick) return false;
  side[pick->first] = 1;
  side[pick->second] = 0;
  return true;
}

// Greedy balance repair for starts outside the tolerance: apply the single move
// or pair exchange that lowers the error most (higher gain on ties) until the
// error is within tolerance or stops falling.
inline void repair_balance(const PartitionProblem& prob, std::vector<std::uint8_t>& side) {
  const std::size_t n = prob.size();
  double cpu = prob.cpu_weight(side);
  while (prob.balance_error(cpu) > prob.tolerance + 1e-12) {
    const double err = prob.balance_error(cpu);
    double best_err = err - 1e-12;
    double best_gain = -std::numeric_limits<double>::infinity();
    std::optional<std::pair<std::size_t, std::size_t>> pick;  // second == n: single move
    auto offer = [&](double e, double g, std::size_t a, std::size_t b) {
      if (e < best_err - 1e-12 || (e <= best_err + 1e-12 && pick && g > best_gain)) {
        best_err = e;
        best_gain = g;
        pick = {a, b};
      }
    };
    for (std::size_t a = 0; a < n; ++a) {
      const double moved = side[a] == 0 ? cpu - prob.weight[a] : cpu + prob.weight[a];
      offer(prob.balance_error(moved), prob.gain(side, a), a, n);
      if (side[a] != 0) continue;
      for (std::size_t b = 0; b < n; ++b) {
        if (side[b] != 1) continue;
        offer(prob.balance_error(cpu - prob.weight[a] + prob.weight[b]),
              prob.gain(side, a) + prob.gain(side, b), a, b);
      }
    }
    if (!pick) break;
    side[pick->first] ^= 1;
    if (pick->second != n) side[pick->second] ^= 1;
    cpu = prob.cpu_weight(side);
  }
}

// Intermediate states may leave the bound by one heaviest node, so a pass can
// trade nodes across the cut instead of stalling at the first balanced state.
// The bound is max(tolerance, current error), recomputed every pass; it only
// shrinks, and the loop stops at a state no pass improves under its own bound.
inline bool fm_pass_at_current_bound(const PartitionProblem& prob, std::vector<std::uint8_t>& side) {
  const double bound = std::max(prob.tolerance, prob.balance_error(prob.cpu_weight(side)));
  const double heaviest =
      prob.weight.empty() ? 0.0 : *std::max_element(prob.weight.begin(), prob.weight.end());
  const double slack = bound + (prob.total > 0.0 ? heaviest / prob.total : 0.0);
  return fm_pass(prob, side, bound, slack);
}

inline void fm_refine_sides(const PartitionProblem& prob, std::vector<std::uint8_t>& side) {
  for (int pass = 0; pass < 256 && fm_pass_at_current_bound(prob, side); ++pass) {
  }
}

// FM passes alternated with pair exchanges until neither improves.
inline void local_search(const PartitionProblem& prob, std::vector<std::uint8_t>& side) {
  for (int round = 0; round < 64; ++round) {
    bool moved = false;
    for (int pass = 0; pass < 64 && fm_pass_at_current_bound(prob, side); ++pass) moved = true;
    const double bound = std::max(prob.tolerance, prob.balance_error(prob.cpu_weight(side)));
    for (int pass = 0; pass < 256 && swap_pass(prob, side, bound); ++pass) moved = true;
    if (!moved) break;
  }
}

// Grows one side from a random seed vertex in BFS order, taking a vertex only
// while that brings the grown side closer to its target share.
inline std::vector<std::uint8_t> grow_region(const PartitionProblem& prob, std::mt19937_64& rng,
                                             bool bfs) {
  const std::size_t n = prob.size();
  const bool grow_cpu = prob.r_cpu <= 0.5;
  const std::uint8_t grown = grow_cpu ? 0 : 1;
  const double target = (grow_cpu ? prob.r_cpu : 1.0 - prob.r_cpu) * prob.total;
  std::vector<std::uint8_t> side(n, grown ^ 1);
  std::vector<bool> visited(n, false);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  double have = 0.0;
  std::deque<std::size_t> frontier;
  std::size_t next_seed = 0;
  while (true) {
    if (frontier.empty() || !bfs) {
      while (next_seed < n && visited[order[next_seed]]) ++next_seed;
      if (next_seed == n) break;
      frontier.push_back(order[next_seed]);
      visited[order[next_seed]] = true;
    }
    const auto v = frontier.front();
    frontier.pop_front();
    if (std::abs(have + prob.weight[v] - target) < std::abs(have - target)) {
      side[v] = grown;
      have += prob.weight[v];
      if (bfs) {
        for (const auto& [u, w] : prob.adj[v]) {
          if (!visited[u]) {
            visited[u] = true;
            frontier.push_back(u);
          }
        }
      }
    }
  }
  return side;
}

inline constexpr int kKicksPerRestart = 4;

struct Candidate {
  std::vector<std::uint8_t> side;
  double cut = 0.0;
  double error = 0.0;
  bool feasible = false;
};

// feasible first, then smaller cut (smaller imbalance when infeasible), then
// the lexicographically smaller assignment
inline bool better(const Candidate& a, const Candidate& b, double eps) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.feasible) {
    if (a.cut < b.cut - eps) return true;
    if (a.cut > b.cut + eps) return false;
  } else {
    if (a.error < b.error - 1e-12) return true;
    if (a.error > b.error + 1e-12) return false;
  }
  return a.side < b.side;
}

inline Candidate score(const PartitionProblem& prob, std::vector<std::uint8_t> side) {
  Candidate c;
  c.cut = prob.cut(side);
  c.error = prob.balance_error(prob.cpu_weight(side));
  c.feasible = c.error <= prob.tolerance + 1e-12;
  c.side = std::move(side);
  return c;
}

}  // namespace detail

/// FM refinement of an existing partition. The cut never grows and the balance
/// error never exceeds max(tolerance, starting error).
inline Partition fm_refine(const TaskGraph& g, const Partition& start,
                           const PartitionTargets& targets, const PartitionConfig& config) {
  config.check();
  const detail::PartitionProblem prob(g, targets, config.node_weight_source,
                                      config.imbalance_tolerance);
  auto side = prob.from_assignment(start.assignment);
  detail::fm_refine_sides(prob, side);
  return make_partition(g, prob.to_assignment(side), targets, config.node_weight_source,
                        config.imbalance_tolerance);
}

/// Multi-start heuristic: the two single-sided assignments plus `restarts`
/// randomised region-growing starts. Each start is pulled into balance, refined
/// by FM passes and pair exchanges, then kicked a few times. The best feasible
/// result wins; if none is feasible the least imbalanced one is returned with
/// `feasible == false`.
inline Partition partition_heuristic(const TaskGraph& g, const PartitionTargets& targets,
                                     const PartitionConfig& config) {
  config.check();
  const detail::PartitionProblem prob(g, targets, config.node_weight_source,
                                      config.imbalance_tolerance);
  if (prob.size() == 0) throw std::invalid_argument("graph has no kernels to partition");

  std::mt19937_64 rng(config.seed);
  std::optional<detail::Candidate> best;
  auto offer = [&](detail::Candidate c) {
    if (!best || detail::better(c, *best, prob.eps)) best = std::move(c);
  };
  offer(detail::score(prob, std::vector<std::uint8_t>(prob.size(), 1)));
  offer(detail::score(prob, std::vector<std::uint8_t>(prob.size(), 0)));
  for (int r = 0; r < config.restarts; ++r) {
    auto side = detail::grow_region(prob, rng, r % 2 == 0);
    detail::repair_balance(prob, side);
    detail::local_search(prob, side);
    auto local = detail::score(prob, side);
    // a few random kicks from the local optimum, kept only when they improve it
    std::uniform_int_distribution<std::size_t> node(0, prob.size() - 1);
    for (int kick = 0; kick < detail::kKicksPerRestart; ++kick) {
      auto trial = local.side;
      for (std::size_t f = 0; f < std::max<std::size_t>(2, prob.size() / 8); ++f) trial[node(rng)] ^= 1;
      detail::repair_balance(prob, trial);
      detail::local_search(prob, trial);
      auto c = detail::score(prob, std::move(trial));
      if (detail::better(c, local, prob.eps)) local = std::move(c);
    }
    offer(std::move(local));
  }
  return make_partition(g, prob.to_assignment(best->side), targets, config.node_weight_source,
                        config.imbalance_tolerance);
}

inline constexpr std::size_t kBruteForceLimit = 20;

/// Exhaustive oracle over all 2^n assignments (n <= 20). Ties go to the
/// lexicographically smallest assignment in ascending kernel id, CPU before GPU.
inline Partition brute_force_partition(const TaskGraph& g, const PartitionTargets& targets,
                                       double tolerance,
                                       WeightSource source = WeightSource::kGpu) {
  const detail::PartitionProblem prob(g, targets, source, tolerance);
  const std::size_t n = prob.size();
  if (n > kBruteForceLimit) {
    throw std::invalid_argument("brute force partitioning refuses " + std::to_string(n) +
                                " kernels (limit " + std::to_string(kBruteForceLimit) + ")");
  }
  std::optional<detail::Candidate> best;
  std::vector<std::uint8_t> side(n);
  // the first kernel is the most significant bit, so masks ascend lexicographically
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (std::size_t v = 0; v < n; ++v) side[v] = (mask >> (n - 1 - v)) & 1U;
    auto c = detail::score(prob, side);
    if (!best || detail::better(c, *best, prob.eps)) best = std::move(c);
  }
  return make_partition(g, prob.to_assignment(best->side), targets, source, tolerance);
}

/// Rebuilds a Partition from an externally produced METIS partition file.
inline Partition partition_from_file(std::string_view text, const TaskGraph& g,
                                     const PartitionTargets& targets,
                                     const PartitionConfig& config = {}) {
  return make_partition(g, parse_partition_file(text, g), targets, config.node_weight_source,
                        config.imbalance_tolerance);
}

}  // namespace hetsched
