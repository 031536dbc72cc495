#pragma once

// Weighted task graph: kernels connected by data edges, rooted at a single
// zero-cost SOURCE kernel that holds all initial data on the host.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hetsched {

using KernelId = std::int32_t;

/// Processor group. Group 0 is the host side.
enum class Device : std::uint8_t { kCpu = 0, kGpu = 1 };

inline constexpr std::string_view to_string(Device d) {
  return d == Device::kCpu ? "CPU" : "GPU";
}

inline constexpr Device other(Device d) {
  return d == Device::kCpu ? Device::kGpu : Device::kCpu;
}

/// Which per-kernel time serves as the node weight for partitioning.
enum class WeightSource : std::uint8_t { kGpu, kCpu };

inline constexpr Device weight_device(WeightSource s) {
  return s == WeightSource::kGpu ? Device::kGpu : Device::kCpu;
}

namespace kernel_kind {
inline constexpr std::string_view kSource = "SOURCE";
inline constexpr std::string_view kMatAdd = "MA";
inline constexpr std::string_view kMatMul = "MM";
}  // namespace kernel_kind

/// Ordered key/value pairs that are carried through DOT round-trips untouched.
using Attributes = std::vector<std::pair<std::string, std::string>>;

struct KernelNode {
  KernelId id = 0;
  std::string kind;
  int size = 0;
  double weight_cpu = 0.0;  // ms
  double weight_gpu = 0.0;  // ms
  bool weighted = false;
  std::string name;  // display label; empty means "use the id"
  Attributes extra;

  bool is_source() const { return kind == kernel_kind::kSource; }
  double weight(Device d) const { return d == Device::kCpu ? weight_cpu : weight_gpu; }

  friend bool operator==(const KernelNode&, const KernelNode&) = default;
};

/// One dependency. `bytes` and `weight_xfer` describe a single data item;
/// `items` counts how many distinct items travel along the edge (only root
/// edges carry more than one: a kernel fed two initial matrices).
struct DataEdge {
  KernelId src = 0;
  KernelId dst = 0;
  std::int64_t bytes = 0;
  double weight_xfer = 0.0;  // ms per item
  int items = 1;
  bool weighted = false;
  Attributes extra;

  double transfer_weight() const { return weight_xfer * items; }

  friend bool operator==(const DataEdge&, const DataEdge&) = default;
};

class TaskGraph {
 public:
  TaskGraph() = default;

  // Nodes are sorted by id and edges by (src, dst). Duplicates and dangling
  // references are kept so that validate() can report them.
  TaskGraph(std::vector<KernelNode> nodes, std::vector<DataEdge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::stable_sort(nodes_.begin(), nodes_.end(),
                     [](const auto& a, const auto& b) { return a.id < b.id; });
    std::stable_sort(edges_.begin(), edges_.end(), [](const auto& a, const auto& b) {
      return std::pair(a.src, a.dst) < std::pair(b.src, b.dst);
    });
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      index_.try_emplace(nodes_[i].id, i);
      if (nodes_[i].is_source() && !root_) root_ = nodes_[i].id;
    }
    in_.resize(nodes_.size());
    out_.resize(nodes_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      auto s = index_.find(edges_[e].src);
      auto d = index_.find(edges_[e].dst);
      if (s == index_.end() || d == index_.end()) continue;
      out_[s->second].push_back(e);
      in_[d->second].push_back(e);
    }
  }

  const std::vector<KernelNode>& nodes() const { return nodes_; }
  const std::vector<DataEdge>& edges() const { return edges_; }
  std::optional<KernelId> root() const { return root_; }

  bool contains(KernelId id) const { return index_.contains(id); }
  bool is_root(KernelId id) const { return root_ && *root_ == id; }

  const KernelNode& node(KernelId id) const { return nodes_.at(position(id)); }

  std::size_t position(KernelId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("unknown kernel id " + std::to_string(id));
    return it->second;
  }

  /// Edge indices into edges().
  const std::vector<std::size_t>& in_edges(KernelId id) const { return in_[position(id)]; }
  const std::vector<std::size_t>& out_edges(KernelId id) const { return out_[position(id)]; }

  /// Non-root kernel ids, ascending.
  std::vector<KernelId> kernel_ids() const {
    std::vector<KernelId> ids;
    for (const auto& n : nodes_) {
      if (!is_root(n.id)) ids.push_back(n.id);
    }
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  std::size_t kernel_count() const { return kernel_ids().size(); }

  std::size_t inter_kernel_edge_count() const {
    return static_cast<std::size_t>(std::count_if(
        edges_.begin(), edges_.end(), [this](const DataEdge& e) { return !is_root(e.src); }));
  }

  bool fully_weighted() const {
    return std::all_of(nodes_.begin(), nodes_.end(),
                       [this](const auto& n) { return n.weighted || is_root(n.id); }) &&
           std::all_of(edges_.begin(), edges_.end(), [](const auto& e) { return e.weighted; });
  }

  friend bool operator==(const TaskGraph& a, const TaskGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<KernelNode> nodes_;
  std::vector<DataEdge> edges_;
  std::optional<KernelId> root_;
  std::unordered_map<KernelId, std::size_t> index_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<std::size_t>> out_;
};

// ---------------------------------------------------------------------------
// validation

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

namespace detail {

// Returns one node on a cycle, if any, using an iterative three-colour DFS.
inline std::optional<KernelId> find_cycle_member(const TaskGraph& g) {
  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<std::uint8_t> colour(g.nodes().size(), kWhite);
  for (std::size_t start = 0; start < g.nodes().size(); ++start) {
    if (colour[start] != kWhite) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
    colour[start] = kGrey;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& outs = g.out_edges(g.nodes()[v].id);
      if (next == outs.size()) {
        colour[v] = kBlack;
        stack.pop_back();
        continue;
      }
      const auto w = g.position(g.edges()[outs[next++]].dst);
      if (colour[w] == kGrey) return g.nodes()[w].id;
      if (colour[w] == kWhite) {
        colour[w] = kGrey;
        stack.emplace_back(w, 0);
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Checks every structural invariant and reports all violations found.
inline ValidationReport validate(const TaskGraph& g) {
  ValidationReport report;
  auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

  std::set<KernelId> seen;
  int sources = 0;
  for (const auto& n : g.nodes()) {
    if (!seen.insert(n.id).second) fail("duplicate kernel id " + std::to_string(n.id));
    if (n.weight_cpu < 0 || n.weight_gpu < 0 || std::isnan(n.weight_cpu) ||
        std::isnan(n.weight_gpu)) {
      fail("negative weight on kernel " + std::to_string(n.id));
    }
    if (n.is_source()) {
      ++sources;
      if (n.weight_cpu != 0.0 || n.weight_gpu != 0.0) {
        fail("source kernel " + std::to_string(n.id) + " must have zero weight");
      }
    }
  }
  if (sources == 0) fail("no SOURCE root kernel");
  if (sources > 1) fail("more than one SOURCE kernel");

  std::set<std::pair<KernelId, KernelId>> pairs;
  bool dangling = false;
  for (const auto& e : g.edges()) {
    const auto label = std::to_string(e.src) + "->" + std::to_string(e.dst);
    if (!g.contains(e.src) || !g.contains(e.dst)) {
      fail("edge " + label + " references an unknown kernel");
      dangling = true;
      continue;
    }
    if (e.src == e.dst) fail("self-loop on kernel " + std::to_string(e.src));
    if (!pairs.insert({e.src, e.dst}).second) fail("duplicate edge " + label);
    if (e.weight_xfer < 0 || std::isnan(e.weight_xfer) || e.bytes < 0) {
      fail("negative weight on edge " + label);
    }
    if (e.items < 1) fail("edge " + label + " carries no data items");
    if (g.is_root(e.dst)) fail("edge " + label + " points into the root");
  }

  if (auto member = detail::find_cycle_member(g)) {
    fail("cycle through kernel " + std::to_string(*member));
  }

  if (g.root() && !dangling) {
    for (const auto& n : g.nodes()) {
      if (g.is_root(n.id)) continue;
      if (g.in_edges(n.id).empty()) {
        fail("initial kernel " + std::to_string(n.id) + " has no edge from the root");
      }
    }
  }
  return report;
}

class CycleError : public std::runtime_error {
 public:
  explicit CycleError(KernelId member)
      : std::runtime_error("cycle detected through kernel " + std::to_string(member)),
        member_(member) {}
  KernelId member() const { return member_; }

 private:
  KernelId member_;
};

/// Kahn's algorithm; among ready nodes the smallest id goes first.
inline std::vector<KernelId> topological_order(const TaskGraph& g) {
  std::vector<std::size_t> indegree(g.nodes().size(), 0);
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    indegree[i] = g.in_edges(g.nodes()[i].id).size();
  }
  std::priority_queue<KernelId, std::vector<KernelId>, std::greater<>> ready;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    if (indegree[i] == 0) ready.push(g.nodes()[i].id);
  }
  std::vector<KernelId> order;
  order.reserve(g.nodes().size());
  while (!ready.empty()) {
    const auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (auto e : g.out_edges(v)) {
      const auto w = g.edges()[e].dst;
      if (--indegree[g.position(w)] == 0) ready.push(w);
    }
  }
  if (order.size() != g.nodes().size()) {
    auto member = detail::find_cycle_member(g);
    throw CycleError(member.value_or(g.nodes().front().id));
  }
  return order;
}

// ---------------------------------------------------------------------------
// generator

/// How `n_edges` is counted by the generator.
enum class EdgeCounting {
  kInterKernel,    // kernel -> kernel edges only; root edges come on top
  kIncludingRoot,  // every edge, root edges included
  kAuto,           // kInterKernel when feasible, otherwise kIncludingRoot
};

struct GeneratorParams {
  int n_kernels = 38;
  int n_edges = 75;
  std::string kind{kernel_kind::kMatMul};
  int size = 1024;
  std::uint64_t seed = 0;
  int layers = 0;  // 0: ceil(sqrt(n_kernels))
  EdgeCounting counting = EdgeCounting::kAuto;
};

inline constexpr std::int64_t matrix_bytes(int size) {
  return static_cast<std::int64_t>(size) * size * 4;
}

class InfeasibleGraphError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct GeneratorPlan {
  std::vector<int> layer_of;        // per kernel (0-based index)
  std::vector<int> kernel_inputs;   // inter-kernel in-degree per kernel
};

inline std::vector<int> even_layers(int n, int layers) {
  std::vector<int> sizes(layers, n / layers);
  for (int i = 0; i < n % layers; ++i) ++sizes[i];
  return sizes;
}

inline std::vector<int> layer_assignment(const std::vector<int>& sizes) {
  std::vector<int> layer_of;
  for (int l = 0; l < static_cast<int>(sizes.size()); ++l) {
    layer_of.insert(layer_of.end(), sizes[l], l);
  }
  return layer_of;
}

inline std::vector<int> input_caps(const std::vector<int>& layer_of) {
  std::vector<int> caps(layer_of.size());
  int earlier = 0;
  for (std::size_t k = 0; k < layer_of.size(); ++k) {
    if (k > 0 && layer_of[k] != layer_of[k - 1]) {
      earlier = static_cast<int>(k);
    }
    caps[k] = std::min(2, earlier);
  }
  return caps;
}

inline std::optional<GeneratorPlan> plan_inter_kernel(int n, int e, int layers,
                                                      std::mt19937_64& rng) {
  const auto layer_of = layer_assignment(even_layers(n, layers));
  const auto caps = input_caps(layer_of);
  std::vector<int> slots;
  for (int k = 0; k < n; ++k) slots.insert(slots.end(), caps[k], k);
  if (e < 0 || e > static_cast<int>(slots.size())) return std::nullopt;
  std::shuffle(slots.begin(), slots.end(), rng);
  std::vector<int> inputs(n, 0);
  for (int i = 0; i < e; ++i) ++inputs[slots[i]];
  return GeneratorPlan{layer_of, inputs};
}

// Every kernel has exactly two inputs. A kernel fed only by the root costs one
// edge, any other kernel two, so the number of root-only kernels is 2n - e.
inline std::optional<GeneratorPlan> plan_including_root(int n, int e, int layers) {
  const int root_only = 2 * n - e;
  if (n < 1 || root_only < 1 || root_only > n) return std::nullopt;
  const int rest = n - root_only;
  std::vector<int> sizes{root_only};
  if (rest > 0) {
    const int later = std::clamp(layers - 1, 1, rest);
    const auto tail = even_layers(rest, later);
    sizes.insert(sizes.end(), tail.begin(), tail.end());
  }
  const auto layer_of = layer_assignment(sizes);
  const auto caps = input_caps(layer_of);
  std::vector<int> inputs(n);
  for (int k = 0; k < n; ++k) inputs[k] = layer_of[k] == 0 ? 0 : caps[k];
  return GeneratorPlan{layer_of, inputs};
}

}  // namespace detail

/// Layered random DAG of two-input, one-output kernels. Kernel ids run 1..n,
/// the SOURCE root is id 0. Each kernel takes its first kernel input from the
/// previous layer and any second one from any earlier layer; inputs not fed
/// by kernels come from the root. Weights are left unset.
inline TaskGraph generate_random_dag(const GeneratorParams& p) {
  if (p.n_kernels < 0 || p.n_edges < 0) {
    throw InfeasibleGraphError("kernel and edge counts must be non-negative");
  }
  if (p.size <= 0) throw std::invalid_argument("problem size must be positive");
  const int n = p.n_kernels;
  const int layers = std::max(
      1, std::min(n, p.layers > 0 ? p.layers
                                  : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))))));
  std::mt19937_64 rng(p.seed);

  std::optional<detail::GeneratorPlan> plan;
  if (n == 0) {
    if (p.n_edges != 0) throw InfeasibleGraphError("an empty graph cannot have edges");
    plan = detail::GeneratorPlan{};
  } else {
    if (p.counting != EdgeCounting::kIncludingRoot) {
      plan = detail::plan_inter_kernel(n, p.n_edges, layers, rng);
    }
    if (!plan && p.counting != EdgeCounting::kInterKernel) {
      plan = detail::plan_including_root(n, p.n_edges, layers);
    }
  }
  if (!plan) {
    throw InfeasibleGraphError("cannot build " + std::to_string(n) + " two-input kernels with " +
                               std::to_string(p.n_edges) + " dependencies");
  }

  const KernelId root = 0;
  const auto bytes = matrix_bytes(p.size);
  std::vector<KernelNode> nodes;
  nodes.push_back(KernelNode{root, std::string(kernel_kind::kSource), 0, 0.0, 0.0, true, {}, {}});
  for (int k = 0; k < n; ++k) {
    nodes.push_back(KernelNode{k + 1, p.kind, p.size, 0.0, 0.0, false, {}, {}});
  }

  std::vector<DataEdge> edges;
  std::vector<int> layer_start;
  for (int k = 0; k < n; ++k) {
    if (k == 0 || plan->layer_of[k] != plan->layer_of[k - 1]) layer_start.push_back(k);
  }
  for (int k = 0; k < n; ++k) {
    const int layer = plan->layer_of[k];
    const int want = plan->kernel_inputs[k];
    std::vector<int> chosen;
    if (want > 0) {
      const int prev_begin = layer_start[layer - 1];
      const int prev_end = layer_start[layer];
      chosen.push_back(std::uniform_int_distribution<int>(prev_begin, prev_end - 1)(rng));
    }
    if (want > 1) {
      std::vector<int> pool;
      for (int j = 0; j < layer_start[layer]; ++j) {
        if (j != chosen.front()) pool.push_back(j);
      }
      chosen.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    }
    for (int j : chosen) {
      edges.push_back(DataEdge{j + 1, k + 1, bytes, 0.0, 1, false, {}});
    }
    if (want < 2) {
      edges.push_back(DataEdge{root, k + 1, bytes, 0.0, 2 - want, false, {}});
    }
  }
  return TaskGraph(std::move(nodes), std::move(edges));
}

// ---------------------------------------------------------------------------
// weights

/// Anything that can price kernels and transfers in milliseconds.
template <class M>
concept CostSource = requires(const M& m, std::string_view kind, int size, Device d,
                              std::int64_t bytes) {
  { m.kernel_time(kind, size, d) } -> std::convertible_to<double>;
  { m.transfer_time(bytes) } -> std::convertible_to<double>;
};

template <CostSource Model>
TaskGraph attach_weights(const TaskGraph& g, const Model& model) {
  std::vector<KernelNode> nodes = g.nodes();
  for (auto& n : nodes) {
    if (g.is_root(n.id)) {
      n.weight_cpu = n.weight_gpu = 0.0;
    } else {
      try {
        n.weight_cpu = model.kernel_time(n.kind, n.size, Device::kCpu);
        n.weight_gpu = model.kernel_time(n.kind, n.size, Device::kGpu);
      } catch (const std::exception& ex) {
        throw std::invalid_argument("kernel " + std::to_string(n.id) + ": " + ex.what());
      }
    }
    n.weighted = true;
  }
  std::vector<DataEdge> edges = g.edges();
  for (auto& e : edges) {
    e.weight_xfer = model.transfer_time(e.bytes);
    e.weighted = true;
  }
  return TaskGraph(std::move(nodes), std::move(edges));
}

struct WeightTotals {
  double cpu = 0.0;   // ms
  double gpu = 0.0;   // ms
  double xfer = 0.0;  // ms, every item on every edge
};

inline WeightTotals total_weights(const TaskGraph& g) {
  WeightTotals t;
  for (const auto& n : g.nodes()) {
    t.cpu += n.weight_cpu;
    t.gpu += n.weight_gpu;
  }
  for (const auto& e : g.edges()) t.xfer += e.transfer_weight();
  return t;
}

}  // namespace hetsched
