#pragma once

// METIS interoperability: graph export (`n m 011`, 1-based neighbour lists)
// and partition-file import.

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/detail/text.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

struct MetisOptions {
  WeightSource node_weight_source = WeightSource::kGpu;
  double scale = 100.0;  // integer units per millisecond
};

/// Milliseconds to a positive METIS integer weight: round half up, at least 1.
inline std::int64_t integer_weight(double ms, double scale) {
  const auto v = static_cast<std::int64_t>(std::floor(ms * scale + 0.5));
  return v < 1 ? 1 : v;
}

struct MetisGraph {
  // vertex i (0-based here, 1-based on disk) is kernel_ids[i]
  std::vector<KernelId> kernel_ids;
  std::vector<std::int64_t> vertex_weights;
  std::vector<std::map<std::size_t, std::int64_t>> neighbours;  // 0-based -> weight

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& adj : neighbours) twice += adj.size();
    return twice / 2;
  }

  std::string text() const {
    std::ostringstream os;
    os << kernel_ids.size() << ' ' << edge_count() << " 011\n";
    for (std::size_t v = 0; v < kernel_ids.size(); ++v) {
      os << vertex_weights[v];
      for (const auto& [u, w] : neighbours[v]) os << ' ' << (u + 1) << ' ' << w;
      os << '\n';
    }
    return os.str();
  }
};

/// Flattens the DAG (root excluded) into an undirected weighted graph. Edge
/// weights are transfer milliseconds; declarations of the same pair are summed
/// before integerisation.
inline MetisGraph to_metis(const TaskGraph& g, const MetisOptions& opt = {}) {
  MetisGraph m;
  m.kernel_ids = g.kernel_ids();
  std::map<KernelId, std::size_t> vertex;
  for (std::size_t i = 0; i < m.kernel_ids.size(); ++i) vertex[m.kernel_ids[i]] = i;

  const auto device = weight_device(opt.node_weight_source);
  bool any_positive = false;
  for (auto id : m.kernel_ids) {
    const double w = g.node(id).weight(device);
    any_positive = any_positive || w > 0.0;
    m.vertex_weights.push_back(integer_weight(w, opt.scale));
  }
  if (!m.kernel_ids.empty() && !any_positive) {
    throw std::invalid_argument("all kernel weights are zero; attach weights before exporting");
  }

  std::map<std::pair<std::size_t, std::size_t>, double> merged;
  for (const auto& e : g.edges()) {
    if (g.is_root(e.src) || e.src == e.dst) continue;
    auto a = vertex.at(e.src);
    auto b = vertex.at(e.dst);
    if (a > b) std::swap(a, b);
    merged[{a, b}] += e.transfer_weight();
  }
  m.neighbours.resize(m.kernel_ids.size());
  for (const auto& [pair, ms] : merged) {
    const auto w = integer_weight(ms, opt.scale);
    m.neighbours[pair.first][pair.second] = w;
    m.neighbours[pair.second][pair.first] = w;
  }
  return m;
}

inline std::string emit_metis(const TaskGraph& g, const MetisOptions& opt = {}) {
  return to_metis(g, opt).text();
}

class MetisFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One group id per line in exported vertex order: 0 = CPU, 1 = GPU.
inline std::map<KernelId, Device> parse_partition_file(std::string_view text, const TaskGraph& g) {
  const auto ids = g.kernel_ids();
  std::vector<std::string_view> values;
  for (auto line : detail::lines(text)) {
    line = detail::trim(line);
    if (!line.empty()) values.push_back(line);
  }
  if (values.size() != ids.size()) {
    throw MetisFormatError("partition file has " + std::to_string(values.size()) +
                           " entries, graph has " + std::to_string(ids.size()) + " kernels");
  }
  std::map<KernelId, Device> assignment;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto v = detail::parse_int<int>(values[i]);
    if (!v || (*v != 0 && *v != 1)) {
      throw MetisFormatError("line " + std::to_string(i + 1) + ": group must be 0 or 1, got '" +
                             std::string(values[i]) + "'");
    }
    assignment[ids[i]] = *v == 0 ? Device::kCpu : Device::kGpu;
  }
  return assignment;
}

inline std::string emit_partition_file(const TaskGraph& g,
                                       const std::map<KernelId, Device>& assignment) {
  std::string out;
  for (auto id : g.kernel_ids()) {
    out += assignment.at(id) == Device::kCpu ? "0\n" : "1\n";
  }
  return out;
}

}  // namespace hetsched
