#pragma once

// Discrete-event execution of a task graph on CPU workers sharing host memory,
// GPU workers sharing device memory, and one FIFO bus between the two.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "hetsched/detail/text.hpp"
#include "hetsched/dot.hpp"
#include "hetsched/schedulers.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

// Order of simultaneous events: completions before starts.
enum class EventKind : std::uint8_t { kKernelEnd = 0, kXferEnd = 1, kXferStart = 2, kKernelStart = 3 };

inline constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kKernelStart: return "kernel_start";
    case EventKind::kKernelEnd: return "kernel_end";
    case EventKind::kXferStart: return "xfer_start";
    case EventKind::kXferEnd: return "xfer_end";
  }
  return "?";
}

struct TraceEvent {
  double time = 0.0;
  EventKind kind = EventKind::kKernelStart;
  KernelId subject = 0;   // kernel, or producer of the transferred item
  std::string resource;   // "cpu0", "gpu0", "bus:h2d", "bus:d2h"
  Device device = Device::kCpu;  // kernels: where it ran; transfers: destination
  std::int64_t bytes = 0;
};

struct KernelRun {
  KernelId kernel = 0;
  WorkerId worker = 0;
  Device device = Device::kCpu;
  double start = 0.0;
  double end = 0.0;
};

struct TransferRun {
  KernelId producer = 0;
  KernelId consumer = 0;  // the kernel whose dispatch requested it
  int slot = 0;           // item index on root edges, 0 otherwise
  Device from = Device::kCpu;
  Device to = Device::kGpu;
  std::int64_t bytes = 0;
  double start = 0.0;
  double end = 0.0;
};

struct Trace {
  std::string policy;
  std::vector<Device> workers;
  std::vector<TraceEvent> events;     // sorted by (time, kind, subject)
  std::vector<KernelRun> kernels;     // in dispatch order
  std::vector<TransferRun> transfers; // in bus order
  double makespan = 0.0;
  std::size_t transfer_count = 0;
  std::int64_t transfer_bytes = 0;
  std::array<double, 2> busy_ms{0.0, 0.0};  // indexed by Device
};

inline std::string worker_name(const std::vector<Device>& workers, WorkerId w) {
  std::size_t index = 0;
  for (WorkerId i = 0; i < w; ++i) index += workers[i] == workers[w];
  return (workers[w] == Device::kCpu ? "cpu" : "gpu") + std::to_string(index);
}

namespace detail {

// A data item: a kernel's output (consumer = -1) or one initial item of a
// root edge.
struct ItemKey {
  KernelId producer = 0;
  KernelId consumer = -1;
  int slot = 0;
  auto operator<=>(const ItemKey&) const = default;
};

struct ItemRef {
  ItemKey key;
  double transfer_ms = 0.0;
  std::int64_t bytes = 0;
};

class SimState final : public MachineView {
 public:
  SimState(const TaskGraph& g, const MachineModel& machine)
      : graph_(g), devices_(machine.worker_devices()), free_(devices_.size(), 0.0) {
    for (auto id : g.kernel_ids()) {
      auto& list = inputs_[id];
      for (auto e : g.in_edges(id)) {
        const auto& edge = g.edges()[e];
        for (int s = 0; s < edge.items; ++s) {
          ItemKey key = g.is_root(edge.src) ? ItemKey{edge.src, id, s} : ItemKey{edge.src, -1, 0};
          list.push_back(ItemRef{key, edge.weight_xfer, edge.bytes});
          if (g.is_root(edge.src)) location_[key][0] = 0.0;
        }
      }
    }
  }

  const TaskGraph& graph() const override { return graph_; }
  double now() const override { return now_; }
  std::size_t worker_count() const override { return devices_.size(); }
  Device worker_device(WorkerId w) const override { return devices_.at(w); }
  double worker_free_time(WorkerId w) const override { return free_.at(w); }
  double bus_free_time() const override { return bus_free_; }

  std::vector<InputItem> inputs(KernelId k) const override {
    std::vector<InputItem> out;
    for (const auto& ref : inputs_.at(k)) {
      InputItem item{ref.transfer_ms, ref.bytes, {}};
      auto it = location_.find(ref.key);
      if (it != location_.end()) item.available_at = it->second;
      out.push_back(item);
    }
    return out;
  }

  void set_now(double t) { now_ = t; }
  const std::vector<Device>& devices() const { return devices_; }

  /// Reserves the bus for missing inputs and the worker for the kernel.
  KernelRun commit(KernelId k, WorkerId w, Trace& trace) {
    const auto device = devices_.at(w);
    const auto node = static_cast<std::size_t>(device);
    double inputs_ready = now_;
    for (const auto& ref : inputs_.at(k)) {
      auto& where = location_[ref.key];
      if (!where[node]) {
        // the producer's node holds a copy since production, which is <= now
        const double start = std::max(now_, bus_free_);
        const double end = start + ref.transfer_ms;
        bus_free_ = end;
        where[node] = end;
        trace.transfers.push_back(TransferRun{ref.key.producer, k, ref.key.slot, other(device),
                                              device, ref.bytes, start, end});
      }
      inputs_ready = std::max(inputs_ready, *where[node]);
    }
    const double start = std::max({now_, free_[w], inputs_ready});
    const double end = start + graph_.node(k).weight(device);
    free_[w] = end;
    location_[ItemKey{k, -1, 0}][node] = end;
    KernelRun run{k, w, device, start, end};
    trace.kernels.push_back(run);
    return run;
  }

 private:
  const TaskGraph& graph_;
  std::vector<Device> devices_;
  std::vector<double> free_;
  double bus_free_ = 0.0;
  double now_ = 0.0;
  std::map<KernelId, std::vector<ItemRef>> inputs_;
  std::map<ItemKey, std::array<std::optional<double>, 2>> location_;
};

inline void finish_trace(Trace& t) {
  auto bus = [](const TransferRun& x) {
    return std::string(x.to == Device::kGpu ? "bus:h2d" : "bus:d2h");
  };
  for (const auto& k : t.kernels) {
    const auto res = worker_name(t.workers, k.worker);
    t.events.push_back(TraceEvent{k.start, EventKind::kKernelStart, k.kernel, res, k.device, 0});
    t.events.push_back(TraceEvent{k.end, EventKind::kKernelEnd, k.kernel, res, k.device, 0});
    t.makespan = std::max(t.makespan, k.end);
    t.busy_ms[static_cast<std::size_t>(k.device)] += k.end - k.start;
  }
  for (const auto& x : t.transfers) {
    t.events.push_back(TraceEvent{x.start, EventKind::kXferStart, x.producer, bus(x), x.to, x.bytes});
    t.events.push_back(TraceEvent{x.end, EventKind::kXferEnd, x.producer, bus(x), x.to, x.bytes});
    t.transfer_bytes += x.bytes;
  }
  t.transfer_count = t.transfers.size();
  std::stable_sort(t.events.begin(), t.events.end(), [](const auto& a, const auto& b) {
    return std::tie(a.time, a.kind, a.subject) < std::tie(b.time, b.kind, b.subject);
  });
}

}  // namespace detail

/// Runs the graph to completion under `policy`. The graph must be valid and
/// carry weights for every kernel and edge.
inline Trace simulate(const TaskGraph& g, Policy& policy, const MachineModel& machine = {}) {
  machine.check();
  if (const auto report = validate(g); !report.ok()) {
    throw std::invalid_argument("invalid graph: " + report.violations.front());
  }
  if (!g.fully_weighted()) {
    throw std::invalid_argument("graph has unweighted kernels or edges; attach a cost model");
  }
  policy.prepare(g, machine);

  detail::SimState state(g, machine);
  Trace trace;
  trace.policy = std::string(policy.name());
  trace.workers = machine.worker_devices();

  const auto ids = g.kernel_ids();
  std::map<KernelId, std::size_t> waiting;  // unfinished kernel predecessors
  std::vector<KernelId> newly_ready;
  for (auto id : ids) {
    std::size_t preds = 0;
    for (auto e : g.in_edges(id)) preds += !g.is_root(g.edges()[e].src);
    waiting[id] = preds;
    if (preds == 0) newly_ready.push_back(id);
  }

  std::map<KernelId, bool> dispatched;
  using End = std::pair<double, KernelId>;
  std::priority_queue<End, std::vector<End>, std::greater<>> ends;
  std::size_t finished = 0;

  auto apply = [&](const std::optional<PolicyDecision>& d, std::optional<WorkerId> asking) {
    if (!d) return;
    if (!waiting.contains(d->kernel) || waiting[d->kernel] != 0 || dispatched[d->kernel]) {
      throw std::logic_error("policy " + trace.policy + " dispatched kernel " +
                             std::to_string(d->kernel) + " which is not ready");
    }
    if (d->worker >= state.worker_count() || (asking && *asking != d->worker)) {
      throw std::logic_error("policy " + trace.policy + " chose an invalid worker");
    }
    dispatched[d->kernel] = true;
    const auto run = state.commit(d->kernel, d->worker, trace);
    ends.emplace(run.end, run.kernel);
  };

  while (finished < ids.size()) {
    std::sort(newly_ready.begin(), newly_ready.end());
    for (auto k : newly_ready) apply(policy.on_ready(k, state), std::nullopt);
    newly_ready.clear();
    for (WorkerId w = 0; w < state.worker_count(); ++w) {
      if (state.idle(w)) apply(policy.on_idle(w, state), w);
    }
    if (ends.empty()) {
      throw std::logic_error("deadlock: " + std::to_string(ids.size() - finished) +
                             " kernels never dispatched");
    }
    const double t = ends.top().first;
    state.set_now(t);
    while (!ends.empty() && ends.top().first == t) {
      const auto k = ends.top().second;
      ends.pop();
      ++finished;
      for (auto e : g.out_edges(k)) {
        const auto v = g.edges()[e].dst;
        if (--waiting[v] == 0) newly_ready.push_back(v);
      }
    }
  }
  detail::finish_trace(trace);
  return trace;
}

// ---------------------------------------------------------------------------
// metrics

struct Metrics {
  double makespan = 0.0;
  std::size_t transfer_count = 0;
  std::int64_t transfer_bytes = 0;
  std::array<double, 2> busy_fraction{0.0, 0.0};  // indexed by Device
  std::array<std::size_t, 2> kernels{0, 0};       // indexed by Device
};

class MalformedTraceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Summary recomputed from the event list alone.
inline Metrics metrics(const Trace& trace) {
  Metrics m;
  std::map<KernelId, double> open_kernels;
  std::map<std::pair<KernelId, std::string>, std::vector<double>> open_xfers;
  std::array<double, 2> busy{0.0, 0.0};
  double last = 0.0;
  for (const auto& e : trace.events) {
    if (e.time < last) throw MalformedTraceError("events are not ordered by time");
    last = e.time;
    const auto dev = static_cast<std::size_t>(e.device);
    switch (e.kind) {
      case EventKind::kKernelStart:
        if (!open_kernels.emplace(e.subject, e.time).second) {
          throw MalformedTraceError("kernel " + std::to_string(e.subject) + " started twice");
        }
        break;
      case EventKind::kKernelEnd: {
        auto it = open_kernels.find(e.subject);
        if (it == open_kernels.end()) {
          throw MalformedTraceError("kernel " + std::to_string(e.subject) + " ended before starting");
        }
        busy[dev] += e.time - it->second;
        ++m.kernels[dev];
        m.makespan = std::max(m.makespan, e.time);
        open_kernels.erase(it);
        break;
      }
      case EventKind::kXferStart:
        open_xfers[{e.subject, e.resource}].push_back(e.time);
        break;
      case EventKind::kXferEnd: {
        auto& open = open_xfers[{e.subject, e.resource}];
        if (open.empty()) throw MalformedTraceError("transfer ended before starting");
        open.erase(open.begin());
        ++m.transfer_count;
        m.transfer_bytes += e.bytes;
        break;
      }
    }
  }
  if (!open_kernels.empty()) throw MalformedTraceError("kernel started but never ended");
  for (const auto& [key, open] : open_xfers) {
    if (!open.empty()) throw MalformedTraceError("transfer started but never ended");
  }
  for (std::size_t d = 0; d < 2; ++d) {
    const auto n = static_cast<double>(
        std::count(trace.workers.begin(), trace.workers.end(), static_cast<Device>(d)));
    if (n > 0 && m.makespan > 0) m.busy_fraction[d] = busy[d] / (m.makespan * n);
  }
  return m;
}

inline std::string trace_csv(const Trace& trace) {
  std::ostringstream os;
  os << "time,kind,subject,resource\n";
  for (const auto& e : trace.events) {
    os << detail::format_double(e.time) << ',' << to_string(e.kind) << ',' << e.subject << ','
       << e.resource << '\n';
  }
  return os.str();
}

/// Canonical DOT plus device, worker, start and end per kernel.
inline std::string emit_trace_dot(const TaskGraph& g, const Trace& trace) {
  std::map<KernelId, const KernelRun*> runs;
  for (const auto& r : trace.kernels) runs[r.kernel] = &r;
  auto doc = to_dot_document(g);
  for (auto& stmt : doc.statements) {
    auto* n = std::get_if<DotNodeStmt>(&stmt);
    if (!n) continue;
    auto it = runs.find(*detail::parse_int<KernelId>(n->id));
    if (it == runs.end()) continue;
    const auto& r = *it->second;
    n->attrs.emplace_back("device", std::string(to_string(r.device)));
    n->attrs.emplace_back("worker", worker_name(trace.workers, r.worker));
    n->attrs.emplace_back("start", detail::format_double(r.start));
    n->attrs.emplace_back("end", detail::format_double(r.end));
    n->attrs.emplace_back("style", "filled");
    n->attrs.emplace_back("fillcolor", std::string(group_colour(r.device)));
  }
  return write_dot(doc);
}

}  // namespace hetsched
