#pragma once

// Dispatch policies driven by the simulator: eager (shared FIFO, pull),
// dmda (earliest estimated completion incl. transfers, push) and
// graph-partition (offline 2-way partition, kernels pinned to a group).

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/cost_model.hpp"
#include "hetsched/partitioner.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

using WorkerId = std::size_t;

/// Worker layout: CPU workers take ids 0..cpu-1, GPU workers follow. CPU
/// workers share the host memory node, GPU workers the device memory node.
struct MachineModel {
  int cpu_workers = 3;
  int gpu_workers = 1;

  void check() const {
    if (cpu_workers < 0 || gpu_workers < 0) throw std::invalid_argument("negative worker count");
    if (cpu_workers + gpu_workers == 0) throw std::invalid_argument("machine has no workers");
  }

  std::vector<Device> worker_devices() const {
    std::vector<Device> out(static_cast<std::size_t>(cpu_workers), Device::kCpu);
    out.insert(out.end(), static_cast<std::size_t>(gpu_workers), Device::kGpu);
    return out;
  }

  int workers_on(Device d) const { return d == Device::kCpu ? cpu_workers : gpu_workers; }
};

/// One input data item of a kernel as seen at decision time.
struct InputItem {
  double transfer_ms = 0.0;
  std::int64_t bytes = 0;
  // when a valid copy is (or will be) present on each memory node
  std::array<std::optional<double>, 2> available_at;
};

/// Read-only machine state offered to policies.
class MachineView {
 public:
  virtual ~MachineView() = default;
  virtual const TaskGraph& graph() const = 0;
  virtual double now() const = 0;
  virtual std::size_t worker_count() const = 0;
  virtual Device worker_device(WorkerId w) const = 0;
  virtual double worker_free_time(WorkerId w) const = 0;
  virtual double bus_free_time() const = 0;
  /// Inputs in the order the runtime would request them.
  virtual std::vector<InputItem> inputs(KernelId k) const = 0;

  bool idle(WorkerId w) const { return worker_free_time(w) <= now(); }
};

struct PolicyDecision {
  KernelId kernel = 0;
  WorkerId worker = 0;
  double time = 0.0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const = 0;
  /// Called once before the first event.
  virtual void prepare(const TaskGraph&, const MachineModel&) {}
  /// Kernel `k` has just become ready.
  virtual std::optional<PolicyDecision> on_ready(KernelId k, const MachineView& m) = 0;
  /// Worker `w` is idle and asks for work.
  virtual std::optional<PolicyDecision> on_idle(WorkerId w, const MachineView& m) = 0;
};

// ---------------------------------------------------------------------------
// eager

inline std::optional<PolicyDecision> eager_pick(std::deque<KernelId>& ready, WorkerId idle_worker,
                                                double now) {
  if (ready.empty()) return std::nullopt;
  const auto k = ready.front();
  ready.pop_front();
  return PolicyDecision{k, idle_worker, now};
}

/// Single shared FIFO; whichever worker is idle takes the head, regardless of
/// cost or where the data lives.
class EagerPolicy final : public Policy {
 public:
  std::string_view name() const override { return "eager"; }
  void prepare(const TaskGraph&, const MachineModel&) override { queue_.clear(); }

  std::optional<PolicyDecision> on_ready(KernelId k, const MachineView&) override {
    queue_.push_back(k);
    return std::nullopt;
  }

  std::optional<PolicyDecision> on_idle(WorkerId w, const MachineView& m) override {
    return eager_pick(queue_, w, m.now());
  }

 private:
  std::deque<KernelId> queue_;
};

// ---------------------------------------------------------------------------
// dmda

/// max(worker free, inputs available) + kernel time, where missing inputs are
/// queued on the bus behind its current backlog.
inline double estimate_completion(KernelId k, WorkerId w, const MachineView& m) {
  const auto device = m.worker_device(w);
  const auto node = static_cast<std::size_t>(device);
  double bus = std::max(m.now(), m.bus_free_time());
  double inputs_ready = m.now();
  for (const auto& item : m.inputs(k)) {
    if (item.available_at[node]) {
      inputs_ready = std::max(inputs_ready, *item.available_at[node]);
    } else {
      bus += item.transfer_ms;
      inputs_ready = std::max(inputs_ready, bus);
    }
  }
  const double start = std::max({m.now(), m.worker_free_time(w), inputs_ready});
  return start + m.graph().node(k).weight(device);
}

inline PolicyDecision dmda_pick(KernelId k, const MachineView& m) {
  if (m.worker_count() == 0) throw std::logic_error("dmda needs at least one worker");
  WorkerId best = 0;
  double best_time = estimate_completion(k, 0, m);
  for (WorkerId w = 1; w < m.worker_count(); ++w) {
    const double t = estimate_completion(k, w, m);
    if (t < best_time) {
      best = w;
      best_time = t;
    }
  }
  return PolicyDecision{k, best, m.now()};
}

/// Commits each kernel as soon as it is ready to the worker with the earliest
/// estimated completion; ties go to the lower worker id.
class DmdaPolicy final : public Policy {
 public:
  std::string_view name() const override { return "dmda"; }

  std::optional<PolicyDecision> on_ready(KernelId k, const MachineView& m) override {
    return dmda_pick(k, m);
  }

  std::optional<PolicyDecision> on_idle(WorkerId, const MachineView&) override {
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// graph partition

/// Kernel -> processor group. Built once, never changed.
class PinMap {
 public:
  PinMap() = default;
  explicit PinMap(std::map<KernelId, Device> pins) : pins_(std::move(pins)) {}

  Device at(KernelId k) const {
    auto it = pins_.find(k);
    if (it == pins_.end()) throw std::out_of_range("kernel " + std::to_string(k) + " is not pinned");
    return it->second;
  }

  const std::map<KernelId, Device>& pins() const { return pins_; }
  std::size_t count(Device d) const {
    return static_cast<std::size_t>(std::count_if(
        pins_.begin(), pins_.end(), [d](const auto& kv) { return kv.second == d; }));
  }

 private:
  std::map<KernelId, Device> pins_;
};

struct GpPlan {
  PartitionTargets targets{0.0};
  Partition partition;
  PinMap pins;
};

/// Offline step: workload ratio, one partitioning run, pin every kernel to its
/// side. The root stays on the host and is not part of the map.
inline GpPlan gp_build(const TaskGraph& g, const PartitionConfig& config,
                       std::optional<PartitionTargets> targets = std::nullopt) {
  GpPlan plan;
  plan.targets = targets ? *targets : workload_ratio(g);
  plan.partition = partition_heuristic(g, plan.targets, config);
  plan.pins = PinMap(plan.partition.assignment);
  return plan;
}

/// Lowest-id idle worker of the kernel's group, or nothing (the kernel waits).
inline std::optional<PolicyDecision> gp_pick(KernelId k, const PinMap& pins, const MachineView& m) {
  const auto group = pins.at(k);
  for (WorkerId w = 0; w < m.worker_count(); ++w) {
    if (m.worker_device(w) == group && m.idle(w)) return PolicyDecision{k, w, m.now()};
  }
  return std::nullopt;
}

class GraphPartitionPolicy final : public Policy {
 public:
  explicit GraphPartitionPolicy(PinMap pins) : pins_(std::move(pins)) {}

  std::string_view name() const override { return "gp"; }
  const PinMap& pins() const { return pins_; }

  void prepare(const TaskGraph& g, const MachineModel& machine) override {
    for (auto id : g.kernel_ids()) {
      const auto group = pins_.at(id);
      if (machine.workers_on(group) == 0) {
        throw std::invalid_argument("kernel " + std::to_string(id) + " is pinned to " +
                                    std::string(to_string(group)) +
                                    " but the machine has no such worker");
      }
    }
    queues_ = {};
  }

  std::optional<PolicyDecision> on_ready(KernelId k, const MachineView& m) override {
    auto& queue = queues_[static_cast<std::size_t>(pins_.at(k))];
    if (queue.empty()) {
      if (auto d = gp_pick(k, pins_, m)) return d;
    }
    queue.push_back(k);
    return std::nullopt;
  }

  std::optional<PolicyDecision> on_idle(WorkerId w, const MachineView& m) override {
    auto& queue = queues_[static_cast<std::size_t>(m.worker_device(w))];
    if (queue.empty()) return std::nullopt;
    const auto k = queue.front();
    queue.pop_front();
    return PolicyDecision{k, w, m.now()};
  }

 private:
  PinMap pins_;
  std::array<std::deque<KernelId>, 2> queues_;
};

// ---------------------------------------------------------------------------

enum class PolicyKind { kEager, kDmda, kGp };

inline std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::kEager: return "eager";
    case PolicyKind::kDmda: return "dmda";
    case PolicyKind::kGp: return "gp";
  }
  return "?";
}

inline PolicyKind parse_policy(std::string_view s) {
  if (s == "eager") return PolicyKind::kEager;
  if (s == "dmda") return PolicyKind::kDmda;
  if (s == "gp") return PolicyKind::kGp;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "' (eager|dmda|gp)");
}

inline std::unique_ptr<Policy> make_policy(PolicyKind kind, const TaskGraph& g,
                                           const PartitionConfig& config,
                                           std::optional<PartitionTargets> targets = std::nullopt) {
  switch (kind) {
    case PolicyKind::kEager: return std::make_unique<EagerPolicy>();
    case PolicyKind::kDmda: return std::make_unique<DmdaPolicy>();
    case PolicyKind::kGp:
      return std::make_unique<GraphPartitionPolicy>(gp_build(g, config, targets).pins);
  }
  throw std::invalid_argument("unknown policy");
}

}  // namespace hetsched
