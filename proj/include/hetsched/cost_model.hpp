#pragma once

// Kernel and bus costs in milliseconds, from a calibration table or from
// parametric models, plus the CPU/GPU workload split derived from them.

#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hetsched/detail/text.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

/// Symmetric bus model: the same cost host->device and device->host.
struct TransferModel {
  double latency_ms = 0.02;
  double bandwidth_bytes_per_ms = 1.2e7;

  double time(std::int64_t bytes) const {
    return latency_ms + static_cast<double>(bytes) / bandwidth_bytes_per_ms;
  }

  friend bool operator==(const TransferModel&, const TransferModel&) = default;
};

/// Coefficients of the parametric kernel models:
///   MM: t = c * size^3 (+ launch on GPU), MA: t = c * size^2 (+ launch on GPU).
struct SyntheticParams {
  double mm_cpu = 2.0e-7;
  double mm_gpu = 5.0e-9;
  double ma_cpu = 1.1e-6;
  double ma_gpu = 2.8e-7;
  double launch = 5.0e-4;
};

struct ProfileEntry {
  double time_cpu = 0.0;
  double time_gpu = 0.0;
  friend bool operator==(const ProfileEntry&, const ProfileEntry&) = default;
};

struct KernelProfile {
  std::string kind;
  std::map<int, ProfileEntry> entries;  // problem size -> times
};

/// Sizes used by dump-model and the shape checks.
inline const std::vector<int>& model_size_grid() {
  static const std::vector<int> grid{64, 128, 256, 384, 512, 768, 1024, 1536, 2048, 3072, 4096};
  return grid;
}

class CostModel {
 public:
  static CostModel synthetic(SyntheticParams params = {}, TransferModel transfer = {}) {
    CostModel m;
    m.source_ = params;
    m.transfer_ = transfer;
    return m;
  }

  static CostModel table(std::vector<KernelProfile> profiles, TransferModel transfer,
                         bool interpolate = false) {
    CostModel m;
    std::map<std::string, KernelProfile, std::less<>> by_kind;
    for (auto& p : profiles) {
      auto& slot = by_kind[p.kind];
      slot.kind = p.kind;
      for (auto& [size, entry] : p.entries) slot.entries[size] = entry;
    }
    m.source_ = std::move(by_kind);
    m.transfer_ = transfer;
    m.interpolate_ = interpolate;
    return m;
  }

  bool is_synthetic() const { return std::holds_alternative<SyntheticParams>(source_); }
  const TransferModel& transfer() const { return transfer_; }

  double kernel_time(std::string_view kind, int size, Device device) const {
    if (kind == kernel_kind::kSource) return 0.0;
    if (const auto* p = std::get_if<SyntheticParams>(&source_)) return synthetic_time(*p, kind, size, device);
    const auto& profiles = std::get<Profiles>(source_);
    auto it = profiles.find(kind);
    if (it == profiles.end() || it->second.entries.empty()) {
      throw std::out_of_range("no calibration for kernel kind '" + std::string(kind) + "'");
    }
    const auto& entries = it->second.entries;
    auto exact = entries.find(size);
    if (exact != entries.end()) return pick(exact->second, device);
    if (!interpolate_) {
      throw std::out_of_range("no calibration for (" + std::string(kind) + ", " +
                              std::to_string(size) + ")");
    }
    auto hi = entries.lower_bound(size);
    if (hi == entries.begin() || hi == entries.end() || size <= 0) {
      throw std::out_of_range("size " + std::to_string(size) + " outside calibrated range of " +
                              std::string(kind));
    }
    auto lo = std::prev(hi);
    // linear in log-log space, exact for power laws
    const double x = std::log(static_cast<double>(size));
    const double x0 = std::log(static_cast<double>(lo->first));
    const double x1 = std::log(static_cast<double>(hi->first));
    const double y0 = std::log(pick(lo->second, device));
    const double y1 = std::log(pick(hi->second, device));
    return std::exp(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
  }

  double transfer_time(std::int64_t bytes) const {
    if (bytes < 0) throw std::invalid_argument("negative transfer size");
    return transfer_.time(bytes);
  }

  /// CPU time over GPU time.
  double speedup_ratio(std::string_view kind, int size) const {
    return kernel_time(kind, size, Device::kCpu) / kernel_time(kind, size, Device::kGpu);
  }

  /// GPU time over the time to move two input matrices and one output.
  double compute_transfer_ratio(std::string_view kind, int size) const {
    return kernel_time(kind, size, Device::kGpu) / transfer_time(3 * matrix_bytes(size));
  }

  /// Calibration CSV for the given kinds and sizes; load_calibration reads it back
  /// bit-exactly.
  std::string dump_csv(const std::vector<std::string>& kinds,
                       const std::vector<int>& sizes = model_size_grid()) const {
    std::ostringstream os;
    os << "kind,size,time_cpu_ms,time_gpu_ms\n";
    for (const auto& k : kinds) {
      for (int s : sizes) {
        os << k << ',' << s << ',' << detail::format_double(kernel_time(k, s, Device::kCpu)) << ','
           << detail::format_double(kernel_time(k, s, Device::kGpu)) << '\n';
      }
    }
    os << "latency_ms,bandwidth_bytes_per_ms\n"
       << detail::format_double(transfer_.latency_ms) << ','
       << detail::format_double(transfer_.bandwidth_bytes_per_ms) << '\n';
    return os.str();
  }

 private:
  using Profiles = std::map<std::string, KernelProfile, std::less<>>;

  static double pick(const ProfileEntry& e, Device d) {
    return d == Device::kCpu ? e.time_cpu : e.time_gpu;
  }

  static double synthetic_time(const SyntheticParams& p, std::string_view kind, int size,
                               Device device) {
    if (size <= 0) throw std::out_of_range("size must be positive");
    const double s = size;
    const bool gpu = device == Device::kGpu;
    if (kind == kernel_kind::kMatMul) return gpu ? p.mm_gpu * s * s * s + p.launch : p.mm_cpu * s * s * s;
    if (kind == kernel_kind::kMatAdd) return gpu ? p.ma_gpu * s * s + p.launch : p.ma_cpu * s * s;
    throw std::out_of_range("synthetic model has no kernel kind '" + std::string(kind) + "'");
  }

  std::variant<SyntheticParams, Profiles> source_ = SyntheticParams{};
  TransferModel transfer_;
  bool interpolate_ = false;
};

// ---------------------------------------------------------------------------
// calibration tables

class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(std::size_t row, const std::string& what)
      : std::runtime_error("calibration row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

struct Calibration {
  std::vector<KernelProfile> profiles;
  TransferModel transfer;
  std::vector<std::string> warnings;

  CostModel model(bool interpolate = false) const {
    return CostModel::table(profiles, transfer, interpolate);
  }
};

/// Reads
///   kind,size,time_cpu_ms,time_gpu_ms
///   MM,1024,400.0,10.0
///   ...
///   latency_ms,bandwidth_bytes_per_ms
///   0.02,12000000
/// The transfer section is optional. Blank lines and '#' comments are skipped.
inline Calibration load_calibration(std::string_view text) {
  Calibration cal;
  std::map<std::string, std::map<int, ProfileEntry>> rows;
  std::map<std::string, std::size_t> order;
  enum class Section { kNone, kKernels, kTransfer } section = Section::kNone;
  bool transfer_seen = false;

  const auto all = detail::lines(text);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::size_t row = i + 1;
    const auto line = detail::trim(all[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = detail::split(line, ',');
    if (detail::trim(cells[0]) == "kind") {
      section = Section::kKernels;
      continue;
    }
    if (detail::trim(cells[0]) == "latency_ms") {
      section = Section::kTransfer;
      continue;
    }
    if (section == Section::kKernels) {
      if (cells.size() != 4) throw CalibrationError(row, "expected 4 columns");
      const std::string kind(detail::trim(cells[0]));
      const auto size = detail::parse_int<int>(cells[1]);
      const auto cpu = detail::parse_double(cells[2]);
      const auto gpu = detail::parse_double(cells[3]);
      if (kind.empty() || !size || !cpu || !gpu) throw CalibrationError(row, "malformed row");
      if (*size <= 0) throw CalibrationError(row, "size must be positive");
      if (*cpu < 0 || *gpu < 0) throw CalibrationError(row, "negative time");
      if (kind != kernel_kind::kSource && (*cpu == 0 || *gpu == 0)) {
        throw CalibrationError(row, "kernel times must be positive");
      }
      auto& slot = rows[kind];
      order.try_emplace(kind, order.size());
      if (slot.contains(*size)) {
        cal.warnings.push_back("row " + std::to_string(row) + ": duplicate (" + kind + ", " +
                               std::to_string(*size) + "), keeping the last one");
      }
      slot[*size] = ProfileEntry{*cpu, *gpu};
    } else if (section == Section::kTransfer) {
      if (transfer_seen) throw CalibrationError(row, "more than one transfer row");
      if (cells.size() != 2) throw CalibrationError(row, "expected 2 columns");
      const auto latency = detail::parse_double(cells[0]);
      const auto bandwidth = detail::parse_double(cells[1]);
      if (!latency || !bandwidth) throw CalibrationError(row, "malformed row");
      if (*latency < 0) throw CalibrationError(row, "negative latency");
      if (*bandwidth <= 0) throw CalibrationError(row, "bandwidth must be positive");
      cal.transfer = TransferModel{*latency, *bandwidth};
      transfer_seen = true;
    } else {
      throw CalibrationError(row, "data before a header line");
    }
  }
  if (rows.empty()) throw CalibrationError(0, "no kernel profiles");

  cal.profiles.resize(order.size());
  for (auto& [kind, entries] : rows) {
    auto& p = cal.profiles[order[kind]];
    p.kind = kind;
    p.entries = std::move(entries);
  }
  return cal;
}

// ---------------------------------------------------------------------------
// workload ratio

/// Target share of total node weight per processor group; always sums to one.
class PartitionTargets {
 public:
  explicit PartitionTargets(double r_cpu) : r_cpu_(r_cpu), r_gpu_(1.0 - r_cpu) {
    if (!(r_cpu >= 0.0 && r_cpu <= 1.0)) {
      throw std::invalid_argument("r_cpu must lie in [0, 1]");
    }
  }

  double r_cpu() const { return r_cpu_; }
  double r_gpu() const { return r_gpu_; }
  double share(Device d) const { return d == Device::kCpu ? r_cpu_ : r_gpu_; }

  friend bool operator==(const PartitionTargets&, const PartitionTargets&) = default;

 private:
  double r_cpu_;
  double r_gpu_;
};

/// r_cpu = T_gpu / (T_gpu + T_cpu) with both terms summed over every non-root
/// kernel, and r_gpu = 1 - r_cpu.
inline PartitionTargets workload_ratio(const TaskGraph& g) {
  double t_cpu = 0.0;
  double t_gpu = 0.0;
  std::size_t kernels = 0;
  for (const auto& n : g.nodes()) {
    if (g.is_root(n.id)) continue;
    t_cpu += n.weight_cpu;
    t_gpu += n.weight_gpu;
    ++kernels;
  }
  if (kernels == 0) throw std::invalid_argument("workload ratio needs at least one kernel");
  if (t_cpu + t_gpu <= 0.0) throw std::invalid_argument("workload ratio of a zero-time graph");
  return PartitionTargets(t_gpu / (t_gpu + t_cpu));
}

}  // namespace hetsched
