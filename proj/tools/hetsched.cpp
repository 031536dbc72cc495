// hetsched: generate task graphs, partition them, simulate and compare the
// eager, dmda and graph-partition policies.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hetsched/hetsched.hpp"

namespace fs = std::filesystem;
using namespace hetsched;

namespace {

struct RunConfig {
  std::string graph_path;
  int kernels = 38;
  int edges = 75;
  std::string kind = "MM";
  int size = 1024;
  int layers = 0;
  std::string policy = "gp";
  std::string policies = "eager,dmda,gp";
  std::string model = "synthetic";
  bool interpolate = false;
  int cpu_workers = 3;
  int gpu_workers = 1;
  int iterations = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string node_weight_source = "gpu";
  double tolerance = 0.03;
  int restarts = 8;
  std::string targets;
  std::string sizes;
  std::string partition_file;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Writes to --out/<name> when an output directory is set, else to stdout.
void emit(const RunConfig& cfg, const std::string& name, const std::string& text) {
  if (cfg.out.empty()) {
    std::cout << text;
  } else {
    write_file(fs::path(cfg.out) / name, text);
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : detail::split(s, ',')) {
    part = detail::trim(part);
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

CostModel load_model(const RunConfig& cfg) {
  if (cfg.model == "synthetic") return CostModel::synthetic();
  auto cal = load_calibration(read_file(cfg.model));
  for (const auto& w : cal.warnings) std::cerr << "warning: " << cfg.model << ": " << w << '\n';
  return cal.model(cfg.interpolate);
}

GeneratorParams generator_params(const RunConfig& cfg) {
  GeneratorParams p;
  p.n_kernels = cfg.kernels;
  p.n_edges = cfg.edges;
  p.kind = cfg.kind;
  p.size = cfg.size;
  p.seed = cfg.seed;
  p.layers = cfg.layers;
  return p;
}

// File graphs keep their embedded weights unless --model is given explicitly.
TaskGraph load_graph(const RunConfig& cfg, bool model_explicit) {
  if (cfg.graph_path.empty()) {
    return attach_weights(generate_random_dag(generator_params(cfg)), load_model(cfg));
  }
  auto g = parse_dot(read_file(cfg.graph_path));
  if (model_explicit) return attach_weights(g, load_model(cfg));
  if (!g.fully_weighted()) {
    throw std::invalid_argument(cfg.graph_path +
                                " has unweighted kernels or edges; pass --model synthetic or "
                                "--model <calibration.csv>");
  }
  return g;
}

MachineModel machine(const RunConfig& cfg) {
  MachineModel m{cfg.cpu_workers, cfg.gpu_workers};
  m.check();
  return m;
}

PartitionConfig partition_config(const RunConfig& cfg) {
  PartitionConfig pc;
  if (cfg.node_weight_source == "gpu") {
    pc.node_weight_source = WeightSource::kGpu;
  } else if (cfg.node_weight_source == "cpu") {
    pc.node_weight_source = WeightSource::kCpu;
  } else {
    throw std::invalid_argument("--node-weight-source must be gpu or cpu");
  }
  pc.imbalance_tolerance = cfg.tolerance;
  pc.restarts = cfg.restarts;
  pc.seed = cfg.seed;
  pc.check();
  return pc;
}

std::optional<PartitionTargets> targets(const RunConfig& cfg) {
  if (cfg.targets.empty()) return std::nullopt;
  const auto parts = split_list(cfg.targets);
  if (parts.size() != 2) throw std::invalid_argument("--targets expects r_cpu,r_gpu");
  const auto cpu = detail::parse_double(parts[0]);
  const auto gpu = detail::parse_double(parts[1]);
  if (!cpu || !gpu) throw std::invalid_argument("--targets values must be numbers");
  if (std::abs(*cpu + *gpu - 1.0) > 1e-9) throw std::invalid_argument("--targets must sum to 1");
  return PartitionTargets(*cpu);
}

// "256,512", "256..2048" (default grid within the range) or "default".
std::vector<int> sweep_sizes(const std::string& spec) {
  if (spec == "default" || spec == "all") return default_sweep_sizes();
  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    const auto lo = detail::parse_int<int>(std::string_view(spec).substr(0, dots));
    const auto hi = detail::parse_int<int>(std::string_view(spec).substr(dots + 2));
    if (!lo || !hi || *lo > *hi) throw std::invalid_argument("bad --sizes range '" + spec + "'");
    std::vector<int> out;
    for (int s : default_sweep_sizes()) {
      if (s >= *lo && s <= *hi) out.push_back(s);
    }
    if (out.empty()) throw std::invalid_argument("--sizes range selects no grid size");
    return out;
  }
  std::vector<int> out;
  for (const auto& part : split_list(spec)) {
    const auto v = detail::parse_int<int>(part);
    if (!v || *v <= 0) throw std::invalid_argument("bad size '" + part + "' in --sizes");
    out.push_back(*v);
  }
  if (out.empty()) throw std::invalid_argument("--sizes is empty");
  return out;
}

void cmd_generate(const RunConfig& cfg) {
  if (!cfg.graph_path.empty()) throw std::invalid_argument("generate does not take --graph");
  const auto g = attach_weights(generate_random_dag(generator_params(cfg)), load_model(cfg));
  emit(cfg, "graph.dot", emit_dot(g));
}

void cmd_partition(const RunConfig& cfg, bool model_explicit) {
  const auto g = load_graph(cfg, model_explicit);
  const auto pc = partition_config(cfg);
  const auto t = targets(cfg).value_or(workload_ratio(g));
  const auto p = cfg.partition_file.empty() ? partition_heuristic(g, t, pc)
                                            : partition_from_file(read_file(cfg.partition_file), g, t, pc);
  std::size_t on_cpu = 0;
  for (const auto& [id, d] : p.assignment) on_cpu += d == Device::kCpu;
  std::ostringstream summary;
  summary << "r_cpu=" << detail::format_double(t.r_cpu()) << " r_gpu=" << detail::format_double(t.r_gpu())
          << " edge_cut=" << detail::format_double(p.edge_cut)
          << " balance_error=" << detail::format_double(p.balance_error)
          << " feasible=" << (p.feasible ? "yes" : "no") << " cpu_kernels=" << on_cpu
          << " gpu_kernels=" << p.assignment.size() - on_cpu << '\n';
  std::cout << summary.str();
  if (!cfg.out.empty()) {
    MetisOptions mo;
    mo.node_weight_source = pc.node_weight_source;
    const fs::path out(cfg.out);
    write_file(out / "graph.metis", emit_metis(g, mo));
    write_file(out / "graph.metis.part.2", emit_partition_file(g, p.assignment));
    write_file(out / "partitioned.dot", emit_partitioned_dot(g, p.assignment));
  }
}

void cmd_simulate(const RunConfig& cfg, bool model_explicit) {
  const auto g = load_graph(cfg, model_explicit);
  auto policy = make_policy(parse_policy(cfg.policy), g, partition_config(cfg), targets(cfg));
  const auto trace = simulate(g, *policy, machine(cfg));
  const auto m = metrics(trace);
  std::cout << "policy=" << trace.policy << " makespan_ms=" << detail::format_double(m.makespan)
            << " transfer_count=" << m.transfer_count << " transfer_bytes=" << m.transfer_bytes
            << " cpu_kernels=" << m.kernels[0] << " gpu_kernels=" << m.kernels[1]
            << " cpu_busy=" << detail::format_double(m.busy_fraction[0])
            << " gpu_busy=" << detail::format_double(m.busy_fraction[1]) << '\n';
  if (!cfg.out.empty()) {
    write_file(fs::path(cfg.out) / "trace.csv", trace_csv(trace));
    write_file(fs::path(cfg.out) / "trace.dot", emit_trace_dot(g, trace));
  }
}

void cmd_compare(const RunConfig& cfg, bool model_explicit) {
  CompareConfig cc;
  cc.policies.clear();
  for (const auto& p : split_list(cfg.policies)) cc.policies.push_back(parse_policy(p));
  if (cc.policies.empty()) throw std::invalid_argument("--policies lists no policy");
  cc.machine = machine(cfg);
  cc.partition = partition_config(cfg);
  cc.targets = targets(cfg);
  cc.iterations = cfg.iterations;
  cc.seed = cfg.seed;

  std::vector<CompareRow> rows;
  if (!cfg.graph_path.empty()) {
    if (!cfg.sizes.empty()) throw std::invalid_argument("--sizes needs a generated graph");
    rows = compare(load_graph(cfg, model_explicit), load_model(cfg), cc);
  } else if (!cfg.sizes.empty()) {
    rows = compare_sweep(generator_params(cfg), sweep_sizes(cfg.sizes), load_model(cfg), cc);
  } else {
    rows = compare(generator_params(cfg), load_model(cfg), cc);
  }
  emit(cfg, "compare.csv", compare_csv(rows));
}

void cmd_dump_model(const RunConfig& cfg) {
  const auto model = load_model(cfg);
  emit(cfg, "model.csv",
       model.dump_csv({std::string(kernel_kind::kMatAdd), std::string(kernel_kind::kMatMul)}));
}

// With --policy, a trace-annotated graph; otherwise the partitioned graph.
void cmd_visualize(const RunConfig& cfg, bool model_explicit, bool policy_given) {
  const auto g = load_graph(cfg, model_explicit);
  if (policy_given) {
    auto policy = make_policy(parse_policy(cfg.policy), g, partition_config(cfg), targets(cfg));
    emit(cfg, "trace.dot", emit_trace_dot(g, simulate(g, *policy, machine(cfg))));
    return;
  }
  const auto pc = partition_config(cfg);
  const auto t = targets(cfg).value_or(workload_ratio(g));
  const auto p = cfg.partition_file.empty() ? partition_heuristic(g, t, pc)
                                            : partition_from_file(read_file(cfg.partition_file), g, t, pc);
  emit(cfg, "partitioned.dot", emit_partitioned_dot(g, p.assignment));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous CPU+GPU task-graph scheduling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "flat key=value file; command-line flags take precedence");

  RunConfig cfg;
  auto* graph = app.add_option("--graph", cfg.graph_path, "DOT task graph");
  auto* kernels = app.add_option("--kernels", cfg.kernels, "generated kernel count");
  auto* edges = app.add_option("--edges", cfg.edges, "generated dependency count");
  app.add_option("--kind", cfg.kind, "generated kernel kind (MA, MM)");
  app.add_option("--size", cfg.size, "generated matrix size")->check(CLI::PositiveNumber);
  app.add_option("--layers", cfg.layers, "generated layer count (0: ceil(sqrt(kernels)))");
  graph->excludes(kernels)->excludes(edges);
  auto* policy = app.add_option("--policy", cfg.policy, "eager | dmda | gp");
  app.add_option("--policies", cfg.policies, "comma-separated policies for compare");
  auto* model = app.add_option("--model", cfg.model, "synthetic | calibration CSV path");
  app.add_flag("--interpolate", cfg.interpolate, "log-log interpolation between calibrated sizes");
  app.add_option("--cpu-workers", cfg.cpu_workers)->check(CLI::NonNegativeNumber);
  app.add_option("--gpu-workers", cfg.gpu_workers)->check(CLI::NonNegativeNumber);
  app.add_option("--iterations", cfg.iterations)->check(CLI::PositiveNumber);
  app.add_option("--seed", cfg.seed);
  app.add_option("--out", cfg.out, "output directory");
  app.add_option("--node-weight-source", cfg.node_weight_source, "gpu | cpu");
  app.add_option("--tolerance", cfg.tolerance, "allowed partition balance error");
  app.add_option("--restarts", cfg.restarts, "partitioner restarts")->check(CLI::PositiveNumber);
  app.add_option("--targets", cfg.targets, "r_cpu,r_gpu override of the workload ratio");
  app.add_option("--sizes", cfg.sizes, "size sweep: list, lo..hi, or default");
  app.add_option("--partition", cfg.partition_file, "METIS partition file to use instead of partitioning");

  auto* generate = app.add_subcommand("generate", "write a random weighted task graph as DOT");
  auto* partition = app.add_subcommand("partition", "workload ratio and 2-way partition");
  auto* simulate_cmd = app.add_subcommand("simulate", "run one policy and write its trace");
  auto* compare_cmd = app.add_subcommand("compare", "compare policies over iterations and sizes");
  auto* dump = app.add_subcommand("dump-model", "write the active cost model as calibration CSV");
  auto* visualize = app.add_subcommand("visualize", "partitioned or trace-annotated DOT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const bool model_explicit = model->count() > 0;
    if (generate->parsed()) cmd_generate(cfg);
    if (partition->parsed()) cmd_partition(cfg, model_explicit);
    if (simulate_cmd->parsed()) cmd_simulate(cfg, model_explicit);
    if (compare_cmd->parsed()) cmd_compare(cfg, model_explicit);
    if (dump->parsed()) cmd_dump_model(cfg);
    if (visualize->parsed()) cmd_visualize(cfg, model_explicit, policy->count() > 0);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
