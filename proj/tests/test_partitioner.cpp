#include <gtest/gtest.h>

#include <random>

#include "hetsched/cost_model.hpp"
#include "hetsched/partitioner.hpp"
#include "support/oracles.hpp"
#include "support/random_graphs.hpp"

using namespace hetsched;

namespace {

KernelNode source() { return KernelNode{0, "SOURCE", 0, 0, 0, true, {}, {}}; }
KernelNode kernel(KernelId id, double cpu, double gpu) {
  return KernelNode{id, "MA", 64, cpu, gpu, true, {}, {}};
}
DataEdge edge(KernelId a, KernelId b, double w = 0) { return DataEdge{a, b, 0, w, 1, true, {}}; }

// A -> B -> C with unit nodes, A->B = 5, B->C = 1
TaskGraph chain() {
  return TaskGraph({source(), kernel(1, 1, 1), kernel(2, 1, 1), kernel(3, 1, 1)},
                   {edge(0, 1), edge(1, 2, 5), edge(2, 3, 1)});
}

// two disconnected triangles of equal weight
TaskGraph two_cliques() {
  std::vector<KernelNode> nodes{source()};
  std::vector<DataEdge> edges;
  for (KernelId k = 1; k <= 6; ++k) nodes.push_back(kernel(k, 2, 1));
  for (KernelId base : {1, 4}) {
    edges.push_back(edge(0, base));
    edges.push_back(edge(base, base + 1, 3));
    edges.push_back(edge(base, base + 2, 3));
    edges.push_back(edge(base + 1, base + 2, 3));
  }
  return TaskGraph(nodes, edges);
}

Assignment all(const TaskGraph& g, Device d) {
  Assignment a;
  for (auto id : g.kernel_ids()) a[id] = d;
  return a;
}

}  // namespace

TEST(Evaluate, Basics) {
  const auto g = chain();
  const PartitionTargets t(1.0 / 3.0);
  const auto gpu = evaluate(g, all(g, Device::kGpu), t, WeightSource::kGpu);
  EXPECT_EQ(gpu.edge_cut, 0.0);
  EXPECT_NEAR(gpu.balance_error, 1.0 / 3.0, 1e-15);
  const auto split = evaluate(g, {{1, Device::kGpu}, {2, Device::kGpu}, {3, Device::kCpu}}, t,
                              WeightSource::kGpu);
  EXPECT_EQ(split.edge_cut, 1.0);
  EXPECT_NEAR(split.balance_error, 0.0, 1e-15);
  EXPECT_THROW(evaluate(g, {{1, Device::kGpu}}, t, WeightSource::kGpu), std::invalid_argument);
  EXPECT_THROW(evaluate(g, {{1, Device::kGpu}, {2, Device::kGpu}, {9, Device::kGpu}}, t,
                        WeightSource::kGpu),
               std::invalid_argument);
}

TEST(Evaluate, MatchesCachedFields) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 500; ++i) {
    const auto g = testkit::random_weighted_graph(rng, {1, 15});
    Assignment a;
    for (auto id : g.kernel_ids()) a[id] = coin(rng) ? Device::kGpu : Device::kCpu;
    const auto p = make_partition(g, a, PartitionTargets(0.3), WeightSource::kGpu, 0.03);
    const auto ev = evaluate(g, p);
    EXPECT_EQ(ev.edge_cut, p.edge_cut);
    EXPECT_EQ(ev.balance_error, p.balance_error);
  }
}

TEST(BruteForce, SingleKernelGoesToGpu) {
  const TaskGraph g({source(), kernel(1, 4, 1)}, {edge(0, 1)});
  const auto p = brute_force_partition(g, PartitionTargets(0.0), 0.03);
  EXPECT_EQ(p.assignment.at(1), Device::kGpu);
  EXPECT_EQ(p.edge_cut, 0.0);
  EXPECT_TRUE(p.feasible);
}

TEST(BruteForce, ChainHandEnumeration) {
  const auto p = brute_force_partition(chain(), PartitionTargets(1.0 / 3.0), 0.05);
  EXPECT_EQ(p.assignment.at(1), Device::kGpu);
  EXPECT_EQ(p.assignment.at(2), Device::kGpu);
  EXPECT_EQ(p.assignment.at(3), Device::kCpu);
  EXPECT_EQ(p.edge_cut, 1.0);
  EXPECT_TRUE(p.feasible);
}

TEST(BruteForce, LexicographicTieBreak) {
  const TaskGraph g({source(), kernel(1, 1, 1), kernel(2, 1, 1)}, {edge(0, 1), edge(0, 2)});
  const auto p = brute_force_partition(g, PartitionTargets(0.5), 0.0);
  EXPECT_EQ(p.assignment.at(1), Device::kCpu);
  EXPECT_EQ(p.assignment.at(2), Device::kGpu);
}

TEST(BruteForce, InfeasibleReturnsBestBalance) {
  // 5 equal kernels cannot hit a 2% CPU share
  std::vector<KernelNode> nodes{source()};
  std::vector<DataEdge> edges;
  for (KernelId k = 1; k <= 5; ++k) {
    nodes.push_back(kernel(k, 1, 1));
    edges.push_back(edge(0, k));
  }
  const TaskGraph g(nodes, edges);
  const auto p = brute_force_partition(g, PartitionTargets(0.02), 0.01);
  EXPECT_FALSE(p.feasible);
  EXPECT_NEAR(p.balance_error, 0.02, 1e-15);
  EXPECT_EQ(p.assignment, all(g, Device::kGpu));
}

TEST(BruteForce, RefusesLargeGraphs) {
  std::vector<KernelNode> nodes{source()};
  std::vector<DataEdge> edges;
  for (KernelId k = 1; k <= 21; ++k) {
    nodes.push_back(kernel(k, 1, 1));
    edges.push_back(edge(0, k));
  }
  EXPECT_THROW(brute_force_partition(TaskGraph(nodes, edges), PartitionTargets(0.5), 0.03),
               std::invalid_argument);
}

TEST(BruteForce, AgreesWithIndependentEnumerator) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const auto g = testkit::random_weighted_graph(rng, {1, 12, 0.3});
    const PartitionTargets t(ratio(rng));
    const auto p = brute_force_partition(g, t, 0.03);
    const auto ref = testkit::enumerate_partitions(g, t.r_cpu(), 0.03);
    ASSERT_EQ(p.feasible, ref.feasible);
    if (ref.feasible) {
      EXPECT_NEAR(p.edge_cut, ref.best_cut, 1e-9);
    } else {
      EXPECT_NEAR(p.balance_error, ref.best_error, 1e-12);
    }
  }
}

TEST(Heuristic, DegenerateTargets) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto g = testkit::random_weighted_graph(rng);
    PartitionConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    const auto gpu = partition_heuristic(g, PartitionTargets(0.0), cfg);
    EXPECT_EQ(gpu.assignment, all(g, Device::kGpu));
    EXPECT_EQ(gpu.edge_cut, 0.0);
    const auto cpu = partition_heuristic(g, PartitionTargets(1.0), cfg);
    EXPECT_EQ(cpu.assignment, all(g, Device::kCpu));
  }
}

TEST(Heuristic, TwoCliquesSplitCleanly) {
  const auto g = two_cliques();
  const auto p = partition_heuristic(g, PartitionTargets(0.5), {});
  EXPECT_EQ(p.edge_cut, 0.0);
  EXPECT_EQ(p.balance_error, 0.0);
  EXPECT_EQ(p.assignment.at(1), p.assignment.at(3));
  EXPECT_NE(p.assignment.at(1), p.assignment.at(4));
}

TEST(Heuristic, WithinOracleBound) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    testkit::RandomGraphOptions opt{10, 10, 0.3};
    const auto g = testkit::random_weighted_graph(rng, opt);
    const PartitionTargets t(ratio(rng));
    PartitionConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    const auto oracle = brute_force_partition(g, t, cfg.imbalance_tolerance);
    const auto p = partition_heuristic(g, t, cfg);
    EXPECT_EQ(p.feasible, oracle.feasible);
    if (oracle.feasible) {
      EXPECT_LE(p.balance_error, cfg.imbalance_tolerance + 1e-12);
      EXPECT_LE(p.edge_cut, 1.5 * oracle.edge_cut + 1e-9);
    }
    const auto ev = evaluate(g, p);
    EXPECT_NEAR(ev.edge_cut, p.edge_cut, 1e-9);
  }
}

TEST(Heuristic, DeterministicAndRejectsEmpty) {
  GeneratorParams gp;
  gp.kind = "MA";
  const auto g = attach_weights(generate_random_dag(gp), CostModel::synthetic());
  PartitionConfig cfg;
  cfg.seed = 12;
  const auto t = workload_ratio(g);
  EXPECT_EQ(partition_heuristic(g, t, cfg).assignment, partition_heuristic(g, t, cfg).assignment);
  EXPECT_THROW(partition_heuristic(TaskGraph({source()}, {}), t, cfg), std::invalid_argument);
}

TEST(Heuristic, ConfigValidation) {
  PartitionConfig cfg;
  cfg.imbalance_tolerance = 1.0;
  EXPECT_THROW(cfg.check(), std::invalid_argument);
  cfg.imbalance_tolerance = 0.03;
  cfg.restarts = 0;
  EXPECT_THROW(cfg.check(), std::invalid_argument);
}

TEST(FmRefine, OptimalIsUnchanged) {
  const auto g = chain();
  const PartitionTargets t(1.0 / 3.0);
  const auto opt = make_partition(g, {{1, Device::kGpu}, {2, Device::kGpu}, {3, Device::kCpu}}, t,
                                  WeightSource::kGpu, 0.05);
  PartitionConfig cfg;
  cfg.imbalance_tolerance = 0.05;
  EXPECT_EQ(fm_refine(g, opt, t, cfg).assignment, opt.assignment);
}

TEST(FmRefine, MisplacedNodeMoves) {
  // node 2 sits alone on the CPU while all its neighbours are on the GPU
  const TaskGraph g({source(), kernel(1, 1, 1), kernel(2, 1, 1), kernel(3, 1, 1),
                     kernel(4, 1, 1)},
                    {edge(0, 1), edge(0, 4), edge(1, 2, 2), edge(2, 3, 3), edge(1, 3, 1)});
  const PartitionTargets t(0.25);
  // single moves must be allowed to pass through a 25% imbalance
  PartitionConfig cfg;
  cfg.imbalance_tolerance = 0.25;
  const auto start = make_partition(g, {{1, Device::kGpu}, {2, Device::kCpu}, {3, Device::kGpu},
                                        {4, Device::kGpu}},
                                    t, WeightSource::kGpu, 0.0);
  EXPECT_EQ(start.edge_cut, 5.0);
  const auto refined = fm_refine(g, start, t, cfg);
  EXPECT_EQ(refined.assignment.at(2), Device::kGpu);
  EXPECT_EQ(refined.assignment.at(4), Device::kCpu);
  EXPECT_EQ(refined.edge_cut, 0.0);
}

TEST(FmRefine, MonotoneAndIdempotent) {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto g = testkit::random_weighted_graph(rng, {2, 25});
    const PartitionTargets t(ratio(rng));
    PartitionConfig cfg;
    Assignment a;
    for (auto id : g.kernel_ids()) a[id] = coin(rng) ? Device::kGpu : Device::kCpu;
    const auto start = make_partition(g, a, t, cfg.node_weight_source, cfg.imbalance_tolerance);
    const auto once = fm_refine(g, start, t, cfg);
    EXPECT_LE(once.edge_cut, start.edge_cut + 1e-9);
    EXPECT_LE(once.balance_error,
              std::max(cfg.imbalance_tolerance, start.balance_error) + 1e-12);
    const auto twice = fm_refine(g, once, t, cfg);
    EXPECT_EQ(twice.assignment, once.assignment);
  }
}

// With a fractional balance measure, scaling every node weight by the same
// factor leaves each assignment's share unchanged, so GPU-time and CPU-time
// weights admit the same assignments when every kernel has the same speedup.
TEST(NodeWeightSource, UniformSpeedupAdmitsSameAssignments) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    auto g = testkit::random_weighted_graph(rng, {2, 10});
    auto nodes = g.nodes();
    for (auto& n : nodes) n.weight_cpu = 40.0 * n.weight_gpu;
    g = TaskGraph(nodes, g.edges());
    const double r = workload_ratio(g).r_cpu();
    const auto gpu = testkit::enumerate_partitions(g, r, 0.03, true);
    const auto cpu = testkit::enumerate_partitions(g, r, 0.03, false);
    EXPECT_EQ(gpu.feasible_count, cpu.feasible_count);
  }
}

// The directional effect shows up in the exported integer weights: with GPU
// times the edges carry relatively more weight against the nodes.
TEST(NodeWeightSource, GpuWeightsRaiseEdgePriority) {
  GeneratorParams p;
  p.kind = "MM";
  const auto g = attach_weights(generate_random_dag(p), CostModel::synthetic());
  auto ratio = [&](WeightSource s) {
    MetisOptions opt;
    opt.node_weight_source = s;
    const auto m = to_metis(g, opt);
    double nodes = 0;
    double edges = 0;
    for (auto w : m.vertex_weights) nodes += static_cast<double>(w);
    for (const auto& adj : m.neighbours) {
      for (const auto& [u, w] : adj) edges += static_cast<double>(w);
    }
    return edges / nodes;
  };
  EXPECT_GT(ratio(WeightSource::kGpu), 10 * ratio(WeightSource::kCpu));
}
