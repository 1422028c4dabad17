#pragma once

// Inter-cluster grouping: equal-size constrained clustering of client class
// distributions, groups built by drawing one client per cluster, and the
// MMD-based class probability distance used to judge the result.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hfedms {

using Point = std::vector<double>;

// Half squared Euclidean distance, the per-pair clustering cost.
double half_sq_distance(std::span<const double> a, std::span<const double> b);

// Exact minimiser of sum_k 1/2 ||p_k - C_{a(k)}||^2 subject to every cluster
// receiving exactly `size` points. Returns the cluster index of each point.
std::vector<int> mcf_assign(std::span<const Point> points, std::span<const Point> centroids,
                            std::size_t size);

// Objective of an assignment, summed in point order.
double assignment_objective(std::span<const Point> points, std::span<const Point> centroids,
                            std::span<const int> assignment);

struct ClusterState {
  std::vector<Point> centroids;
  std::vector<int> assignment;  // cluster per input point
  std::size_t cluster_size = 0;
  int iterations = 0;                  // centroid updates performed
  std::vector<double> objective_history;  // after the initial and every later assignment
};

// Alternates exact balanced assignment and centroid update, starting from a
// seeded k-means++ initialisation. Stops when the largest centroid move is
// below `tol` or after `max_iters` updates. max_iters == 0 returns the
// assignment against the initial centroids.
ClusterState constrained_cluster(std::span<const Point> points, std::size_t num_clusters,
                                 int max_iters, double tol, std::uint64_t seed);

struct IcgOptions {
  int max_iters = 10;
  double tol = 1e-6;
};

struct GroupAssignment {
  std::vector<std::vector<int>> groups;  // client ids in training order
  std::vector<int> idle;                 // eligible clients left out this cycle
  std::vector<std::vector<int>> clusters;  // sampled clients by cluster
  int round_created = 0;
  std::size_t group_size = 0;            // L
};

// `distributions` is indexed by client id; `clients` lists the eligible ids.
// With L = floor(K/M), samples L*floor(K/L) clients, clusters them into L
// equal clusters and forms M groups by drawing one member per cluster without
// replacement, then shuffles each group.
GroupAssignment inter_cluster_grouping(std::span<const int> clients,
                                       std::span<const Point> distributions, std::size_t num_groups,
                                       std::uint64_t seed, int round = 0,
                                       const IcgOptions& options = {});

// ---- class probability distance ----------------------------------------------------

struct MmdConfig {
  enum class Bandwidth { Fixed, MedianHeuristic };
  Bandwidth mode = Bandwidth::MedianHeuristic;
  double sigma = 1.0;

  static MmdConfig fixed(double sigma) { return {Bandwidth::Fixed, sigma}; }
  static MmdConfig median() { return {Bandwidth::MedianHeuristic, 1.0}; }
};

// Median pairwise distance of the pooled samples; 1.0 if that median is 0.
double median_bandwidth(std::span<const Point> xs, std::span<const Point> ys);

// Biased MMD^2 with a Gaussian RBF kernel (all pairs, diagonal included).
double mmd2(std::span<const Point> xs, std::span<const Point> ys, const MmdConfig& cfg);

// MMD^2 between two normalised class-probability vectors, each vector's
// entries taken as a scalar sample set.
double cpd(std::span<const double> dist_a, std::span<const double> dist_b, const MmdConfig& cfg);

struct CpdSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t pairs = 0;
};

// Linear-interpolation quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);

// All-pairs CPD between the normalised pooled distributions of the groups.
// `distributions` is indexed by client id.
CpdSummary grouping_quality(std::span<const std::vector<int>> groups,
                            std::span<const Point> distributions, const MmdConfig& cfg);

}  // namespace hfedms
