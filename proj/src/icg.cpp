#include "hfedms/icg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hfedms/error.hpp"
#include "hfedms/mcf.hpp"
#include "hfedms/rng.hpp"

namespace hfedms {

double half_sq_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("points differ in dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return 0.5 * s;
}

std::vector<int> mcf_assign(std::span<const Point> points, std::span<const Point> centroids,
                            std::size_t size) {
  const std::size_t n = points.size();
  const std::size_t k = centroids.size();
  if (k == 0) throw InvalidInput("need at least one centroid");
  if (size == 0 || n != k * size) {
    throw InvalidInput("cannot place " + std::to_string(n) + " points into " + std::to_string(k) +
                       " clusters of size " + std::to_string(size));
  }
  for (const auto& c : centroids) {
    if (!std::all_of(c.begin(), c.end(), [](double v) { return std::isfinite(v); })) {
      throw InvalidInput("centroid has non-finite coordinates");
    }
  }
  if (k == 1) return std::vector<int>(n, 0);

  const int source = 0;
  const int sink = static_cast<int>(n + k + 1);
  MinCostFlow net(sink + 1);
  std::vector<int> first_arc(n);
  for (std::size_t p = 0; p < n; ++p) net.add_edge(source, static_cast<int>(p + 1), 1, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t l = 0; l < k; ++l) {
      const int id = net.add_edge(static_cast<int>(p + 1), static_cast<int>(n + 1 + l), 1,
                                  half_sq_distance(points[p], centroids[l]));
      if (l == 0) first_arc[p] = id;
    }
  }
  for (std::size_t l = 0; l < k; ++l) {
    net.add_edge(static_cast<int>(n + 1 + l), sink, static_cast<std::int64_t>(size), 0.0);
  }
  const auto result = net.solve(source, sink, static_cast<std::int64_t>(n));
  if (result.flow != static_cast<std::int64_t>(n)) throw InvalidInput("balanced assignment infeasible");

  std::vector<int> assignment(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t l = 0; l < k; ++l) {
      if (net.edge(first_arc[p] + static_cast<int>(2 * l)).flow > 0) assignment[p] = static_cast<int>(l);
    }
  }
  return assignment;
}

double assignment_objective(std::span<const Point> points, std::span<const Point> centroids,
                            std::span<const int> assignment) {
  if (points.size() != assignment.size()) throw InvalidInput("assignment length mismatch");
  double total = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    total += half_sq_distance(points[p], centroids[static_cast<std::size_t>(assignment[p])]);
  }
  return total;
}

namespace {

std::vector<Point> kmeanspp_init(std::span<const Point> points, std::size_t k, Rng& rng) {
  std::vector<Point> centroids;
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(points.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t p = 0; p < points.size(); ++p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, 2.0 * half_sq_distance(points[p], c));
      d2[p] = best;
      total += best;
    }
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> dist(d2.begin(), d2.end());
      centroids.push_back(points[dist(rng)]);
    } else {
      centroids.push_back(points[pick(rng)]);
    }
  }
  return centroids;
}

std::vector<Point> update_centroids(std::span<const Point> points, std::span<const int> assignment,
                                    std::size_t k) {
  const std::size_t dim = points.front().size();
  std::vector<Point> c(k, Point(dim, 0.0));
  std::vector<std::size_t> count(k, 0);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto l = static_cast<std::size_t>(assignment[p]);
    for (std::size_t j = 0; j < dim; ++j) c[l][j] += points[p][j];
    ++count[l];
  }
  for (std::size_t l = 0; l < k; ++l) {
    for (double& v : c[l]) v /= static_cast<double>(count[l]);
  }
  return c;
}

}  // namespace

ClusterState constrained_cluster(std::span<const Point> points, std::size_t num_clusters,
                                 int max_iters, double tol, std::uint64_t seed) {
  if (num_clusters < 1) throw InvalidInput("number of clusters must be at least 1");
  if (points.empty()) throw InvalidInput("no points to cluster");
  if (points.size() % num_clusters != 0) {
    throw InvalidInput(std::to_string(points.size()) + " points are not divisible into " +
                       std::to_string(num_clusters) + " equal clusters");
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw InvalidInput("points differ in dimension");
  }

  ClusterState state;
  state.cluster_size = points.size() / num_clusters;
  Rng rng = make_rng(seed, StreamTag::ClusterInit);
  state.centroids = kmeanspp_init(points, num_clusters, rng);
  state.assignment = mcf_assign(points, state.centroids, state.cluster_size);
  state.objective_history.push_back(assignment_objective(points, state.centroids, state.assignment));

  for (int it = 0; it < max_iters; ++it) {
    auto next = update_centroids(points, state.assignment, num_clusters);
    double movement = 0.0;
    for (std::size_t l = 0; l < num_clusters; ++l) {
      movement = std::max(movement, std::sqrt(2.0 * half_sq_distance(next[l], state.centroids[l])));
    }
    state.centroids = std::move(next);
    state.assignment = mcf_assign(points, state.centroids, state.cluster_size);
    state.objective_history.push_back(assignment_objective(points, state.centroids, state.assignment));
    ++state.iterations;
    if (movement < tol) break;
  }
  return state;
}

GroupAssignment inter_cluster_grouping(std::span<const int> clients,
                                       std::span<const Point> distributions, std::size_t num_groups,
                                       std::uint64_t seed, int round, const IcgOptions& options) {
  const std::size_t K = clients.size();
  if (num_groups < 1) throw InvalidInput("number of groups must be at least 1");
  if (num_groups > K) {
    throw InvalidInput("cannot form " + std::to_string(num_groups) + " groups from " +
                       std::to_string(K) + " clients");
  }
  for (int id : clients) {
    if (id < 0 || static_cast<std::size_t>(id) >= distributions.size()) {
      throw InvalidInput("client id " + std::to_string(id) + " has no distribution");
    }
  }

  const std::size_t L = K / num_groups;          // clusters == group size
  const std::size_t cluster_size = K / L;        // >= num_groups
  const std::size_t sampled_count = L * cluster_size;

  Rng rng = make_rng(seed, StreamTag::Grouping, static_cast<std::uint64_t>(round));
  std::vector<int> order(clients.begin(), clients.end());
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> sampled(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sampled_count));
  GroupAssignment out;
  out.round_created = round;
  out.group_size = L;
  out.idle.assign(order.begin() + static_cast<std::ptrdiff_t>(sampled_count), order.end());
  std::sort(sampled.begin(), sampled.end());

  std::vector<std::vector<int>> members(L);
  if (L == 1) {
    members[0] = sampled;
  } else {
    std::vector<Point> points;
    points.reserve(sampled.size());
    for (int id : sampled) points.push_back(distributions[static_cast<std::size_t>(id)]);
    const auto state = constrained_cluster(
        points, L, options.max_iters, options.tol,
        derive_seed(seed, StreamTag::ClusterInit, static_cast<std::uint64_t>(round)));
    for (std::size_t p = 0; p < sampled.size(); ++p) {
      members[static_cast<std::size_t>(state.assignment[p])].push_back(sampled[p]);
    }
  }

  out.clusters = members;
  out.groups.assign(num_groups, {});
  for (auto& cluster : members) {
    std::shuffle(cluster.begin(), cluster.end(), rng);
    for (std::size_t m = 0; m < cluster.size(); ++m) {
      if (m < num_groups) {
        out.groups[m].push_back(cluster[m]);
      } else {
        out.idle.push_back(cluster[m]);
      }
    }
  }
  for (auto& g : out.groups) std::shuffle(g.begin(), g.end(), rng);
  std::sort(out.idle.begin(), out.idle.end());
  return out;
}

// ---- CPD -----------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median_bandwidth(std::span<const Point> xs, std::span<const Point> ys) {
  std::vector<const Point*> pooled;
  for (const auto& x : xs) pooled.push_back(&x);
  for (const auto& y : ys) pooled.push_back(&y);
  std::vector<double> d;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = i + 1; j < pooled.size(); ++j) {
      d.push_back(std::sqrt(2.0 * half_sq_distance(*pooled[i], *pooled[j])));
    }
  }
  if (d.empty()) return 1.0;
  const double med = quantile(std::move(d), 0.5);
  return med > 0.0 ? med : 1.0;
}

double mmd2(std::span<const Point> xs, std::span<const Point> ys, const MmdConfig& cfg) {
  if (xs.empty() || ys.empty()) throw InvalidInput("MMD needs non-empty sample sets");
  double sigma = cfg.sigma;
  if (cfg.mode == MmdConfig::Bandwidth::MedianHeuristic) {
    sigma = median_bandwidth(xs, ys);
  } else if (!(sigma > 0.0)) {
    throw InvalidInput("fixed kernel bandwidth must be positive");
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto mean_kernel = [inv](std::span<const Point> a, std::span<const Point> b) {
    double s = 0.0;
    for (const auto& x : a) {
      for (const auto& y : b) s += std::exp(-2.0 * half_sq_distance(x, y) * inv);
    }
    return s / static_cast<double>(a.size() * b.size());
  };
  return mean_kernel(xs, xs) + mean_kernel(ys, ys) - 2.0 * mean_kernel(xs, ys);
}

double cpd(std::span<const double> dist_a, std::span<const double> dist_b, const MmdConfig& cfg) {
  if (dist_a.empty() || dist_b.empty()) throw InvalidInput("CPD needs non-empty distributions");
  std::vector<Point> xs, ys;
  for (double v : dist_a) xs.push_back({v});
  for (double v : dist_b) ys.push_back({v});
  return std::max(0.0, mmd2(xs, ys, cfg));
}

CpdSummary grouping_quality(std::span<const std::vector<int>> groups,
                            std::span<const Point> distributions, const MmdConfig& cfg) {
  CpdSummary summary;
  if (groups.size() < 2) return summary;
  std::vector<std::vector<double>> pooled;
  for (const auto& g : groups) {
    std::vector<double> total;
    for (int id : g) {
      const auto& v = distributions[static_cast<std::size_t>(id)];
      if (total.empty()) total.assign(v.size(), 0.0);
      for (std::size_t c = 0; c < v.size(); ++c) total[c] += v[c];
    }
    const double sum = std::accumulate(total.begin(), total.end(), 0.0);
    if (sum > 0.0) {
      for (double& x : total) x /= sum;
    }
    pooled.push_back(std::move(total));
  }
  std::vector<double> values;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = i + 1; j < pooled.size(); ++j) values.push_back(cpd(pooled[i], pooled[j], cfg));
  }
  summary.pairs = values.size();
  summary.median = quantile(values, 0.5);
  summary.q1 = quantile(values, 0.25);
  summary.q3 = quantile(values, 0.75);
  return summary;
}

}  // namespace hfedms
