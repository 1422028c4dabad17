#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hfedms {

// Min-cost flow by successive shortest paths with Johnson potentials.
// Costs are real-valued and must be non-negative on the initial network, so
// zero potentials are feasible. Reduced costs that come out slightly negative
// through rounding are treated as zero.
class MinCostFlow {
 public:
  struct Edge {
    int from = 0;
    int to = 0;
    std::int64_t cap = 0;
    std::int64_t flow = 0;
    double cost = 0.0;
  };

  struct Result {
    std::int64_t flow = 0;
    double cost = 0.0;
  };

  explicit MinCostFlow(int num_nodes);

  // Returns the id of the forward edge; its residual twin is id ^ 1.
  int add_edge(int from, int to, std::int64_t cap, double cost);

  // Pushes up to `limit` units from source to sink along cheapest paths.
  Result solve(int source, int sink, std::int64_t limit);

  const Edge& edge(int id) const { return edges_[static_cast<std::size_t>(id)]; }
  int num_nodes() const { return static_cast<int>(adj_.size()); }

 private:
  bool shortest_path(int source, int sink);

  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> potential_;
  std::vector<double> dist_;
  std::vector<int> parent_edge_;
};

}  // namespace hfedms
