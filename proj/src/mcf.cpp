#include "hfedms/mcf.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <utility>

#include "hfedms/error.hpp"

namespace hfedms {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

MinCostFlow::MinCostFlow(int num_nodes) {
  if (num_nodes < 2) throw InvalidInput("flow network needs at least two nodes");
  adj_.resize(static_cast<std::size_t>(num_nodes));
  potential_.assign(static_cast<std::size_t>(num_nodes), 0.0);
}

int MinCostFlow::add_edge(int from, int to, std::int64_t cap, double cost) {
  if (from < 0 || to < 0 || from >= num_nodes() || to >= num_nodes()) {
    throw InvalidInput("edge endpoint out of range");
  }
  if (cap < 0) throw InvalidInput("edge capacity must be non-negative");
  if (!(cost >= 0.0)) throw InvalidInput("edge cost must be finite and non-negative");
  const int id = static_cast<int>(edges_.size());
  edges_.push_back({from, to, cap, 0, cost});
  edges_.push_back({to, from, 0, 0, -cost});
  adj_[static_cast<std::size_t>(from)].push_back(id);
  adj_[static_cast<std::size_t>(to)].push_back(id + 1);
  return id;
}

bool MinCostFlow::shortest_path(int source, int sink) {
  const std::size_t n = adj_.size();
  dist_.assign(n, kInf);
  parent_edge_.assign(n, -1);
  using Item = std::pair<double, int>;
  // Ties on distance pop the lower node id first.
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist_[static_cast<std::size_t>(source)] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist_[static_cast<std::size_t>(v)]) continue;
    for (int id : adj_[static_cast<std::size_t>(v)]) {
      const Edge& e = edges_[static_cast<std::size_t>(id)];
      if (e.cap - e.flow <= 0) continue;
      // Exact arithmetic keeps reduced costs non-negative; clamping the
      // rounding noise keeps Dijkstra from chasing near-zero cycles.
      const double reduced = std::max(0.0, e.cost + potential_[static_cast<std::size_t>(v)] -
                                               potential_[static_cast<std::size_t>(e.to)]);
      const double nd = d + reduced;
      if (nd < dist_[static_cast<std::size_t>(e.to)]) {
        dist_[static_cast<std::size_t>(e.to)] = nd;
        parent_edge_[static_cast<std::size_t>(e.to)] = id;
        heap.emplace(nd, e.to);
      }
    }
  }
  if (dist_[static_cast<std::size_t>(sink)] == kInf) return false;
  for (std::size_t v = 0; v < n; ++v) {
    if (dist_[v] < kInf) potential_[v] += dist_[v];
  }
  return true;
}

MinCostFlow::Result MinCostFlow::solve(int source, int sink, std::int64_t limit) {
  Result result;
  while (result.flow < limit && shortest_path(source, sink)) {
    std::int64_t push = limit - result.flow;
    for (int v = sink; v != source;) {
      const Edge& e = edges_[static_cast<std::size_t>(parent_edge_[static_cast<std::size_t>(v)])];
      push = std::min(push, e.cap - e.flow);
      v = e.from;
    }
    for (int v = sink; v != source;) {
      const int id = parent_edge_[static_cast<std::size_t>(v)];
      edges_[static_cast<std::size_t>(id)].flow += push;
      edges_[static_cast<std::size_t>(id ^ 1)].flow -= push;
      result.cost += static_cast<double>(push) * edges_[static_cast<std::size_t>(id)].cost;
      v = edges_[static_cast<std::size_t>(id)].from;
    }
    result.flow += push;
  }
  return result;
}

}  // namespace hfedms
