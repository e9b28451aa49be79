#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pdmp {

/// Uncapacitated min-cost transshipment solved by the primal network simplex
/// method (spanning-tree basis with thread/preorder bookkeeping, block-search
/// pricing, strongly feasible leaving-arc rule).
///
/// An extra hub node acts as the tree root. Every node is joined to the hub
/// by two arcs of cost `hub_cost` (one in each direction), which gives an
/// immediate feasible basis and caps the cost of moving a unit of mass
/// between any two nodes at 2 * hub_cost. Supplies must sum to zero up to
/// rounding; the hub absorbs the residual.
class NetworkSimplex {
 public:
  NetworkSimplex(std::vector<double> supply, double hub_cost);

  /// Adds the arc s -> t; returns its index.
  int add_arc(int source, int target, double cost);

  /// Runs the simplex to optimality and returns sum(flow * cost). The
  /// optional callback is invoked after every pivot (used by tests to audit
  /// the basis). Arcs added after a solve join the current basis, so a
  /// further solve() resumes from the previous optimum.
  double solve(const std::function<void(const NetworkSimplex&)>& after_pivot = {});

  int node_count() const { return n_nodes_; }
  int arc_count() const { return static_cast<int>(source_.size()); }
  std::uint64_t pivots() const { return pivots_; }
  double flow(int arc) const { return flow_[static_cast<std::size_t>(arc)]; }
  /// Node potential after solve(); arc s -> t has reduced cost
  /// cost + potential(s) - potential(t).
  double potential(int node) const { return pi_[static_cast<std::size_t>(node)]; }
  double objective() const;

  /// Full consistency audit of the spanning-tree basis: parent/thread
  /// structure, subtree sizes, last successors, flow conservation, zero
  /// reduced cost on tree arcs. Returns an empty string when consistent.
  std::string audit(double tol = 1e-9) const;

  /// Largest violation of dual feasibility (most negative reduced cost).
  double min_reduced_cost() const;

 private:
  void init_tree();
  bool find_entering_arc();
  void find_join_node();
  bool find_leaving_arc();
  void change_flow();
  void update_tree_structure();
  void update_potential();
  double reduced_cost(int arc) const;

  int n_nodes_;  // user nodes; the hub is index n_nodes_
  int root_;
  double hub_cost_;
  std::vector<double> supply_;

  std::vector<int> source_;
  std::vector<int> target_;
  std::vector<double> cost_;
  std::vector<double> flow_;
  std::vector<std::int8_t> in_tree_;

  std::vector<int> parent_;
  std::vector<int> pred_;
  std::vector<int> thread_;
  std::vector<int> rev_thread_;
  std::vector<int> succ_num_;
  std::vector<int> last_succ_;
  std::vector<std::int8_t> pred_dir_;  // +1: pred arc points to the parent
  std::vector<int> dirty_revs_;
  std::vector<double> pi_;

  int hub_arcs_begin_ = -1;
  int block_size_ = 0;
  int next_arc_ = 0;
  std::uint64_t pivots_ = 0;

  int in_arc_ = -1;
  int join_ = -1;
  int u_in_ = -1;
  int v_in_ = -1;
  int u_out_ = -1;
  double delta_ = 0.0;
};

}  // namespace pdmp
