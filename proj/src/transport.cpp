#include "pdmp/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pdmp/types.hpp"

namespace pdmp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPricingTol = 1e-12;
constexpr std::int8_t kUp = 1;
constexpr std::int8_t kDown = -1;

}  // namespace

NetworkSimplex::NetworkSimplex(std::vector<double> supply, double hub_cost)
    : n_nodes_(static_cast<int>(supply.size())),
      root_(static_cast<int>(supply.size())),
      hub_cost_(hub_cost),
      supply_(std::move(supply)) {
  if (!(hub_cost_ > 0.0)) throw PreconditionError("network simplex: hub cost must be positive");
}

int NetworkSimplex::add_arc(int source, int target, double cost) {
  if (source < 0 || source >= n_nodes_ || target < 0 || target >= n_nodes_ || source == target) {
    throw PreconditionError("network simplex: invalid arc endpoints");
  }
  if (!(cost >= 0.0) || !std::isfinite(cost)) {
    throw PreconditionError("network simplex: arc costs must be finite and non-negative");
  }
  source_.push_back(source);
  target_.push_back(target);
  cost_.push_back(cost);
  if (hub_arcs_begin_ >= 0) {
    // Basis already built: the new arc enters as a non-tree arc at zero flow.
    flow_.push_back(0.0);
    in_tree_.push_back(0);
  }
  return static_cast<int>(source_.size()) - 1;
}

double NetworkSimplex::reduced_cost(int e) const {
  return cost_[e] + pi_[source_[e]] - pi_[target_[e]];
}

void NetworkSimplex::init_tree() {
  hub_arcs_begin_ = static_cast<int>(source_.size());
  for (int u = 0; u < n_nodes_; ++u) {
    source_.push_back(u);
    target_.push_back(root_);
    cost_.push_back(hub_cost_);
    source_.push_back(root_);
    target_.push_back(u);
    cost_.push_back(hub_cost_);
  }
  const auto m = source_.size();
  const auto n = static_cast<std::size_t>(n_nodes_) + 1;
  flow_.assign(m, 0.0);
  in_tree_.assign(m, 0);
  parent_.assign(n, -1);
  pred_.assign(n, -1);
  thread_.assign(n, 0);
  rev_thread_.assign(n, 0);
  succ_num_.assign(n, 1);
  last_succ_.assign(n, 0);
  pred_dir_.assign(n, 0);
  pi_.assign(n, 0.0);

  thread_[root_] = 0;
  rev_thread_[0] = root_;
  succ_num_[root_] = n_nodes_ + 1;
  last_succ_[root_] = n_nodes_ == 0 ? root_ : root_ - 1;
  for (int u = 0; u < n_nodes_; ++u) {
    parent_[u] = root_;
    thread_[u] = u + 1;
    rev_thread_[u + 1] = u;
    succ_num_[u] = 1;
    last_succ_[u] = u;
    const int up = hub_arcs_begin_ + 2 * u;
    if (supply_[u] >= 0.0) {
      pred_[u] = up;
      pred_dir_[u] = kUp;
      flow_[up] = supply_[u];
      pi_[u] = -hub_cost_;
    } else {
      pred_[u] = up + 1;
      pred_dir_[u] = kDown;
      flow_[up + 1] = -supply_[u];
      pi_[u] = hub_cost_;
    }
    in_tree_[pred_[u]] = 1;
  }
  if (n_nodes_ == 0) thread_[root_] = root_;

  block_size_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(m))));
  next_arc_ = 0;
}

bool NetworkSimplex::find_entering_arc() {
  const int m = static_cast<int>(source_.size());
  double best = -kPricingTol;
  in_arc_ = -1;
  int count = block_size_;
  auto scan = [&](int e) {
    if (!in_tree_[e]) {
      const double c = reduced_cost(e);
      if (c < best) {
        best = c;
        in_arc_ = e;
      }
    }
    if (--count == 0) {
      if (in_arc_ >= 0) return true;
      count = block_size_;
    }
    return false;
  };
  for (int e = next_arc_; e < m; ++e) {
    if (scan(e)) {
      next_arc_ = e + 1 == m ? 0 : e + 1;
      return true;
    }
  }
  for (int e = 0; e < next_arc_; ++e) {
    if (scan(e)) {
      next_arc_ = e + 1;
      return true;
    }
  }
  return in_arc_ >= 0;
}

void NetworkSimplex::find_join_node() {
  int u = source_[in_arc_];
  int v = target_[in_arc_];
  while (u != v) {
    if (succ_num_[u] < succ_num_[v]) {
      u = parent_[u];
    } else {
      v = parent_[v];
    }
  }
  join_ = u;
}

bool NetworkSimplex::find_leaving_arc() {
  // Flow is pushed along source -> target of the entering arc, i.e. down the
  // tree path from the join node to `first` and up from `second` to the join.
  const int first = source_[in_arc_];
  const int second = target_[in_arc_];
  delta_ = kInf;
  int side = 0;
  for (int u = first; u != join_; u = parent_[u]) {
    const double d = pred_dir_[u] == kUp ? flow_[pred_[u]] : kInf;
    if (d < delta_) {
      delta_ = d;
      u_out_ = u;
      side = 1;
    }
  }
  for (int u = second; u != join_; u = parent_[u]) {
    const double d = pred_dir_[u] == kDown ? flow_[pred_[u]] : kInf;
    if (d <= delta_) {
      delta_ = d;
      u_out_ = u;
      side = 2;
    }
  }
  if (side == 0) return false;
  if (side == 1) {
    u_in_ = first;
    v_in_ = second;
  } else {
    u_in_ = second;
    v_in_ = first;
  }
  return true;
}

void NetworkSimplex::change_flow() {
  if (delta_ > 0.0) {
    flow_[in_arc_] += delta_;
    for (int u = source_[in_arc_]; u != join_; u = parent_[u]) {
      flow_[pred_[u]] -= pred_dir_[u] * delta_;
    }
    for (int u = target_[in_arc_]; u != join_; u = parent_[u]) {
      flow_[pred_[u]] += pred_dir_[u] * delta_;
    }
  }
  // The leaving arc carries exactly zero flow; pin it against rounding.
  flow_[pred_[u_out_]] = 0.0;
  in_tree_[in_arc_] = 1;
  in_tree_[pred_[u_out_]] = 0;
}

void NetworkSimplex::update_tree_structure() {
  const int old_rev_thread = rev_thread_[u_out_];
  const int old_succ_num = succ_num_[u_out_];
  const int old_last_succ = last_succ_[u_out_];
  const int v_out = parent_[u_out_];

  if (u_in_ == u_out_) {
    parent_[u_in_] = v_in_;
    pred_[u_in_] = in_arc_;
    pred_dir_[u_in_] = u_in_ == source_[in_arc_] ? kUp : kDown;

    if (thread_[v_in_] != u_out_) {
      int after = thread_[old_last_succ];
      thread_[old_rev_thread] = after;
      rev_thread_[after] = old_rev_thread;
      after = thread_[v_in_];
      thread_[v_in_] = u_out_;
      rev_thread_[u_out_] = v_in_;
      thread_[old_last_succ] = after;
      rev_thread_[after] = old_last_succ;
    }
  } else {
    // When old_rev_thread == v_in, the join node and v_out coincide.
    const int thread_continue = old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

    // Re-hang the stem u_in -> ... -> u_out below v_in, reversing it.
    int stem = u_in_;
    int par_stem = v_in_;
    int last = last_succ_[u_in_];
    int after = thread_[last];
    thread_[v_in_] = u_in_;
    dirty_revs_.clear();
    dirty_revs_.push_back(v_in_);
    while (stem != u_out_) {
      const int next_stem = parent_[stem];
      thread_[last] = next_stem;
      dirty_revs_.push_back(last);

      const int before = rev_thread_[stem];
      thread_[before] = after;
      rev_thread_[after] = before;

      parent_[stem] = par_stem;
      par_stem = stem;
      stem = next_stem;

      last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
      after = thread_[last];
    }
    parent_[u_out_] = par_stem;
    thread_[last] = thread_continue;
    rev_thread_[thread_continue] = last;
    last_succ_[u_out_] = last;

    if (old_rev_thread != v_in_) {
      thread_[old_rev_thread] = after;
      rev_thread_[after] = old_rev_thread;
    }

    for (int u : dirty_revs_) rev_thread_[thread_[u]] = u;

    int tmp_sc = 0;
    const int tmp_ls = last_succ_[u_out_];
    for (int u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
      pred_[u] = pred_[p];
      pred_dir_[u] = static_cast<std::int8_t>(-pred_dir_[p]);
      tmp_sc += succ_num_[u] - succ_num_[p];
      succ_num_[u] = tmp_sc;
      last_succ_[p] = tmp_ls;
    }
    pred_[u_in_] = in_arc_;
    pred_dir_[u_in_] = u_in_ == source_[in_arc_] ? kUp : kDown;
    succ_num_[u_in_] = old_succ_num;
  }

  const int up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
  const int last_succ_out = last_succ_[u_out_];
  for (int u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u]) {
    last_succ_[u] = last_succ_out;
  }

  if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
    for (int u = v_out; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u]) {
      last_succ_[u] = old_rev_thread;
    }
  } else if (last_succ_out != old_last_succ) {
    for (int u = v_out; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u]) {
      last_succ_[u] = last_succ_out;
    }
  }

  for (int u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
  for (int u = v_out; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
}

void NetworkSimplex::update_potential() {
  const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * cost_[in_arc_];
  const int end = thread_[last_succ_[u_in_]];
  for (int u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
}

double NetworkSimplex::solve(const std::function<void(const NetworkSimplex&)>& after_pivot) {
  if (hub_arcs_begin_ < 0) init_tree();
  block_size_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(source_.size()))));
  while (find_entering_arc()) {
    find_join_node();
    if (!find_leaving_arc()) throw Error("network simplex: unbounded cycle (negative costs?)");
    change_flow();
    update_tree_structure();
    update_potential();
    ++pivots_;
    if (after_pivot) after_pivot(*this);
  }
  return objective();
}

double NetworkSimplex::objective() const {
  double total = 0.0;
  for (std::size_t e = 0; e < flow_.size(); ++e) total += flow_[e] * cost_[e];
  return total;
}

double NetworkSimplex::min_reduced_cost() const {
  double worst = 0.0;
  for (int e = 0; e < static_cast<int>(source_.size()); ++e) worst = std::min(worst, reduced_cost(e));
  return worst;
}

std::string NetworkSimplex::audit(double tol) const {
  const int n = n_nodes_ + 1;
  if (parent_[root_] != -1) return "root has a parent";

  // Thread must be a single cycle visiting every node in preorder.
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  int u = root_;
  for (int k = 0; k < n; ++k) {
    order.push_back(u);
    if (rev_thread_[thread_[u]] != u) return fmt::format("rev_thread mismatch at node {}", u);
    u = thread_[u];
  }
  if (u != root_) return "thread is not a cycle through the root";
  std::vector<int> position(static_cast<std::size_t>(n), -1);
  for (int k = 0; k < n; ++k) {
    if (position[order[k]] != -1) return "thread visits a node twice";
    position[order[k]] = k;
  }

  // Preorder: each subtree is the contiguous thread segment [v, last_succ[v]]
  // of length succ_num[v], and children directly follow their ancestors.
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  for (int k = n - 1; k > 0; --k) {
    const int v = order[k];
    const int p = parent_[v];
    if (p < 0) return fmt::format("node {} has no parent", v);
    if (position[p] >= position[v]) return fmt::format("parent of {} follows it in the thread", v);
    size[p] += size[v];
  }
  for (int v = 0; v < n; ++v) {
    if (succ_num_[v] != size[v]) return fmt::format("succ_num[{}] = {} but subtree has {}", v, succ_num_[v], size[v]);
    const int last = order[position[v] + size[v] - 1];
    if (last_succ_[v] != last) return fmt::format("last_succ[{}] = {} but expected {}", v, last_succ_[v], last);
  }
  for (int k = 1; k < n; ++k) {
    const int v = order[k];
    const int p = parent_[v];
    if (position[v] > position[p] + size[p] - 1) return fmt::format("node {} outside its parent's segment", v);
  }

  // Tree arcs: orientation, zero reduced cost; non-tree arcs carry no flow.
  int tree_arcs = 0;
  for (int v = 0; v < n; ++v) {
    if (v == root_) continue;
    const int e = pred_[v];
    if (!in_tree_[e]) return fmt::format("pred arc of {} not marked as tree arc", v);
    ++tree_arcs;
    const bool up = source_[e] == v && target_[e] == parent_[v];
    const bool down = target_[e] == v && source_[e] == parent_[v];
    if ((pred_dir_[v] == kUp && !up) || (pred_dir_[v] == kDown && !down)) {
      return fmt::format("pred_dir of {} disagrees with arc {}", v, e);
    }
    if (std::abs(reduced_cost(e)) > tol) return fmt::format("tree arc {} has reduced cost {}", e, reduced_cost(e));
  }
  int marked = 0;
  for (std::size_t e = 0; e < flow_.size(); ++e) {
    if (flow_[e] < 0.0) return fmt::format("arc {} has negative flow", e);
    if (in_tree_[e]) {
      ++marked;
    } else if (flow_[e] != 0.0) {
      return fmt::format("non-tree arc {} carries flow", e);
    }
  }
  if (marked != tree_arcs) return "tree arc count mismatch";

  std::vector<double> balance(static_cast<std::size_t>(n), 0.0);
  for (std::size_t e = 0; e < flow_.size(); ++e) {
    balance[source_[e]] += flow_[e];
    balance[target_[e]] -= flow_[e];
  }
  for (int v = 0; v < n_nodes_; ++v) {
    if (std::abs(balance[v] - supply_[v]) > tol) return fmt::format("conservation fails at node {}", v);
  }
  return {};
}

}  // namespace pdmp
