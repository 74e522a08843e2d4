#include "pathlaw/exact_ot.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pathlaw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Network simplex on the complete bipartite transportation graph with an
// artificial root. Tree kept as parent/child arrays; potentials shifted per
// pivot on the re-hung subtree only.
class TransportSimplex {
 public:
  TransportSimplex(const VectorXd& a, const VectorXd& b, const MatrixXd& cost)
      : a_(a), b_(b), C_(cost),
        n1_(static_cast<int>(a.size())), n2_(static_cast<int>(b.size())),
        root_(n1_ + n2_), N_(n1_ + n2_ + 1) {
    parent_.assign(N_, -1);
    dir_.assign(N_, 0);
    flow_.assign(N_, 0.0);
    pcost_.assign(N_, 0.0);
    depth_.assign(N_, 0);
    pi_.assign(N_, 0.0);
    children_.assign(N_, {});

    const double max_c = C_.maxCoeff();
    big_ = max_c + 1.0;
    tol_ = 1e-12 * std::max(1.0, max_c);

    for (int i = 0; i < n1_; ++i) {
      parent_[i] = root_;
      dir_[i] = +1;  // i -> root
      flow_[i] = a_[i];
      pcost_[i] = big_;
      depth_[i] = 1;
      pi_[i] = big_;
      children_[root_].push_back(i);
    }
    for (int j = 0; j < n2_; ++j) {
      const int v = n1_ + j;
      parent_[v] = root_;
      dir_[v] = -1;  // root -> j
      flow_[v] = b_[j];
      pcost_[v] = big_;
      depth_[v] = 1;
      pi_[v] = -big_;
      children_[root_].push_back(v);
    }
  }

  double solve(std::vector<std::array<double, 3>>* plan) {
    const long m = static_cast<long>(n1_) * n2_;
    const long block = std::max<long>(64, static_cast<long>(std::sqrt(static_cast<double>(m))));
    long next_arc = 0;
    const long max_pivots = 1000L * N_ + 1000000L;
    long pivots = 0;

    while (true) {
      // block pricing
      long best = -1;
      double best_r = -tol_;
      long scanned = 0;
      while (scanned < m) {
        const long stop = std::min(m, next_arc + block);
        for (long e = next_arc; e < stop; ++e) {
          const int i = static_cast<int>(e / n2_);
          const int j = static_cast<int>(e % n2_);
          const double r = C_(i, j) - pi_[i] + pi_[n1_ + j];
          if (r < best_r) {
            best_r = r;
            best = e;
          }
        }
        scanned += stop - next_arc;
        next_arc = stop < m ? stop : 0;
        if (best >= 0) break;
      }
      if (best < 0) break;  // optimal

      if (++pivots > max_pivots)
        throw std::runtime_error("network simplex: pivot limit exceeded");

      const int u = static_cast<int>(best / n2_);
      const int v = n1_ + static_cast<int>(best % n2_);
      pivot(u, v, C_(u, static_cast<int>(best % n2_)), best_r);
    }

    // collect value over real arcs (tree arcs between a source and a sink)
    double value = 0.0;
    for (int c = 0; c < N_; ++c) {
      const int p = parent_[c];
      if (p < 0 || p == root_ || c == root_) continue;
      const int src = c < n1_ ? c : p;
      const int snk = c < n1_ ? p : c;
      value += flow_[c] * C_(src, snk - n1_);
      if (plan && flow_[c] > 0.0) plan->push_back({double(src), double(snk - n1_), flow_[c]});
    }
    return value;
  }

 private:
  void pivot(int u, int v, double cost_uv, double r_enter) {
    // lift both endpoints to the common ancestor, tracking the blocking arc
    int x = u, y = v;
    double theta = kInf;
    int leave = -1;     // child id of leaving arc
    bool leave_on_u_side = false;
    {
      int du = depth_[u], dv = depth_[v];
      int cu = u, cv = v;
      while (du > dv) {
        // u-side travel is downward in cycle direction: dir +1 loses flow
        if (dir_[cu] == +1 && flow_[cu] < theta) { theta = flow_[cu]; leave = cu; leave_on_u_side = true; }
        cu = parent_[cu]; --du;
      }
      while (dv > du) {
        if (dir_[cv] == -1 && flow_[cv] < theta) { theta = flow_[cv]; leave = cv; leave_on_u_side = false; }
        cv = parent_[cv]; --dv;
      }
      while (cu != cv) {
        if (dir_[cu] == +1 && flow_[cu] < theta) { theta = flow_[cu]; leave = cu; leave_on_u_side = true; }
        if (dir_[cv] == -1 && flow_[cv] < theta) { theta = flow_[cv]; leave = cv; leave_on_u_side = false; }
        cu = parent_[cu];
        cv = parent_[cv];
      }
      x = cu;  // apex
    }
    if (leave < 0) throw std::runtime_error("network simplex: unbounded pivot");
    if (theta == kInf) theta = 0.0;

    // apply flow change along both legs
    for (int c = u; c != x; c = parent_[c]) flow_[c] += dir_[c] == +1 ? -theta : +theta;
    for (int c = v; c != x; c = parent_[c]) flow_[c] += dir_[c] == -1 ? -theta : +theta;

    // re-hang: subtree of `leave` gets re-rooted at the entering endpoint inside it
    const int w = leave_on_u_side ? u : v;   // endpoint inside detached subtree
    const int z = leave_on_u_side ? v : u;   // endpoint staying attached
    const double shift = leave_on_u_side ? +r_enter : -r_enter;

    // reverse parent chain from w up to leave
    int prev = z;
    int prev_dir;      // direction of arc between prev and cur, from cur's perspective
    double prev_flow, prev_cost;
    // entering arc u->v: from w's perspective: if w==u arc w->z is w->parent (+1); if w==v arc z->w (-1)
    prev_dir = leave_on_u_side ? +1 : -1;
    prev_flow = theta;
    prev_cost = cost_uv;
    int cur = w;
    while (true) {
      const int nxt = parent_[cur];
      const int cur_dir = dir_[cur];
      const double cur_flow = flow_[cur];
      const double cur_cost = pcost_[cur];
      const bool at_end = (cur == leave);

      // detach cur from old parent's child list, attach to new parent
      detach_child(nxt, cur);
      parent_[cur] = prev;
      dir_[cur] = prev_dir;
      flow_[cur] = prev_flow;
      pcost_[cur] = prev_cost;
      children_[prev].push_back(cur);

      if (at_end) break;
      prev = cur;
      // arc between cur and nxt flips perspective: it was cur's parent arc
      prev_dir = -cur_dir;
      prev_flow = cur_flow;
      prev_cost = cur_cost;
      cur = nxt;
    }

    // refresh potentials and depths on the moved subtree
    refresh_subtree(w, shift);
  }

  void detach_child(int parent, int child) {
    auto& list = children_[parent];
    for (std::size_t k = 0; k < list.size(); ++k) {
      if (list[k] == child) {
        list[k] = list.back();
        list.pop_back();
        return;
      }
    }
  }

  void refresh_subtree(int w, double shift) {
    stack_.clear();
    stack_.push_back(w);
    depth_[w] = depth_[parent_[w]] + 1;
    pi_[w] += shift;
    while (!stack_.empty()) {
      const int node = stack_.back();
      stack_.pop_back();
      for (int c : children_[node]) {
        depth_[c] = depth_[node] + 1;
        pi_[c] += shift;
        stack_.push_back(c);
      }
    }
  }

  const VectorXd& a_;
  const VectorXd& b_;
  const MatrixXd& C_;
  int n1_, n2_, root_, N_;
  double big_ = 0.0, tol_ = 0.0;
  std::vector<int> parent_;
  std::vector<signed char> dir_;
  std::vector<double> flow_, pcost_;
  std::vector<int> depth_;
  std::vector<double> pi_;
  std::vector<std::vector<int>> children_;
  std::vector<int> stack_;
};

}  // namespace

double network_simplex_transport(const VectorXd& a, const VectorXd& b, const MatrixXd& cost,
                                 std::vector<std::array<double, 3>>* plan) {
  if (a.size() != cost.rows() || b.size() != cost.cols())
    throw std::invalid_argument("network_simplex_transport: shape mismatch");
  const double sa = a.sum(), sb = b.sum();
  if (!(sa > 0.0) || !(sb > 0.0))
    throw std::invalid_argument("network_simplex_transport: zero mass");
  if (std::abs(sa - sb) > 1e-9 * std::max(sa, sb))
    throw std::invalid_argument("network_simplex_transport: mass mismatch");
  VectorXd bb = b * (sa / sb);
  TransportSimplex simplex(a, bb, cost);
  return simplex.solve(plan);
}

double hungarian_assignment(const MatrixXd& cost, std::vector<int>* assignment) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("hungarian_assignment: square matrix required");

  // Jonker-Volgenant shortest augmenting path with dual potentials.
  std::vector<double> pot_row(n, 0.0), pot_col(n + 1, 0.0);
  std::vector<int> match_col(n + 1, -1);  // column -> row
  std::vector<int> way(n + 1, 0);

  for (int i = 0; i < n; ++i) {
    int j0 = n;  // virtual column
    match_col[j0] = i;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match_col[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - pot_row[i0] - pot_col[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          pot_row[match_col[j]] += delta;
          pot_col[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != -1);
    do {
      const int j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0 != n);
  }

  double value = 0.0;
  if (assignment) assignment->assign(n, -1);
  for (int j = 0; j < n; ++j) {
    if (match_col[j] >= 0) {
      value += cost(match_col[j], j);
      if (assignment) (*assignment)[match_col[j]] = j;
    }
  }
  return value;
}

}  // namespace pathlaw
