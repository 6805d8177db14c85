#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "ipfp/error.hpp"
#include "ipfp/matrix.hpp"

namespace ipfp {

// Primal transportation simplex (the MODI / u-v method) on the complete
// bipartite graph supplies x demands. The basis is a spanning tree of
// rows + cols - 1 cells, started from the north-west corner rule. Each pivot
// recomputes the duals along the tree, prices every cell, and pushes flow
// around the unique cycle closed by the entering cell.
//
// With an integral Flow type every pivot is exact. With double, the final
// basis is verified against complementary slackness before returning.

struct SimplexOptions {
  // Reduced costs above -tolerance * max(1, max|cost|) count as nonnegative.
  double reduced_cost_tolerance = 1e-12;
  // Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t degenerate_limit = 0;  // 0 = rows + cols
  std::size_t max_pivots = 0;        // 0 = 50 * (rows * cols) + 1000
};

template <class Flow>
struct TransportCell {
  std::size_t row;
  std::size_t col;
  Flow flow;
};

template <class Flow>
struct TransportSolution {
  std::vector<TransportCell<Flow>> basis;  // optimal basic cells, zero flows included
  double total_cost = 0.0;
  std::size_t pivots = 0;
  std::vector<double> row_potential;
  std::vector<double> col_potential;
};

namespace detail {

template <class Flow>
class TransportSimplex {
 public:
  TransportSimplex(std::span<const Flow> supply, std::span<const Flow> demand,
                   const Matrix<double>& cost, const SimplexOptions& options)
      : m_(supply.size()), n_(demand.size()), cost_(cost), options_(options) {
    if (m_ == 0 || n_ == 0) throw Error("transport problem needs nonempty supply and demand");
    if (cost.rows() != m_ || cost.cols() != n_) throw Error("transport cost has the wrong shape");
    for (Flow s : supply)
      if (s < Flow{0}) throw Error("supplies must be nonnegative");
    for (Flow d : demand)
      if (d < Flow{0}) throw Error("demands must be nonnegative");
    if constexpr (std::is_integral_v<Flow>) {
      const Flow ts = std::accumulate(supply.begin(), supply.end(), Flow{0});
      const Flow td = std::accumulate(demand.begin(), demand.end(), Flow{0});
      if (ts != td) throw Error("integer transport problem is unbalanced");
    }
    double max_cost = 1.0;
    for (double c : cost.data()) {
      if (!std::isfinite(c)) throw Error("transport costs must be finite");
      max_cost = std::max(max_cost, std::abs(c));
    }
    tolerance_ = options_.reduced_cost_tolerance * max_cost;
    if (options_.degenerate_limit == 0) options_.degenerate_limit = m_ + n_;
    if (options_.max_pivots == 0) options_.max_pivots = 50 * m_ * n_ + 1000;
    north_west_corner(supply, demand);
  }

  TransportSolution<Flow> solve() {
    std::size_t pivots = 0;
    std::size_t degenerate_streak = 0;
    bool bland = false;
    for (;;) {
      compute_potentials();
      std::size_t enter_row = 0, enter_col = 0;
      if (!find_entering(bland, enter_row, enter_col)) break;
      if (++pivots > options_.max_pivots)
        throw Error("transport simplex exceeded its pivot budget");
      const bool degenerate = pivot(enter_row, enter_col, bland);
      degenerate_streak = degenerate ? degenerate_streak + 1 : 0;
      if (degenerate_streak > options_.degenerate_limit) bland = true;
    }
    TransportSolution<Flow> out;
    out.basis = basis_;
    out.pivots = pivots;
    out.row_potential.assign(pot_.begin(), pot_.begin() + static_cast<std::ptrdiff_t>(m_));
    out.col_potential.assign(pot_.begin() + static_cast<std::ptrdiff_t>(m_), pot_.end());
    for (const auto& cell : basis_)
      out.total_cost += static_cast<double>(cell.flow) * cost_(cell.row, cell.col);
    return out;
  }

 private:
  // Nodes 0..m-1 are rows, m..m+n-1 are columns.
  std::size_t col_node(std::size_t j) const { return m_ + j; }

  void add_cell(std::size_t i, std::size_t j, Flow flow) {
    const std::size_t id = basis_.size();
    basis_.push_back({i, j, flow});
    adjacency_[i].push_back(id);
    adjacency_[col_node(j)].push_back(id);
  }

  void north_west_corner(std::span<const Flow> supply, std::span<const Flow> demand) {
    adjacency_.assign(m_ + n_, {});
    basis_.reserve(m_ + n_ - 1);
    std::vector<Flow> s(supply.begin(), supply.end());
    std::vector<Flow> d(demand.begin(), demand.end());
    std::size_t i = 0, j = 0;
    for (;;) {
      const Flow f = std::min(s[i], d[j]);
      add_cell(i, j, f);
      s[i] -= f;
      d[j] -= f;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (j == n_ - 1 || (i < m_ - 1 && s[i] <= d[j])) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  void compute_potentials() {
    pot_.assign(m_ + n_, 0.0);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t id : adjacency_[node]) {
        const auto& cell = basis_[id];
        const std::size_t other = node < m_ ? col_node(cell.col) : cell.row;
        if (seen[other]) continue;
        seen[other] = 1;
        // u_i + v_j = c_ij on basic cells.
        pot_[other] = cost_(cell.row, cell.col) - pot_[node];
        stack.push_back(other);
      }
    }
  }

  bool find_entering(bool bland, std::size_t& row, std::size_t& col) const {
    double best = -tolerance_;
    bool found = false;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        const double reduced = cost_(i, j) - pot_[i] - pot_[col_node(j)];
        if (reduced < best) {
          row = i;
          col = j;
          found = true;
          if (bland) return true;
          best = reduced;
        }
      }
    return found;
  }

  // Returns true for a degenerate (zero step) pivot.
  bool pivot(std::size_t enter_row, std::size_t enter_col, bool bland) {
    // Tree path from the entering column back to the entering row.
    const std::size_t root = col_node(enter_col);
    std::vector<std::size_t> parent_cell(m_ + n_, kNone);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{root};
    seen[root] = 1;
    while (!stack.empty() && !seen[enter_row]) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t id : adjacency_[node]) {
        const auto& cell = basis_[id];
        const std::size_t other = node < m_ ? col_node(cell.col) : cell.row;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_cell[other] = id;
        stack.push_back(other);
      }
    }
    // path[0] touches the entering row and loses flow; signs alternate from there.
    std::vector<std::size_t> path;
    for (std::size_t node = enter_row; node != root;) {
      const std::size_t id = parent_cell[node];
      path.push_back(id);
      const auto& cell = basis_[id];
      node = node < m_ ? col_node(cell.col) : cell.row;
    }
    std::size_t leave = kNone;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const auto& cell = basis_[path[k]];
      if (leave == kNone || cell.flow < basis_[leave].flow ||
          (bland && cell.flow == basis_[leave].flow && key(cell) < key(basis_[leave])))
        leave = path[k];
    }
    const Flow theta = basis_[leave].flow;
    for (std::size_t k = 0; k < path.size(); ++k) {
      auto& cell = basis_[path[k]];
      if (k % 2 == 0) {
        cell.flow -= theta;
      } else {
        cell.flow += theta;
      }
    }
    replace_cell(leave, enter_row, enter_col, theta);
    return theta == Flow{0};
  }

  void replace_cell(std::size_t id, std::size_t row, std::size_t col, Flow flow) {
    auto unlink = [&](std::size_t node) {
      auto& adj = adjacency_[node];
      adj.erase(std::find(adj.begin(), adj.end(), id));
    };
    unlink(basis_[id].row);
    unlink(col_node(basis_[id].col));
    basis_[id] = {row, col, flow};
    adjacency_[row].push_back(id);
    adjacency_[col_node(col)].push_back(id);
  }

  std::size_t key(const TransportCell<Flow>& cell) const { return cell.row * n_ + cell.col; }

  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::size_t m_;
  std::size_t n_;
  const Matrix<double>& cost_;
  SimplexOptions options_;
  double tolerance_ = 0.0;
  std::vector<TransportCell<Flow>> basis_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<double> pot_;
};

}  // namespace detail

/// Minimum of sum flow * cost over flows with the given row and column sums.
template <class Flow>
TransportSolution<Flow> solve_transport(std::span<const Flow> supply, std::span<const Flow> demand,
                                        const Matrix<double>& cost,
                                        const SimplexOptions& options = {}) {
  return detail::TransportSimplex<Flow>(supply, demand, cost, options).solve();
}

/// Checks primal feasibility and complementary slackness of a solution. Returns an
/// empty string when the certificate holds, otherwise a description of the failure.
template <class Flow>
std::string verify_transport(const TransportSolution<Flow>& solution, std::span<const Flow> supply,
                             std::span<const Flow> demand, const Matrix<double>& cost,
                             double mass_tolerance, double reduced_cost_tolerance = 1e-9) {
  std::vector<double> rows(supply.size(), 0.0), cols(demand.size(), 0.0);
  for (const auto& cell : solution.basis) {
    if (cell.flow < Flow{0}) return "negative flow";
    rows[cell.row] += static_cast<double>(cell.flow);
    cols[cell.col] += static_cast<double>(cell.flow);
  }
  for (std::size_t i = 0; i < supply.size(); ++i)
    if (std::abs(rows[i] - static_cast<double>(supply[i])) > mass_tolerance)
      return "row " + std::to_string(i) + " sum mismatch";
  for (std::size_t j = 0; j < demand.size(); ++j)
    if (std::abs(cols[j] - static_cast<double>(demand[j])) > mass_tolerance)
      return "column " + std::to_string(j) + " sum mismatch";
  double scale = 1.0;
  for (double c : cost.data()) scale = std::max(scale, std::abs(c));
  const auto& u = solution.row_potential;
  const auto& v = solution.col_potential;
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j)
      if (cost(i, j) - u[i] - v[j] < -reduced_cost_tolerance * scale)
        return "negative reduced cost at (" + std::to_string(i) + ", " + std::to_string(j) + ")";
  for (const auto& cell : solution.basis)
    if (std::abs(cost(cell.row, cell.col) - u[cell.row] - v[cell.col]) >
        reduced_cost_tolerance * scale)
      return "basic cell with nonzero reduced cost";
  return {};
}

}  // namespace ipfp
