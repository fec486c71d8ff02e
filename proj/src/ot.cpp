#include "mars/ot.hpp"

#include "mars/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

namespace mars::ot {

namespace {

void validate_cost(const Matrix& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "cost matrix is empty");
  }
  for (Eigen::Index j = 0; j < cost.cols(); ++j) {
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
      const double c = cost(i, j);
      if (!std::isfinite(c) || c < 0.0) {
        throw Error(ErrorCode::InvalidCost,
                    "cost entries must be finite and nonnegative, got " + std::to_string(c) +
                        " at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

Vector checked_marginal(const Vector& v, const char* name) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || v[i] < 0.0) {
      throw Error(ErrorCode::InvalidMarginal,
                  std::string(name) + " has a negative or non-finite entry at " + std::to_string(i));
    }
    sum += v[i];
  }
  if (std::abs(sum - 1.0) > kMarginalTolerance) {
    throw Error(ErrorCode::InvalidMarginal,
                std::string(name) + " sums to " + std::to_string(sum) + ", expected 1");
  }
  return v / sum;
}

// Transportation simplex on strictly positive supplies and demands.
class TransportationSimplex {
 public:
  TransportationSimplex(const Matrix& cost, const Vector& supply, const Vector& demand)
      : cost_(cost),
        n_(static_cast<int>(cost.rows())),
        m_(static_cast<int>(cost.cols())),
        flow_(Matrix::Zero(cost.rows(), cost.cols())),
        in_basis_(static_cast<std::size_t>(n_ * m_), false) {
    pricing_tolerance_ = 1e-12 * (1.0 + cost.cwiseAbs().maxCoeff());
    northwest_corner(supply, demand);
  }

  Matrix solve() {
    std::vector<double> u(static_cast<std::size_t>(n_));
    std::vector<double> v(static_cast<std::size_t>(m_));
    int degenerate_run = 0;
    bool bland = false;
    const long max_pivots = 1000L * (n_ + m_) * (n_ + m_) + 10000L;
    for (long pivot = 0; pivot < max_pivots; ++pivot) {
      build_tree();
      compute_potentials(u, v);
      const int entering = select_entering(u, v, bland);
      if (entering < 0) return flow_;
      const double theta = pivot_on(entering);
      if (theta == 0.0) {
        // Dantzig pricing can cycle on degenerate bases; Bland's rule cannot.
        if (++degenerate_run > 2 * (n_ + m_)) bland = true;
      } else {
        degenerate_run = 0;
      }
    }
    throw Error(ErrorCode::DegenerateInput, "transportation simplex exceeded its pivot budget");
  }

 private:
  int cell(int i, int j) const { return i * m_ + j; }

  void northwest_corner(Vector supply, Vector demand) {
    int i = 0;
    int j = 0;
    while (true) {
      const double x = std::min(supply[i], demand[j]);
      flow_(i, j) = x;
      add_basic(cell(i, j));
      if (supply[i] <= demand[j]) {
        demand[j] -= x;
        supply[i] = 0.0;
      } else {
        supply[i] -= x;
        demand[j] = 0.0;
      }
      if (i == n_ - 1 && j == m_ - 1) break;
      if (i == n_ - 1) {
        ++j;
      } else if (j == m_ - 1) {
        ++i;
      } else if (supply[i] == 0.0) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  void add_basic(int c) {
    basis_.push_back(c);
    in_basis_[static_cast<std::size_t>(c)] = true;
  }

  // Node ids: rows 0..n-1, columns n..n+m-1. Edges carry the basic cell id.
  void build_tree() {
    adjacency_.assign(static_cast<std::size_t>(n_ + m_), {});
    for (int c : basis_) {
      const int i = c / m_;
      const int j = c % m_;
      adjacency_[static_cast<std::size_t>(i)].push_back({n_ + j, c});
      adjacency_[static_cast<std::size_t>(n_ + j)].push_back({i, c});
    }
  }

  void compute_potentials(std::vector<double>& u, std::vector<double>& v) const {
    std::vector<bool> seen(static_cast<std::size_t>(n_ + m_), false);
    std::vector<int> stack{0};
    seen[0] = true;
    u[0] = 0.0;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (const auto& [next, c] : adjacency_[static_cast<std::size_t>(node)]) {
        if (seen[static_cast<std::size_t>(next)]) continue;
        seen[static_cast<std::size_t>(next)] = true;
        const double cij = cost_(c / m_, c % m_);
        if (next >= n_) {
          v[static_cast<std::size_t>(next - n_)] = cij - u[static_cast<std::size_t>(node)];
        } else {
          u[static_cast<std::size_t>(next)] = cij - v[static_cast<std::size_t>(node - n_)];
        }
        stack.push_back(next);
      }
    }
  }

  int select_entering(const std::vector<double>& u, const std::vector<double>& v,
                      bool bland) const {
    int best = -1;
    double best_reduced = -pricing_tolerance_;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < m_; ++j) {
        const int c = cell(i, j);
        if (in_basis_[static_cast<std::size_t>(c)]) continue;
        const double reduced =
            cost_(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
        if (reduced < best_reduced) {
          if (bland) return c;
          best_reduced = reduced;
          best = c;
        }
      }
    }
    return best;
  }

  // Returns the flow change along the cycle closed by `entering`.
  double pivot_on(int entering) {
    const int row = entering / m_;
    const int col_node = n_ + entering % m_;

    // Tree path from the entering column back to the entering row.
    std::vector<int> parent(static_cast<std::size_t>(n_ + m_), -1);
    std::vector<int> parent_cell(static_cast<std::size_t>(n_ + m_), -1);
    std::queue<int> frontier;
    frontier.push(col_node);
    parent[static_cast<std::size_t>(col_node)] = col_node;
    while (!frontier.empty()) {
      const int node = frontier.front();
      frontier.pop();
      if (node == row) break;
      for (const auto& [next, c] : adjacency_[static_cast<std::size_t>(node)]) {
        if (parent[static_cast<std::size_t>(next)] != -1) continue;
        parent[static_cast<std::size_t>(next)] = node;
        parent_cell[static_cast<std::size_t>(next)] = c;
        frontier.push(next);
      }
    }

    // Walking from the row back to the column visits cells in reverse order:
    // the cell adjacent to the entering row carries sign -, then alternating.
    std::vector<int> path;
    for (int node = row; node != col_node; node = parent[static_cast<std::size_t>(node)]) {
      path.push_back(parent_cell[static_cast<std::size_t>(node)]);
    }
    std::reverse(path.begin(), path.end());
    // path[0] touches the entering column (sign -), path[1] sign +, ...

    double theta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const int c = path[k];
      const double x = flow_(c / m_, c % m_);
      if (x < theta || (x == theta && c < leaving)) {
        theta = x;
        leaving = c;
      }
    }

    flow_(row, entering % m_) += theta;
    for (std::size_t k = 0; k < path.size(); ++k) {
      const int c = path[k];
      if (k % 2 == 0) {
        flow_(c / m_, c % m_) -= theta;
      } else {
        flow_(c / m_, c % m_) += theta;
      }
    }
    flow_(leaving / m_, leaving % m_) = 0.0;

    in_basis_[static_cast<std::size_t>(leaving)] = false;
    in_basis_[static_cast<std::size_t>(entering)] = true;
    *std::find(basis_.begin(), basis_.end(), leaving) = entering;
    return theta;
  }

  struct Edge {
    int node;
    int cell;
  };

  const Matrix& cost_;
  int n_;
  int m_;
  Matrix flow_;
  std::vector<bool> in_basis_;
  std::vector<int> basis_;
  std::vector<std::vector<Edge>> adjacency_;
  double pricing_tolerance_ = 0.0;
};

struct HungarianResult {
  std::vector<int> assignment;  // row -> column
  double cost = 0.0;
};

// O(n^3) shortest augmenting path Hungarian method on a square matrix.
HungarianResult hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<std::size_t>(n + 1), 0);  // column -> row, 1-based
  std::vector<int> way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> min_slack(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double slack = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                             v[static_cast<std::size_t>(j)];
        if (slack < min_slack[static_cast<std::size_t>(j)]) {
          min_slack[static_cast<std::size_t>(j)] = slack;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (min_slack[static_cast<std::size_t>(j)] < delta) {
          delta = min_slack[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          min_slack[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult result;
  result.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    result.assignment[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  for (int i = 0; i < n; ++i) {
    result.cost += cost(i, result.assignment[static_cast<std::size_t>(i)]);
  }
  return result;
}

double tie_tolerance(double value) { return 1e-10 * (1.0 + std::abs(value)); }

void require_square(const Matrix& cost) {
  if (cost.rows() != cost.cols()) {
    throw Error(ErrorCode::NonSquare, "expected a square cost matrix, got " +
                                          std::to_string(cost.rows()) + "x" +
                                          std::to_string(cost.cols()));
  }
}

void require_enumerable(const Matrix& cost) {
  require_square(cost);
  if (cost.rows() > kMaxEnumerationSize) {
    throw Error(ErrorCode::TooLarge, "enumeration limited to " +
                                         std::to_string(kMaxEnumerationSize) + " classes, got " +
                                         std::to_string(cost.rows()));
  }
}

// Lexicographic order on (shape, points, weights); used to make W1 symmetric
// bit for bit by always solving in the same orientation.
bool measure_less(const Matrix& x, const Vector& wx, const Matrix& y, const Vector& wy) {
  if (x.rows() != y.rows()) return x.rows() < y.rows();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (x(i, k) != y(i, k)) return x(i, k) < y(i, k);
    }
  }
  for (Eigen::Index i = 0; i < wx.size(); ++i) {
    if (wx[i] != wy[i]) return wx[i] < wy[i];
  }
  return false;
}

}  // namespace

Permutation::Permutation(std::vector<int> mapping) : mapping_(std::move(mapping)) {
  std::vector<bool> seen(mapping_.size(), false);
  for (int target : mapping_) {
    if (target < 0 || target >= size() || seen[static_cast<std::size_t>(target)]) {
      throw Error(ErrorCode::InvalidConfig, "mapping is not a bijection");
    }
    seen[static_cast<std::size_t>(target)] = true;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> mapping(static_cast<std::size_t>(n));
  std::iota(mapping.begin(), mapping.end(), 0);
  return Permutation(std::move(mapping));
}

bool Permutation::is_identity() const {
  for (int i = 0; i < size(); ++i) {
    if ((*this)[i] != i) return false;
  }
  return true;
}

TransportPlan solve_discrete_ot(const Matrix& cost, const Vector& a, const Vector& b) {
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                    " but marginals have sizes " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  validate_cost(cost);
  TransportPlan plan;
  plan.row_marginal = checked_marginal(a, "row marginal");
  plan.col_marginal = checked_marginal(b, "column marginal");

  // Zero-mass atoms carry no flow; solve on the support only.
  std::vector<int> rows;
  std::vector<int> cols;
  for (int i = 0; i < a.size(); ++i) {
    if (plan.row_marginal[i] > 0.0) rows.push_back(i);
  }
  for (int j = 0; j < b.size(); ++j) {
    if (plan.col_marginal[j] > 0.0) cols.push_back(j);
  }
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  Matrix reduced_cost(nr, nc);
  Vector supply(nr);
  Vector demand(nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    supply[r] = plan.row_marginal[rows[static_cast<std::size_t>(r)]];
    for (Eigen::Index c = 0; c < nc; ++c) {
      reduced_cost(r, c) = cost(rows[static_cast<std::size_t>(r)], cols[static_cast<std::size_t>(c)]);
    }
  }
  for (Eigen::Index c = 0; c < nc; ++c) demand[c] = plan.col_marginal[cols[static_cast<std::size_t>(c)]];

  const Matrix flow = TransportationSimplex(reduced_cost, supply, demand).solve();
  plan.coupling = Matrix::Zero(cost.rows(), cost.cols());
  for (Eigen::Index r = 0; r < nr; ++r) {
    for (Eigen::Index c = 0; c < nc; ++c) {
      plan.coupling(rows[static_cast<std::size_t>(r)], cols[static_cast<std::size_t>(c)]) = flow(r, c);
    }
  }
  plan.cost = (cost.array() * plan.coupling.array()).sum();
  return plan;
}

Permutation optimal_assignment(const Matrix& cost) {
  require_square(cost);
  validate_cost(cost);
  const int n = static_cast<int>(cost.rows());
  const double best = hungarian(cost).cost;
  const double tol = tie_tolerance(best);

  // Greedy lexicographic refinement: fix each row to the smallest column that
  // still admits an optimal completion.
  std::vector<int> mapping(static_cast<std::size_t>(n), -1);
  std::vector<int> free_cols(static_cast<std::size_t>(n));
  std::iota(free_cols.begin(), free_cols.end(), 0);
  double partial = 0.0;
  for (int row = 0; row < n; ++row) {
    const int rest = n - row - 1;
    int chosen = -1;
    double chosen_total = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < free_cols.size(); ++k) {
      const int col = free_cols[k];
      double completion = 0.0;
      if (rest > 0) {
        Matrix sub(rest, rest);
        for (int r = 0; r < rest; ++r) {
          int cc = 0;
          for (int other : free_cols) {
            if (other == col) continue;
            sub(r, cc++) = cost(row + 1 + r, other);
          }
        }
        completion = hungarian(sub).cost;
      }
      const double total = partial + cost(row, col) + completion;
      if (total <= best + tol) {
        chosen = col;
        break;
      }
      if (total < chosen_total) {
        chosen_total = total;
        chosen = col;
      }
    }
    mapping[static_cast<std::size_t>(row)] = chosen;
    partial += cost(row, chosen);
    free_cols.erase(std::find(free_cols.begin(), free_cols.end(), chosen));
  }
  return Permutation(std::move(mapping));
}

Assignment brute_force_assignment(const Matrix& cost) {
  require_enumerable(cost);
  validate_cost(cost);
  const int n = static_cast<int>(cost.rows());
  std::vector<int> sigma(static_cast<std::size_t>(n));
  std::iota(sigma.begin(), sigma.end(), 0);
  std::vector<int> best_sigma = sigma;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, sigma[static_cast<std::size_t>(i)]);
    // Enumeration is in lexicographic order, so keeping the first strict
    // minimum yields the lexicographically smallest optimum.
    if (total < best_cost - tie_tolerance(total)) {
      best_cost = total;
      best_sigma = sigma;
    }
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return {Permutation(std::move(best_sigma)), best_cost};
}

bool check_cyclical_monotonicity(const Matrix& cost) {
  require_enumerable(cost);
  const int n = static_cast<int>(cost.rows());
  const double diagonal = cost.diagonal().sum();
  std::vector<int> sigma(static_cast<std::size_t>(n));
  std::iota(sigma.begin(), sigma.end(), 0);
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, sigma[static_cast<std::size_t>(i)]);
    if (total < diagonal - tie_tolerance(diagonal)) return false;
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return true;
}

double assignment_cost(const Matrix& cost, const Permutation& sigma) {
  require_square(cost);
  if (sigma.size() != cost.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "permutation size does not match cost matrix");
  }
  double total = 0.0;
  for (int i = 0; i < sigma.size(); ++i) total += cost(i, sigma[i]);
  return total;
}

Permutation permutation_from_plan(const TransportPlan& plan) {
  const Matrix& p = plan.coupling;
  if (p.rows() != p.cols()) {
    throw Error(ErrorCode::NonSquare, "plan is not square");
  }
  std::vector<int> mapping(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    p.row(i).maxCoeff(&best);
    mapping[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return Permutation(std::move(mapping));
}

Matrix squared_euclidean_cost(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "point dimensions differ");
  }
  Matrix cost(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
    }
  }
  return cost;
}

Matrix euclidean_cost(const Matrix& x, const Matrix& y) {
  return squared_euclidean_cost(x, y).cwiseSqrt();
}

double wasserstein1_empirical(const Matrix& x, const Vector& x_weights, const Matrix& y,
                              const Vector& y_weights) {
  if (x.rows() != x_weights.size() || y.rows() != y_weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "weights must have one entry per point");
  }
  if (x.cols() != y.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "point dimensions differ");
  }
  if (measure_less(y, y_weights, x, x_weights)) {
    return solve_discrete_ot(euclidean_cost(y, x), y_weights, x_weights).cost;
  }
  return solve_discrete_ot(euclidean_cost(x, y), x_weights, y_weights).cost;
}

}  // namespace mars::ot
