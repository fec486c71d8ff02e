#pragma once

// Exact discrete optimal transport and optimal assignment.
//
// solve_discrete_ot runs a transportation simplex (spanning-tree basis, MODI
// potentials) on the dense n x m problem
//
//   min <C, P>  s.t.  P 1 = a,  P^T 1 = b,  P >= 0.
//
// optimal_assignment is the square uniform-marginal specialization, solved
// with a Hungarian method and refined to the lexicographically smallest
// optimal permutation.

#include "mars/types.hpp"

#include <vector>

namespace mars::ot {

// Marginal sums must be within this of 1; smaller deviations are renormalized.
inline constexpr double kMarginalTolerance = 1e-9;

// Largest size accepted by the enumeration routines (8! = 40320).
inline constexpr int kMaxEnumerationSize = 8;

struct TransportPlan {
  Matrix coupling;
  Vector row_marginal;
  Vector col_marginal;
  double cost = 0.0;  // <C, P>
};

class Permutation {
 public:
  Permutation() = default;
  // Throws InvalidConfig when mapping is not a bijection on {0..n-1}.
  explicit Permutation(std::vector<int> mapping);

  static Permutation identity(int n);

  int size() const { return static_cast<int>(mapping_.size()); }
  int operator[](int i) const { return mapping_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& mapping() const { return mapping_; }
  bool is_identity() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> mapping_;
};

struct Assignment {
  Permutation permutation;
  double cost = 0.0;  // sum_i cost(i, sigma(i))
};

TransportPlan solve_discrete_ot(const Matrix& cost, const Vector& a, const Vector& b);

Permutation optimal_assignment(const Matrix& cost);

Assignment brute_force_assignment(const Matrix& cost);

// True iff the identity pairing has minimal total cost over all permutations.
bool check_cyclical_monotonicity(const Matrix& cost);

double assignment_cost(const Matrix& cost, const Permutation& sigma);

// Reads the permutation off a plan whose support is a scaled permutation matrix
// (row i -> column with the largest mass).
Permutation permutation_from_plan(const TransportPlan& plan);

// Exact W1 between weighted point clouds, rows are points. Symmetric in its
// arguments bit for bit.
double wasserstein1_empirical(const Matrix& x, const Vector& x_weights,
                              const Matrix& y, const Vector& y_weights);

Matrix squared_euclidean_cost(const Matrix& x, const Matrix& y);
Matrix euclidean_cost(const Matrix& x, const Matrix& y);

}  // namespace mars::ot
