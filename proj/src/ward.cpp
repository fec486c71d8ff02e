#include "mars/error.hpp"
#include "mars/mixture.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

namespace mars::mixture {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Merge {
  double height;
  int a;  // a < b, both cluster slots at merge time
  int b;
};

// Pairs are totally ordered by (Ward cost, smaller slot, larger slot) so the
// nearest-neighbor chain never sees ties.
struct PairKey {
  double cost;
  int lo;
  int hi;

  bool operator<(const PairKey& other) const {
    return std::tie(cost, lo, hi) < std::tie(other.cost, other.lo, other.hi);
  }
};

class WardChain {
 public:
  explicit WardChain(const Matrix& points)
      : centroids_(points), sizes_(static_cast<std::size_t>(points.rows()), 1),
        alive_(static_cast<std::size_t>(points.rows()), true) {}

  // Increase in within-cluster sum of squares when merging a and b.
  double cost(int a, int b) const {
    const double na = sizes_[static_cast<std::size_t>(a)];
    const double nb = sizes_[static_cast<std::size_t>(b)];
    return na * nb / (na + nb) * (centroids_.row(a) - centroids_.row(b)).squaredNorm();
  }

  PairKey key(int a, int b) const { return {cost(a, b), std::min(a, b), std::max(a, b)}; }

  std::vector<Merge> run() {
    const int n = static_cast<int>(centroids_.rows());
    std::vector<Merge> merges;
    merges.reserve(static_cast<std::size_t>(std::max(0, n - 1)));
    std::vector<int> chain;
    int remaining = n;
    while (remaining > 1) {
      if (chain.empty()) {
        const auto first = std::find(alive_.begin(), alive_.end(), true);
        chain.push_back(static_cast<int>(first - alive_.begin()));
      }
      const int top = chain.back();
      int nearest = -1;
      PairKey best{std::numeric_limits<double>::infinity(), 0, 0};
      for (int other = 0; other < n; ++other) {
        if (other == top || !alive_[static_cast<std::size_t>(other)]) continue;
        const PairKey k = key(top, other);
        if (nearest < 0 || k < best) {
          best = k;
          nearest = other;
        }
      }
      if (chain.size() >= 2 && nearest == chain[chain.size() - 2]) {
        chain.pop_back();
        chain.pop_back();
        merges.push_back({best.cost, best.lo, best.hi});
        merge_into(best.lo, best.hi);
        --remaining;
      } else {
        chain.push_back(nearest);
      }
    }
    return merges;
  }

 private:
  void merge_into(int keep, int drop) {
    const double nk = sizes_[static_cast<std::size_t>(keep)];
    const double nd = sizes_[static_cast<std::size_t>(drop)];
    centroids_.row(keep) = (nk * centroids_.row(keep) + nd * centroids_.row(drop)) / (nk + nd);
    sizes_[static_cast<std::size_t>(keep)] += sizes_[static_cast<std::size_t>(drop)];
    alive_[static_cast<std::size_t>(drop)] = false;
  }

  RowMatrix centroids_;
  std::vector<int> sizes_;
  std::vector<bool> alive_;
};

int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

}  // namespace

ClusterLabels agglomerative_cluster(const Matrix& points, int clusters) {
  const int n = static_cast<int>(points.rows());
  if (clusters < 1 || n < clusters) {
    throw Error(ErrorCode::DegenerateInput, "cannot form " + std::to_string(clusters) +
                                                " clusters from " + std::to_string(n) + " points");
  }
  std::vector<Merge> merges = WardChain(points).run();
  // Ward is reducible, so the chain finds the greedy hierarchy; sorting by
  // height recovers the greedy merge order.
  std::sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) {
    return std::tie(x.height, x.a, x.b) < std::tie(y.height, y.a, y.b);
  });

  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  for (int m = 0; m < n - clusters; ++m) {
    const int ra = find_root(parent, merges[static_cast<std::size_t>(m)].a);
    const int rb = find_root(parent, merges[static_cast<std::size_t>(m)].b);
    parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
  }

  ClusterLabels out;
  out.num_clusters = clusters;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> label_of_root(static_cast<std::size_t>(n), -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int root = find_root(parent, i);
    int& label = label_of_root[static_cast<std::size_t>(root)];
    if (label < 0) label = next++;
    out.labels[static_cast<std::size_t>(i)] = label;
  }
  return out;
}

Vector cluster_proportions(const ClusterLabels& labels, int clusters) {
  if (labels.labels.empty()) {
    throw Error(ErrorCode::EmptyInput, "no labels");
  }
  Vector counts = Vector::Zero(clusters);
  for (int label : labels.labels) {
    if (label < 0 || label >= clusters) {
      throw Error(ErrorCode::DimensionMismatch, "label " + std::to_string(label) +
                                                    " outside 0.." + std::to_string(clusters - 1));
    }
    counts[label] += 1.0;
  }
  return counts / static_cast<double>(labels.labels.size());
}

std::vector<Vector> cluster_means(const Matrix& points, const ClusterLabels& labels,
                                  int clusters) {
  if (static_cast<Eigen::Index>(labels.labels.size()) != points.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "one label per point required");
  }
  std::vector<Vector> sums(static_cast<std::size_t>(clusters), Vector::Zero(points.cols()));
  std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int label = labels.labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= clusters) {
      throw Error(ErrorCode::DimensionMismatch, "label out of range");
    }
    sums[static_cast<std::size_t>(label)] += points.row(i).transpose();
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int k = 0; k < clusters; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(k) + " has no points");
    }
    sums[static_cast<std::size_t>(k)] /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }
  return sums;
}

}  // namespace mars::mixture
