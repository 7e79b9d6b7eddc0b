#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace gmls {

inline constexpr int kMaxDim = 2;
using Coord = std::array<double, kMaxDim>;

/// Scattered sample sites in 1 or 2 dimensions, optionally periodic per axis.
class PointCloud {
 public:
  PointCloud() = default;
  /// `coords` holds size*dim values, point-major. `period`, when set, gives the
  /// box length along every axis; coordinates must lie in [0, period).
  PointCloud(int dim, std::vector<double> coords, std::optional<Coord> period = std::nullopt);

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool periodic() const noexcept { return period_.has_value(); }
  const std::optional<Coord>& period() const noexcept { return period_; }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }
  double coord(std::size_t i, int axis) const { return coords_[i * dim_ + axis]; }
  const std::vector<double>& coords() const noexcept { return coords_; }

  /// Minimum-image displacement `to - from`.
  Coord displacement(std::span<const double> from, std::span<const double> to) const;
  double distance(std::span<const double> a, std::span<const double> b) const;

  /// Rigid shift (wrapped back into the box when periodic).
  PointCloud translated(const Coord& offset) const;
  /// Reordered copy: result.point(k) == point(order[k]).
  PointCloud permuted(std::span<const std::size_t> order) const;
  /// Random subset of `count` points (sorted by original index), for strided layers.
  PointCloud subsample(std::size_t count, std::uint64_t seed) const;
  /// Copy of this cloud with point i replaced.
  PointCloud with_point(std::size_t i, std::span<const double> x) const;

  bool same_geometry(const PointCloud& other) const;

 private:
  int dim_ = 0;
  std::vector<double> coords_;
  std::optional<Coord> period_;
};

/// `n` cell-centered points per axis on [0, length)^dim.
PointCloud uniform_grid(int dim, std::size_t n_per_axis, double length, bool periodic);
/// Cell-centered grid with each coordinate jittered by up to `jitter` cell widths.
PointCloud jittered_grid(int dim, std::size_t n_per_axis, double length, double jitter,
                         std::uint64_t seed, bool periodic);
/// `n` iid uniform points in [0, length)^dim.
PointCloud random_cloud(int dim, std::size_t n, double length, std::uint64_t seed,
                        bool periodic);

struct Neighbor {
  std::uint32_t index;
  double distance;
};

/// Fixed-radius adjacency from a target cloud into a source cloud.
class NeighborList {
 public:
  NeighborList() = default;
  NeighborList(double epsilon, std::vector<std::vector<Neighbor>> lists)
      : epsilon_(epsilon), lists_(std::move(lists)) {}

  double epsilon() const noexcept { return epsilon_; }
  std::size_t target_count() const noexcept { return lists_.size(); }
  const std::vector<Neighbor>& operator[](std::size_t i) const { return lists_[i]; }
  std::size_t total_pairs() const;
  std::size_t max_neighbors() const;

  friend bool operator==(const NeighborList& a, const NeighborList& b);

 private:
  double epsilon_ = 0.0;
  std::vector<std::vector<Neighbor>> lists_;
};

enum class NeighborSearch { brute_force, grid };

/// For each target point, the source points at distance < epsilon sorted by
/// source index. Throws EmptyNeighborhoodError for an isolated target.
NeighborList build_neighbors(const PointCloud& source, const PointCloud& target, double epsilon,
                             NeighborSearch method = NeighborSearch::grid);

/// W(r) = (1 - r/epsilon)^power for r < epsilon, 0 otherwise.
struct WeightKernel {
  double epsilon = 1.0;
  int power = 4;

  double operator()(double r) const;
  /// dW/dr; the one-sided derivative at r = 0.
  double derivative(double r) const;
};

double weight(double r, const WeightKernel& kernel);

PointCloud read_cloud_csv(const std::filesystem::path& path,
                          std::optional<Coord> period = std::nullopt);
void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace gmls
