#include "gmlsnet/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gmlsnet/error.hpp"
#include "gmlsnet/parallel.hpp"

namespace gmls {

PointCloud::PointCloud(int dim, std::vector<double> coords, std::optional<Coord> period)
    : dim_(dim), coords_(std::move(coords)), period_(period) {
  if (dim_ < 1 || dim_ > kMaxDim) throw Error("point cloud dimension must be 1 or 2");
  if (coords_.size() % dim_ != 0) throw Error("coordinate count is not a multiple of dim");
  if (period_) {
    for (int a = 0; a < dim_; ++a)
      if (!((*period_)[a] > 0.0)) throw Error("periodic box lengths must be positive");
    // unused axes carry no period so that equal boxes compare equal
    for (int a = dim_; a < kMaxDim; ++a) (*period_)[a] = 0.0;
  }
  for (std::size_t k = 0; k < coords_.size(); ++k) {
    const double c = coords_[k];
    if (!std::isfinite(c)) throw Error("point coordinates must be finite");
    if (period_) {
      const double len = (*period_)[k % dim_];
      if (c < 0.0 || c >= len)
        throw Error("periodic coordinate " + std::to_string(c) + " outside [0, " +
                    std::to_string(len) + ")");
    }
  }
}

Coord PointCloud::displacement(std::span<const double> from, std::span<const double> to) const {
  Coord d{0.0, 0.0};
  for (int a = 0; a < dim_; ++a) {
    double v = to[a] - from[a];
    if (period_) {
      const double len = (*period_)[a];
      v -= len * std::round(v / len);
    }
    d[a] = v;
  }
  return d;
}

double PointCloud::distance(std::span<const double> a, std::span<const double> b) const {
  const Coord d = displacement(a, b);
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) s += d[k] * d[k];
  return std::sqrt(s);
}

PointCloud PointCloud::translated(const Coord& offset) const {
  std::vector<double> c = coords_;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const int a = static_cast<int>(k % dim_);
    c[k] += offset[a];
    if (period_) {
      const double len = (*period_)[a];
      c[k] -= len * std::floor(c[k] / len);
      if (c[k] >= len) c[k] -= len;
    }
  }
  return PointCloud(dim_, std::move(c), period_);
}

PointCloud PointCloud::permuted(std::span<const std::size_t> order) const {
  std::vector<double> c;
  c.reserve(order.size() * dim_);
  for (std::size_t i : order)
    for (int a = 0; a < dim_; ++a) c.push_back(coord(i, a));
  return PointCloud(dim_, std::move(c), period_);
}

PointCloud PointCloud::subsample(std::size_t count, std::uint64_t seed) const {
  if (count > size()) throw Error("subsample larger than cloud");
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return permuted(idx);
}

PointCloud PointCloud::with_point(std::size_t i, std::span<const double> x) const {
  std::vector<double> c = coords_;
  for (int a = 0; a < dim_; ++a) c[i * dim_ + a] = x[a];
  return PointCloud(dim_, std::move(c), period_);
}

bool PointCloud::same_geometry(const PointCloud& other) const {
  return dim_ == other.dim_ && coords_ == other.coords_ && period_ == other.period_;
}

namespace {

std::vector<double> grid_coords(int dim, std::size_t n, double length) {
  const double h = length / static_cast<double>(n);
  std::vector<double> c;
  if (dim == 1) {
    for (std::size_t i = 0; i < n; ++i) c.push_back((i + 0.5) * h);
  } else {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        c.push_back((i + 0.5) * h);
        c.push_back((j + 0.5) * h);
      }
  }
  return c;
}

std::optional<Coord> box(bool periodic, double length) {
  if (!periodic) return std::nullopt;
  return Coord{length, length};
}

}  // namespace

PointCloud uniform_grid(int dim, std::size_t n_per_axis, double length, bool periodic) {
  return PointCloud(dim, grid_coords(dim, n_per_axis, length), box(periodic, length));
}

PointCloud jittered_grid(int dim, std::size_t n_per_axis, double length, double jitter,
                         std::uint64_t seed, bool periodic) {
  std::vector<double> c = grid_coords(dim, n_per_axis, length);
  const double h = length / static_cast<double>(n_per_axis);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-jitter, jitter);
  for (double& v : c) {
    v += u(rng) * h;
    v = std::clamp(v, 0.0, std::nextafter(length, 0.0));
  }
  return PointCloud(dim, std::move(c), box(periodic, length));
}

PointCloud random_cloud(int dim, std::size_t n, double length, std::uint64_t seed,
                        bool periodic) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, length);
  std::vector<double> c(n * dim);
  for (double& v : c) v = u(rng);
  return PointCloud(dim, std::move(c), box(periodic, length));
}

std::size_t NeighborList::total_pairs() const {
  std::size_t s = 0;
  for (const auto& l : lists_) s += l.size();
  return s;
}

std::size_t NeighborList::max_neighbors() const {
  std::size_t m = 0;
  for (const auto& l : lists_) m = std::max(m, l.size());
  return m;
}

bool operator==(const NeighborList& a, const NeighborList& b) {
  if (a.lists_.size() != b.lists_.size()) return false;
  for (std::size_t i = 0; i < a.lists_.size(); ++i) {
    const auto& x = a.lists_[i];
    const auto& y = b.lists_[i];
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k].index != y[k].index || x[k].distance != y[k].distance) return false;
  }
  return true;
}

namespace {

void check_compatible(const PointCloud& s, const PointCloud& t, double eps) {
  if (s.dim() != t.dim()) throw Error("source and target clouds have different dimensions");
  if (s.period() != t.period()) throw Error("source and target clouds have different periodicity");
  if (!(eps > 0.0)) throw Error("epsilon must be positive");
}

std::vector<Neighbor> scan_all(const PointCloud& s, const PointCloud& t, std::size_t i,
                               double eps) {
  std::vector<Neighbor> out;
  const auto xi = t.point(i);
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double r = s.distance(xi, s.point(j));
    if (r < eps) out.push_back({static_cast<std::uint32_t>(j), r});
  }
  return out;
}

// Uniform bucket grid with cell width >= eps over the bounding box of the
// source cloud (or the periodic box).
class BucketGrid {
 public:
  BucketGrid(const PointCloud& s, double eps) : cloud_(s), dim_(s.dim()) {
    for (int a = 0; a < dim_; ++a) {
      double lo = 0.0, hi = 0.0;
      if (s.periodic()) {
        hi = (*s.period())[a];
      } else {
        lo = hi = s.size() ? s.coord(0, a) : 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
          lo = std::min(lo, s.coord(j, a));
          hi = std::max(hi, s.coord(j, a));
        }
      }
      origin_[a] = lo;
      const double span = hi - lo;
      // cells' widths stay >= eps; the count is capped so tiny radii do not
      // allocate more buckets than there are points
      const double per_axis = std::pow(static_cast<double>(std::max<std::size_t>(s.size(), 1)), 1.0 / dim_);
      const double cap = std::ceil(2.0 * per_axis);
      cells_[a] = std::max<long>(1, static_cast<long>(std::min(std::floor(span / eps), cap)));
      // periodic wrap needs >= 3 cells for the 3-wide stencil to be distinct
      if (s.periodic() && cells_[a] < 3) cells_[a] = 1;
      width_[a] = span > 0.0 ? span / cells_[a] : 1.0;
    }
    const long total = cells_[0] * (dim_ == 2 ? cells_[1] : 1);
    buckets_.resize(static_cast<std::size_t>(total));
    for (std::size_t j = 0; j < s.size(); ++j) {
      std::array<long, kMaxDim> c{0, 0};
      for (int a = 0; a < dim_; ++a) c[a] = clamp_cell(a, cell_of(a, s.coord(j, a)));
      buckets_[flat(c)].push_back(static_cast<std::uint32_t>(j));
    }
  }

  std::vector<Neighbor> query(const PointCloud& t, std::size_t i, double eps) const {
    std::vector<Neighbor> out;
    const auto xi = t.point(i);
    std::array<long, kMaxDim> lo{0, 0}, hi{0, 0};
    for (int a = 0; a < dim_; ++a) {
      if (cloud_.periodic() && cells_[a] == 1) {
        lo[a] = hi[a] = 0;
        continue;
      }
      const long c = cell_of(a, xi[a]);
      lo[a] = c - 1;
      hi[a] = c + 1;
      if (!cloud_.periodic()) {
        lo[a] = std::max(0L, lo[a]);
        hi[a] = std::min(cells_[a] - 1, hi[a]);
      }
    }
    std::vector<std::size_t> visited;
    auto visit = [&](std::array<long, kMaxDim> c) {
      for (int a = 0; a < dim_; ++a) {
        if (cloud_.periodic()) c[a] = ((c[a] % cells_[a]) + cells_[a]) % cells_[a];
        if (c[a] < 0 || c[a] >= cells_[a]) return;
      }
      const std::size_t f = flat(c);
      if (std::find(visited.begin(), visited.end(), f) != visited.end()) return;
      visited.push_back(f);
      for (std::uint32_t j : buckets_[f]) {
        const double r = cloud_.distance(xi, cloud_.point(j));
        if (r < eps) out.push_back({j, r});
      }
    };
    if (dim_ == 1) {
      for (long c0 = lo[0]; c0 <= hi[0]; ++c0) visit({c0, 0});
    } else {
      for (long c1 = lo[1]; c1 <= hi[1]; ++c1)
        for (long c0 = lo[0]; c0 <= hi[0]; ++c0) visit({c0, c1});
    }
    std::sort(out.begin(), out.end(),
              [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
    return out;
  }

 private:
  long cell_of(int a, double x) const {
    return static_cast<long>(std::floor((x - origin_[a]) / width_[a]));
  }
  long clamp_cell(int a, long c) const { return std::clamp(c, 0L, cells_[a] - 1); }
  std::size_t flat(const std::array<long, kMaxDim>& c) const {
    return static_cast<std::size_t>(c[0] + (dim_ == 2 ? c[1] * cells_[0] : 0));
  }

  const PointCloud& cloud_;
  int dim_;
  std::array<double, kMaxDim> origin_{0, 0};
  std::array<double, kMaxDim> width_{1, 1};
  std::array<long, kMaxDim> cells_{1, 1};
  std::vector<std::vector<std::uint32_t>> buckets_;
};

}  // namespace

NeighborList build_neighbors(const PointCloud& source, const PointCloud& target, double epsilon,
                             NeighborSearch method) {
  check_compatible(source, target, epsilon);
  std::vector<std::vector<Neighbor>> lists(target.size());
  if (method == NeighborSearch::brute_force) {
    parallel_for(target.size(), [&](std::size_t i) { lists[i] = scan_all(source, target, i, epsilon); });
  } else {
    const BucketGrid grid(source, epsilon);
    parallel_for(target.size(), [&](std::size_t i) { lists[i] = grid.query(target, i, epsilon); });
  }
  for (std::size_t i = 0; i < lists.size(); ++i)
    if (lists[i].empty()) throw EmptyNeighborhoodError(i);
  return NeighborList(epsilon, std::move(lists));
}

double WeightKernel::operator()(double r) const {
  if (r >= epsilon) return 0.0;
  return std::pow(1.0 - r / epsilon, power);
}

double WeightKernel::derivative(double r) const {
  if (r >= epsilon || power == 0) return 0.0;
  return -power / epsilon * std::pow(1.0 - r / epsilon, power - 1);
}

double weight(double r, const WeightKernel& kernel) { return kernel(r); }

PointCloud read_cloud_csv(const std::filesystem::path& path, std::optional<Coord> period) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open cloud file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("cloud file " + path.string() + " is empty");
  int dim = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (line != "x" && line != "x,y") throw Error("cloud header must be 'x' or 'x,y'");
  std::vector<double> c;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        c.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(row) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != dim)
      throw Error(path.string() + ":" + std::to_string(row) + ": expected " +
                  std::to_string(dim) + " columns");
  }
  return PointCloud(dim, std::move(c), period);
}

void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write cloud file " + path.string());
  out << (cloud.dim() == 1 ? "x\n" : "x,y\n");
  out.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud.coord(i, 0);
    if (cloud.dim() == 2) out << ',' << cloud.coord(i, 1);
    out << '\n';
  }
}

}  // namespace gmls
