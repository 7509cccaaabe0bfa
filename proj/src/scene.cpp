#include "eviplan/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eviplan/rng.hpp"

namespace eviplan::localize {

Room::Room(const Vec3& min_in, const Vec3& max_in) : min(min_in), max(max_in) {
  for (int a = 0; a < 3; ++a)
    if (!(min[a] < max[a])) throw std::invalid_argument("Room: min must be below max on every axis");
}

bool Room::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a)
    if (p[a] < min[a] || p[a] > max[a]) return false;
  return true;
}

EntropyField::EntropyField(const Room& room, int nx, int ny, int nz, std::vector<FieldCell> cells)
    : room_(room), nx_(nx), ny_(ny), nz_(nz), cells_(std::move(cells)) {
  if (nx < 1 || ny < 1 || nz < 1)
    throw std::invalid_argument("EntropyField: grid dimensions must be positive");
  if (cells_.size() != static_cast<size_t>(nx) * ny * nz)
    throw std::invalid_argument("EntropyField: cell count does not match grid dimensions");
  for (const auto& c : cells_) {
    if (!(c.sigma > 0.0) || !(c.lambda > 0.0) || !(c.alpha > 1.0))
      throw std::invalid_argument("EntropyField: invalid cell parameters");
  }
}

const FieldCell& EntropyField::cell_at(const Vec3& p) const {
  const Vec3 rel = p - room_.min;
  const Vec3 ext = room_.extent();
  const int dims[3] = {nx_, ny_, nz_};
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    const int i = static_cast<int>(rel[a] / ext[a] * dims[a]);
    idx[a] = std::clamp(i, 0, dims[a] - 1);
  }
  return cells_[static_cast<size_t>((idx[2] * ny_ + idx[1]) * nx_ + idx[0])];
}

evidential::NIGParams EntropyField::nig_at(const Vec3& p, double gamma) const {
  const FieldCell& c = cell_at(p);
  return evidential::NIGParams(gamma, c.lambda, c.alpha, c.sigma * c.sigma * (c.alpha - 1.0));
}

double EntropyField::entropy_at(const Vec3& p) const {
  return 3.0 * evidential::predictive_entropy(nig_at(p, 0.0));
}

namespace {

Vec3 cell_center(const Room& room, int nx, int ny, int nz, int ix, int iy, int iz) {
  const Vec3 ext = room.extent();
  return room.min + Vec3((ix + 0.5) / nx * ext.x(), (iy + 0.5) / ny * ext.y(),
                         (iz + 0.5) / nz * ext.z());
}

template <typename SigmaFn>
EntropyField build(const Room& room, int nx, int ny, int nz, double lambda, double alpha,
                   SigmaFn&& sigma_of) {
  std::vector<FieldCell> cells;
  cells.reserve(static_cast<size_t>(nx) * ny * nz);
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix)
        cells.push_back(FieldCell{sigma_of(cell_center(room, nx, ny, nz, ix, iy, iz)), lambda, alpha});
  return EntropyField(room, nx, ny, nz, std::move(cells));
}

}  // namespace

EntropyField EntropyField::uniform(const Room& room, int nx, int ny, int nz,
                                   const FieldCell& cell) {
  return EntropyField(room, nx, ny, nz,
                      std::vector<FieldCell>(static_cast<size_t>(nx) * ny * nz, cell));
}

EntropyField EntropyField::low_noise_wall(const Room& room, int nx, int ny, int nz, Wall wall,
                                          double sigma_low, double sigma_high, double lambda,
                                          double alpha, double jitter_rel, uint64_t seed) {
  if (!(jitter_rel >= 0.0) || jitter_rel >= 1.0)
    throw std::invalid_argument("low_noise_wall: jitter_rel must be in [0, 1)");
  Rng rng(seed);
  const auto wall_distance = [&](const Vec3& p) {
    switch (wall) {
      case Wall::kXMin: return p.x() - room.min.x();
      case Wall::kXMax: return room.max.x() - p.x();
      case Wall::kYMin: return p.y() - room.min.y();
      case Wall::kYMax: return room.max.y() - p.y();
    }
    throw std::invalid_argument("low_noise_wall: bad wall");
  };
  // A cell belongs to the low-noise wall when it sits in the grid layer
  // adjacent to that wall.
  const Vec3 ext = room.extent();
  const double layer = (wall == Wall::kXMin || wall == Wall::kXMax) ? ext.x() / nx : ext.y() / ny;
  return build(room, nx, ny, nz, lambda, alpha, [&](const Vec3& c) {
    const double base = wall_distance(c) < layer ? sigma_low : sigma_high;
    return base * (1.0 + jitter_rel * (2.0 * rng.uniform01() - 1.0));
  });
}

EntropyField EntropyField::axis_gradient(const Room& room, int nx, int ny, int nz, int axis,
                                         double sigma_min, double sigma_max, double lambda,
                                         double alpha) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("axis_gradient: axis must be 0..2");
  return build(room, nx, ny, nz, lambda, alpha, [&](const Vec3& c) {
    const double u = (c[axis] - room.min[axis]) / room.extent()[axis];
    return sigma_min + (sigma_max - sigma_min) * u;
  });
}

SceneSample::SceneSample(const Vec3& world_point_in, const Vec2& pixel_in,
                         const evidential::NIGParams& nig_x_in,
                         const evidential::NIGParams& nig_y_in,
                         const evidential::NIGParams& nig_z_in)
    : world_point(world_point_in),
      pixel(pixel_in),
      nig_x(nig_x_in),
      nig_y(nig_y_in),
      nig_z(nig_z_in),
      entropy(evidential::predictive_entropy(nig_x_in) + evidential::predictive_entropy(nig_y_in) +
              evidential::predictive_entropy(nig_z_in)) {}

}  // namespace eviplan::localize
