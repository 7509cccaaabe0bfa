#pragma once

#include <cstdint>
#include <vector>

#include "eviplan/core.hpp"
#include "eviplan/evidential.hpp"

namespace eviplan::localize {

/// Axis-aligned room; all scene surfaces are its six faces.
struct Room {
  Vec3 min;
  Vec3 max;

  Room(const Vec3& min, const Vec3& max);
  bool contains(const Vec3& p) const;
  Vec3 extent() const { return max - min; }
};

enum class Wall { kXMin, kXMax, kYMin, kYMax };

struct FieldCell {
  double sigma;
  double lambda;
  double alpha;
};

/// Piecewise-constant map from world position to the noise scale and NIG
/// evidence profile of scene-coordinate regression in that region. beta is
/// derived per cell so the aleatoric variance equals sigma^2.
class EntropyField {
 public:
  EntropyField(const Room& room, int nx, int ny, int nz, std::vector<FieldCell> cells);

  const Room& room() const { return room_; }
  const FieldCell& cell_at(const Vec3& p) const;

  /// NIG parameters of one coordinate regressed at p with predicted mean
  /// gamma.
  evidential::NIGParams nig_at(const Vec3& p, double gamma) const;

  /// Sum of the three per-coordinate predictive entropies at p.
  double entropy_at(const Vec3& p) const;

  static EntropyField uniform(const Room& room, int nx, int ny, int nz, const FieldCell& cell);

  /// sigma_low on the cells nearest to the given wall, sigma_high elsewhere,
  /// with a deterministic multiplicative jitter (relative amplitude
  /// jitter_rel) that breaks entropy ties between cells.
  static EntropyField low_noise_wall(const Room& room, int nx, int ny, int nz, Wall wall,
                                     double sigma_low, double sigma_high, double lambda,
                                     double alpha, double jitter_rel, uint64_t seed);

  /// sigma interpolated linearly from sigma_min to sigma_max along the given
  /// axis (0, 1, or 2).
  static EntropyField axis_gradient(const Room& room, int nx, int ny, int nz, int axis,
                                    double sigma_min, double sigma_max, double lambda,
                                    double alpha);

 private:
  Room room_;
  int nx_, ny_, nz_;
  std::vector<FieldCell> cells_;
};

/// One regressed scene coordinate: a world point with per-axis evidential
/// parameters and the pixel it was predicted from. entropy caches the sum of
/// the three component predictive entropies.
struct SceneSample {
  Vec3 world_point;
  Vec2 pixel;
  evidential::NIGParams nig_x;
  evidential::NIGParams nig_y;
  evidential::NIGParams nig_z;
  double entropy;

  SceneSample(const Vec3& world_point, const Vec2& pixel, const evidential::NIGParams& nig_x,
              const evidential::NIGParams& nig_y, const evidential::NIGParams& nig_z);
};

}  // namespace eviplan::localize
