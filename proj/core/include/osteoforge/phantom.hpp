#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "osteoforge/volume.hpp"

namespace osteoforge {

/// Voxel-space ellipsoid filled with a constant HU value. A voxel belongs to
/// it when sum(((p - center) / radii)^2) <= 1 at integer coordinates.
struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> radii{};
  Hu hu = 0;

  bool operator==(const Ellipsoid&) const = default;
};

/// Vertical (z-aligned) cylinder, used for the spine.
struct Cylinder {
  double cx = 0;
  double cy = 0;
  double radius = 1;
  double z_begin = 0;
  double z_end = 0;
  Hu hu = 500;

  bool operator==(const Cylinder&) const = default;
};

/// A stack of rib rings: each rib is a tube of the given thickness that
/// follows an ellipse of radii (ring_rx, ring_ry) in the x-y plane and drops
/// by `slope` voxels per voxel of lateral distance from the midline.
struct RibCage {
  int count = 0;
  double cx = 0;
  double cy = 0;
  double ring_rx = 1;
  double ring_ry = 1;
  double thickness = 1;
  double z_first = 0;
  double z_spacing = 1;
  double slope = 0;
  Hu hu = 500;

  bool operator==(const RibCage&) const = default;
};

struct NoduleSpec {
  /// Nodules placed at random inside a random lung.
  int random_count = 0;
  double radius_min = 1.5;
  double radius_max = 3.0;
  /// Nodules placed exactly as given (after the random ones are drawn).
  std::vector<NoduleAnnotation> fixed;
  Hu hu = 50;

  bool operator==(const NoduleSpec&) const = default;
};

struct PhantomSpec {
  Dims3 dims{64, 64, 64};
  Spacing3 spacing{};
  Hu background_hu = kBackgroundHu;
  std::optional<Ellipsoid> body;
  std::vector<Ellipsoid> lungs;
  std::optional<Cylinder> spine;
  std::optional<RibCage> ribs;
  NoduleSpec nodules;
  std::uint64_t seed = 0;

  /// No structures at all: an all-background volume.
  static PhantomSpec empty(Dims3 dims);
  /// A chest-like phantom scaled to `dims`. Geometry is jittered by `seed`,
  /// so different seeds give different anatomy; `nodule_count` random
  /// nodules are placed inside the lungs.
  static PhantomSpec thorax(Dims3 dims, std::uint64_t seed, int nodule_count = 1);
  /// Same as thorax() with the bone inserts removed.
  static PhantomSpec soft_tissue_only(Dims3 dims, std::uint64_t seed);

  /// Throws ConfigError naming the first invalid field or out-of-bounds
  /// structure.
  void validate() const;

  bool operator==(const PhantomSpec&) const = default;
};

struct Phantom {
  Volume volume;
  std::vector<NoduleAnnotation> nodules;
};

/// Rasterizes the spec in order body, lungs, spine, ribs, nodules; later
/// structures overwrite earlier ones. Deterministic for a fixed spec.
Phantom generate_phantom(const PhantomSpec& spec);

void save_phantom_spec(const PhantomSpec& spec, const std::filesystem::path& path);
PhantomSpec load_phantom_spec(const std::filesystem::path& path);

}  // namespace osteoforge
