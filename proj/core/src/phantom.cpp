#include "osteoforge/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "osteoforge/error.hpp"
#include "random.hpp"

namespace osteoforge {
namespace {

using detail::json;

bool fits(double center, double radius, int extent) {
  return center - radius >= 0.0 && center + radius <= extent - 1.0;
}

void check_hu(Hu hu, const std::string& field) {
  if (hu < kMinHu || hu > kMaxHu) throw ConfigError(field, "HU outside [-1024, 3071]");
}

void check_ellipsoid(const Ellipsoid& e, const Dims3& d, const std::string& field) {
  const int extent[3] = {d.x, d.y, d.z};
  for (int a = 0; a < 3; ++a) {
    if (!(e.radii[a] > 0)) throw ConfigError(field + ".radii", "must be positive");
    if (!fits(e.center[a], e.radii[a], extent[a])) {
      throw ConfigError(field, "exceeds volume bounds");
    }
  }
  check_hu(e.hu, field + ".hu");
}

template <class Inside>
void fill_box(Volume& vol, double x0, double x1, double y0, double y1, double z0,
              double z1, Hu hu, Inside inside) {
  const Dims3& d = vol.dims();
  const int xa = std::max(0, static_cast<int>(std::floor(x0)));
  const int xb = std::min(d.x - 1, static_cast<int>(std::ceil(x1)));
  const int ya = std::max(0, static_cast<int>(std::floor(y0)));
  const int yb = std::min(d.y - 1, static_cast<int>(std::ceil(y1)));
  const int za = std::max(0, static_cast<int>(std::floor(z0)));
  const int zb = std::min(d.z - 1, static_cast<int>(std::ceil(z1)));
  for (int z = za; z <= zb; ++z)
    for (int y = ya; y <= yb; ++y)
      for (int x = xa; x <= xb; ++x)
        if (inside(x, y, z)) vol.set(x, y, z, hu);
}

double ellipsoid_term(double p, double c, double r) {
  const double t = (p - c) / r;
  return t * t;
}

void draw_ellipsoid(Volume& vol, const std::array<double, 3>& c,
                    const std::array<double, 3>& r, Hu hu) {
  fill_box(vol, c[0] - r[0], c[0] + r[0], c[1] - r[1], c[1] + r[1], c[2] - r[2],
           c[2] + r[2], hu, [&](int x, int y, int z) {
             return ellipsoid_term(x, c[0], r[0]) + ellipsoid_term(y, c[1], r[1]) +
                        ellipsoid_term(z, c[2], r[2]) <=
                    1.0;
           });
}

void draw_cylinder(Volume& vol, const Cylinder& s) {
  fill_box(vol, s.cx - s.radius, s.cx + s.radius, s.cy - s.radius, s.cy + s.radius,
           s.z_begin, s.z_end, s.hu, [&](int x, int y, int z) {
             const double dx = x - s.cx;
             const double dy = y - s.cy;
             return dx * dx + dy * dy <= s.radius * s.radius && z >= s.z_begin &&
                    z <= s.z_end;
           });
}

double rib_centerline_z(const RibCage& r, int i, double x) {
  return r.z_first + i * r.z_spacing + r.slope * std::abs(x - r.cx);
}

void draw_ribs(Volume& vol, const RibCage& r) {
  const double half = r.thickness / 2.0;
  const double reach = std::max(r.ring_rx, r.ring_ry) + half;
  for (int i = 0; i < r.count; ++i) {
    const double z_lo = r.z_first + i * r.z_spacing - half;
    const double z_hi = r.z_first + i * r.z_spacing + r.slope * (r.ring_rx + half) + half;
    fill_box(vol, r.cx - reach, r.cx + reach, r.cy - reach, r.cy + reach, z_lo, z_hi,
             r.hu, [&](int x, int y, int z) {
               const double px = x - r.cx;
               const double py = y - r.cy;
               const double rho = std::hypot(px / r.ring_rx, py / r.ring_ry);
               if (rho == 0.0) return false;
               const double radial = std::abs(rho - 1.0) * std::hypot(px, py) / rho;
               return radial <= half && std::abs(z - rib_centerline_z(r, i, x)) <= half;
             });
  }
}

NoduleAnnotation place_random_nodule(const PhantomSpec& spec, detail::Engine& eng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const auto lung_index = static_cast<std::size_t>(
        std::uniform_int_distribution<std::size_t>(0, spec.lungs.size() - 1)(eng));
    const Ellipsoid& lung = spec.lungs[lung_index];
    const double radius = detail::uniform(eng, spec.nodules.radius_min, spec.nodules.radius_max);
    std::array<double, 3> c{};
    bool ok = true;
    double q = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double shrunk = lung.radii[a] - radius;
      if (shrunk <= 0.0) {
        ok = false;
        break;
      }
      c[a] = lung.center[a] + detail::uniform(eng, -shrunk, shrunk);
      q += ellipsoid_term(c[a], lung.center[a], shrunk);
    }
    if (ok && q <= 1.0) return NoduleAnnotation{c, {radius, radius, radius}};
  }
  throw ConfigError("nodules.random_count", "could not place nodule inside the lungs");
}

}  // namespace

PhantomSpec PhantomSpec::empty(Dims3 dims) {
  PhantomSpec s;
  s.dims = dims;
  return s;
}

PhantomSpec PhantomSpec::thorax(Dims3 dims, std::uint64_t seed, int nodule_count) {
  PhantomSpec s;
  s.dims = dims;
  s.seed = seed;
  detail::Engine eng(detail::derive_seed(seed, {0x7407a}));
  auto jitter = [&](double amount) { return 1.0 + amount * detail::symmetric(eng); };

  const double ex = dims.x - 1.0;
  const double ey = dims.y - 1.0;
  const double ez = dims.z - 1.0;
  const double cx = ex / 2.0;
  const double cy = ey / 2.0;
  const double cz = ez / 2.0;

  s.body = Ellipsoid{{cx, cy, cz}, {0.45 * ex * jitter(0.05), 0.40 * ey * jitter(0.05), 0.47 * ez}, 40};

  const double lung_dx = 0.21 * ex * jitter(0.05);
  const std::array<double, 3> lung_r{0.15 * ex * jitter(0.08), 0.26 * ey * jitter(0.08),
                                     0.33 * ez * jitter(0.08)};
  const double lung_cz = cz + 0.03 * ez * detail::symmetric(eng);
  s.lungs.push_back(Ellipsoid{{cx - lung_dx, cy - 0.02 * ey, lung_cz}, lung_r, -800});
  s.lungs.push_back(Ellipsoid{{cx + lung_dx, cy - 0.02 * ey, lung_cz}, lung_r, -800});

  const Hu bone_hu = static_cast<Hu>(std::lround(500 + 80 * detail::symmetric(eng)));
  s.spine = Cylinder{cx, cy + 0.28 * ey, std::max(1.0, 0.055 * ex * jitter(0.1)),
                     0.06 * ez, 0.94 * ez, bone_hu};

  RibCage ribs;
  ribs.count = std::clamp(static_cast<int>(std::lround(dims.z / 9.0)), 3, 12);
  ribs.cx = cx;
  ribs.cy = cy;
  ribs.ring_rx = 0.40 * ex * jitter(0.03);
  ribs.ring_ry = 0.33 * ey * jitter(0.03);
  ribs.thickness = std::max(1.2, 0.035 * ex);
  ribs.z_first = 0.12 * ez + 0.02 * ez * detail::symmetric(eng);
  ribs.slope = 0.25 * jitter(0.2);
  const double z_room = ez - ribs.thickness - ribs.slope * (ribs.ring_rx + ribs.thickness);
  ribs.z_spacing = std::max(0.0, (z_room - ribs.z_first)) / std::max(1, ribs.count) * 0.9;
  ribs.hu = bone_hu;
  s.ribs = ribs;

  s.nodules.random_count = nodule_count;
  s.nodules.radius_min = std::max(1.0, 0.025 * ex);
  s.nodules.radius_max = std::max(1.5, 0.05 * ex);
  return s;
}

PhantomSpec PhantomSpec::soft_tissue_only(Dims3 dims, std::uint64_t seed) {
  PhantomSpec s = thorax(dims, seed, 1);
  s.spine.reset();
  s.ribs.reset();
  return s;
}

void PhantomSpec::validate() const {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) throw ConfigError("dims", "must be positive");
  check_hu(background_hu, "background_hu");
  if (body) check_ellipsoid(*body, dims, "body");
  for (std::size_t i = 0; i < lungs.size(); ++i) {
    check_ellipsoid(lungs[i], dims, "lungs[" + std::to_string(i) + "]");
  }
  if (spine) {
    if (!(spine->radius > 0)) throw ConfigError("spine.radius", "must be positive");
    if (!fits(spine->cx, spine->radius, dims.x) || !fits(spine->cy, spine->radius, dims.y) ||
        spine->z_begin < 0 || spine->z_end > dims.z - 1.0 || spine->z_begin > spine->z_end) {
      throw ConfigError("spine", "exceeds volume bounds");
    }
    check_hu(spine->hu, "spine.hu");
  }
  if (ribs && ribs->count > 0) {
    const RibCage& r = *ribs;
    if (!(r.ring_rx > 0 && r.ring_ry > 0)) throw ConfigError("ribs.ring", "radii must be positive");
    if (!(r.thickness > 0)) throw ConfigError("ribs.thickness", "must be positive");
    const double half = r.thickness / 2.0;
    const double z_top = rib_centerline_z(r, r.count - 1, r.cx + r.ring_rx + half) + half;
    if (!fits(r.cx, r.ring_rx + half, dims.x) || !fits(r.cy, r.ring_ry + half, dims.y) ||
        r.z_first - half < 0 || z_top > dims.z - 1.0) {
      throw ConfigError("ribs", "exceeds volume bounds");
    }
    check_hu(r.hu, "ribs.hu");
  }
  if (nodules.random_count < 0) throw ConfigError("nodules.random_count", "must be >= 0");
  if (nodules.random_count > 0) {
    if (lungs.empty()) throw ConfigError("nodules.random_count", "random nodules need lungs");
    if (!(nodules.radius_min > 0 && nodules.radius_min <= nodules.radius_max)) {
      throw ConfigError("nodules.radius_min", "need 0 < radius_min <= radius_max");
    }
  }
  check_hu(nodules.hu, "nodules.hu");
  for (std::size_t i = 0; i < nodules.fixed.size(); ++i) {
    const auto& n = nodules.fixed[i];
    const std::string field = "nodules.fixed[" + std::to_string(i) + "]";
    check_ellipsoid(Ellipsoid{n.center_vox, n.radii_vox, nodules.hu}, dims, field);
  }
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Volume vol(spec.dims, spec.spacing, spec.background_hu);
  if (spec.body) draw_ellipsoid(vol, spec.body->center, spec.body->radii, spec.body->hu);
  for (const auto& lung : spec.lungs) draw_ellipsoid(vol, lung.center, lung.radii, lung.hu);
  if (spec.spine) draw_cylinder(vol, *spec.spine);
  if (spec.ribs) draw_ribs(vol, *spec.ribs);

  std::vector<NoduleAnnotation> nodules;
  detail::Engine eng(detail::derive_seed(spec.seed, {0x40d01e}));
  for (int i = 0; i < spec.nodules.random_count; ++i) {
    nodules.push_back(place_random_nodule(spec, eng));
  }
  nodules.insert(nodules.end(), spec.nodules.fixed.begin(), spec.nodules.fixed.end());
  for (const auto& n : nodules) draw_ellipsoid(vol, n.center_vox, n.radii_vox, spec.nodules.hu);
  return Phantom{std::move(vol), std::move(nodules)};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json to_json(const Ellipsoid& e) {
  return {{"center", e.center}, {"radii", e.radii}, {"hu", e.hu}};
}

Ellipsoid ellipsoid_from(const json& j) {
  return Ellipsoid{detail::require<std::array<double, 3>>(j, "center"),
                   detail::require<std::array<double, 3>>(j, "radii"),
                   detail::require<Hu>(j, "hu")};
}

}  // namespace

void save_phantom_spec(const PhantomSpec& spec, const std::filesystem::path& path) {
  json j;
  j["dims"] = {spec.dims.x, spec.dims.y, spec.dims.z};
  j["spacing_mm"] = {spec.spacing.x, spec.spacing.y, spec.spacing.z};
  j["background_hu"] = spec.background_hu;
  j["seed"] = spec.seed;
  if (spec.body) j["body"] = to_json(*spec.body);
  j["lungs"] = json::array();
  for (const auto& l : spec.lungs) j["lungs"].push_back(to_json(l));
  if (spec.spine) {
    const auto& s = *spec.spine;
    j["spine"] = {{"cx", s.cx}, {"cy", s.cy}, {"radius", s.radius},
                  {"z_begin", s.z_begin}, {"z_end", s.z_end}, {"hu", s.hu}};
  }
  if (spec.ribs) {
    const auto& r = *spec.ribs;
    j["ribs"] = {{"count", r.count},         {"cx", r.cx},
                 {"cy", r.cy},               {"ring_rx", r.ring_rx},
                 {"ring_ry", r.ring_ry},     {"thickness", r.thickness},
                 {"z_first", r.z_first},     {"z_spacing", r.z_spacing},
                 {"slope", r.slope},         {"hu", r.hu}};
  }
  json fixed = json::array();
  for (const auto& n : spec.nodules.fixed) {
    fixed.push_back({{"center_vox", n.center_vox}, {"radii_vox", n.radii_vox}});
  }
  j["nodules"] = {{"random_count", spec.nodules.random_count},
                  {"radius_min", spec.nodules.radius_min},
                  {"radius_max", spec.nodules.radius_max},
                  {"hu", spec.nodules.hu},
                  {"fixed", fixed}};
  detail::write_text(path, j.dump(2) + "\n");
}

PhantomSpec load_phantom_spec(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  PhantomSpec s;
  const auto dims = detail::require<std::array<int, 3>>(j, "dims");
  s.dims = Dims3{dims[0], dims[1], dims[2]};
  if (j.contains("spacing_mm")) {
    const auto sp = detail::require<std::array<double, 3>>(j, "spacing_mm");
    s.spacing = Spacing3{sp[0], sp[1], sp[2]};
  }
  if (j.contains("background_hu")) s.background_hu = detail::require<Hu>(j, "background_hu");
  if (j.contains("seed")) s.seed = detail::require<std::uint64_t>(j, "seed");
  if (j.contains("body")) s.body = ellipsoid_from(j.at("body"));
  if (j.contains("lungs")) {
    for (const auto& l : j.at("lungs")) s.lungs.push_back(ellipsoid_from(l));
  }
  if (j.contains("spine")) {
    const json& o = j.at("spine");
    s.spine = Cylinder{detail::require<double>(o, "cx"),      detail::require<double>(o, "cy"),
                       detail::require<double>(o, "radius"),  detail::require<double>(o, "z_begin"),
                       detail::require<double>(o, "z_end"),   detail::require<Hu>(o, "hu")};
  }
  if (j.contains("ribs")) {
    const json& o = j.at("ribs");
    RibCage r;
    r.count = detail::require<int>(o, "count");
    r.cx = detail::require<double>(o, "cx");
    r.cy = detail::require<double>(o, "cy");
    r.ring_rx = detail::require<double>(o, "ring_rx");
    r.ring_ry = detail::require<double>(o, "ring_ry");
    r.thickness = detail::require<double>(o, "thickness");
    r.z_first = detail::require<double>(o, "z_first");
    r.z_spacing = detail::require<double>(o, "z_spacing");
    r.slope = detail::require<double>(o, "slope");
    r.hu = detail::require<Hu>(o, "hu");
    s.ribs = r;
  }
  if (j.contains("nodules")) {
    const json& o = j.at("nodules");
    if (o.contains("random_count")) s.nodules.random_count = detail::require<int>(o, "random_count");
    if (o.contains("radius_min")) s.nodules.radius_min = detail::require<double>(o, "radius_min");
    if (o.contains("radius_max")) s.nodules.radius_max = detail::require<double>(o, "radius_max");
    if (o.contains("hu")) s.nodules.hu = detail::require<Hu>(o, "hu");
    if (o.contains("fixed")) {
      for (const auto& n : o.at("fixed")) {
        s.nodules.fixed.push_back(
            NoduleAnnotation{detail::require<std::array<double, 3>>(n, "center_vox"),
                             detail::require<std::array<double, 3>>(n, "radii_vox")});
      }
    }
  }
  s.validate();
  return s;
}

}  // namespace osteoforge
