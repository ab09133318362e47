#include "priorpose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace priorpose {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Additive-recurrence sequences; three mutually irrational steps give a
// deterministic low-discrepancy cover of [0,1)^3.
double seq_a(int i) { return std::fmod(0.5 + i * 0.61803398874989485, 1.0); }
double seq_b(int i) { return std::fmod(0.5 + i * 0.41421356237309503, 1.0); }
double seq_c(int i) { return std::fmod(0.5 + i * 0.32471795724474602, 1.0); }

Vec3 box_point(int i) {
  if (i < 8) {
    return Vec3((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5,
                (i & 4) ? 0.5 : -0.5);
  }
  const int j = i - 8;
  const int face = static_cast<int>(seq_c(j) * 6.0) % 6;
  const double a = seq_a(j) - 0.5;
  const double b = seq_b(j) - 0.5;
  switch (face) {
    case 0: return Vec3(0.5, a, b);
    case 1: return Vec3(-0.5, a, b);
    case 2: return Vec3(a, 0.5, b);
    case 3: return Vec3(a, -0.5, b);
    case 4: return Vec3(a, b, 0.5);
    default: return Vec3(a, b, -0.5);
  }
}

Vec3 cylinder_point(int i, double radius, double height) {
  const double side_area = 2.0 * kPi * radius * height;
  const double cap_area = kPi * radius * radius;
  const double total = side_area + 2.0 * cap_area;
  const double pick = seq_c(i) * total;
  const double theta = 2.0 * kPi * seq_a(i);
  if (pick < side_area) {
    const double y = (seq_b(i) - 0.5) * height;
    return Vec3(radius * std::cos(theta), y, radius * std::sin(theta));
  }
  const double rho = radius * std::sqrt(seq_b(i));
  const double y = pick < side_area + cap_area ? 0.5 * height : -0.5 * height;
  return Vec3(rho * std::cos(theta), y, rho * std::sin(theta));
}

// Body radius 0.3 up to the shoulder, neck radius 0.12, cosine blend between.
double bottle_radius(double y) {
  constexpr double body = 0.30, neck = 0.12;
  constexpr double y0 = 0.15, y1 = 0.30;
  if (y <= y0) return body;
  if (y >= y1) return neck;
  const double u = (y - y0) / (y1 - y0);
  return neck + (body - neck) * 0.5 * (1.0 + std::cos(kPi * u));
}

Vec3 bottle_point(int i) {
  const double pick = seq_c(i);
  const double theta = 2.0 * kPi * seq_a(i);
  if (pick < 0.82) {  // side wall
    const double y = seq_b(i) - 0.5;
    const double r = bottle_radius(y);
    return Vec3(r * std::cos(theta), y, r * std::sin(theta));
  }
  if (pick < 0.94) {  // base disk
    const double rho = 0.30 * std::sqrt(seq_b(i));
    return Vec3(rho * std::cos(theta), -0.5, rho * std::sin(theta));
  }
  const double rho = 0.12 * std::sqrt(seq_b(i));  // cap disk
  return Vec3(rho * std::cos(theta), 0.5, rho * std::sin(theta));
}

Vec3 bowl_point(int i) {
  // Lower hemispherical shell, rim in the y = 0 plane, opening upward.
  const double cos_psi = seq_b(i);  // uniform in area
  const double sin_psi = std::sqrt(std::max(0.0, 1.0 - cos_psi * cos_psi));
  const double theta = 2.0 * kPi * seq_a(i);
  constexpr double r = 0.5;
  return Vec3(r * sin_psi * std::cos(theta), -r * cos_psi,
              r * sin_psi * std::sin(theta));
}

Vec3 laptop_point(int i) {
  // Base slab in the x-z plane plus a lid slab opened 110 degrees, hinged
  // along z = -0.5. Thickness is modeled by offsetting both slab sides.
  constexpr double half_th = 0.015;
  constexpr double beta = 70.0 * kPi / 180.0;  // lid tilt past vertical
  const double a = seq_a(i) - 0.5;
  const double b = seq_b(i);
  const double side = seq_c(i) < 0.5 ? half_th : -half_th;
  if (std::fmod(seq_c(i) * 997.0, 1.0) < 0.5) {
    return Vec3(a, side, b - 0.5);
  }
  const double d = b;  // distance along the lid from the hinge
  const Vec3 lid_dir(0.0, std::sin(beta), -std::cos(beta));
  const Vec3 lid_normal(0.0, std::cos(beta), std::sin(beta));
  return Vec3(a, 0.0, -0.5) + d * lid_dir + side * lid_normal;
}

Vec3 mug_point(int i) {
  constexpr double r0 = 0.35, height = 0.8;
  constexpr double ring_r = 0.20, tube_r = 0.05;
  const Vec3 handle_center(r0 + 0.10, 0.0, 0.0);
  const double pick = seq_c(i);
  const double theta = 2.0 * kPi * seq_a(i);
  if (pick < 0.62) {  // outer wall
    const double y = (seq_b(i) - 0.5) * height;
    return Vec3(r0 * std::cos(theta), y, r0 * std::sin(theta));
  }
  if (pick < 0.76) {  // base disk
    const double rho = r0 * std::sqrt(seq_b(i));
    return Vec3(rho * std::cos(theta), -0.5 * height, rho * std::sin(theta));
  }
  // Handle: torus arc in the x-y plane on the +x side.
  const double phi = (seq_b(i) - 0.5) * 1.5 * kPi;
  const double t = theta;
  const double w = ring_r + tube_r * std::cos(t);
  return handle_center +
         Vec3(w * std::cos(phi), w * std::sin(phi), tube_r * std::sin(t));
}

Points sample_surface(Generator g, int n) {
  Points pts(n, 3);
  for (int i = 0; i < n; ++i) {
    Vec3 p;
    switch (g) {
      case Generator::kCylinder: p = cylinder_point(i, 0.35, 1.0); break;
      case Generator::kBottleProfile: p = bottle_point(i); break;
      case Generator::kBowlHemisphere: p = bowl_point(i); break;
      case Generator::kBox: p = box_point(i); break;
      case Generator::kBoxWithHinge: p = laptop_point(i); break;
      case Generator::kCylinderWithHandle: p = mug_point(i); break;
    }
    pts.row(i) = p.transpose();
  }
  return pts;
}

// Shift the extent-box center to the origin and scale isotropically so the
// maximum per-axis extent is exactly 1.
Points normalize_to_unit(const Points& pts) {
  const Eigen::RowVector3d lo = pts.colwise().minCoeff();
  const Eigen::RowVector3d hi = pts.colwise().maxCoeff();
  const Eigen::RowVector3d center = 0.5 * (lo + hi);
  const double max_extent = (hi - lo).maxCoeff();
  return (pts.rowwise() - center) / max_extent;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = gauss(rng);
  } while (q.norm() < 1e-6);
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

struct NoiseHarmonic {
  Vec3 freq;
  Vec3 dir;
  double phase;
  double amp;
};

std::vector<NoiseHarmonic> draw_noise(std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<NoiseHarmonic> harmonics(3);
  for (auto& h : harmonics) {
    h.freq = Vec3(gauss(rng), gauss(rng), gauss(rng)) * 1.2;
    Vec3 d(gauss(rng), gauss(rng), gauss(rng));
    h.dir = d.norm() > 1e-9 ? d.normalized() : Vec3::UnitX();
    h.phase = 2.0 * kPi * uni(rng);
    h.amp = amplitude * (0.5 + 0.5 * uni(rng));
  }
  return harmonics;
}

Points apply_noise(const Points& pts,
                   const std::vector<NoiseHarmonic>& harmonics) {
  Points out = pts;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    Vec3 p = pts.row(i).transpose();
    for (const auto& h : harmonics) {
      out.row(i) += (h.amp * std::sin(h.freq.dot(p) + h.phase)) *
                    h.dir.transpose();
    }
  }
  return out;
}

}  // namespace

std::vector<CategorySpec> default_categories() {
  std::vector<CategorySpec> cats(6);
  cats[0] = {"bottle", Generator::kBottleProfile, true,
             Vec3(0.06, 0.18, 0.06), Vec3(0.09, 0.28, 0.09)};
  cats[1] = {"bowl", Generator::kBowlHemisphere, true,
             Vec3(0.12, 0.05, 0.12), Vec3(0.18, 0.08, 0.18)};
  cats[2] = {"camera", Generator::kBox, false, Vec3(0.09, 0.06, 0.05),
             Vec3(0.14, 0.10, 0.08)};
  cats[3] = {"can", Generator::kCylinder, true, Vec3(0.06, 0.10, 0.06),
             Vec3(0.08, 0.14, 0.08)};
  cats[4] = {"laptop", Generator::kBoxWithHinge, false,
             Vec3(0.25, 0.16, 0.20), Vec3(0.35, 0.24, 0.30)};
  cats[5] = {"mug", Generator::kCylinderWithHandle, false,
             Vec3(0.10, 0.08, 0.07), Vec3(0.14, 0.11, 0.10)};
  return cats;
}

const char* generator_name(Generator g) {
  switch (g) {
    case Generator::kCylinder: return "cylinder";
    case Generator::kBottleProfile: return "bottle_profile";
    case Generator::kBowlHemisphere: return "bowl_hemisphere";
    case Generator::kBox: return "box";
    case Generator::kBoxWithHinge: return "box_with_hinge";
    case Generator::kCylinderWithHandle: return "cylinder_with_handle";
  }
  return "box";
}

std::optional<Generator> generator_from_name(const std::string& name) {
  for (Generator g :
       {Generator::kCylinder, Generator::kBottleProfile,
        Generator::kBowlHemisphere, Generator::kBox, Generator::kBoxWithHinge,
        Generator::kCylinderWithHandle}) {
    if (name == generator_name(g)) return g;
  }
  return std::nullopt;
}

const CategoryEntry* Dataset::find_category(const std::string& name) const {
  for (const auto& c : categories)
    if (c.spec.name == name) return &c;
  return nullptr;
}

ShapePrior make_prior(const CategorySpec& spec, int n_m) {
  if (n_m < 4) throw InvalidInput("make_prior: need at least 4 points");
  ShapePrior prior;
  prior.points = normalize_to_unit(sample_surface(spec.generator, n_m));
  return prior;
}

SceneInstance render_instance(const std::string& category,
                              const Points& metric, const Mat3& rot,
                              const Vec3& t, const CameraIntrinsics& intr,
                              int image_width, int image_height,
                              int max_patch_points) {
  const Eigen::RowVector3d lo = metric.colwise().minCoeff();
  const Eigen::RowVector3d hi = metric.colwise().maxCoeff();
  const Vec3 extents = (hi - lo).transpose();
  const double iso = extents.maxCoeff();
  const double w = image_width, h = image_height;

  // Canonical model and camera-space model, corresponded row by row.
  Points canonical(metric.rows(), 3);
  Points camera(metric.rows(), 3);
  for (Eigen::Index i = 0; i < metric.rows(); ++i) {
    const Vec3 q = metric.row(i).transpose();
    canonical.row(i) = (q / iso).transpose();
    const Vec3 x = rot * q + t;
    if (x.z() <= 0.0)
      throw DegenerateConfig("render_instance: point behind the camera");
    camera.row(i) = x.transpose();
  }

  // Project and keep the nearest point per integer pixel cell.
  const DepthPatch all = project({camera}, intr);
  std::map<std::pair<int, int>, Eigen::Index> cells;
  for (Eigen::Index i = 0; i < all.size(); ++i) {
    const double u = all.pixels(i, 0), v = all.pixels(i, 1);
    if (u < 0.0 || u >= w || v < 0.0 || v >= h)
      throw DegenerateConfig("render_instance: projection outside the image");
    const std::pair<int, int> key(static_cast<int>(std::floor(v)),
                                  static_cast<int>(std::floor(u)));
    const auto it = cells.find(key);
    if (it == cells.end() || all.depths[i] < all.depths[it->second])
      cells[key] = i;
  }
  if (static_cast<int>(cells.size()) < 8)
    throw DegenerateConfig("render_instance: object covers too few pixels");

  std::vector<Eigen::Index> chosen;
  chosen.reserve(cells.size());
  for (const auto& [key, idx] : cells) chosen.push_back(idx);
  if (static_cast<int>(chosen.size()) > max_patch_points) {
    std::vector<Eigen::Index> strided;
    const double step = static_cast<double>(chosen.size()) /
                        static_cast<double>(max_patch_points);
    strided.reserve(max_patch_points);
    for (int k = 0; k < max_patch_points; ++k)
      strided.push_back(chosen[static_cast<std::size_t>(k * step)]);
    chosen = std::move(strided);
  }

  SceneInstance inst;
  inst.category = category;
  inst.intrinsics = intr;
  inst.gt_pose.rotation = rot;
  inst.gt_pose.translation = t;
  inst.gt_pose.scale = iso;
  inst.gt_size = extents;
  const Eigen::Index np = static_cast<Eigen::Index>(chosen.size());
  inst.depth_patch.pixels.resize(np, 2);
  inst.depth_patch.depths.resize(np);
  inst.gt_nocs.points.resize(np, 3);
  for (Eigen::Index k = 0; k < np; ++k) {
    inst.depth_patch.pixels.row(k) = all.pixels.row(chosen[k]);
    inst.depth_patch.depths[k] = all.depths[chosen[k]];
    inst.gt_nocs.points.row(k) = canonical.row(chosen[k]);
  }
  inst.bbox.l = inst.depth_patch.pixels.col(0).minCoeff();
  inst.bbox.r = inst.depth_patch.pixels.col(0).maxCoeff();
  inst.bbox.t = inst.depth_patch.pixels.col(1).minCoeff();
  inst.bbox.b = inst.depth_patch.pixels.col(1).maxCoeff();
  return inst;
}

SceneInstance sample_instance(const CategorySpec& spec, const GenOptions& opts,
                              std::mt19937_64& rng) {
  const Points base =
      normalize_to_unit(sample_surface(spec.generator, opts.model_points));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double w = opts.image_width, h = opts.image_height;
  const CameraIntrinsics& intr = opts.intrinsics;

  for (int attempt = 0; attempt < 64; ++attempt) {
    // Instance shape: per-axis metric scaling of the base plus smooth noise.
    Vec3 target_size;
    for (int a = 0; a < 3; ++a) {
      target_size[a] = spec.size_min[a] +
                       uni(rng) * (spec.size_max[a] - spec.size_min[a]);
    }
    const auto harmonics = draw_noise(rng, opts.deform_amplitude);
    const Points noisy = apply_noise(base, harmonics);
    const Eigen::RowVector3d lo0 = noisy.colwise().minCoeff();
    const Eigen::RowVector3d hi0 = noisy.colwise().maxCoeff();
    const Eigen::RowVector3d axis_scale =
        target_size.transpose().array() / (hi0 - lo0).array();
    Points metric = noisy.array().rowwise() * axis_scale.array();
    const Eigen::RowVector3d lo = metric.colwise().minCoeff();
    const Eigen::RowVector3d hi = metric.colwise().maxCoeff();
    metric.rowwise() -= 0.5 * (lo + hi);
    const Vec3 extents = (hi - lo).transpose();

    const Mat3 rot = random_rotation(rng);
    const double radius = 0.5 * extents.norm();
    const double z = opts.z_min + uni(rng) * (opts.z_max - opts.z_min);
    if (z - radius < 0.15) continue;
    const double margin_u = intr.fx * radius / (z - radius) + 2.0;
    const double margin_v = intr.fy * radius / (z - radius) + 2.0;
    if (margin_u >= 0.5 * w - 2.0 || margin_v >= 0.5 * h - 2.0) continue;
    const double u0 = margin_u + uni(rng) * (w - 2.0 * margin_u);
    const double v0 = margin_v + uni(rng) * (h - 2.0 * margin_v);
    const Vec3 t =
        z * Vec3((u0 - intr.cx) / intr.fx, (v0 - intr.cy) / intr.fy, 1.0);

    try {
      return render_instance(spec.name, metric, rot, t, intr,
                             opts.image_width, opts.image_height,
                             opts.max_patch_points);
    } catch (const DegenerateConfig&) {
      continue;  // reframe and retry
    }
  }
  throw DegenerateConfig("sample_instance: could not frame instance in image");
}

Dataset generate_dataset(const std::vector<CategorySpec>& specs,
                         int n_per_category, std::uint64_t seed,
                         const GenOptions& opts, int threads) {
  if (n_per_category < 0)
    throw InvalidInput("generate_dataset: negative instance count");
  Dataset ds;
  ds.seed = seed;
  ds.image_width = opts.image_width;
  ds.image_height = opts.image_height;
  for (const auto& spec : specs)
    ds.categories.push_back({spec, make_prior(spec, opts.prior_points)});

  const std::size_t total = specs.size() * static_cast<std::size_t>(n_per_category);
  ds.instances.resize(total);
  parallel_for(total, threads, [&](std::size_t gi) {
    const std::size_t ci = gi / n_per_category;
    auto rng = derive_rng(seed, gi);
    SceneInstance inst = sample_instance(specs[ci], opts, rng);
    inst.id = static_cast<int>(gi);
    ds.instances[gi] = std::move(inst);
  });
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                          double holdout_frac) {
  if (holdout_frac < 0.0 || holdout_frac >= 1.0)
    throw InvalidInput("split_dataset: holdout_frac must be in [0, 1)");
  std::unordered_map<std::string, int> counts, seen;
  for (const auto& inst : ds.instances) ++counts[inst.category];

  Dataset train, test;
  train.seed = test.seed = ds.seed;
  train.image_width = test.image_width = ds.image_width;
  train.image_height = test.image_height = ds.image_height;
  train.categories = test.categories = ds.categories;
  for (const auto& inst : ds.instances) {
    const int n = counts[inst.category];
    const int n_test = static_cast<int>(std::lround(holdout_frac * n));
    const int pos = seen[inst.category]++;
    if (pos < n - n_test)
      train.instances.push_back(inst);
    else
      test.instances.push_back(inst);
  }
  return {std::move(train), std::move(test)};
}

std::map<std::string, bool> symmetry_map(const Dataset& ds) {
  std::map<std::string, bool> out;
  for (const auto& c : ds.categories)
    out[c.spec.name] = c.spec.symmetric_about_y;
  return out;
}

}  // namespace priorpose
