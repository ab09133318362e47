#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "priorpose/geometry.hpp"
#include "priorpose/spd.hpp"

namespace priorpose {

enum class Generator {
  kCylinder,            // can
  kBottleProfile,       // cylinder with a tapered neck
  kBowlHemisphere,      // bowl
  kBox,                 // camera
  kBoxWithHinge,        // laptop
  kCylinderWithHandle,  // mug
};

struct CategorySpec {
  std::string name;
  Generator generator = Generator::kBox;
  bool symmetric_about_y = false;
  Vec3 size_min = Vec3::Constant(0.1);  // metric extents, meters
  Vec3 size_max = Vec3::Constant(0.2);
};

// The six benchmark categories with desk-scale metric size ranges.
std::vector<CategorySpec> default_categories();

const char* generator_name(Generator g);
std::optional<Generator> generator_from_name(const std::string& name);

struct GenOptions {
  int prior_points = 128;   // N_m of the category prior
  int model_points = 512;   // dense sampling of each instance surface
  int max_patch_points = 192;
  int image_width = 640;
  int image_height = 480;
  CameraIntrinsics intrinsics{577.5, 577.5, 319.5, 239.5};
  double deform_amplitude = 0.03;  // smooth instance noise, NOCS units
  double z_min = 0.6;              // meters
  double z_max = 2.5;
};

struct SceneInstance {
  int id = 0;
  std::string category;
  Pose gt_pose;           // canonical -> camera
  Vec3 gt_size;           // metric per-axis extents
  CameraIntrinsics intrinsics;
  BBox2D bbox;            // tight bounds of the patch pixels
  DepthPatch depth_patch;
  PointCloud gt_nocs;     // canonical coordinates, row i pairs with pixel i
};

struct CategoryEntry {
  CategorySpec spec;
  ShapePrior prior;
};

struct Dataset {
  std::uint64_t seed = 0;
  int image_width = 640;
  int image_height = 480;
  std::vector<CategoryEntry> categories;
  std::vector<SceneInstance> instances;

  const CategoryEntry* find_category(const std::string& name) const;
};

// Deterministic sampling of the category mean shape, centered at the origin
// and scaled so the maximum per-axis extent is 1. The box generator emits the
// eight cube corners first, so n_m = 8 yields exactly the corners.
ShapePrior make_prior(const CategorySpec& spec, int n_m);

// Renders a posed metric model into a scene instance. `metric` holds the
// instance surface in canonical orientation, in meters, with its extent-box
// center at the origin; camera points are rot * metric + t. Projection keeps
// the nearest point per integer pixel cell, then subsamples to the patch
// budget. Throws DegenerateConfig when the model leaves the image or covers
// fewer than 8 pixel cells.
SceneInstance render_instance(const std::string& category,
                              const Points& metric, const Mat3& rot,
                              const Vec3& t, const CameraIntrinsics& intr,
                              int image_width, int image_height,
                              int max_patch_points);

// Draws one instance: per-axis size inside size_range, smooth low-amplitude
// shape noise, a uniform SO(3) rotation and an in-frustum translation with
// z in [z_min, z_max]; renders the depth patch by point projection with
// per-pixel-cell nearest-depth selection. Retries a bounded number of times
// when the draw cannot be framed, then throws DegenerateConfig.
SceneInstance sample_instance(const CategorySpec& spec, const GenOptions& opts,
                              std::mt19937_64& rng);

Dataset generate_dataset(const std::vector<CategorySpec>& specs,
                         int n_per_category, std::uint64_t seed,
                         const GenOptions& opts = {}, int threads = 1);

// Per-category split: the first (1 - holdout_frac) of each category's
// instances in id order form the train set, the rest the test set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                          double holdout_frac);

std::map<std::string, bool> symmetry_map(const Dataset& ds);

}  // namespace priorpose
