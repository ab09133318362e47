#pragma once

#include <map>
#include <string>
#include <vector>

#include "priorpose/geometry.hpp"

namespace priorpose {

// Oriented 3D bounding box: centered at pose.translation, axes given by
// pose.rotation, full metric extents in `size`. pose.scale plays no role in
// the box geometry (it is already folded into size).
struct OrientedBox3D {
  Pose pose;
  Vec3 size = Vec3::Ones();
};

struct Detection {
  std::string category;
  OrientedBox3D box;
  Pose pose;
};

double box_volume(const OrientedBox3D& box);

// Exact intersection-over-union of two oriented boxes. The intersection
// volume comes from clipping box A against B's six half-spaces and
// integrating the resulting polytope with the divergence theorem.
double iou3d(const OrientedBox3D& a, const OrientedBox3D& b);

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (det index, gt index)
  std::vector<int> unmatched_dets;         // false positives
  std::vector<int> unmatched_gts;          // false negatives
};

// Greedy one-to-one matching by descending 3D IoU within category. Pairs
// with zero IoU are never matched.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<Detection>& gts);

// One record per ground-truth instance; errors are only meaningful when
// matched. Scenes are evaluated independently and records pooled.
struct GtRecord {
  std::string category;
  bool matched = false;
  double iou = 0.0;
  double rot_deg = 0.0;
  double trans_m = 0.0;
};

std::vector<GtRecord> evaluate_scene(
    const std::vector<Detection>& dets, const std::vector<Detection>& gts,
    const std::map<std::string, bool>& symmetric_about_y);

enum class MetricKind { kIou, kRotation, kTranslation, kRotationTranslation };

struct Criterion {
  MetricKind kind = MetricKind::kIou;
  double tau = 0.0;        // IoU / degrees / meters depending on kind
  double tau_trans = 0.0;  // meters, for the joint criterion
};

bool satisfies(const GtRecord& record, const Criterion& criterion);

// Fraction of ground-truth instances whose match satisfies the criterion.
// Throws InvalidInput when there are no ground-truth records.
double ap_at(const std::vector<GtRecord>& records, const Criterion& criterion);

struct CategoryAp {
  double iou25 = 0.0;
  double iou50 = 0.0;
  double iou75 = 0.0;
  double cm10 = 0.0;
  double deg10 = 0.0;
  double deg10cm10 = 0.0;
};

struct CurvePoint {
  double threshold = 0.0;
  double ap = 0.0;
};

struct EvalReport {
  // Categories with zero ground-truth instances are absent (not zero) and
  // excluded from the mean.
  std::map<std::string, CategoryAp> per_category;
  CategoryAp mean;
  std::map<std::string, std::vector<CurvePoint>> iou_curves;
  std::map<std::string, std::vector<CurvePoint>> rotation_curves;
  std::map<std::string, std::vector<CurvePoint>> translation_curves;
};

// Threshold grids for the AP-vs-threshold curves.
std::vector<double> iou_threshold_grid();          // 0..1 step 0.01
std::vector<double> rotation_threshold_grid();     // 0..60 deg step 1
std::vector<double> translation_threshold_grid();  // 0..0.10 m step 0.005

EvalReport make_report(const std::vector<GtRecord>& records,
                       bool with_curves = true);

}  // namespace priorpose
