#include "priorpose/eval.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

namespace priorpose {

namespace {

using Polygon = std::vector<Vec3>;

struct HalfSpace {
  Vec3 n;    // outward unit normal
  double d;  // plane n.x = d, inside is n.x <= d
};

std::vector<Polygon> box_faces(const OrientedBox3D& box) {
  const Mat3& r = box.pose.rotation;
  const Vec3& t = box.pose.translation;
  const Vec3 h = 0.5 * box.size;
  auto corner = [&](int sx, int sy, int sz) {
    return Vec3(t + r * Vec3(sx * h.x(), sy * h.y(), sz * h.z()));
  };
  // Each quad wound counterclockwise seen from outside the box.
  std::vector<Polygon> faces;
  faces.push_back({corner(1, -1, -1), corner(1, 1, -1), corner(1, 1, 1),
                   corner(1, -1, 1)});  // +x
  faces.push_back({corner(-1, -1, -1), corner(-1, -1, 1), corner(-1, 1, 1),
                   corner(-1, 1, -1)});  // -x
  faces.push_back({corner(-1, 1, -1), corner(-1, 1, 1), corner(1, 1, 1),
                   corner(1, 1, -1)});  // +y
  faces.push_back({corner(-1, -1, -1), corner(1, -1, -1), corner(1, -1, 1),
                   corner(-1, -1, 1)});  // -y
  faces.push_back({corner(-1, -1, 1), corner(1, -1, 1), corner(1, 1, 1),
                   corner(-1, 1, 1)});  // +z
  faces.push_back({corner(-1, -1, -1), corner(-1, 1, -1), corner(1, 1, -1),
                   corner(1, -1, -1)});  // -z
  return faces;
}

std::vector<HalfSpace> box_half_spaces(const OrientedBox3D& box) {
  std::vector<HalfSpace> hs;
  hs.reserve(6);
  for (int axis = 0; axis < 3; ++axis) {
    const Vec3 n = box.pose.rotation.col(axis);
    const double center = n.dot(box.pose.translation);
    hs.push_back({n, center + 0.5 * box.size[axis]});
    hs.push_back({-n, -(center - 0.5 * box.size[axis])});
  }
  return hs;
}

// Clips every face against one half-space (Sutherland-Hodgman) and seals the
// polytope with a cap polygon on the clip plane, keeping outward winding.
void clip_polytope(std::vector<Polygon>& faces, const HalfSpace& hs,
                   double eps, double dedupe_tol) {
  std::vector<Polygon> kept;
  std::vector<Vec3> cap_points;
  for (const Polygon& poly : faces) {
    Polygon out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& p = poly[i];
      const Vec3& q = poly[(i + 1) % n];
      const double dp = hs.n.dot(p) - hs.d;
      const double dq = hs.n.dot(q) - hs.d;
      const bool pin = dp <= eps;
      const bool qin = dq <= eps;
      if (pin) out.push_back(p);
      if (pin != qin) {
        const Vec3 x = p + (dp / (dp - dq)) * (q - p);
        out.push_back(x);
        cap_points.push_back(x);
      }
    }
    if (out.size() >= 3) kept.push_back(std::move(out));
  }

  // Deduplicate cap ring vertices; coincident ones come from shared edges.
  std::vector<Vec3> ring;
  for (const Vec3& p : cap_points) {
    bool dup = false;
    for (const Vec3& q : ring) {
      if ((p - q).squaredNorm() <= dedupe_tol * dedupe_tol) {
        dup = true;
        break;
      }
    }
    if (!dup) ring.push_back(p);
  }
  if (ring.size() >= 3) {
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : ring) centroid += p;
    centroid /= static_cast<double>(ring.size());
    const Vec3 e = std::abs(hs.n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 u = e.cross(hs.n).normalized();
    const Vec3 v = hs.n.cross(u);
    std::sort(ring.begin(), ring.end(), [&](const Vec3& a, const Vec3& b) {
      const Vec3 da = a - centroid, db = b - centroid;
      return std::atan2(da.dot(v), da.dot(u)) <
             std::atan2(db.dot(v), db.dot(u));
    });
    kept.push_back(std::move(ring));
  }
  faces = std::move(kept);
}

double polytope_volume(const std::vector<Polygon>& faces) {
  double six_v = 0.0;
  for (const Polygon& poly : faces) {
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
      six_v += poly[0].dot(poly[i].cross(poly[i + 1]));
    }
  }
  return std::max(six_v / 6.0, 0.0);
}

}  // namespace

double box_volume(const OrientedBox3D& box) {
  if ((box.size.array() <= 0.0).any())
    throw InvalidInput("box_volume: non-positive box size");
  return box.size.prod();
}

double iou3d(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double vol_a = box_volume(a);
  const double vol_b = box_volume(b);
  const double scale = a.size.norm() + b.size.norm() +
                       (a.pose.translation - b.pose.translation).norm();
  const double eps = 1e-12 * std::max(scale, 1.0);

  std::vector<Polygon> poly = box_faces(a);
  for (const HalfSpace& hs : box_half_spaces(b)) {
    clip_polytope(poly, hs, eps, 1e3 * eps);
    if (poly.empty()) return 0.0;
  }
  const double inter = std::min(polytope_volume(poly), std::min(vol_a, vol_b));
  const double uni = vol_a + vol_b - inter;
  return std::min(1.0, std::max(0.0, inter / uni));
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<Detection>& gts) {
  struct Candidate {
    double iou;
    int det, gt;
  };
  std::vector<Candidate> cands;
  for (int i = 0; i < static_cast<int>(dets.size()); ++i) {
    for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
      if (dets[i].category != gts[j].category) continue;
      const double v = iou3d(dets[i].box, gts[j].box);
      if (v > 0.0) cands.push_back({v, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.det != b.det) return a.det < b.det;
    return a.gt < b.gt;
  });

  MatchResult result;
  std::vector<bool> det_used(dets.size(), false), gt_used(gts.size(), false);
  for (const Candidate& c : cands) {
    if (det_used[c.det] || gt_used[c.gt]) continue;
    det_used[c.det] = true;
    gt_used[c.gt] = true;
    result.pairs.emplace_back(c.det, c.gt);
  }
  for (int i = 0; i < static_cast<int>(dets.size()); ++i)
    if (!det_used[i]) result.unmatched_dets.push_back(i);
  for (int j = 0; j < static_cast<int>(gts.size()); ++j)
    if (!gt_used[j]) result.unmatched_gts.push_back(j);
  return result;
}

std::vector<GtRecord> evaluate_scene(
    const std::vector<Detection>& dets, const std::vector<Detection>& gts,
    const std::map<std::string, bool>& symmetric_about_y) {
  const MatchResult match = match_detections(dets, gts);
  std::vector<GtRecord> records(gts.size());
  for (std::size_t j = 0; j < gts.size(); ++j) {
    records[j].category = gts[j].category;
    records[j].matched = false;
  }
  for (const auto& [di, gj] : match.pairs) {
    const auto it = symmetric_about_y.find(gts[gj].category);
    const bool sym = it != symmetric_about_y.end() && it->second;
    GtRecord& r = records[gj];
    r.matched = true;
    r.iou = iou3d(dets[di].box, gts[gj].box);
    r.rot_deg = rotation_error_deg(dets[di].pose, gts[gj].pose, sym);
    r.trans_m = translation_error_m(dets[di].pose, gts[gj].pose);
  }
  return records;
}

bool satisfies(const GtRecord& r, const Criterion& c) {
  if (!r.matched) return false;
  switch (c.kind) {
    case MetricKind::kIou:
      return r.iou > c.tau;
    case MetricKind::kRotation:
      return r.rot_deg < c.tau;
    case MetricKind::kTranslation:
      return r.trans_m < c.tau;
    case MetricKind::kRotationTranslation:
      return r.rot_deg < c.tau && r.trans_m < c.tau_trans;
  }
  return false;
}

double ap_at(const std::vector<GtRecord>& records, const Criterion& c) {
  if (records.empty())
    throw InvalidInput("ap_at: no ground-truth instances");
  std::size_t hit = 0;
  for (const GtRecord& r : records)
    if (satisfies(r, c)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

std::vector<double> iou_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(0.01 * i);
  return grid;
}

std::vector<double> rotation_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 60; ++i) grid.push_back(static_cast<double>(i));
  return grid;
}

std::vector<double> translation_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.005 * i);
  return grid;
}

EvalReport make_report(const std::vector<GtRecord>& records, bool with_curves) {
  std::map<std::string, std::vector<GtRecord>> by_category;
  for (const GtRecord& r : records) by_category[r.category].push_back(r);

  auto six = [](const std::vector<GtRecord>& recs) {
    CategoryAp ap;
    ap.iou25 = ap_at(recs, {MetricKind::kIou, 0.25});
    ap.iou50 = ap_at(recs, {MetricKind::kIou, 0.50});
    ap.iou75 = ap_at(recs, {MetricKind::kIou, 0.75});
    ap.cm10 = ap_at(recs, {MetricKind::kTranslation, 0.10});
    ap.deg10 = ap_at(recs, {MetricKind::kRotation, 10.0});
    ap.deg10cm10 = ap_at(recs, {MetricKind::kRotationTranslation, 10.0, 0.10});
    return ap;
  };

  EvalReport report;
  for (const auto& [cat, recs] : by_category) report.per_category[cat] = six(recs);

  const double n = static_cast<double>(report.per_category.size());
  for (const auto& [cat, ap] : report.per_category) {
    report.mean.iou25 += ap.iou25 / n;
    report.mean.iou50 += ap.iou50 / n;
    report.mean.iou75 += ap.iou75 / n;
    report.mean.cm10 += ap.cm10 / n;
    report.mean.deg10 += ap.deg10 / n;
    report.mean.deg10cm10 += ap.deg10cm10 / n;
  }

  if (with_curves) {
    auto fill = [&](const std::vector<double>& grid, MetricKind kind,
                    std::map<std::string, std::vector<CurvePoint>>& out) {
      std::vector<CurvePoint> mean_curve(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k)
        mean_curve[k].threshold = grid[k];
      for (const auto& [cat, recs] : by_category) {
        std::vector<CurvePoint> curve;
        curve.reserve(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
          const double ap = ap_at(recs, {kind, grid[k]});
          curve.push_back({grid[k], ap});
          mean_curve[k].ap += ap / static_cast<double>(by_category.size());
        }
        out[cat] = std::move(curve);
      }
      if (!by_category.empty()) out["mean"] = std::move(mean_curve);
    };
    fill(iou_threshold_grid(), MetricKind::kIou, report.iou_curves);
    fill(rotation_threshold_grid(), MetricKind::kRotation,
         report.rotation_curves);
    fill(translation_threshold_grid(), MetricKind::kTranslation,
         report.translation_curves);
  }
  return report;
}

}  // namespace priorpose
