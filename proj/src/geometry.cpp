#include "priorpose/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace priorpose {

namespace {
constexpr double kPi = 3.14159265358979323846;

double clamp_unit(double x) { return std::min(1.0, std::max(-1.0, x)); }
}  // namespace

bool is_rotation_matrix(const Mat3& r, double tol) {
  const Mat3 rtr = r.transpose() * r;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Ngph ngph_encode(const BBox2D& bbox, const CameraIntrinsics& intr) {
  if (intr.fx <= 0.0 || intr.fy <= 0.0)
    throw InvalidInput("ngph_encode: focal lengths must be positive");
  if (bbox.r <= bbox.l || bbox.b <= bbox.t)
    throw InvalidInput("ngph_encode: degenerate bounding box");
  Ngph out;
  out.g << intr.fx / (bbox.r - bbox.l), intr.fy / (bbox.b - bbox.t),
      (bbox.l - intr.cx) / intr.fx, (bbox.t - intr.cy) / intr.fy,
      (bbox.r - intr.cx) / intr.fx, (bbox.b - intr.cy) / intr.fy;
  return out;
}

PointCloud back_project(const DepthPatch& patch, const CameraIntrinsics& intr) {
  if (patch.pixels.rows() != patch.depths.size())
    throw InvalidInput("back_project: pixel/depth count mismatch");
  if (patch.size() < 1) throw InvalidInput("back_project: empty patch");
  if ((patch.depths.array() <= 0.0).any())
    throw InvalidInput("back_project: non-positive depth");

  PointCloud cloud;
  cloud.points.resize(patch.size(), 3);
  for (Eigen::Index i = 0; i < patch.size(); ++i) {
    const double z = patch.depths[i];
    cloud.points(i, 0) = z * (patch.pixels(i, 0) - intr.cx) / intr.fx;
    cloud.points(i, 1) = z * (patch.pixels(i, 1) - intr.cy) / intr.fy;
    cloud.points(i, 2) = z;
  }
  return cloud;
}

DepthPatch project(const PointCloud& cloud, const CameraIntrinsics& intr) {
  if (cloud.size() < 1) throw InvalidInput("project: empty cloud");
  if ((cloud.points.col(2).array() <= 0.0).any())
    throw InvalidInput("project: point with non-positive z");

  DepthPatch patch;
  patch.pixels.resize(cloud.size(), 2);
  patch.depths.resize(cloud.size());
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const double z = cloud.points(i, 2);
    patch.pixels(i, 0) = intr.fx * cloud.points(i, 0) / z + intr.cx;
    patch.pixels(i, 1) = intr.fy * cloud.points(i, 1) / z + intr.cy;
    patch.depths[i] = z;
  }
  return patch;
}

Pose umeyama_align(const PointCloud& source, const PointCloud& target) {
  const Eigen::Index n = source.size();
  if (n != target.size())
    throw InvalidInput("umeyama_align: point count mismatch");
  if (n < 3) throw InvalidInput("umeyama_align: need at least 3 points");

  const Eigen::RowVector3d mu_src = source.points.colwise().mean();
  const Eigen::RowVector3d mu_tgt = target.points.colwise().mean();
  const Points src_c = source.points.rowwise() - mu_src;
  const Points tgt_c = target.points.rowwise() - mu_tgt;

  // Cross-covariance maps source deviations onto target deviations.
  const Mat3 sigma = (tgt_c.transpose() * src_c) / static_cast<double>(n);
  const double var_src = src_c.squaredNorm() / static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (!(d[1] > 1e-12 * std::max(d[0], 1e-300)))
    throw DegenerateConfig("umeyama_align: source covariance rank < 2");

  Vec3 s_diag = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s_diag[2] = -1.0;

  Pose pose;
  pose.rotation =
      svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
  pose.scale = d.dot(s_diag) / var_src;
  pose.translation =
      mu_tgt.transpose() - pose.scale * pose.rotation * mu_src.transpose();
  return pose;
}

double rotation_error_deg(const Pose& pred, const Pose& gt,
                          bool symmetric_about_y) {
  if (symmetric_about_y) {
    // Any rotation about the canonical y-axis is a no-op for these
    // categories, so only the rotated y-axes are compared. Half-chord asin
    // form of acos(y_pred . y_gt); exact cancellation near zero error.
    const Vec3 y_pred = pred.rotation.col(1);
    const Vec3 y_gt = gt.rotation.col(1);
    const double half_chord = 0.5 * (y_pred - y_gt).norm();
    return 2.0 * std::asin(clamp_unit(half_chord)) * 180.0 / kPi;
  }
  // Geodesic angle acos((trace(R_p^T R_g) - 1) / 2), evaluated through
  // ||R_p - R_g||_F = 2 sqrt(2) sin(theta / 2) which keeps precision for
  // small errors where the trace form bottoms out near 1e-6 degrees.
  const double chord = (pred.rotation - gt.rotation).norm();
  return 2.0 * std::asin(clamp_unit(chord / (2.0 * std::sqrt(2.0)))) * 180.0 /
         kPi;
}

double translation_error_m(const Pose& pred, const Pose& gt) {
  return (pred.translation - gt.translation).norm();
}

}  // namespace priorpose
