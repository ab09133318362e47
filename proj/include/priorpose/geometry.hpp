#pragma once

#include <Eigen/Core>

#include "priorpose/common.hpp"

namespace priorpose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points = Eigen::MatrixX3d;  // N x 3, one point per row

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

// 2D detection box in image coordinates (pixels).
struct BBox2D {
  double l = 0.0, t = 0.0, r = 0.0, b = 0.0;
  double width() const { return r - l; }
  double height() const { return b - t; }
  bool contains(double u, double v) const {
    return u >= l && u <= r && v >= t && v <= b;
  }
};

// Normalized global position hints: the 2D box and intrinsics folded into a
// camera-normalized 6-vector. Restores the absolute position/scale cues that
// cropping to a patch destroys.
struct Ngph {
  Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
};

// Similarity transform mapping canonical (NOCS) space into camera space:
// x_cam = scale * rotation * x_nocs + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
};

struct PointCloud {
  Points points;  // meters in camera space or dimensionless in NOCS space
  Eigen::Index size() const { return points.rows(); }
};

// Sampled per-pixel object depth inside a detection box. Pixel coordinates
// stay in the original image frame (not patch-local).
struct DepthPatch {
  Eigen::MatrixX2d pixels;   // (u, v) per row
  Eigen::VectorXd depths;    // Z in meters, strictly positive
  Eigen::Index size() const { return depths.size(); }
};

bool is_rotation_matrix(const Mat3& r, double tol = 1e-9);

// g = [fx/(r-l), fy/(b-t), (l-cx)/fx, (t-cy)/fy, (r-cx)/fx, (b-cy)/fy]
Ngph ngph_encode(const BBox2D& bbox, const CameraIntrinsics& intr);

// Pinhole back-projection of per-pixel depths into a camera-space cloud.
PointCloud back_project(const DepthPatch& patch, const CameraIntrinsics& intr);

// Pinhole projection; inverse of back_project for z > 0.
DepthPatch project(const PointCloud& cloud, const CameraIntrinsics& intr);

// Closed-form least-squares similarity alignment (Umeyama): finds
// (s, R, t) minimizing sum ||target_i - (s R source_i + t)||^2. Reflections
// are corrected through the sign of det(U) det(V) on the middle diagonal
// factor of the SVD recomposition, so the result is always a proper rotation.
// Throws InvalidInput on size mismatch or N < 3 and DegenerateConfig when the
// source covariance has rank < 2 (collinear or coincident points).
Pose umeyama_align(const PointCloud& source, const PointCloud& target);

// Geodesic rotation error in degrees. For categories symmetric about their
// canonical y-axis only the angle between the rotated y-axes counts.
double rotation_error_deg(const Pose& pred, const Pose& gt,
                          bool symmetric_about_y);

double translation_error_m(const Pose& pred, const Pose& gt);

}  // namespace priorpose
