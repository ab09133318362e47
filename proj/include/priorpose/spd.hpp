#pragma once

#include <Eigen/Core>

#include "priorpose/geometry.hpp"

namespace priorpose {

// Canonical category mean shape, centered at the origin with maximum
// per-axis extent <= 1.
struct ShapePrior {
  Points points;  // N_m x 3, NOCS space
  Eigen::Index size() const { return points.rows(); }
};

// Per-prior-point offsets, same space as the prior they deform.
struct DeformField {
  Points offsets;  // N_m x 3
};

// Row-stochastic correspondence from output points to deformed prior points.
struct AssignField {
  Eigen::MatrixXd weights;  // N x N_m, rows sum to 1, entries >= 0
};

// Object-level depth split into relative shape points and a single absolute
// depth of the object center.
struct DecoupledDepth {
  PointCloud shape_points;    // N_p x 3
  double depth_translation;   // Z_t, meters
};

struct LossWeights {
  double depth = 1.0;         // gamma1, per-pixel depth L1
  double adv_disc = 0.1;      // gamma2, discriminator objective
  double adv_gen = 0.1;       // gamma3, generator objective
  double corr = 1.0;          // gamma4, NOCS correspondence smooth-L1
  double chamfer = 5.0;       // gamma5, deformed prior vs instance model
  double entropy = 0.0001;    // gamma6, assign-row peakedness
  double reg = 0.01;          // gamma7, assign-matrix L2
};

bool is_row_stochastic(const AssignField& assign, double tol = 1e-6);

// M * (P_pri + D): deform the prior, then mix rows by the assign weights.
PointCloud spd_apply(const ShapePrior& prior, const DeformField& deform,
                     const AssignField& assign);

// Z_i = shape_points_i.z + Z_t
Eigen::VectorXd assemble_depth(const DecoupledDepth& dec);

// Squared-distance chamfer: mean over A of the nearest squared distance to B
// plus the same with roles swapped.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// Per-axis extent (max - min) of the deformed prior; doubles as the metric
// box size once multiplied by the recovered pose scale.
Vec3 estimate_size(const ShapePrior& prior, const DeformField& deform);

double loss_depth_l1(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt);

// Least-squares adversarial objectives; scores may be scalars or batches.
double loss_adv_discriminator(const Eigen::VectorXd& score_real,
                              const Eigen::VectorXd& score_fake);
double loss_adv_generator(const Eigen::VectorXd& score_fake);

// Smooth-L1 with transition beta = 1, averaged over points and coordinates.
double loss_corr(const PointCloud& pred_nocs, const PointCloud& gt_nocs);

// Mean over rows of -log(max row entry); zero exactly on one-hot rows.
double loss_entropy(const AssignField& assign);

// Mean of squared entries of the assign matrix.
double loss_reg(const AssignField& assign);

struct LossTerms {
  double depth = 0.0;
  double adv_disc = 0.0;
  double adv_gen = 0.0;
  double corr = 0.0;
  double chamfer = 0.0;
  double entropy = 0.0;
  double reg = 0.0;
};

double total_loss(const LossTerms& terms, const LossWeights& w);

}  // namespace priorpose
