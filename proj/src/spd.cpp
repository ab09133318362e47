#include "priorpose/spd.hpp"

#include <cmath>
#include <limits>

namespace priorpose {

bool is_row_stochastic(const AssignField& assign, double tol) {
  if (assign.weights.size() == 0) return false;
  if ((assign.weights.array() < 0.0).any()) return false;
  return ((assign.weights.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

PointCloud spd_apply(const ShapePrior& prior, const DeformField& deform,
                     const AssignField& assign) {
  if (deform.offsets.rows() != prior.size())
    throw InvalidInput("spd_apply: deform rows != prior points");
  if (assign.weights.cols() != prior.size())
    throw InvalidInput("spd_apply: assign columns != prior points");
  PointCloud out;
  out.points = assign.weights * (prior.points + deform.offsets);
  return out;
}

Eigen::VectorXd assemble_depth(const DecoupledDepth& dec) {
  return dec.shape_points.points.col(2).array() + dec.depth_translation;
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.size() < 1 || b.size() < 1)
    throw InvalidInput("chamfer_distance: empty cloud");
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sum_a += (b.points.rowwise() - a.points.row(i)).rowwise().squaredNorm().minCoeff();
  }
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    sum_b += (a.points.rowwise() - b.points.row(j)).rowwise().squaredNorm().minCoeff();
  }
  return sum_a / static_cast<double>(a.size()) +
         sum_b / static_cast<double>(b.size());
}

Vec3 estimate_size(const ShapePrior& prior, const DeformField& deform) {
  if (deform.offsets.rows() != prior.size())
    throw InvalidInput("estimate_size: deform rows != prior points");
  const Points deformed = prior.points + deform.offsets;
  return (deformed.colwise().maxCoeff() - deformed.colwise().minCoeff())
      .transpose();
}

double loss_depth_l1(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt) {
  if (pred.size() != gt.size())
    throw InvalidInput("loss_depth_l1: length mismatch");
  if (pred.size() == 0) throw InvalidInput("loss_depth_l1: empty input");
  return (pred - gt).cwiseAbs().mean();
}

double loss_adv_discriminator(const Eigen::VectorXd& score_real,
                              const Eigen::VectorXd& score_fake) {
  if (score_real.size() == 0 || score_fake.size() == 0)
    throw InvalidInput("loss_adv_discriminator: empty scores");
  return (score_real.array() - 1.0).square().mean() +
         score_fake.array().square().mean();
}

double loss_adv_generator(const Eigen::VectorXd& score_fake) {
  if (score_fake.size() == 0)
    throw InvalidInput("loss_adv_generator: empty scores");
  return (score_fake.array() - 1.0).square().mean();
}

double loss_corr(const PointCloud& pred_nocs, const PointCloud& gt_nocs) {
  if (pred_nocs.size() != gt_nocs.size())
    throw InvalidInput("loss_corr: point count mismatch");
  if (pred_nocs.size() == 0) throw InvalidInput("loss_corr: empty clouds");
  constexpr double beta = 1.0;
  double sum = 0.0;
  const Points diff = pred_nocs.points - gt_nocs.points;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d = std::abs(diff(i, c));
      sum += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
    }
  }
  return sum / static_cast<double>(diff.rows() * 3);
}

double loss_entropy(const AssignField& assign) {
  if (assign.weights.size() == 0) throw InvalidInput("loss_entropy: empty assign");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < assign.weights.rows(); ++i) {
    sum += -std::log(assign.weights.row(i).maxCoeff());
  }
  return sum / static_cast<double>(assign.weights.rows());
}

double loss_reg(const AssignField& assign) {
  if (assign.weights.size() == 0) throw InvalidInput("loss_reg: empty assign");
  return assign.weights.array().square().mean();
}

double total_loss(const LossTerms& t, const LossWeights& w) {
  return w.depth * t.depth + w.adv_disc * t.adv_disc + w.adv_gen * t.adv_gen +
         w.corr * t.corr + w.chamfer * t.chamfer + w.entropy * t.entropy +
         w.reg * t.reg;
}

}  // namespace priorpose
