#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "priorpose/mlp.hpp"
#include "priorpose/spd.hpp"
#include "priorpose/synth.hpp"

namespace priorpose {

struct ModelConfig {
  int c = 64;    // per-point feature width
  int cg = 256;  // global feature width (must be even)
  int nm = 128;  // prior points the heads are sized for
  int head_hidden = 128;
  bool use_ngph = true;         // feed NGPH and box-normalize the Z_t output
  bool decouple_depth = true;   // separate depth-translation head
  bool direct_regression = false;  // pointwise heads instead of deform/assign
  bool ngph_to_nocs = false;    // also feed NGPH to the NOCS heads
  Activation hidden_act = Activation::kTanh;
  std::uint64_t init_seed = 0;

  // Per-pixel rows: bbox-normalized (u, v), the camera-normalized ray
  // ((u-cx)/fx, (v-cy)/fy), the 6-wide local descriptor, then product
  // terms of pixel coordinates and descriptor entries.
  static constexpr int kDescriptorDim = 6;
  static constexpr int kProductDim = 26;
  int obs_dim() const { return 4 + kDescriptorDim + kProductDim; }
};

// Per-instance network inputs plus supervision targets. The observation rows
// pair bbox-normalized pixel coordinates with a synthetic local descriptor
// standing in for learned image features; descriptors are depth-free (they
// never encode the object translation).
struct InstanceInputs {
  Eigen::MatrixXd obs;       // N_p x obs_dim()
  Points prior;              // N_m x 3
  Eigen::Matrix<double, 6, 1> ngph;
  double g0 = 1.0;           // ngph[0]; Z_t output is scaled by it
  Eigen::VectorXd lift_x;    // (u - cx) / fx per pixel
  Eigen::VectorXd lift_y;    // (v - cy) / fy per pixel
  Eigen::VectorXd gt_z;      // per-pixel ground-truth depth
  Points gt_nocs;            // per-pixel ground-truth canonical coordinates
};

InstanceInputs make_instance_inputs(const SceneInstance& instance,
                                    const ShapePrior& prior,
                                    std::uint64_t feature_seed,
                                    const ModelConfig& config);

struct FeatureBundle {
  Eigen::MatrixXd f_pri;        // N_m x C
  Eigen::MatrixXd f_obs;        // N_p x C
  Eigen::RowVectorXd f_pos;     // 2C
  Eigen::RowVectorXd f_g_obs;   // C_g
  Eigen::RowVectorXd f_g_pri;   // C_g
};

struct ForwardResult {
  DeformField deform_depth;
  AssignField assign_depth;
  double zt = 0.0;
  DeformField deform_nocs;
  AssignField assign_nocs;
  Eigen::VectorXd z_pred;   // assembled per-pixel depth
  PointCloud cam_cloud;     // lifted predicted depth
  PointCloud p_depth;       // depth-side shape points
  PointCloud p_nocs;        // predicted canonical representation
  FeatureBundle features;
};

struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

// Intermediate activations of one forward pass, consumed by the backward
// pass. Opaque to callers.
struct Trace {
  std::vector<Eigen::MatrixXd> t_obs, t_pri, t_pos, t_gobs, t_gpri;
  std::vector<Eigen::MatrixXd> t_deform_d, t_assign_d, t_zt;
  std::vector<Eigen::MatrixXd> t_fdep, t_g2, t_deform_n, t_assign_n;
  std::vector<Eigen::MatrixXd> t_dr_depth, t_dr_nocs;
  Eigen::MatrixXd f_obs, f_pri;
  Eigen::RowVectorXd f_pos, f_gobs, f_gpri, f_g2;
  Eigen::RowVectorXd raw_mean;  // column means of the observation rows
  Eigen::MatrixXd logits_d, m_depth, d_depth;
  double h = 0.0;
  Eigen::MatrixXd p_depth;
  Eigen::VectorXd z;
  Eigen::MatrixXd cam, cam_centered;
  Eigen::MatrixXd f_dep, f_obs2;
  Eigen::MatrixXd logits_n, m_nocs, d_nocs, p_nocs;
};

class SddrModel {
 public:
  ModelConfig config;
  Mlp obs_enc, pri_enc, pos_enc, gobs, gpri;
  Mlp deform_d, assign_d, zt_head;
  Mlp fdep_enc, g2;
  Mlp deform_n, assign_n;
  Mlp dr_depth, dr_nocs;  // direct-regression variants

  static SddrModel init(const ModelConfig& config);
  static SddrModel zeros_like(const SddrModel& other);

  ForwardResult forward(const InstanceInputs& in) const;
  ForwardResult forward(const InstanceInputs& in, Trace& trace) const;

  // Stable enumeration of every parameter tensor; the order matches between
  // a model and its zeros_like clone.
  std::vector<TensorRef> parameters();
  Eigen::Index parameter_count() const;
};

struct DiscTrace {
  std::vector<Eigen::MatrixXd> t_point, t_score;
};

// Permutation-invariant point-set scorer: per-point MLP, mean pooling, then
// a scoring MLP producing one real value.
class Discriminator {
 public:
  int c = 64;
  Mlp point_mlp, score_mlp;

  static Discriminator init(int c, Activation hidden_act,
                            std::uint64_t seed);
  static Discriminator zeros_like(const Discriminator& other);

  double score(const Points& cloud) const;
  double score(const Points& cloud, DiscTrace& trace) const;
  void backward_params(const DiscTrace& trace, double d_score,
                       Discriminator* grads) const;
  Eigen::MatrixXd backward_input(const DiscTrace& trace, double d_score) const;

  std::vector<TensorRef> parameters();
};

// One training step's forward state: model trace, discriminator traces on
// the predicted and ground-truth clouds, loss terms and the nearest-neighbor
// indices the chamfer term selected.
struct StepTrace {
  Trace model;
  DiscTrace disc_fake, disc_real;
  double score_fake = 0.0, score_real = 0.0;
  LossTerms terms;
  std::vector<int> nn_ab, nn_ba;
  bool adversarial = true;
};

// Computes every loss term of the composite objective on one instance.
LossTerms compute_losses(const SddrModel& model, const Discriminator& disc,
                         const InstanceInputs& in, bool adversarial,
                         StepTrace* trace);

// The scalar the main-network step minimizes: the composite loss without the
// discriminator term (which only trains the discriminator).
double main_objective(const LossTerms& terms, const LossWeights& w);

// Analytic gradients of main_objective w.r.t. every model parameter; the
// discriminator is treated as frozen (gradients flow through its input).
void backward_main(const SddrModel& model, const Discriminator& disc,
                   const InstanceInputs& in, const StepTrace& trace,
                   const LossWeights& w, SddrModel* grads);

// Analytic gradients of the discriminator objective w.r.t. its parameters;
// the predicted cloud is treated as a constant.
void backward_disc(const Discriminator& disc, const StepTrace& trace,
                   Discriminator* grads);

}  // namespace priorpose
