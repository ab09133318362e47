#include "priorpose/model.hpp"

#include <cmath>

namespace priorpose {

namespace {

constexpr std::uint64_t kDescriptorNoiseSalt = 0x517cc1b727220a95ULL;
constexpr double kDescriptorNoiseSigma = 0.01;

// Assignment softmax temperature. Head outputs start near zero and Adam
// moves them slowly; the temperature lets assignments sharpen within a
// desk-scale step budget.
constexpr double kAssignTau = 0.2;

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = ((logits.row(i).array() - m) / kAssignTau).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

// d(softmax)/d(logits) applied to an upstream gradient, row by row.
Eigen::MatrixXd row_softmax_backward(const Eigen::MatrixXd& soft,
                                     const Eigen::MatrixXd& d_soft) {
  Eigen::MatrixXd out(soft.rows(), soft.cols());
  for (Eigen::Index i = 0; i < soft.rows(); ++i) {
    const double dot = soft.row(i).dot(d_soft.row(i));
    out.row(i) =
        (soft.row(i).array() * (d_soft.row(i).array() - dot) / kAssignTau)
            .matrix();
  }
  return out;
}

Eigen::MatrixXd repeat_row(const Eigen::RowVectorXd& row, Eigen::Index n) {
  return row.replicate(n, 1);
}

// Symmetric pooling: column means concatenated with a smooth soft-max
// (log-sum-exp at temperature kLseTau). The soft-max half exposes extents,
// which mean pooling alone flattens out.
constexpr double kLseTau = 0.1;

Eigen::RowVectorXd pool_features(const Eigen::MatrixXd& pp) {
  const Eigen::Index w = pp.cols();
  Eigen::RowVectorXd out(2 * w);
  out.head(w) = pp.colwise().mean();
  for (Eigen::Index j = 0; j < w; ++j) {
    const double m = pp.col(j).maxCoeff();
    const double s = ((pp.col(j).array() - m) / kLseTau).exp().mean();
    out[w + j] = m + kLseTau * std::log(s);
  }
  return out;
}

Eigen::MatrixXd pool_backward(const Eigen::MatrixXd& pp,
                              const Eigen::RowVectorXd& d_pool) {
  const Eigen::Index n = pp.rows(), w = pp.cols();
  Eigen::MatrixXd out =
      d_pool.head(w).replicate(n, 1) / static_cast<double>(n);
  for (Eigen::Index j = 0; j < w; ++j) {
    const double m = pp.col(j).maxCoeff();
    Eigen::ArrayXd e = ((pp.col(j).array() - m) / kLseTau).exp();
    e /= e.sum();
    out.col(j) += d_pool[w + j] * e.matrix();
  }
  return out;
}

// NGPH conditioning for the position encoder: the two box-size terms span a
// wide multiplicative range, so they enter in log form.
Eigen::RowVectorXd ngph_input(const Eigen::Matrix<double, 6, 1>& g) {
  Eigen::RowVectorXd x(6);
  x << std::log(g[0]), std::log(g[1]), g[2], g[3], g[4], g[5];
  return x;
}

struct ChamferParts {
  double value = 0.0;
  std::vector<int> nn_ab, nn_ba;
};

ChamferParts chamfer_with_indices(const Points& a, const Points& b) {
  ChamferParts out;
  out.nn_ab.resize(a.rows());
  out.nn_ba.resize(b.rows());
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::Index j;
    sum_a += (b.rowwise() - a.row(i)).rowwise().squaredNorm().minCoeff(&j);
    out.nn_ab[i] = static_cast<int>(j);
  }
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    Eigen::Index i;
    sum_b += (a.rowwise() - b.row(j)).rowwise().squaredNorm().minCoeff(&i);
    out.nn_ba[j] = static_cast<int>(i);
  }
  out.value = sum_a / static_cast<double>(a.rows()) +
              sum_b / static_cast<double>(b.rows());
  return out;
}

double smooth_l1_mean(const Points& pred, const Points& gt) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d = std::abs(pred(i, c) - gt(i, c));
      sum += d < 1.0 ? 0.5 * d * d : d - 0.5;
    }
  }
  return sum / static_cast<double>(pred.rows() * 3);
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void add_mlp_params(std::vector<TensorRef>& out, const std::string& prefix,
                    Mlp& mlp) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    auto& layer = mlp.layers[l];
    out.push_back({prefix + "." + std::to_string(l) + ".w", layer.w.data(),
                   layer.w.rows(), layer.w.cols()});
    out.push_back({prefix + "." + std::to_string(l) + ".b", layer.b.data(), 1,
                   layer.b.cols()});
  }
}

}  // namespace

InstanceInputs make_instance_inputs(const SceneInstance& instance,
                                    const ShapePrior& prior,
                                    std::uint64_t feature_seed,
                                    const ModelConfig& config) {
  const Eigen::Index np = instance.depth_patch.size();
  InstanceInputs in;
  in.prior = prior.points;
  in.ngph = ngph_encode(instance.bbox, instance.intrinsics).g;
  in.g0 = in.ngph[0];
  in.gt_z = instance.depth_patch.depths;
  in.gt_nocs = instance.gt_nocs.points;
  in.lift_x.resize(np);
  in.lift_y.resize(np);
  in.obs.resize(np, config.obs_dim());

  auto noise_rng = derive_rng(feature_seed ^ kDescriptorNoiseSalt,
                              static_cast<std::uint64_t>(instance.id));
  std::normal_distribution<double> gauss(0.0, kDescriptorNoiseSigma);

  const double ub = 0.5 * (instance.bbox.l + instance.bbox.r);
  const double vb = 0.5 * (instance.bbox.t + instance.bbox.b);
  const double uw = 0.5 * instance.bbox.width();
  const double vh = 0.5 * instance.bbox.height();
  const Mat3& rot = instance.gt_pose.rotation;
  const double s = instance.gt_pose.scale;

  for (Eigen::Index i = 0; i < np; ++i) {
    const double u = instance.depth_patch.pixels(i, 0);
    const double v = instance.depth_patch.pixels(i, 1);
    in.lift_x[i] = (u - instance.intrinsics.cx) / instance.intrinsics.fx;
    in.lift_y[i] = (v - instance.intrinsics.cy) / instance.intrinsics.fy;
    in.obs(i, 0) = (u - ub) / uw;
    in.obs(i, 1) = (v - vb) / vh;
    in.obs(i, 2) = in.lift_x[i];
    in.obs(i, 3) = in.lift_y[i];

    // Depth-free local descriptor: a noisy per-pixel canonical coordinate
    // (what dense-prediction backbones emit in this task) plus the metric
    // view-frame surface offset. Neither encodes the object translation.
    const Vec3 n = instance.gt_nocs.points.row(i).transpose();
    const Vec3 m = s * (rot * n);
    Vec3 nh, mh;
    for (int d = 0; d < 3; ++d) {
      nh[d] = n[d] + gauss(noise_rng);
      mh[d] = 4.0 * m[d] + gauss(noise_rng);
      in.obs(i, 4 + d) = nh[d];
      in.obs(i, 7 + d) = mh[d];
    }
    // Product terms of the observables. Mean pooling of these rows carries
    // the pixel/offset covariance statistics that pin absolute depth and
    // orientation; first-order pooling alone flattens them out.
    const double ax = in.lift_x[i], ay = in.lift_y[i];
    const double un = in.obs(i, 0), vn = in.obs(i, 1);
    in.obs(i, 10) = un * un;
    in.obs(i, 11) = vn * vn;
    in.obs(i, 12) = un * vn;
    for (int d = 0; d < 3; ++d) {
      in.obs(i, 13 + d) = un * mh[d];
      in.obs(i, 16 + d) = vn * mh[d];
      in.obs(i, 19 + d) = ax * mh[d];
      in.obs(i, 22 + d) = ay * mh[d];
    }
    in.obs(i, 25) = un * ax * mh[2];
    in.obs(i, 26) = vn * ay * mh[2];
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) in.obs(i, 27 + 3 * j + k) = nh[j] * mh[k];
  }
  return in;
}

SddrModel SddrModel::init(const ModelConfig& cfg) {
  if (cfg.cg % 2 != 0)
    throw InvalidInput("ModelConfig: cg must be even (mean + soft-max pool)");
  SddrModel m;
  m.config = cfg;
  auto rng = derive_rng(cfg.init_seed, 0xabcd);
  const Activation act = cfg.hidden_act;
  const int c = cfg.c, cg = cfg.cg, hh = cfg.head_hidden;
  const int d = cfg.obs_dim();  // raw pooled moments ride along the globals
  const auto I = Activation::kIdentity;

  m.obs_enc = Mlp::make({cfg.obs_dim(), c, c}, {act, act}, rng);
  m.pri_enc = Mlp::make({3, c, c}, {act, act}, rng);
  m.pos_enc = Mlp::make({6, c, 2 * c}, {act, act}, rng);
  m.gobs = Mlp::make({c, cg / 2}, {act}, rng);
  m.gpri = Mlp::make({c, cg / 2}, {act}, rng);
  m.deform_d = Mlp::make({3 * c + 2 * cg + d, hh, 3}, {act, I}, rng);
  m.assign_d = Mlp::make({3 * c + 2 * cg + d, hh, cfg.nm}, {act, I}, rng);
  m.zt_head = Mlp::make({2 * c + cg + d, hh, 1}, {act, I}, rng);
  m.fdep_enc = Mlp::make({3, c, c}, {act, act}, rng);
  m.g2 = Mlp::make({2 * c, cg / 2}, {act}, rng);
  const int nocs_extra = cfg.ngph_to_nocs ? 2 * c : 0;
  m.deform_n = Mlp::make({c + 2 * cg + d + nocs_extra, hh, 3}, {act, I}, rng);
  m.assign_n = Mlp::make({2 * c + 2 * cg + d + nocs_extra, hh, cfg.nm}, {act, I}, rng);
  m.dr_depth = Mlp::make({3 * c + cg + d, hh, 3}, {act, I}, rng);
  m.dr_nocs = Mlp::make({2 * c + cg + d + nocs_extra, hh, 3}, {act, I}, rng);
  return m;
}

SddrModel SddrModel::zeros_like(const SddrModel& other) {
  SddrModel m = other;
  for (Mlp* mlp : {&m.obs_enc, &m.pri_enc, &m.pos_enc, &m.gobs, &m.gpri,
                   &m.deform_d, &m.assign_d, &m.zt_head, &m.fdep_enc, &m.g2,
                   &m.deform_n, &m.assign_n, &m.dr_depth, &m.dr_nocs})
    mlp->set_zero();
  return m;
}

std::vector<TensorRef> SddrModel::parameters() {
  std::vector<TensorRef> out;
  add_mlp_params(out, "obs_enc", obs_enc);
  add_mlp_params(out, "pri_enc", pri_enc);
  if (config.use_ngph) add_mlp_params(out, "pos_enc", pos_enc);
  add_mlp_params(out, "gobs", gobs);
  add_mlp_params(out, "gpri", gpri);
  if (config.direct_regression) {
    add_mlp_params(out, "dr_depth", dr_depth);
    add_mlp_params(out, "dr_nocs", dr_nocs);
  } else {
    add_mlp_params(out, "deform_d", deform_d);
    add_mlp_params(out, "assign_d", assign_d);
    add_mlp_params(out, "deform_n", deform_n);
    add_mlp_params(out, "assign_n", assign_n);
  }
  if (config.decouple_depth) add_mlp_params(out, "zt_head", zt_head);
  add_mlp_params(out, "fdep_enc", fdep_enc);
  add_mlp_params(out, "g2", g2);
  return out;
}

Eigen::Index SddrModel::parameter_count() const {
  Eigen::Index n = 0;
  auto& self = const_cast<SddrModel&>(*this);
  for (const TensorRef& t : self.parameters()) n += t.size();
  return n;
}

ForwardResult SddrModel::forward(const InstanceInputs& in) const {
  Trace trace;
  return forward(in, trace);
}

ForwardResult SddrModel::forward(const InstanceInputs& in, Trace& tr) const {
  if (in.obs.cols() != config.obs_dim())
    throw InvalidInput("forward: observation feature width mismatch");
  if (in.prior.rows() != config.nm)
    throw InvalidInput("forward: prior size does not match model");
  const Eigen::Index np = in.obs.rows();
  const Eigen::Index nm = in.prior.rows();
  const int c = config.c;
  const int d = config.obs_dim();

  tr.raw_mean = in.obs.colwise().mean();
  tr.f_obs = obs_enc.forward(in.obs, tr.t_obs);
  tr.f_pri = pri_enc.forward(in.prior, tr.t_pri);
  if (config.use_ngph) {
    tr.f_pos = pos_enc.forward(ngph_input(in.ngph), tr.t_pos).row(0);
  } else {
    tr.f_pos = Eigen::RowVectorXd::Zero(2 * c);
  }
  tr.f_gobs = pool_features(gobs.forward(tr.f_obs, tr.t_gobs));
  tr.f_gpri = pool_features(gpri.forward(tr.f_pri, tr.t_gpri));

  if (config.direct_regression) {
    Eigen::MatrixXd h(np, 3 * c + config.cg + d);
    h << tr.f_obs, repeat_row(tr.f_gobs, np), repeat_row(tr.raw_mean, np),
        repeat_row(tr.f_pos, np);
    tr.p_depth = dr_depth.forward(h, tr.t_dr_depth);
  } else {
    Eigen::MatrixXd hd(nm, 3 * c + 2 * config.cg + d);
    hd << tr.f_pri, repeat_row(tr.f_gobs, nm), repeat_row(tr.raw_mean, nm),
        repeat_row(tr.f_gpri, nm), repeat_row(tr.f_pos, nm);
    tr.d_depth = deform_d.forward(hd, tr.t_deform_d);
    Eigen::MatrixXd ha(np, 3 * c + 2 * config.cg + d);
    ha << tr.f_obs, repeat_row(tr.f_gobs, np), repeat_row(tr.raw_mean, np),
        repeat_row(tr.f_gpri, np), repeat_row(tr.f_pos, np);
    tr.logits_d = assign_d.forward(ha, tr.t_assign_d);
    tr.m_depth = row_softmax(tr.logits_d);
    tr.p_depth = tr.m_depth * (in.prior + tr.d_depth);
  }

  double zt = 0.0;
  if (config.decouple_depth) {
    Eigen::RowVectorXd hin(2 * c + config.cg + d);
    hin << tr.f_pos, tr.f_gobs, tr.raw_mean;
    tr.h = zt_head.forward(hin, tr.t_zt)(0, 0);
    zt = config.use_ngph ? in.g0 * tr.h : tr.h;
  }
  tr.z = tr.p_depth.col(2).array() + zt;

  tr.cam.resize(np, 3);
  tr.cam.col(0) = in.lift_x.cwiseProduct(tr.z);
  tr.cam.col(1) = in.lift_y.cwiseProduct(tr.z);
  tr.cam.col(2) = tr.z;
  const Eigen::RowVector3d cam_mean = tr.cam.colwise().mean();
  tr.cam_centered = tr.cam.rowwise() - cam_mean;

  tr.f_dep = fdep_enc.forward(tr.cam_centered, tr.t_fdep);
  tr.f_obs2.resize(np, 2 * c);
  tr.f_obs2 << tr.f_obs, tr.f_dep;
  tr.f_g2 = pool_features(g2.forward(tr.f_obs2, tr.t_g2));

  const bool feed_pos = config.ngph_to_nocs;
  if (config.direct_regression) {
    Eigen::MatrixXd hn(np, 2 * c + config.cg + d + (feed_pos ? 2 * c : 0));
    if (feed_pos)
      hn << tr.f_obs2, repeat_row(tr.f_g2, np), repeat_row(tr.raw_mean, np),
          repeat_row(tr.f_pos, np);
    else
      hn << tr.f_obs2, repeat_row(tr.f_g2, np), repeat_row(tr.raw_mean, np);
    tr.p_nocs = dr_nocs.forward(hn, tr.t_dr_nocs);
  } else {
    Eigen::MatrixXd hdn(nm, c + 2 * config.cg + d + (feed_pos ? 2 * c : 0));
    if (feed_pos)
      hdn << tr.f_pri, repeat_row(tr.f_g2, nm), repeat_row(tr.raw_mean, nm),
          repeat_row(tr.f_gpri, nm), repeat_row(tr.f_pos, nm);
    else
      hdn << tr.f_pri, repeat_row(tr.f_g2, nm), repeat_row(tr.raw_mean, nm),
          repeat_row(tr.f_gpri, nm);
    tr.d_nocs = deform_n.forward(hdn, tr.t_deform_n);
    Eigen::MatrixXd han(np, 2 * c + 2 * config.cg + d + (feed_pos ? 2 * c : 0));
    if (feed_pos)
      han << tr.f_obs2, repeat_row(tr.f_g2, np), repeat_row(tr.raw_mean, np),
          repeat_row(tr.f_gpri, np), repeat_row(tr.f_pos, np);
    else
      han << tr.f_obs2, repeat_row(tr.f_g2, np), repeat_row(tr.raw_mean, np),
          repeat_row(tr.f_gpri, np);
    tr.logits_n = assign_n.forward(han, tr.t_assign_n);
    tr.m_nocs = row_softmax(tr.logits_n);
    tr.p_nocs = tr.m_nocs * (in.prior + tr.d_nocs);
  }

  ForwardResult fr;
  if (!config.direct_regression) {
    fr.deform_depth.offsets = tr.d_depth;
    fr.assign_depth.weights = tr.m_depth;
    fr.deform_nocs.offsets = tr.d_nocs;
    fr.assign_nocs.weights = tr.m_nocs;
  }
  fr.zt = zt;
  fr.z_pred = tr.z;
  fr.cam_cloud.points = tr.cam;
  fr.p_depth.points = tr.p_depth;
  fr.p_nocs.points = tr.p_nocs;
  fr.features = {tr.f_pri, tr.f_obs, tr.f_pos, tr.f_gobs, tr.f_gpri};
  return fr;
}

Discriminator Discriminator::init(int c, Activation hidden_act,
                                  std::uint64_t seed) {
  Discriminator d;
  d.c = c;
  auto rng = derive_rng(seed, 0xd15c);
  d.point_mlp = Mlp::make({3, c, c}, {hidden_act, hidden_act}, rng);
  d.score_mlp = Mlp::make({c, c / 2, 1}, {hidden_act, Activation::kIdentity},
                          rng);
  return d;
}

Discriminator Discriminator::zeros_like(const Discriminator& other) {
  Discriminator d = other;
  d.point_mlp.set_zero();
  d.score_mlp.set_zero();
  return d;
}

double Discriminator::score(const Points& cloud) const {
  DiscTrace trace;
  return score(cloud, trace);
}

double Discriminator::score(const Points& cloud, DiscTrace& trace) const {
  const Eigen::MatrixXd pp = point_mlp.forward(cloud, trace.t_point);
  const Eigen::RowVectorXd pooled = pp.colwise().mean();
  return score_mlp.forward(pooled, trace.t_score)(0, 0);
}

void Discriminator::backward_params(const DiscTrace& trace, double d_score,
                                    Discriminator* grads) const {
  Eigen::MatrixXd ds(1, 1);
  ds(0, 0) = d_score;
  const Eigen::MatrixXd d_pooled =
      score_mlp.backward(trace.t_score, ds, grads ? &grads->score_mlp : nullptr);
  const Eigen::Index n = trace.t_point.front().rows();
  const Eigen::MatrixXd d_pp =
      d_pooled.row(0).replicate(n, 1) / static_cast<double>(n);
  point_mlp.backward(trace.t_point, d_pp, grads ? &grads->point_mlp : nullptr);
}

Eigen::MatrixXd Discriminator::backward_input(const DiscTrace& trace,
                                              double d_score) const {
  Eigen::MatrixXd ds(1, 1);
  ds(0, 0) = d_score;
  const Eigen::MatrixXd d_pooled =
      score_mlp.backward(trace.t_score, ds, nullptr);
  const Eigen::Index n = trace.t_point.front().rows();
  const Eigen::MatrixXd d_pp =
      d_pooled.row(0).replicate(n, 1) / static_cast<double>(n);
  return point_mlp.backward(trace.t_point, d_pp, nullptr);
}

std::vector<TensorRef> Discriminator::parameters() {
  std::vector<TensorRef> out;
  add_mlp_params(out, "disc_point", point_mlp);
  add_mlp_params(out, "disc_score", score_mlp);
  return out;
}

double main_objective(const LossTerms& t, const LossWeights& w) {
  return w.depth * t.depth + w.adv_gen * t.adv_gen + w.corr * t.corr +
         w.chamfer * t.chamfer + w.entropy * t.entropy + w.reg * t.reg;
}

LossTerms compute_losses(const SddrModel& model, const Discriminator& disc,
                         const InstanceInputs& in, bool adversarial,
                         StepTrace* trace) {
  StepTrace local;
  StepTrace& tr = trace ? *trace : local;
  tr.adversarial = adversarial;
  model.forward(in, tr.model);

  LossTerms terms;
  terms.depth = (tr.model.z - in.gt_z).cwiseAbs().mean();
  terms.corr = smooth_l1_mean(tr.model.p_nocs, in.gt_nocs);

  if (!model.config.direct_regression) {
    const Points deformed = in.prior + tr.model.d_nocs;
    const ChamferParts cd = chamfer_with_indices(deformed, in.gt_nocs);
    terms.chamfer = cd.value;
    tr.nn_ab = cd.nn_ab;
    tr.nn_ba = cd.nn_ba;
    double ent = 0.0;
    for (Eigen::Index i = 0; i < tr.model.m_nocs.rows(); ++i)
      ent += -std::log(tr.model.m_nocs.row(i).maxCoeff());
    terms.entropy = ent / static_cast<double>(tr.model.m_nocs.rows());
    terms.reg = tr.model.m_nocs.array().square().mean();
  }

  if (adversarial) {
    tr.score_fake = disc.score(tr.model.p_nocs, tr.disc_fake);
    tr.score_real = disc.score(in.gt_nocs, tr.disc_real);
    terms.adv_gen = (tr.score_fake - 1.0) * (tr.score_fake - 1.0);
    terms.adv_disc = (tr.score_real - 1.0) * (tr.score_real - 1.0) +
                     tr.score_fake * tr.score_fake;
  }
  tr.terms = terms;
  return terms;
}

void backward_main(const SddrModel& model, const Discriminator& disc,
                   const InstanceInputs& in, const StepTrace& tr,
                   const LossWeights& w, SddrModel* grads) {
  const Trace& t = tr.model;
  const ModelConfig& cfg = model.config;
  const Eigen::Index np = in.obs.rows();
  const Eigen::Index nm = in.prior.rows();
  const int c = cfg.c, cg = cfg.cg;
  const int d = cfg.obs_dim();  // raw-moment columns carry no gradient
  const double npd = static_cast<double>(np);

  // Loss-level gradients.
  Eigen::VectorXd d_z(np);
  for (Eigen::Index i = 0; i < np; ++i)
    d_z[i] = w.depth * sign0(t.z[i] - in.gt_z[i]) / npd;

  Eigen::MatrixXd d_pnocs = Eigen::MatrixXd::Zero(np, 3);
  for (Eigen::Index i = 0; i < np; ++i) {
    for (int k = 0; k < 3; ++k) {
      const double d = t.p_nocs(i, k) - in.gt_nocs(i, k);
      d_pnocs(i, k) =
          w.corr * std::clamp(d, -1.0, 1.0) / (3.0 * npd);
    }
  }
  if (tr.adversarial && w.adv_gen != 0.0) {
    const double d_score = w.adv_gen * 2.0 * (tr.score_fake - 1.0);
    d_pnocs += disc.backward_input(tr.disc_fake, d_score);
  }

  Eigen::RowVectorXd d_fpos = Eigen::RowVectorXd::Zero(2 * c);
  Eigen::RowVectorXd d_fgobs = Eigen::RowVectorXd::Zero(cg);
  Eigen::RowVectorXd d_fgpri = Eigen::RowVectorXd::Zero(cg);
  Eigen::RowVectorXd d_fg2 = Eigen::RowVectorXd::Zero(cg);
  Eigen::MatrixXd d_fobs = Eigen::MatrixXd::Zero(np, c);
  Eigen::MatrixXd d_fpri = Eigen::MatrixXd::Zero(nm, c);
  Eigen::MatrixXd d_fobs2 = Eigen::MatrixXd::Zero(np, 2 * c);

  const bool feed_pos = cfg.ngph_to_nocs;

  // NOCS side first: its gradients reach the depth side through the lifted
  // cloud, so the depth-side accumulation must come later.
  if (cfg.direct_regression) {
    const Eigen::MatrixXd d_hn =
        model.dr_nocs.backward(t.t_dr_nocs, d_pnocs,
                               grads ? &grads->dr_nocs : nullptr);
    d_fobs2 += d_hn.leftCols(2 * c);
    d_fg2 += d_hn.middleCols(2 * c, cg).colwise().sum();
    if (feed_pos) d_fpos += d_hn.rightCols(2 * c).colwise().sum();
  } else {
    // Chamfer gradient w.r.t. the deformed prior rows.
    Eigen::MatrixXd d_dnocs = Eigen::MatrixXd::Zero(nm, 3);
    if (w.chamfer != 0.0) {
      const Points deformed = in.prior + t.d_nocs;
      const double nmd = static_cast<double>(nm);
      for (Eigen::Index i = 0; i < nm; ++i) {
        const Eigen::RowVector3d diff =
            deformed.row(i) - in.gt_nocs.row(tr.nn_ab[i]);
        d_dnocs.row(i) += w.chamfer * 2.0 * diff / nmd;
      }
      for (Eigen::Index j = 0; j < np; ++j) {
        const int i = tr.nn_ba[j];
        const Eigen::RowVector3d diff = deformed.row(i) - in.gt_nocs.row(j);
        d_dnocs.row(i) += w.chamfer * 2.0 * diff / npd;
      }
    }

    Eigen::MatrixXd d_mnocs = Eigen::MatrixXd::Zero(np, nm);
    if (w.entropy != 0.0) {
      for (Eigen::Index i = 0; i < np; ++i) {
        Eigen::Index jmax;
        const double mx = t.m_nocs.row(i).maxCoeff(&jmax);
        d_mnocs(i, jmax) += -w.entropy / (mx * npd);
      }
    }
    if (w.reg != 0.0)
      d_mnocs += (w.reg * 2.0 / static_cast<double>(np * nm)) * t.m_nocs;

    const Points deformed = in.prior + t.d_nocs;
    d_mnocs.noalias() += d_pnocs * deformed.transpose();
    d_dnocs.noalias() += t.m_nocs.transpose() * d_pnocs;

    const Eigen::MatrixXd d_logits_n = row_softmax_backward(t.m_nocs, d_mnocs);
    const Eigen::MatrixXd d_han =
        model.assign_n.backward(t.t_assign_n, d_logits_n,
                                grads ? &grads->assign_n : nullptr);
    d_fobs2 += d_han.leftCols(2 * c);
    d_fg2 += d_han.middleCols(2 * c, cg).colwise().sum();
    d_fgpri += d_han.middleCols(2 * c + cg + d, cg).colwise().sum();
    if (feed_pos) d_fpos += d_han.rightCols(2 * c).colwise().sum();

    const Eigen::MatrixXd d_hdn =
        model.deform_n.backward(t.t_deform_n, d_dnocs,
                                grads ? &grads->deform_n : nullptr);
    d_fpri += d_hdn.leftCols(c);
    d_fg2 += d_hdn.middleCols(c, cg).colwise().sum();
    d_fgpri += d_hdn.middleCols(c + cg + d, cg).colwise().sum();
    if (feed_pos) d_fpos += d_hdn.rightCols(2 * c).colwise().sum();
  }

  // Pooled second-stage feature.
  {
    const Eigen::MatrixXd d_g2pp = pool_backward(t.t_g2.back(), d_fg2);
    d_fobs2 += model.g2.backward(t.t_g2, d_g2pp, grads ? &grads->g2 : nullptr);
  }
  d_fobs += d_fobs2.leftCols(c);
  const Eigen::MatrixXd d_fdep = d_fobs2.rightCols(c);

  // Through the depth-feature encoder and the lift into camera space.
  {
    const Eigen::MatrixXd d_cam_centered = model.fdep_enc.backward(
        t.t_fdep, d_fdep, grads ? &grads->fdep_enc : nullptr);
    const Eigen::RowVector3d mean_grad = d_cam_centered.colwise().mean();
    const Eigen::MatrixXd d_cam = d_cam_centered.rowwise() - mean_grad;
    d_z += in.lift_x.cwiseProduct(d_cam.col(0)) +
           in.lift_y.cwiseProduct(d_cam.col(1)) + d_cam.col(2);
  }

  // Depth assembly: z = p_depth.z + zt.
  Eigen::MatrixXd d_pdepth = Eigen::MatrixXd::Zero(np, 3);
  d_pdepth.col(2) = d_z;
  if (cfg.decouple_depth) {
    const double d_zt = d_z.sum();
    const double d_h = (cfg.use_ngph ? in.g0 : 1.0) * d_zt;
    Eigen::MatrixXd dh(1, 1);
    dh(0, 0) = d_h;
    const Eigen::MatrixXd d_hin =
        model.zt_head.backward(t.t_zt, dh, grads ? &grads->zt_head : nullptr);
    d_fpos += d_hin.row(0).head(2 * c);
    d_fgobs += d_hin.row(0).segment(2 * c, cg);
  }

  if (cfg.direct_regression) {
    const Eigen::MatrixXd d_h = model.dr_depth.backward(
        t.t_dr_depth, d_pdepth, grads ? &grads->dr_depth : nullptr);
    d_fobs += d_h.leftCols(c);
    d_fgobs += d_h.middleCols(c, cg).colwise().sum();
    d_fpos += d_h.rightCols(2 * c).colwise().sum();
  } else {
    const Points deformed_d = in.prior + t.d_depth;
    Eigen::MatrixXd d_mdepth = d_pdepth * deformed_d.transpose();
    Eigen::MatrixXd d_ddepth = t.m_depth.transpose() * d_pdepth;

    const Eigen::MatrixXd d_logits_d =
        row_softmax_backward(t.m_depth, d_mdepth);
    const Eigen::MatrixXd d_ha = model.assign_d.backward(
        t.t_assign_d, d_logits_d, grads ? &grads->assign_d : nullptr);
    d_fobs += d_ha.leftCols(c);
    d_fgobs += d_ha.middleCols(c, cg).colwise().sum();
    d_fgpri += d_ha.middleCols(c + cg + d, cg).colwise().sum();
    d_fpos += d_ha.rightCols(2 * c).colwise().sum();

    const Eigen::MatrixXd d_hd = model.deform_d.backward(
        t.t_deform_d, d_ddepth, grads ? &grads->deform_d : nullptr);
    d_fpri += d_hd.leftCols(c);
    d_fgobs += d_hd.middleCols(c, cg).colwise().sum();
    d_fgpri += d_hd.middleCols(c + cg + d, cg).colwise().sum();
    d_fpos += d_hd.rightCols(2 * c).colwise().sum();
  }

  // Pooled first-stage features, then the encoders.
  {
    const Eigen::MatrixXd d_gobs_pp = pool_backward(t.t_gobs.back(), d_fgobs);
    d_fobs += model.gobs.backward(t.t_gobs, d_gobs_pp,
                                  grads ? &grads->gobs : nullptr);
    const Eigen::MatrixXd d_gpri_pp = pool_backward(t.t_gpri.back(), d_fgpri);
    d_fpri += model.gpri.backward(t.t_gpri, d_gpri_pp,
                                  grads ? &grads->gpri : nullptr);
  }
  model.obs_enc.backward(t.t_obs, d_fobs, grads ? &grads->obs_enc : nullptr);
  model.pri_enc.backward(t.t_pri, d_fpri, grads ? &grads->pri_enc : nullptr);
  if (cfg.use_ngph)
    model.pos_enc.backward(t.t_pos, d_fpos,
                           grads ? &grads->pos_enc : nullptr);
}

void backward_disc(const Discriminator& disc, const StepTrace& tr,
                   Discriminator* grads) {
  if (!tr.adversarial)
    throw InvalidInput("backward_disc: step was not adversarial");
  disc.backward_params(tr.disc_real, 2.0 * (tr.score_real - 1.0), grads);
  disc.backward_params(tr.disc_fake, 2.0 * tr.score_fake, grads);
}

}  // namespace priorpose
