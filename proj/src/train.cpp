#include "priorpose/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace priorpose {

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(std::vector<TensorRef> params,
                         std::vector<TensorRef> grads) {
  if (params.size() != grads.size())
    throw InvalidInput("AdamOptimizer: parameter/gradient count mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Eigen::VectorXd::Zero(params[i].size());
      v_[i] = Eigen::VectorXd::Zero(params[i].size());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> p(params[i].data, params[i].size());
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data, grads[i].size());
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    p.array() -= lr_ * (m_[i].array() / bc1) /
                 ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

namespace {

// Per-tensor gradient clip. The box-size scaling of the depth translation
// makes the first few batches produce gradients orders of magnitude above
// steady state, which would inflate Adam's second moment for most of a
// desk-scale run.
constexpr double kGradClip = 1.0;

void clip_tensors(std::vector<TensorRef> refs) {
  for (auto& t : refs) {
    Eigen::Map<Eigen::VectorXd> g(t.data, t.size());
    const double norm = g.norm();
    if (norm > kGradClip) g *= kGradClip / norm;
  }
}

std::vector<InstanceInputs> build_inputs(const Dataset& ds,
                                         const ModelConfig& cfg) {
  std::vector<InstanceInputs> inputs;
  inputs.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    const CategoryEntry* cat = ds.find_category(inst.category);
    if (!cat)
      throw InvalidInput("dataset instance references unknown category: " +
                         inst.category);
    inputs.push_back(make_instance_inputs(inst, cat->prior, ds.seed, cfg));
  }
  return inputs;
}

void scale_tensors(std::vector<TensorRef> refs, double factor) {
  for (auto& t : refs)
    Eigen::Map<Eigen::VectorXd>(t.data, t.size()).array() *= factor;
}

}  // namespace

TrainResult train(const Dataset& ds, const ModelConfig& model_cfg,
                  const TrainConfig& cfg) {
  if (ds.instances.empty()) throw InvalidInput("train: empty dataset");
  if (ds.categories.empty()) throw InvalidInput("train: dataset has no priors");
  if (cfg.batch_size < 1 || cfg.epochs < 0)
    throw InvalidInput("train: bad batch size or epoch count");

  ModelConfig mcfg = model_cfg;
  mcfg.nm = static_cast<int>(ds.categories.front().prior.points.rows());
  mcfg.init_seed = cfg.seed;

  TrainResult result{SddrModel::init(mcfg),
                     Discriminator::init(mcfg.c, mcfg.hidden_act, cfg.seed + 1),
                     {}};
  SddrModel& model = result.model;
  Discriminator& disc = result.disc;

  const std::vector<InstanceInputs> inputs = build_inputs(ds, mcfg);
  const std::size_t n = inputs.size();

  AdamOptimizer opt_main(cfg.lr_main);
  AdamOptimizer opt_disc(cfg.lr_disc);

  SddrModel main_grads = SddrModel::zeros_like(model);
  Discriminator disc_grads = Discriminator::zeros_like(disc);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double decay =
        epoch >= cfg.decay_epoch ? cfg.decay_factor : 1.0;
    opt_main.set_lr(cfg.lr_main * decay);
    opt_disc.set_lr(cfg.lr_disc * decay);

    auto rng = derive_rng(cfg.seed, 0x9000 + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const double bsz = static_cast<double>(end - start);

      std::vector<StepTrace> traces(end - start);
      LossTerms batch_terms;
      for (std::size_t k = start; k < end; ++k) {
        const LossTerms t = compute_losses(model, disc, inputs[order[k]],
                                           cfg.adversarial, &traces[k - start]);
        batch_terms.depth += t.depth / bsz;
        batch_terms.adv_disc += t.adv_disc / bsz;
        batch_terms.adv_gen += t.adv_gen / bsz;
        batch_terms.corr += t.corr / bsz;
        batch_terms.chamfer += t.chamfer / bsz;
        batch_terms.entropy += t.entropy / bsz;
        batch_terms.reg += t.reg / bsz;
      }
      const double total = total_loss(batch_terms, cfg.weights);
      if (!std::isfinite(total))
        throw DivergenceError("train: non-finite loss at step " +
                              std::to_string(step + 1));

      if (cfg.adversarial) {
        for (auto& t : disc_grads.parameters())
          Eigen::Map<Eigen::VectorXd>(t.data, t.size()).setZero();
        for (auto& tr : traces) backward_disc(disc, tr, &disc_grads);
        scale_tensors(disc_grads.parameters(), 1.0 / bsz);
        clip_tensors(disc_grads.parameters());
        opt_disc.step(disc.parameters(), disc_grads.parameters());
      }

      for (auto& t : main_grads.parameters())
        Eigen::Map<Eigen::VectorXd>(t.data, t.size()).setZero();
      for (std::size_t k = start; k < end; ++k)
        backward_main(model, disc, inputs[order[k]], traces[k - start],
                      cfg.weights, &main_grads);
      scale_tensors(main_grads.parameters(), 1.0 / bsz);
      clip_tensors(main_grads.parameters());
      opt_main.step(model.parameters(), main_grads.parameters());

      ++step;
      result.history.push_back({step, batch_terms, total});
    }
  }
  return result;
}

ModelEvaluation evaluate_model(const SddrModel& model, const Dataset& ds,
                               int threads, bool with_curves) {
  const std::size_t n = ds.instances.size();
  const auto sym = symmetry_map(ds);

  struct PerInstance {
    GtRecord record;
    PredictionRecord prediction;
    bool has_prediction = false;
    double depth_l1 = -1.0;
    double chamfer_depth = -1.0;
    double chamfer_nocs = -1.0;
  };
  std::vector<PerInstance> rows(n);

  parallel_for(n, threads, [&](std::size_t i) {
    const SceneInstance& inst = ds.instances[i];
    const CategoryEntry* cat = ds.find_category(inst.category);
    if (!cat) throw InvalidInput("unknown category: " + inst.category);
    const InstanceInputs in =
        make_instance_inputs(inst, cat->prior, ds.seed, model.config);

    PerInstance& row = rows[i];
    const Detection gt{inst.category,
                       {inst.gt_pose, inst.gt_size},
                       inst.gt_pose};
    try {
      const ForwardResult fr = model.forward(in);
      if (!fr.z_pred.allFinite()) throw DegenerateConfig("non-finite depth");
      row.depth_l1 = (fr.z_pred - in.gt_z).cwiseAbs().mean();

      const Pose pose = umeyama_align(fr.p_nocs, fr.cam_cloud);
      if (!(pose.scale > 0.0) || !pose.translation.allFinite())
        throw DegenerateConfig("bad alignment");

      Vec3 nocs_size;
      if (model.config.direct_regression) {
        nocs_size = (fr.p_nocs.points.colwise().maxCoeff() -
                     fr.p_nocs.points.colwise().minCoeff())
                        .transpose();
      } else {
        nocs_size = estimate_size({in.prior}, fr.deform_nocs);
      }
      const Vec3 size = (pose.scale * nocs_size).cwiseMax(1e-6);

      row.prediction = {inst.id, inst.category, pose, size};
      row.has_prediction = true;

      const PointCloud gt_cam = back_project(inst.depth_patch, inst.intrinsics);
      row.chamfer_depth = chamfer_distance(fr.cam_cloud, gt_cam);
      row.chamfer_nocs = chamfer_distance(fr.p_nocs, inst.gt_nocs);

      const Detection det{inst.category, {pose, size}, pose};
      row.record = evaluate_scene({det}, {gt}, sym).front();
    } catch (const DegenerateConfig&) {
      row.record = evaluate_scene({}, {gt}, sym).front();
    }
  });

  ModelEvaluation out;
  std::vector<GtRecord> records;
  records.reserve(n);
  std::map<std::string, std::pair<double, int>> cd_acc, cn_acc;
  double l1_sum = 0.0;
  int l1_count = 0;
  for (const PerInstance& row : rows) {
    records.push_back(row.record);
    if (row.has_prediction) {
      out.predictions.push_back(row.prediction);
      cd_acc[row.record.category].first += row.chamfer_depth;
      cd_acc[row.record.category].second += 1;
      cn_acc[row.record.category].first += row.chamfer_nocs;
      cn_acc[row.record.category].second += 1;
    } else {
      ++out.aux.failed_instances;
    }
    if (row.depth_l1 >= 0.0) {
      l1_sum += row.depth_l1;
      ++l1_count;
    }
  }
  out.aux.mean_depth_l1 = l1_count > 0 ? l1_sum / l1_count : 0.0;
  for (const auto& [cat, acc] : cd_acc) {
    out.aux.chamfer_depth[cat] = acc.first / acc.second;
    out.aux.mean_chamfer_depth += acc.first / acc.second / cd_acc.size();
  }
  for (const auto& [cat, acc] : cn_acc) {
    out.aux.chamfer_nocs[cat] = acc.first / acc.second;
    out.aux.mean_chamfer_nocs += acc.first / acc.second / cn_acc.size();
  }
  out.report = make_report(records, with_curves);
  return out;
}

namespace {

const char* kCheckpointMagic = "priorpose-checkpoint";

void write_tensors(std::ofstream& out, std::vector<TensorRef> refs,
                   bool binary) {
  char buf[64];
  for (const auto& t : refs) {
    out << "tensor " << t.name << " " << t.rows << " " << t.cols << "\n";
    if (binary) {
      out.write(reinterpret_cast<const char*>(t.data),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
      out << "\n";
    } else {
      for (Eigen::Index r = 0; r < t.rows; ++r) {
        for (Eigen::Index c = 0; c < t.cols; ++c) {
          std::snprintf(buf, sizeof(buf), "%.17g", t.data[r * t.cols + c]);
          out << buf << (c + 1 < t.cols ? " " : "");
        }
        out << "\n";
      }
    }
  }
}

}  // namespace

void save_checkpoint(const SddrModel& model, const Discriminator& disc,
                     const std::string& path, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  const ModelConfig& c = model.config;
  out << kCheckpointMagic << " 1 " << (binary ? "binary" : "text") << "\n";
  out << "c " << c.c << "\n";
  out << "cg " << c.cg << "\n";
  out << "nm " << c.nm << "\n";
  out << "head_hidden " << c.head_hidden << "\n";
  out << "use_ngph " << c.use_ngph << "\n";
  out << "decouple_depth " << c.decouple_depth << "\n";
  out << "direct_regression " << c.direct_regression << "\n";
  out << "ngph_to_nocs " << c.ngph_to_nocs << "\n";
  out << "hidden_act " << activation_name(c.hidden_act) << "\n";
  out << "init_seed " << c.init_seed << "\n";
  out << "disc_c " << disc.c << "\n";
  out << "params\n";
  auto& m = const_cast<SddrModel&>(model);
  auto& d = const_cast<Discriminator&>(disc);
  write_tensors(out, m.parameters(), binary);
  write_tensors(out, d.parameters(), binary);
  out << "end\n";
  if (!out) throw IoError("write failed: " + path);
}

std::pair<SddrModel, Discriminator> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty checkpoint");
  std::istringstream head(line);
  std::string magic, version, mode;
  head >> magic >> version >> mode;
  if (magic != kCheckpointMagic || version != "1" ||
      (mode != "text" && mode != "binary"))
    throw ParseError(path + ": not a checkpoint file");
  const bool binary = mode == "binary";

  ModelConfig cfg;
  int disc_c = cfg.c;
  while (std::getline(in, line) && line != "params") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "c") ls >> cfg.c;
    else if (key == "cg") ls >> cfg.cg;
    else if (key == "nm") ls >> cfg.nm;
    else if (key == "head_hidden") ls >> cfg.head_hidden;
    else if (key == "use_ngph") ls >> cfg.use_ngph;
    else if (key == "decouple_depth") ls >> cfg.decouple_depth;
    else if (key == "direct_regression") ls >> cfg.direct_regression;
    else if (key == "ngph_to_nocs") ls >> cfg.ngph_to_nocs;
    else if (key == "hidden_act") {
      std::string name;
      ls >> name;
      cfg.hidden_act = activation_from_name(name);
    } else if (key == "init_seed") ls >> cfg.init_seed;
    else if (key == "disc_c") ls >> disc_c;
    else throw ParseError(path + ": unknown header key: " + key);
    if (ls.fail()) throw ParseError(path + ": bad header line: " + line);
  }

  SddrModel model = SddrModel::init(cfg);
  Discriminator disc = Discriminator::init(disc_c, cfg.hidden_act, 0);
  std::map<std::string, TensorRef> by_name;
  for (const auto& t : model.parameters()) by_name[t.name] = t;
  for (const auto& t : disc.parameters()) by_name[t.name] = t;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "end") return {std::move(model), std::move(disc)};
    std::istringstream ls(line);
    std::string word, name;
    Eigen::Index rows = 0, cols = 0;
    ls >> word >> name >> rows >> cols;
    if (word != "tensor" || ls.fail())
      throw ParseError(path + ": bad tensor line: " + line);
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw ParseError(path + ": unknown tensor: " + name);
    if (it->second.rows != rows || it->second.cols != cols)
      throw ParseError(path + ": shape mismatch for tensor: " + name);
    if (binary) {
      in.read(reinterpret_cast<char*>(it->second.data),
              static_cast<std::streamsize>(rows * cols * sizeof(double)));
      if (!in) throw ParseError(path + ": truncated tensor: " + name);
      in.get();  // trailing newline
    } else {
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line))
          throw ParseError(path + ": truncated tensor: " + name);
        std::istringstream row(line);
        for (Eigen::Index c = 0; c < cols; ++c) {
          row >> it->second.data[r * cols + c];
          if (row.fail())
            throw ParseError(path + ": bad value in tensor: " + name);
        }
      }
    }
  }
  throw ParseError(path + ": missing end marker");
}

void write_loss_csv(const std::vector<StepRecord>& history,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "step,l_z,l_d,l_g,l_corr,l_cd,l_entro,l_reg,total\n";
  char buf[256];
  for (const auto& rec : history) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", rec.step,
                  rec.terms.depth, rec.terms.adv_disc, rec.terms.adv_gen,
                  rec.terms.corr, rec.terms.chamfer, rec.terms.entropy,
                  rec.terms.reg, rec.total);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace priorpose
