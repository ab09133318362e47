// Command-line driver: dataset synthesis, training, evaluation, ablations.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "priorpose/io.hpp"
#include "priorpose/synth.hpp"
#include "priorpose/train.hpp"

namespace pp = priorpose;

namespace {

// Relative paths resolve under PRIORPOSE_DATA_DIR when it is set.
std::string resolve_path(const std::string& path) {
  if (path.empty()) return path;
  const char* base = std::getenv("PRIORPOSE_DATA_DIR");
  if (!base || *base == '\0') return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base) / p).string();
}

std::vector<pp::CategorySpec> pick_categories(
    const std::vector<std::string>& names) {
  const auto all = pp::default_categories();
  if (names.empty()) return all;
  std::vector<pp::CategorySpec> out;
  for (const auto& name : names) {
    bool found = false;
    for (const auto& spec : all) {
      if (spec.name == name) {
        out.push_back(spec);
        found = true;
        break;
      }
    }
    if (!found) throw pp::InvalidInput("unknown category: " + name);
  }
  return out;
}

pp::Dataset select_split(const pp::Dataset& ds, const std::string& split,
                         double holdout_frac) {
  if (split == "all") return ds;
  auto [train, test] = pp::split_dataset(ds, holdout_frac);
  if (split == "train") return train;
  if (split == "test") return test;
  throw pp::InvalidInput("unknown split: " + split);
}

// Evaluates an external prediction file against a dataset; every prediction
// id must reference a dataset instance of the same category.
pp::EvalReport eval_predictions(const pp::Dataset& ds,
                                const std::vector<pp::PredictionRecord>& preds,
                                bool with_curves) {
  std::map<int, const pp::SceneInstance*> by_id;
  for (const auto& inst : ds.instances) by_id[inst.id] = &inst;

  std::vector<std::string> bad;
  std::map<int, const pp::PredictionRecord*> pred_by_id;
  for (const auto& p : preds) {
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      bad.push_back("id " + std::to_string(p.id) + " not in dataset");
    } else if (it->second->category != p.category) {
      bad.push_back("id " + std::to_string(p.id) + " category mismatch: " +
                    p.category + " vs " + it->second->category);
    } else {
      pred_by_id[p.id] = &p;
    }
  }
  if (!bad.empty()) {
    std::string msg = "prediction/dataset id mismatch:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw pp::InvalidInput(msg);
  }

  const auto sym = pp::symmetry_map(ds);
  std::vector<pp::GtRecord> records;
  records.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    const pp::Detection gt{inst.category,
                           {inst.gt_pose, inst.gt_size},
                           inst.gt_pose};
    std::vector<pp::Detection> dets;
    const auto it = pred_by_id.find(inst.id);
    if (it != pred_by_id.end()) {
      dets.push_back({it->second->category,
                      {it->second->pose, it->second->size},
                      it->second->pose});
    }
    const auto recs = pp::evaluate_scene(dets, {gt}, sym);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  return pp::make_report(records, with_curves);
}

void print_report_summary(const pp::EvalReport& r, const std::string& label) {
  std::printf(
      "%s: mean AP iou25=%.3f iou50=%.3f iou75=%.3f 10cm=%.3f 10deg=%.3f "
      "10deg10cm=%.3f (%zu categories)\n",
      label.c_str(), r.mean.iou25, r.mean.iou50, r.mean.iou75, r.mean.cm10,
      r.mean.deg10, r.mean.deg10cm10, r.per_category.size());
}

struct TrainCli {
  std::string dataset, out_ckpt, loss_csv;
  double holdout_frac = 0.2;
  bool binary_ckpt = false;
  pp::TrainConfig tcfg;
  pp::ModelConfig mcfg;
  bool no_ngph = false, no_decouple = false, no_adversarial = false,
       direct_regression = false;

  void apply_flags() {
    mcfg.use_ngph = !no_ngph;
    mcfg.decouple_depth = !no_decouple;
    mcfg.direct_regression = direct_regression;
    tcfg.adversarial = !no_adversarial;
  }
};

void add_train_options(CLI::App* cmd, TrainCli& t) {
  cmd->add_option("--epochs", t.tcfg.epochs, "Training epochs");
  cmd->add_option("--batch-size", t.tcfg.batch_size, "Batch size");
  cmd->add_option("--lr", t.tcfg.lr_main, "Main network learning rate");
  cmd->add_option("--lr-disc", t.tcfg.lr_disc, "Discriminator learning rate");
  cmd->add_option("--decay-epoch", t.tcfg.decay_epoch,
                  "Epoch at which learning rates decay");
  cmd->add_option("--decay-factor", t.tcfg.decay_factor, "Decay factor");
  cmd->add_option("--seed", t.tcfg.seed, "Training seed");
  cmd->add_option("--c", t.mcfg.c, "Per-point feature width");
  cmd->add_option("--cg", t.mcfg.cg, "Global feature width");
  cmd->add_option("--head-hidden", t.mcfg.head_hidden, "Head hidden width");
  cmd->add_flag("--no-ngph", t.no_ngph, "Ablation: drop the position hints");
  cmd->add_flag("--no-decouple", t.no_decouple,
                "Ablation: no separate depth-translation head");
  cmd->add_flag("--no-adversarial", t.no_adversarial,
                "Ablation: skip adversarial training");
  cmd->add_flag("--direct-regression", t.direct_regression,
                "Ablation: pointwise regression instead of deformation");
}

int cmd_synth(const std::string& out, const std::vector<std::string>& cats,
              int n_per_cat, std::uint64_t seed, const pp::GenOptions& opts,
              int threads) {
  const auto specs = pick_categories(cats);
  const pp::Dataset ds =
      pp::generate_dataset(specs, n_per_cat, seed, opts, threads);
  pp::write_dataset(ds, resolve_path(out));
  std::printf("synth: wrote %zu instances across %zu categories to %s\n",
              ds.instances.size(), ds.categories.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-level object pose estimation benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags take precedence");

  int threads = 1;
  app.add_option("--threads", threads,
                 "Worker thread cap (never changes results)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  std::vector<std::string> synth_cats;
  int n_per_cat = 100;
  std::uint64_t synth_seed = 0;
  pp::GenOptions gen_opts;
  synth->add_option("--out", synth_out, "Output dataset file")->required();
  synth->add_option("--categories", synth_cats,
                    "Category names (default: all six)");
  synth->add_option("--n-per-category", n_per_cat, "Instances per category");
  synth->add_option("--seed", synth_seed, "Dataset seed");
  synth->add_option("--prior-points", gen_opts.prior_points, "Prior size N_m");
  synth->add_option("--model-points", gen_opts.model_points,
                    "Dense instance surface samples");
  synth->add_option("--max-patch-points", gen_opts.max_patch_points,
                    "Pixel budget per depth patch");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the pose model");
  TrainCli t;
  train_cmd->add_option("--dataset", t.dataset, "Dataset file")->required();
  train_cmd->add_option("--out", t.out_ckpt, "Checkpoint file")->required();
  train_cmd->add_option("--loss-csv", t.loss_csv, "Loss history CSV");
  train_cmd->add_option("--holdout-frac", t.holdout_frac,
                        "Held-out fraction per category (0 trains on all)");
  train_cmd->add_flag("--binary-checkpoint", t.binary_ckpt,
                      "Raw little-endian tensors instead of decimal text");
  add_train_options(train_cmd, t);

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "Evaluate predictions or a checkpoint");
  std::string eval_dataset, eval_preds, eval_ckpt, eval_report, eval_curves,
      eval_preds_out, eval_split = "all";
  double eval_holdout = 0.2;
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset file")->required();
  eval_cmd->add_option("--predictions", eval_preds, "Prediction file");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint");
  eval_cmd->add_option("--report", eval_report, "Report output file");
  eval_cmd->add_option("--curves", eval_curves,
                       "Prefix for AP-vs-threshold curve CSVs");
  eval_cmd->add_option("--predictions-out", eval_preds_out,
                       "Write model predictions to this file");
  eval_cmd->add_option("--split", eval_split, "all | train | test");
  eval_cmd->add_option("--holdout-frac", eval_holdout,
                       "Held-out fraction used by --split");

  // curves
  auto* curves_cmd =
      app.add_subcommand("curves", "Emit AP-vs-threshold curve CSVs");
  std::string cur_dataset, cur_preds, cur_ckpt, cur_out, cur_split = "all";
  double cur_holdout = 0.2;
  curves_cmd->add_option("--dataset", cur_dataset, "Dataset file")->required();
  curves_cmd->add_option("--predictions", cur_preds, "Prediction file");
  curves_cmd->add_option("--checkpoint", cur_ckpt, "Model checkpoint");
  curves_cmd->add_option("--out", cur_out, "Curve CSV prefix")->required();
  curves_cmd->add_option("--split", cur_split, "all | train | test");
  curves_cmd->add_option("--holdout-frac", cur_holdout,
                         "Held-out fraction used by --split");

  // ablate
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "Train ablation variants with a shared seed");
  TrainCli ab;
  std::string ab_out_dir;
  ablate_cmd->add_option("--dataset", ab.dataset, "Dataset file")->required();
  ablate_cmd->add_option("--out-dir", ab_out_dir, "Output directory")
      ->required();
  ablate_cmd->add_option("--holdout-frac", ab.holdout_frac,
                         "Held-out fraction per category");
  add_train_options(ablate_cmd, ab);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      return cmd_synth(synth_out, synth_cats, n_per_cat, synth_seed, gen_opts,
                       threads);
    }

    if (*train_cmd) {
      t.apply_flags();
      const pp::Dataset full = pp::read_dataset(resolve_path(t.dataset));
      const pp::Dataset train_ds =
          t.holdout_frac > 0.0 ? select_split(full, "train", t.holdout_frac)
                               : full;
      const pp::TrainResult result = pp::train(train_ds, t.mcfg, t.tcfg);
      pp::save_checkpoint(result.model, result.disc, resolve_path(t.out_ckpt),
                          t.binary_ckpt);
      if (!t.loss_csv.empty())
        pp::write_loss_csv(result.history, resolve_path(t.loss_csv));
      const double last = result.history.empty() ? 0.0
                                                 : result.history.back().total;
      std::printf("train: %zu instances, %d epochs, %zu steps, final loss %.6f\n",
                  train_ds.instances.size(), t.tcfg.epochs,
                  result.history.size(), last);
      return 0;
    }

    if (*eval_cmd || *curves_cmd) {
      const bool is_eval = static_cast<bool>(*eval_cmd);
      const std::string ds_path = is_eval ? eval_dataset : cur_dataset;
      const std::string preds_path = is_eval ? eval_preds : cur_preds;
      const std::string ckpt_path = is_eval ? eval_ckpt : cur_ckpt;
      const std::string split = is_eval ? eval_split : cur_split;
      const double holdout = is_eval ? eval_holdout : cur_holdout;
      if (preds_path.empty() == ckpt_path.empty())
        throw pp::InvalidInput(
            "exactly one of --predictions / --checkpoint is required");

      const pp::Dataset full = pp::read_dataset(resolve_path(ds_path));
      const pp::Dataset ds = select_split(full, split, holdout);

      pp::EvalReport report;
      if (!preds_path.empty()) {
        const auto preds = pp::read_predictions(resolve_path(preds_path));
        report = eval_predictions(ds, preds, true);
      } else {
        const auto [model, disc] = pp::load_checkpoint(resolve_path(ckpt_path));
        const pp::ModelEvaluation ev =
            pp::evaluate_model(model, ds, threads, true);
        report = ev.report;
        std::printf(
            "model: depth L1 %.4f m, chamfer depth %.5f, chamfer nocs %.5f, "
            "%d failed\n",
            ev.aux.mean_depth_l1, ev.aux.mean_chamfer_depth,
            ev.aux.mean_chamfer_nocs, ev.aux.failed_instances);
        if (is_eval && !eval_preds_out.empty())
          pp::write_predictions(ev.predictions, resolve_path(eval_preds_out));
      }

      if (is_eval) {
        if (!eval_report.empty())
          pp::write_report(report, resolve_path(eval_report));
        else
          std::fputs(pp::format_report(report).c_str(), stdout);
        if (!eval_curves.empty())
          pp::write_all_curves(report, resolve_path(eval_curves));
        print_report_summary(report, "eval");
      } else {
        pp::write_all_curves(report, resolve_path(cur_out));
        print_report_summary(report, "curves");
      }
      return 0;
    }

    if (*ablate_cmd) {
      ab.apply_flags();
      const pp::Dataset full = pp::read_dataset(resolve_path(ab.dataset));
      auto [train_ds, test_ds] = pp::split_dataset(full, ab.holdout_frac);
      std::filesystem::create_directories(resolve_path(ab_out_dir));

      struct Variant {
        std::string name;
        bool no_ngph, no_decouple, no_adversarial, direct_regression;
      };
      const std::vector<Variant> variants = {
          {"full", false, false, false, false},
          {"no_ngph", true, false, false, false},
          {"no_decouple", false, true, false, false},
          {"no_adversarial", false, false, true, false},
          {"direct_regression", false, false, false, true},
      };

      std::string table =
          "variant iou25 iou50 iou75 10cm 10deg 10deg10cm depth_l1\n";
      for (const auto& v : variants) {
        pp::ModelConfig mcfg = ab.mcfg;
        mcfg.use_ngph = !v.no_ngph;
        mcfg.decouple_depth = !v.no_decouple;
        mcfg.direct_regression = v.direct_regression;
        pp::TrainConfig tcfg = ab.tcfg;
        tcfg.adversarial = !v.no_adversarial;

        const pp::TrainResult result = pp::train(train_ds, mcfg, tcfg);
        const pp::ModelEvaluation ev =
            pp::evaluate_model(result.model, test_ds, threads, false);
        char row[256];
        std::snprintf(row, sizeof(row),
                      "%s %.4f %.4f %.4f %.4f %.4f %.4f %.4f\n",
                      v.name.c_str(), ev.report.mean.iou25,
                      ev.report.mean.iou50, ev.report.mean.iou75,
                      ev.report.mean.cm10, ev.report.mean.deg10,
                      ev.report.mean.deg10cm10, ev.aux.mean_depth_l1);
        table += row;
        std::printf("ablate[%s]: 10cm=%.4f iou50=%.4f 10deg10cm=%.4f\n",
                    v.name.c_str(), ev.report.mean.cm10, ev.report.mean.iou50,
                    ev.report.mean.deg10cm10);
        pp::save_checkpoint(
            result.model, result.disc,
            (std::filesystem::path(resolve_path(ab_out_dir)) /
             (v.name + ".ckpt"))
                .string(),
            false);
      }
      const std::string table_path =
          (std::filesystem::path(resolve_path(ab_out_dir)) / "ablation.txt")
              .string();
      std::ofstream out(table_path);
      if (!out) throw pp::IoError("cannot open for writing: " + table_path);
      out << table;
      std::printf("ablate: wrote %s\n", table_path.c_str());
      return 0;
    }
  } catch (const pp::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const pp::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const pp::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
