#pragma once

#include <string>
#include <vector>

#include "priorpose/eval.hpp"
#include "priorpose/synth.hpp"

namespace priorpose {

// One externally supplied pose estimate, keyed to a dataset instance id.
struct PredictionRecord {
  int id = 0;
  std::string category;
  Pose pose;
  Vec3 size = Vec3::Ones();  // metric box extents
};

// Scene files are line-oriented: a header record followed by one JSON record
// per instance. Identical datasets serialize to identical bytes.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

void write_predictions(const std::vector<PredictionRecord>& preds,
                       const std::string& path);
std::vector<PredictionRecord> read_predictions(const std::string& path);

// One "category metric value" record per line; includes the mean row.
void write_report(const EvalReport& report, const std::string& path);

// CSV with header "threshold,category,ap"; one file per metric kind.
void write_curve_csv(
    const std::map<std::string, std::vector<CurvePoint>>& curves,
    const std::string& path);

// Writes all three curve families as <prefix>_{iou,rotation,translation}.csv.
void write_all_curves(const EvalReport& report, const std::string& prefix);

void write_ply(const PointCloud& cloud, const std::string& path);

std::string format_report(const EvalReport& report);

}  // namespace priorpose
