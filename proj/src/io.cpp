#include "priorpose/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace priorpose {

namespace {

using Json = nlohmann::ordered_json;

Json pose_to_json(const Pose& pose) {
  Json j;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[r * 3 + c] = pose.rotation(r, c);
  j["rotation"] = rot;
  j["translation"] = {pose.translation.x(), pose.translation.y(),
                      pose.translation.z()};
  j["scale"] = pose.scale;
  return j;
}

Pose pose_from_json(const Json& j) {
  Pose pose;
  const auto rot = j.at("rotation").get<std::vector<double>>();
  if (rot.size() != 9) throw ParseError("pose rotation must have 9 values");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[r * 3 + c];
  const auto t = j.at("translation").get<std::vector<double>>();
  if (t.size() != 3) throw ParseError("pose translation must have 3 values");
  pose.translation = Vec3(t[0], t[1], t[2]);
  pose.scale = j.at("scale").get<double>();
  if (!is_rotation_matrix(pose.rotation, 1e-4))
    throw ParseError("rotation is not orthonormal with det +1");
  if (!(pose.scale > 0.0)) throw ParseError("pose scale must be positive");
  return pose;
}

Json points_to_json(const Points& pts) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    arr.push_back({pts(i, 0), pts(i, 1), pts(i, 2)});
  return arr;
}

Points points_from_json(const Json& arr) {
  Points pts(static_cast<Eigen::Index>(arr.size()), 3);
  Eigen::Index i = 0;
  for (const auto& row : arr) {
    if (!row.is_array() || row.size() != 3)
      throw ParseError("point must have 3 coordinates");
    for (int c = 0; c < 3; ++c) pts(i, c) = row[c].get<double>();
    ++i;
  }
  return pts;
}

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  auto out = open_out(path);
  Json header;
  header["type"] = "dataset_header";
  header["version"] = 1;
  header["seed"] = ds.seed;
  header["image_width"] = ds.image_width;
  header["image_height"] = ds.image_height;
  Json cats = Json::array();
  for (const auto& c : ds.categories) {
    Json jc;
    jc["name"] = c.spec.name;
    jc["generator"] = generator_name(c.spec.generator);
    jc["symmetric_about_y"] = c.spec.symmetric_about_y;
    jc["size_min"] = vec3_to_json(c.spec.size_min);
    jc["size_max"] = vec3_to_json(c.spec.size_max);
    jc["prior"] = points_to_json(c.prior.points);
    cats.push_back(jc);
  }
  header["categories"] = cats;
  out << header.dump() << "\n";

  for (const auto& inst : ds.instances) {
    Json j;
    j["type"] = "instance";
    j["id"] = inst.id;
    j["category"] = inst.category;
    j["pose"] = pose_to_json(inst.gt_pose);
    j["size"] = vec3_to_json(inst.gt_size);
    j["intrinsics"] = {{"fx", inst.intrinsics.fx},
                       {"fy", inst.intrinsics.fy},
                       {"cx", inst.intrinsics.cx},
                       {"cy", inst.intrinsics.cy}};
    j["bbox"] = {{"l", inst.bbox.l},
                 {"t", inst.bbox.t},
                 {"r", inst.bbox.r},
                 {"b", inst.bbox.b}};
    Json pixels = Json::array();
    for (Eigen::Index i = 0; i < inst.depth_patch.size(); ++i)
      pixels.push_back(
          {inst.depth_patch.pixels(i, 0), inst.depth_patch.pixels(i, 1)});
    j["pixels"] = pixels;
    Json depths = Json::array();
    for (Eigen::Index i = 0; i < inst.depth_patch.size(); ++i)
      depths.push_back(inst.depth_patch.depths[i]);
    j["depths"] = depths;
    j["nocs"] = points_to_json(inst.gt_nocs.points);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  auto in = open_in(path);
  Dataset ds;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const std::exception& e) {
      parse_fail(path, line_no, e.what());
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "dataset_header") {
        if (have_header) parse_fail(path, line_no, "duplicate header");
        have_header = true;
        ds.seed = j.at("seed").get<std::uint64_t>();
        ds.image_width = j.at("image_width").get<int>();
        ds.image_height = j.at("image_height").get<int>();
        for (const auto& jc : j.at("categories")) {
          CategoryEntry entry;
          entry.spec.name = jc.at("name").get<std::string>();
          const auto gen =
              generator_from_name(jc.at("generator").get<std::string>());
          if (!gen) parse_fail(path, line_no, "unknown generator");
          entry.spec.generator = *gen;
          entry.spec.symmetric_about_y =
              jc.at("symmetric_about_y").get<bool>();
          entry.spec.size_min = vec3_from_json(jc.at("size_min"));
          entry.spec.size_max = vec3_from_json(jc.at("size_max"));
          entry.prior.points = points_from_json(jc.at("prior"));
          ds.categories.push_back(std::move(entry));
        }
      } else if (type == "instance") {
        if (!have_header)
          parse_fail(path, line_no, "instance before dataset header");
        SceneInstance inst;
        inst.id = j.at("id").get<int>();
        inst.category = j.at("category").get<std::string>();
        inst.gt_pose = pose_from_json(j.at("pose"));
        inst.gt_size = vec3_from_json(j.at("size"));
        const auto& ji = j.at("intrinsics");
        inst.intrinsics = {ji.at("fx").get<double>(), ji.at("fy").get<double>(),
                           ji.at("cx").get<double>(), ji.at("cy").get<double>()};
        const auto& jb = j.at("bbox");
        inst.bbox = {jb.at("l").get<double>(), jb.at("t").get<double>(),
                     jb.at("r").get<double>(), jb.at("b").get<double>()};
        if (inst.bbox.r <= inst.bbox.l || inst.bbox.b <= inst.bbox.t)
          parse_fail(path, line_no, "degenerate bbox");
        const auto& jp = j.at("pixels");
        const auto& jd = j.at("depths");
        if (jp.size() != jd.size())
          parse_fail(path, line_no, "pixel/depth count mismatch");
        const Eigen::Index np = static_cast<Eigen::Index>(jp.size());
        if (np < 1) parse_fail(path, line_no, "empty depth patch");
        inst.depth_patch.pixels.resize(np, 2);
        inst.depth_patch.depths.resize(np);
        for (Eigen::Index i = 0; i < np; ++i) {
          inst.depth_patch.pixels(i, 0) = jp[i][0].get<double>();
          inst.depth_patch.pixels(i, 1) = jp[i][1].get<double>();
          inst.depth_patch.depths[i] = jd[i].get<double>();
          if (!(inst.depth_patch.depths[i] > 0.0))
            parse_fail(path, line_no, "non-positive depth");
        }
        inst.gt_nocs.points = points_from_json(j.at("nocs"));
        if (inst.gt_nocs.size() != np)
          parse_fail(path, line_no, "nocs count must equal pixel count");
        ds.instances.push_back(std::move(inst));
      } else {
        parse_fail(path, line_no, "unknown record type: " + type);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      parse_fail(path, line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(path + ": missing dataset header");
  return ds;
}

void write_predictions(const std::vector<PredictionRecord>& preds,
                       const std::string& path) {
  auto out = open_out(path);
  for (const auto& p : preds) {
    Json j;
    j["id"] = p.id;
    j["category"] = p.category;
    j["pose"] = pose_to_json(p.pose);
    j["size"] = vec3_to_json(p.size);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  auto in = open_in(path);
  std::vector<PredictionRecord> preds;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      PredictionRecord p;
      p.id = j.at("id").get<int>();
      p.category = j.at("category").get<std::string>();
      p.pose = pose_from_json(j.at("pose"));
      p.size = vec3_from_json(j.at("size"));
      if ((p.size.array() <= 0.0).any())
        parse_fail(path, line_no, "prediction size must be positive");
      preds.push_back(std::move(p));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      parse_fail(path, line_no, e.what());
    }
  }
  return preds;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  char buf[128];
  auto emit = [&](const std::string& cat, const CategoryAp& ap) {
    const std::pair<const char*, double> metrics[] = {
        {"iou25", ap.iou25},   {"iou50", ap.iou50},
        {"iou75", ap.iou75},   {"10cm", ap.cm10},
        {"10deg", ap.deg10},   {"10deg10cm", ap.deg10cm10}};
    for (const auto& [name, value] : metrics) {
      std::snprintf(buf, sizeof(buf), "%s %s %.6f\n", cat.c_str(), name, value);
      out << buf;
    }
  };
  for (const auto& [cat, ap] : report.per_category) emit(cat, ap);
  emit("mean", report.mean);
  return out.str();
}

void write_report(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << format_report(report);
  if (!out) throw IoError("write failed: " + path);
}

void write_curve_csv(
    const std::map<std::string, std::vector<CurvePoint>>& curves,
    const std::string& path) {
  auto out = open_out(path);
  out << "threshold,category,ap\n";
  char buf[128];
  for (const auto& [cat, curve] : curves) {
    for (const CurvePoint& p : curve) {
      std::snprintf(buf, sizeof(buf), "%.6g,%s,%.6f\n", p.threshold,
                    cat.c_str(), p.ap);
      out << buf;
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_all_curves(const EvalReport& report, const std::string& prefix) {
  write_curve_csv(report.iou_curves, prefix + "_iou.csv");
  write_curve_csv(report.rotation_curves, prefix + "_rotation.csv");
  write_curve_csv(report.translation_curves, prefix + "_translation.csv");
}

void write_ply(const PointCloud& cloud, const std::string& path) {
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "end_header\n";
  char buf[128];
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", cloud.points(i, 0),
                  cloud.points(i, 1), cloud.points(i, 2));
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace priorpose
