#include <fstream>

#include "common.hpp"

namespace lift3d::cli {

namespace {

struct ManifestEntry {
  std::string id;
  json record;        // the parsed line, or null when it did not parse
  std::string error;  // parse error, if any
};

std::vector<ManifestEntry> read_manifest(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    e.id = "line " + std::to_string(line_no);
    try {
      e.record = json::parse(line);
      if (!e.record.is_object()) throw Error("manifest line is not a JSON object");
      if (e.record.contains("id")) {
        const json &id = e.record.at("id");
        e.id = id.is_string() ? id.get<std::string>() : id.dump();
      }
    } catch (const std::exception &ex) {
      e.record = nullptr;
      e.error = ex.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

fs::path resolve(const fs::path &base, const json &record, const char *key) {
  if (!record.contains(key) || !record.at(key).is_string())
    throw Error(std::string("manifest entry lacks \"") + key + "\"");
  fs::path p(record.at(key).get<std::string>());
  return p.is_absolute() ? p : base / p;
}

Pose pose_field(const fs::path &base, const json &record, const char *key) {
  if (!record.contains(key)) throw Error(std::string("manifest entry lacks \"") + key + "\"");
  const json &v = record.at(key);
  if (v.is_string()) {
    fs::path p(v.get<std::string>());
    return pose_from_json(read_json_file(p.is_absolute() ? p : base / p));
  }
  return pose_from_json(v);
}

struct Outcome {
  json line;
  bool ok = false;
};

// Evaluates every manifest entry (in parallel, output in manifest order),
// writes one JSON line per entry plus a final aggregate line, and returns
// the exit code.
template <class Eval>
int run_manifest(const Common &common, const fs::path &manifest, const json &config_json,
                 const char *group, const std::vector<const char *> &keys, Eval eval) {
  auto entries = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  std::vector<Outcome> outcomes(entries.size());
  parallel_for(entries.size(), common.threads, [&](std::size_t i) {
    const ManifestEntry &e = entries[i];
    json line = {{"sample_id", e.id}};
    try {
      if (!e.error.empty()) throw Error("unparseable manifest line: " + e.error);
      line[group] = eval(base, e.record);
      line["config"] = config_json;
      line["versions"] = versions_json();
      outcomes[i].ok = true;
    } catch (const std::exception &ex) {
      line["error"] = ex.what();
    }
    outcomes[i].line = std::move(line);
  });

  std::string text;
  json errors = json::array();
  std::vector<double> sums(keys.size(), 0.0);
  std::size_t n = 0;
  for (const auto &o : outcomes) {
    text += dump_line(o.line);
    if (!o.ok) {
      errors.push_back({{"sample_id", o.line.at("sample_id")}, {"error", o.line.at("error")}});
      continue;
    }
    ++n;
    const json &values = o.line.at(group);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const json &v = values.at(keys[k]);
      sums[k] += v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0) : v.get<double>();
    }
  }
  json means = nullptr;
  if (n > 0) {
    means = json::object();
    for (std::size_t k = 0; k < keys.size(); ++k) means[keys[k]] = sums[k] / double(n);
  }
  json summary = {{"aggregate", {{"n", n}, {"n_errors", errors.size()}, {group, means}}},
                  {"errors", errors},
                  {"config", config_json},
                  {"versions", versions_json()}};
  text += dump_line(summary);
  std::cout << text;
  if (fs::path dir = common.output_dir(); !dir.empty()) {
    write_text_file(dir / "reports.jsonl", text);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  }
  return errors.empty() ? kExitOk : kExitData;
}

}  // namespace

Runner add_eval_shape(CLI::App &app, Common &common) {
  struct Opts {
    std::string manifest;
    std::optional<std::size_t> points, emd_points;
    std::optional<std::string> alignment;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand("eval-shape", "Shape metrics (F1, vIoU, Chamfer, EMD) per manifest entry");
  sub->add_option("manifest", opts->manifest, "JSON-lines manifest {id, pred_mesh, gt_mesh}")
      ->required();
  sub->add_option("--points", opts->points, "Surface samples per mesh (default 1000000)");
  sub->add_option("--emd-points", opts->emd_points, "Subsample size for exact EMD (default 1024)");
  sub->add_option("--alignment", opts->alignment, "multistart or identity")
      ->check(CLI::IsMember({"multistart", "identity"}));
  return [opts, &common] {
    ShapeEvalConfig cfg;
    json section = common.section("eval_shape");
    override_from(section, "n_points", cfg.n_points);
    override_from(section, "emd_points", cfg.emd_subsample);
    override_from(section, "fscore_threshold", cfg.fscore_threshold);
    override_from(section, "voxel_resolution", cfg.voxel_resolution);
    std::string alignment = "multistart";
    override_from(section, "alignment", alignment);
    if (opts->points) cfg.n_points = *opts->points;
    if (opts->emd_points) cfg.emd_subsample = *opts->emd_points;
    if (opts->alignment) alignment = *opts->alignment;
    if (alignment != "multistart" && alignment != "identity")
      throw UsageError("alignment must be multistart or identity");
    cfg.alignment = alignment == "identity" ? InitialAlignment::identity : InitialAlignment::multistart;
    cfg.seed = common.seed;
    json config_json = {{"n_points", cfg.n_points},
                        {"emd_points", cfg.emd_subsample},
                        {"fscore_threshold", cfg.fscore_threshold},
                        {"voxel_resolution", cfg.voxel_resolution},
                        {"alignment", alignment},
                        {"seed", cfg.seed}};
    return run_manifest(common, opts->manifest, config_json, "shape",
                        {"f1", "precision", "recall", "viou", "chamfer", "emd"},
                        [&](const fs::path &base, const json &rec) -> json {
                          TriangleMesh pred = io::read_mesh(resolve(base, rec, "pred_mesh"));
                          TriangleMesh gt = io::read_mesh(resolve(base, rec, "gt_mesh"));
                          ShapeReport r = eval_shape(pred, gt, cfg);
                          return {{"f1", r.f1},
                                  {"precision", r.precision},
                                  {"recall", r.recall},
                                  {"viou", r.voxel_iou},
                                  {"chamfer", r.chamfer},
                                  {"emd", r.emd},
                                  {"icp_rmse", r.metadata.icp_rmse},
                                  {"icp_scale", r.metadata.icp_scale}};
                        });
  };
}

Runner add_eval_layout(CLI::App &app, Common &common) {
  struct Opts {
    std::string manifest;
    std::optional<std::size_t> points;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand("eval-layout", "Layout metrics (3D IoU, ICP-Rot, ADD-S) per manifest entry");
  sub->add_option("manifest", opts->manifest,
                  "JSON-lines manifest {id, pred_mesh, gt_mesh, pred_pose, gt_pose}")
      ->required();
  sub->add_option("--points", opts->points, "Surface samples per mesh (default 10000)");
  return [opts, &common] {
    LayoutEvalConfig cfg;
    json section = common.section("eval_layout");
    override_from(section, "n_points", cfg.n_points);
    override_from(section, "add_s_threshold", cfg.add_s_threshold);
    override_from(section, "icp_max_iterations", cfg.icp.max_iterations);
    if (opts->points) cfg.n_points = *opts->points;
    cfg.seed = common.seed;
    json config_json = {{"n_points", cfg.n_points},
                        {"add_s_threshold", cfg.add_s_threshold},
                        {"icp_max_iterations", cfg.icp.max_iterations},
                        {"seed", cfg.seed}};
    return run_manifest(common, opts->manifest, config_json, "layout",
                        {"iou3d", "icp_rot_deg", "add_s", "add_s_at_01"},
                        [&](const fs::path &base, const json &rec) -> json {
                          PosedMesh pred{io::read_mesh(resolve(base, rec, "pred_mesh")),
                                         pose_field(base, rec, "pred_pose")};
                          PosedMesh gt{io::read_mesh(resolve(base, rec, "gt_mesh")),
                                       pose_field(base, rec, "gt_pose")};
                          LayoutReport r = eval_layout(pred, gt, cfg);
                          return {{"iou3d", r.iou3d},
                                  {"icp_rot_deg", r.icp_rot_deg},
                                  {"add_s", r.add_s},
                                  {"add_s_at_01", r.add_s_at_01},
                                  {"iou_degenerate", r.iou_degenerate}};
                        });
  };
}

}  // namespace lift3d::cli
