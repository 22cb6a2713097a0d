#include <cstdio>

#include "common.hpp"

namespace lift3d::cli {

Runner add_refine(CLI::App &app, Common &common) {
  struct Opts {
    std::string mesh, init, target, camera;
    std::optional<int> max_evals;
    std::optional<std::string> optimizer;
    bool no_moments = false;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand("refine", "Refine a layout by maximizing silhouette IoU");
  sub->add_option("--mesh", opts->mesh, "Object mesh (.obj or .ply)")->required();
  sub->add_option("--init", opts->init, "Initial pose JSON")->required();
  sub->add_option("--target", opts->target, "Target mask (PNG or ASCII PGM)")->required();
  sub->add_option("--camera", opts->camera, "Camera JSON {fx, fy, cx, cy, width, height}")->required();
  sub->add_option("--max-evals", opts->max_evals, "Silhouette evaluation budget (default 500)");
  sub->add_option("--optimizer", opts->optimizer, "pattern or cma-es")
      ->check(CLI::IsMember({"pattern", "cma-es"}));
  sub->add_flag("--no-moments", opts->no_moments, "Skip the centroid and area pre-alignment");

  return [opts, &common] {
    RefineConfig cfg;
    json section = common.section("refine");
    override_from(section, "max_evaluations", cfg.max_evaluations);
    override_from(section, "rotation_step", cfg.rotation_step);
    override_from(section, "translation_step", cfg.translation_step);
    override_from(section, "log_scale_step", cfg.log_scale_step);
    override_from(section, "align_moments", cfg.align_moments);
    std::string optimizer = "pattern";
    override_from(section, "optimizer", optimizer);
    if (opts->max_evals) cfg.max_evaluations = *opts->max_evals;
    if (opts->optimizer) optimizer = *opts->optimizer;
    if (opts->no_moments) cfg.align_moments = false;
    if (optimizer != "pattern" && optimizer != "cma-es")
      throw UsageError("optimizer must be pattern or cma-es");
    cfg.optimizer = optimizer == "cma-es" ? RefineOptimizer::cma_es : RefineOptimizer::pattern_search;
    cfg.seed = common.seed;
    try {
      cfg.validate();
    } catch (const Error &e) {
      throw UsageError(e.what());
    }

    TriangleMesh mesh = io::read_mesh(opts->mesh);
    Pose init = pose_from_json(read_json_file(opts->init));
    BinaryMask target = io::read_mask(opts->target);
    Camera camera = camera_from_json(read_json_file(opts->camera));

    RefineResult r = refine_layout(mesh, init, target, camera, cfg);
    double iou_init = pose_iou(mesh, init, target, camera);
    Pose kept = accept_refinement(init, r.pose, mesh, target, camera);
    bool accepted = r.iou > iou_init;

    json out = {{"pose", pose_to_json(kept)},
                {"candidate_pose", pose_to_json(r.pose)},
                {"accepted", accepted},
                {"iou_init", iou_init},
                {"iou", accepted ? r.iou : iou_init},
                {"candidate_iou", r.iou},
                {"evaluations", r.evaluations},
                {"config",
                 {{"optimizer", optimizer},
                  {"max_evaluations", cfg.max_evaluations},
                  {"align_moments", cfg.align_moments},
                  {"seed", cfg.seed}}},
                {"versions", versions_json()}};
    std::cout << dump_line(out);
    if (fs::path dir = common.output_dir(); !dir.empty()) {
      write_text_file(dir / "refined_pose.json", pose_to_json(kept).dump(2) + "\n");
      std::string csv = "evaluation,best_iou\n";
      for (std::size_t i = 0; i < r.trace.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.9f\n", i + 1, r.trace[i]);
        csv += buf;
      }
      write_text_file(dir / "trace.csv", csv);
      write_text_file(dir / "refine.json", out.dump(2) + "\n");
    }
    return kExitOk;
  };
}

}  // namespace lift3d::cli
