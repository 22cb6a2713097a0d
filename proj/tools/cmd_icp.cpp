#include "common.hpp"

namespace lift3d::cli {

namespace {

PointCloud load_points(const fs::path &path) {
  std::string ext = path.extension().string();
  for (auto &c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".obj") return PointCloud(io::read_obj(path).vertices);
  return io::read_point_cloud(path);
}

}  // namespace

Runner add_icp(CLI::App &app, Common &common) {
  struct Opts {
    std::string src, dst;
    bool scale = false, multistart = false, centroids = false;
    std::optional<int> max_iterations;
    std::optional<double> tolerance, trim;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand("icp", "Register a source point cloud onto a target");
  sub->add_option("source", opts->src, "Source cloud (.ply, .obj vertices, or x y z text)")->required();
  sub->add_option("target", opts->dst, "Target cloud")->required();
  sub->add_flag("--scale", opts->scale, "Estimate a uniform scale (similarity ICP)");
  sub->add_flag("--multistart", opts->multistart, "Coarse starts from a rotation grid");
  sub->add_flag("--align-centroids", opts->centroids, "Start from the centroid-aligning translation");
  sub->add_option("--max-iterations", opts->max_iterations, "ICP iteration cap (default 50)");
  sub->add_option("--tolerance", opts->tolerance, "RMSE-decrease stopping tolerance (default 1e-6)");
  sub->add_option("--trim", opts->trim, "Fraction of worst pairs dropped per iteration");
  return [opts, &common] {
    IcpConfig cfg;
    json section = common.section("icp");
    override_from(section, "max_iterations", cfg.max_iterations);
    override_from(section, "convergence_tol", cfg.convergence_tol);
    override_from(section, "trim_fraction", cfg.trim_fraction);
    override_from(section, "estimate_scale", cfg.estimate_scale);
    override_from(section, "align_centroids", cfg.align_centroids);
    if (opts->max_iterations) cfg.max_iterations = *opts->max_iterations;
    if (opts->tolerance) cfg.convergence_tol = *opts->tolerance;
    if (opts->trim) cfg.trim_fraction = *opts->trim;
    cfg.estimate_scale = cfg.estimate_scale || opts->scale;
    cfg.align_centroids = cfg.align_centroids || opts->centroids;
    try {
      cfg.validate();
    } catch (const Error &e) {
      throw UsageError(e.what());
    }

    PointCloud src = load_points(opts->src);
    PointCloud dst = load_points(opts->dst);
    IcpResult r;
    if (opts->multistart) {
      GlobalIcpConfig g;
      g.refine = cfg;
      r = icp_multistart(src, dst, g);
    } else {
      r = icp(src, dst, cfg);
    }
    const Mat3 &m = r.transform.rigid.rotation.matrix();
    json rows = json::array();
    for (int i = 0; i < 3; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
    const Vec3 &t = r.transform.rigid.translation;
    json out = {{"rotation", rows},
                {"translation", {t.x(), t.y(), t.z()}},
                {"scale", r.transform.scale},
                {"rotation_deg", rotation_angle_deg(r.transform.rigid.rotation)},
                {"rmse", r.rmse},
                {"iterations", r.iterations},
                {"degenerate_step", r.degenerate_step},
                {"config",
                 {{"max_iterations", cfg.max_iterations},
                  {"convergence_tol", cfg.convergence_tol},
                  {"trim_fraction", cfg.trim_fraction},
                  {"estimate_scale", cfg.estimate_scale},
                  {"align_centroids", cfg.align_centroids},
                  {"multistart", opts->multistart}}},
                {"versions", versions_json()}};
    std::cout << dump_line(out);
    if (fs::path dir = common.output_dir(); !dir.empty())
      write_text_file(dir / "icp.json", out.dump(2) + "\n");
    return kExitOk;
  };
}

}  // namespace lift3d::cli
