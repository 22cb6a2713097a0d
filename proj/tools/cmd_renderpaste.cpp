#include <cstdio>
#include <map>

#include "common.hpp"

namespace lift3d::cli {

namespace {

std::string sample_name(const std::string &mode, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%06zu", mode.c_str(), i);
  return buf;
}

struct SampleOutcome {
  std::optional<RenderPasteSample> sample;
  std::string mesh;
  std::string reason;
  int attempts = 0;
  double visibility = 0.0;
  json cue;
};

}  // namespace

Runner add_renderpaste(CLI::App &app, Common &common) {
  struct Opts {
    std::string mode, background, camera, pointmap, mask, pose;
    std::vector<std::string> meshes;
    std::size_t count = 1;
    std::optional<double> min_visible, max_visible, min_area, min_visibility, focal;
    std::optional<int> max_attempts;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand(
      "renderpaste", "Synthesize occlusion training samples (fo: flying occlusions, "
                     "osr: object swap with random rotation, osa: object swap with annotated pose)");
  sub->add_option("mode", opts->mode, "fo, osr, or osa")
      ->required()
      ->check(CLI::IsMember({"fo", "osr", "osa"}));
  sub->add_option("--background", opts->background, "Background PNG")->required();
  sub->add_option("--mesh", opts->meshes, "Mesh pool (repeatable)")->required();
  sub->add_option("--camera", opts->camera, "Camera JSON {fx, fy, cx, cy, width, height}");
  sub->add_option("--focal", opts->focal,
                  "Focal length in pixels for a centered camera when --camera is absent "
                  "(default: image width)");
  sub->add_option("--count", opts->count, "Samples to attempt");
  sub->add_option("--pointmap", opts->pointmap, "Scene pointmap (osr, osa)");
  sub->add_option("--mask", opts->mask, "Mask of the removed object (osr, osa)");
  sub->add_option("--pose", opts->pose, "Annotated pose JSON (osa)");
  sub->add_option("--min-visible", opts->min_visible, "FO: lower visible-ratio bound");
  sub->add_option("--max-visible", opts->max_visible, "FO: upper visible-ratio bound");
  sub->add_option("--min-area", opts->min_area, "FO: minimum visible area as an image fraction");
  sub->add_option("--max-attempts", opts->max_attempts, "FO: placements tried per sample");
  sub->add_option("--min-visibility", opts->min_visibility, "OS: minimum visible fraction of the render");

  return [opts, &common] {
    const std::string &mode = opts->mode;
    if (common.out_dir.empty()) throw UsageError("renderpaste requires --out");
    if (mode != "fo" && (opts->pointmap.empty() || opts->mask.empty()))
      throw UsageError(mode + " requires --pointmap and --mask");
    if (mode == "osa" && opts->pose.empty()) throw UsageError("osa requires --pose");

    RgbImage background = io::read_rgb_png(opts->background);
    Camera camera = opts->camera.empty()
                        ? Camera::centered(background.width, background.height,
                                           opts->focal.value_or(double(background.width)))
                        : camera_from_json(read_json_file(opts->camera));
    std::vector<TriangleMesh> pool;
    for (const auto &m : opts->meshes) pool.push_back(io::read_mesh(m));

    FoPlacementConfig fo;
    json fo_section = common.section("fo");
    override_from(fo_section, "min_visible_ratio", fo.filter.min_visible_ratio);
    override_from(fo_section, "max_visible_ratio", fo.filter.max_visible_ratio);
    override_from(fo_section, "min_image_fraction", fo.filter.min_image_fraction);
    override_from(fo_section, "occluder_as_target_prob", fo.filter.occluder_as_target_prob);
    override_from(fo_section, "min_depth", fo.min_depth);
    override_from(fo_section, "max_depth", fo.max_depth);
    override_from(fo_section, "min_screen_size", fo.min_screen_size);
    override_from(fo_section, "max_screen_size", fo.max_screen_size);
    override_from(fo_section, "occluder_offset", fo.occluder_offset);
    override_from(fo_section, "max_attempts", fo.max_attempts);
    if (opts->min_visible) fo.filter.min_visible_ratio = *opts->min_visible;
    if (opts->max_visible) fo.filter.max_visible_ratio = *opts->max_visible;
    if (opts->min_area) fo.filter.min_image_fraction = *opts->min_area;
    if (opts->max_attempts) fo.max_attempts = *opts->max_attempts;
    if (fo.max_attempts < 1) throw UsageError("max attempts must be at least 1");

    OsrPipelineConfig os;
    json os_section = common.section("os");
    override_from(os_section, "min_visibility", os.render.min_visibility);
    override_from(os_section, "depth_margin", os.cue.depth_margin);
    override_from(os_section, "bottom_fraction", os.cue.bottom_fraction);
    override_from(os_section, "min_occluded_perimeter", os.cue.min_occluded_perimeter);
    override_from(os_section, "support_min_fraction", os.cue.support_min_fraction);
    if (opts->min_visibility) os.render.min_visibility = *opts->min_visibility;

    Pointmap scene;
    BinaryMask object_mask;
    std::optional<Pose> annotated;
    if (mode != "fo") {
      scene = io::read_pointmap(opts->pointmap);
      object_mask = io::read_mask(opts->mask);
      if (!scene.same_shape(background) || !object_mask.same_shape(background))
        throw Error("pointmap and mask must match the background size");
      if (mode == "osa") annotated = pose_from_json(read_json_file(opts->pose));
    }

    std::vector<SampleOutcome> outcomes(opts->count);
    parallel_for(opts->count, common.threads, [&](std::size_t i) {
      Rng rng(common.seed, i);
      SampleOutcome &o = outcomes[i];
      if (mode == "fo") {
        std::size_t t = rng.uniform_index(pool.size());
        std::size_t occ = rng.uniform_index(pool.size());
        FoResult r = fo_generate(background, pool[t], pool[occ], camera, rng, fo);
        o.attempts = r.attempts;
        o.reason = r.reason;
        o.mesh = opts->meshes[t];
        o.sample = std::move(r.sample);
      } else {
        std::size_t m = mode == "osa" ? i % pool.size() : rng.uniform_index(pool.size());
        OsrResult r = osr_generate(background, scene, object_mask, pool[m], camera, rng, os, annotated);
        o.attempts = 1;
        o.mesh = opts->meshes[m];
        o.reason = r.reason;
        o.visibility = r.visibility;
        if (!annotated)
          o.cue = {{"physical_support", r.cue.physical_support},
                   {"occluded_perimeter_fraction", r.cue.occluded_perimeter_fraction}};
        o.sample = std::move(r.sample);
      }
    });

    fs::path dir = common.output_dir();
    std::string manifest, rejections;
    std::map<std::string, std::size_t> reasons;
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      SampleOutcome &o = outcomes[i];
      std::string name = sample_name(mode, i);
      if (!o.sample) {
        ++reasons[o.reason];
        json rej = {{"id", name}, {"mode", mode}, {"reason", o.reason}, {"attempts", o.attempts},
                    {"mesh", o.mesh}};
        if (!o.cue.is_null()) rej["cue"] = o.cue;
        if (mode != "fo") rej["visibility"] = o.visibility;
        rejections += dump_line(rej);
        continue;
      }
      ++accepted;
      const RenderPasteSample &s = *o.sample;
      io::write_rgb_png(s.image, dir / (name + ".png"));
      io::write_mask_png(s.visible, dir / (name + "_visible.png"));
      io::write_mask_png(s.object, dir / (name + "_object.png"));
      std::size_t vis = s.visible.count(), obj = s.object.count();
      json rec = {{"id", name},
                  {"mode", mode},
                  {"image", name + ".png"},
                  {"visible_mask", name + "_visible.png"},
                  {"object_mask", name + "_object.png"},
                  {"mesh", o.mesh},
                  {"pose", pose_to_json(s.pose)},
                  {"target_is_occluder", s.target_is_occluder},
                  {"visible_pixels", vis},
                  {"object_pixels", obj},
                  {"visible_ratio", obj ? double(vis) / double(obj) : 0.0},
                  {"attempts", o.attempts}};
      if (mode != "fo") {
        io::write_pointmap(s.pointmap, dir / (name + "_pointmap.bin"));
        rec["pointmap"] = name + "_pointmap.bin";
        if (!o.cue.is_null()) rec["cue"] = o.cue;
      }
      manifest += dump_line(rec);
    }
    write_text_file(dir / "manifest.jsonl", manifest);
    write_text_file(dir / "rejections.jsonl", rejections);

    json config;
    if (mode == "fo")
      config = {{"min_visible_ratio", fo.filter.min_visible_ratio},
                {"max_visible_ratio", fo.filter.max_visible_ratio},
                {"min_image_fraction", fo.filter.min_image_fraction},
                {"occluder_as_target_prob", fo.filter.occluder_as_target_prob},
                {"max_attempts", fo.max_attempts}};
    else
      config = {{"min_visibility", os.render.min_visibility},
                {"bottom_fraction", os.cue.bottom_fraction},
                {"min_occluded_perimeter", os.cue.min_occluded_perimeter},
                {"depth_margin", os.cue.depth_margin}};
    config["seed"] = common.seed;
    config["camera"] = camera_to_json(camera);
    json reason_counts = json::object();
    for (const auto &[k, v] : reasons) reason_counts[k] = v;
    json summary = {{"mode", mode},
                    {"requested", opts->count},
                    {"accepted", accepted},
                    {"rejected", opts->count - accepted},
                    {"reasons", reason_counts},
                    {"config", config},
                    {"versions", versions_json()}};
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << dump_line(summary);
    return kExitOk;
  };
}

}  // namespace lift3d::cli
