#include <cstdlib>
#include <fstream>
#include <sstream>

#include "common.hpp"

namespace lift3d::cli {

fs::path Common::output_dir() const {
  if (out_dir.empty()) return {};
  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + out_dir + ": " + ec.message());
  return dir;
}

json read_json_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw Error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string dump_line(const json &j) { return j.dump() + "\n"; }

json versions_json() { return {{"lift3d", kVersion}}; }

json pose_to_json(const Pose &pose) {
  const Mat3 &r = pose.rotation.matrix();
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({r(i, 0), r(i, 1), r(i, 2)});
  return {{"rotation", rows},
          {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
          {"scale", {pose.scale.x(), pose.scale.y(), pose.scale.z()}}};
}

namespace {

Vec3 vec3_from(const json &j, const char *what) {
  if (!j.is_array() || j.size() != 3) throw Error(std::string(what) + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Pose pose_from_json(const json &j) {
  try {
    Pose pose;
    if (j.contains("rotation")) {
      const json &r = j.at("rotation");
      if (!r.is_array() || r.size() != 3) throw Error("rotation must be a 3x3 array");
      Mat3 m;
      for (int i = 0; i < 3; ++i) m.row(i) = vec3_from(r[std::size_t(i)], "rotation row");
      pose.rotation = RotationMatrix::from_matrix(m);
    } else if (j.contains("quaternion")) {
      auto q = j.at("quaternion").get<std::vector<double>>();
      if (q.size() != 4) throw Error("quaternion must be [w, x, y, z]");
      pose.rotation = RotationMatrix::from_quaternion(q[0], q[1], q[2], q[3]);
    } else if (j.contains("rot6d")) {
      auto v = j.at("rot6d").get<std::vector<double>>();
      if (v.size() != 6) throw Error("rot6d must have 6 entries");
      pose.rotation = rot6d_to_matrix({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
    if (j.contains("translation")) pose.translation = vec3_from(j.at("translation"), "translation");
    if (j.contains("scale")) {
      const json &s = j.at("scale");
      pose.scale = s.is_number() ? Vec3::Constant(s.get<double>()) : vec3_from(s, "scale");
    }
    pose.validate();
    return pose;
  } catch (const json::exception &e) {
    throw Error(std::string("invalid pose: ") + e.what());
  }
}

Camera camera_from_json(const json &j) {
  try {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.validate();
    return c;
  } catch (const json::exception &e) {
    throw Error(std::string("invalid camera: ") + e.what());
  }
}

json camera_to_json(const Camera &c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
          {"width", c.width}, {"height", c.height}};
}

}  // namespace lift3d::cli

int main(int argc, char **argv) {
  using namespace lift3d::cli;
  CLI::App app{"lift3d: 3D reconstruction evaluation, render-paste data synthesis, "
               "and alignment-loop simulation"};
  app.name("lift3d");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", lift3d::kVersion);

  Common common;
  app.add_option("--seed", common.seed_flag, "Random seed (default: $LIFT3D_SEED, else 0)");
  app.add_option("--threads", common.threads, "Worker threads for per-sample parallelism")
      ->check(CLI::PositiveNumber);
  app.add_option("--config", common.config_path, "JSON file with per-module overrides");
  app.add_option("--out", common.out_dir, "Output directory (created if absent)");

  std::vector<std::pair<CLI::App *, Runner>> runners;
  auto reg = [&](auto add) {
    std::size_t before = app.get_subcommands({}).size();
    Runner r = add(app, common);
    runners.emplace_back(app.get_subcommands({})[before], std::move(r));
  };
  reg(add_eval_shape);
  reg(add_eval_layout);
  reg(add_icp);
  reg(add_renderpaste);
  reg(add_engine_sim);
  reg(add_refine);
  reg(add_fm_check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (common.seed_flag) {
      common.seed = *common.seed_flag;
    } else if (const char *env = std::getenv("LIFT3D_SEED"); env && *env) {
      try {
        std::size_t used = 0;
        common.seed = std::stoull(env, &used);
        if (env[used] != '\0') throw std::invalid_argument(env);
      } catch (const std::logic_error &) {
        throw UsageError(std::string("LIFT3D_SEED is not an unsigned integer: ") + env);
      }
    }
    if (!common.config_path.empty()) {
      common.config = read_json_file(common.config_path);
      if (!common.config.is_object()) throw lift3d::Error("--config must hold a JSON object");
    }
    for (auto &[sub, run] : runners)
      if (sub->parsed()) return run();
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lift3d::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
