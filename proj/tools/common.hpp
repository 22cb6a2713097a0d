#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lift3d/lift3d.hpp"

namespace lift3d::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 2;
inline constexpr int kExitUsage = 64;

// Options shared by every subcommand.
struct Common {
  std::optional<std::uint64_t> seed_flag;
  unsigned threads = 1;
  std::string config_path;
  std::string out_dir;

  std::uint64_t seed = 0;  // resolved: flag, then LIFT3D_SEED, then 0
  json config = json::object();

  // Per-module overrides from the --config file, or an empty object.
  json section(const char *name) const {
    return config.contains(name) ? config.at(name) : json::object();
  }
  // Creates the output directory if needed and returns it; empty when unset.
  fs::path output_dir() const;
};

// Raised for malformed command lines detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path &path);
void write_text_file(const fs::path &path, const std::string &text);
std::string dump_line(const json &j);  // compact, newline terminated

json versions_json();
json pose_to_json(const Pose &pose);
Pose pose_from_json(const json &j);
Camera camera_from_json(const json &j);
json camera_to_json(const Camera &camera);

// Reads `key` from an override object into `value` when present.
template <class T>
void override_from(const json &section, const char *key, T &value) {
  if (section.contains(key)) value = section.at(key).get<T>();
}

// Subcommand registration. Each returns the process exit code when run.
using Runner = std::function<int()>;
Runner add_eval_shape(CLI::App &app, Common &common);
Runner add_eval_layout(CLI::App &app, Common &common);
Runner add_icp(CLI::App &app, Common &common);
Runner add_renderpaste(CLI::App &app, Common &common);
Runner add_engine_sim(CLI::App &app, Common &common);
Runner add_refine(CLI::App &app, Common &common);
Runner add_fm_check(CLI::App &app, Common &common);

}  // namespace lift3d::cli
