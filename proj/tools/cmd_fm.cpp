#include <cstdio>

#include "common.hpp"

namespace lift3d::cli {

Runner add_fm_check(CLI::App &app, Common &common) {
  struct Opts {
    bool table = false;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand("fm-check", "Check the flow-matching objectives and NFE accounting");
  sub->add_flag("--table", opts->table, "Print a text table instead of JSON lines");

  return [opts, &common] {
    std::vector<CheckRow> rows = fm_self_check(common.seed);
    bool all = true;
    std::string text;
    for (const auto &r : rows) {
      all = all && r.pass;
      if (opts->table) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-32s %-4s value=%.17g expected=%.17g\n", r.name.c_str(),
                      r.pass ? "PASS" : "FAIL", r.value, r.expected);
        text += buf;
      } else {
        text += dump_line({{"check", r.name},
                           {"status", r.pass ? "PASS" : "FAIL"},
                           {"value", r.value},
                           {"expected", r.expected}});
      }
    }
    json summary = {{"type", "summary"},
                    {"checks", rows.size()},
                    {"all_pass", all},
                    {"seed", common.seed},
                    {"versions", versions_json()}};
    if (!opts->table) text += dump_line(summary);
    std::cout << text;
    if (fs::path dir = common.output_dir(); !dir.empty())
      write_text_file(dir / "fm_check.jsonl", text);
    return all ? kExitOk : kExitData;
  };
}

}  // namespace lift3d::cli
