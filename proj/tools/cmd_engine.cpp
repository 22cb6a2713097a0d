#include <sstream>

#include "common.hpp"

namespace lift3d::cli {

namespace {

std::vector<double> parse_list(const std::string &text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::logic_error &) {
      throw UsageError("curriculum entries must be numbers: \"" + item + "\"");
    }
  }
  return out;
}

// Evenly spaced thresholds from 0.3 to 0.6 when only K is given.
std::vector<double> linear_curriculum(int k) {
  std::vector<double> out;
  for (int i = 0; i < k; ++i) out.push_back(k == 1 ? 0.3 : 0.3 + 0.3 * i / (k - 1));
  return out;
}

json iteration_json(const IterationReport &it) {
  json mix = json::object();
  for (const auto &s : it.source_mix) mix[s.source] = s.fraction;
  return {{"type", "iteration"},
          {"iteration", it.iteration},
          {"alpha", it.alpha},
          {"collected", it.collected},
          {"accepted", it.accepted},
          {"aggregated", it.aggregated},
          {"mean_accepted_quality", it.mean_accepted_quality},
          {"preference_pairs", it.preference_pairs},
          {"source_mix", mix},
          {"current_share", it.current_share},
          {"current_median_quality", it.current_median_quality},
          {"elo", it.elo},
          {"elo_gain", it.elo_gain},
          {"elo_finite", it.elo_finite},
          {"recovery_attempts", it.recovery_attempts},
          {"recovery_accepts", it.recovery_accepts}};
}

}  // namespace

Runner add_engine_sim(CLI::App &app, Common &common) {
  struct Opts {
    std::optional<int> iterations, candidates, inputs, recover_n, elo_games;
    std::optional<std::string> curriculum;
    std::optional<double> temperature, epsilon, rating_noise, reward_noise, update_rate;
    bool recovery = false, online = false;
    std::string elo_csv;
  };
  auto opts = std::make_shared<Opts>();
  auto *sub = app.add_subcommand("engine-sim", "Simulate the best-of-N data engine with a curriculum");
  sub->add_option("-K,--iterations", opts->iterations, "Iterations (default 5)");
  sub->add_option("-N,--candidates", opts->candidates, "Candidates per input (default 8)");
  sub->add_option("--curriculum", opts->curriculum,
                  "Comma-separated acceptance thresholds, one per iteration");
  sub->add_option("--temperature", opts->temperature, "Annotator choice noise (0 is a perfect judge)");
  sub->add_option("--epsilon", opts->epsilon, "Quality gap below which candidates tie");
  sub->add_option("--rating-noise", opts->rating_noise, "Annotator rating noise sd");
  sub->add_option("--inputs", opts->inputs, "Inputs per iteration (default 200)");
  sub->add_option("--update-rate", opts->update_rate, "Model update step toward the accepted mean");
  sub->add_flag("--recovery", opts->recovery, "Retry rejected inputs with reward-ranked best-of-N");
  sub->add_option("--recover-n", opts->recover_n, "Recovery candidates (default 50)");
  sub->add_option("--reward-noise", opts->reward_noise, "Reward model noise sd (default 0.35)");
  sub->add_option("--elo-games", opts->elo_games, "Simulated games per model pair (default 200)");
  sub->add_flag("--online-elo", opts->online, "Sequential Elo updates instead of the batch fit");
  sub->add_option("--elo-csv", opts->elo_csv, "Write per-iteration Elo ratings as CSV");

  return [opts, &common] {
    EngineConfig cfg;
    json section = common.section("engine");
    override_from(section, "iterations", cfg.iterations);
    override_from(section, "candidates", cfg.candidates);
    override_from(section, "inputs_per_iteration", cfg.inputs_per_iteration);
    override_from(section, "update_rate", cfg.update_rate);
    override_from(section, "temperature", cfg.annotator.temperature);
    override_from(section, "equal_margin", cfg.annotator.equal_margin);
    override_from(section, "rating_noise", cfg.annotator.rating_noise);
    override_from(section, "recovery", cfg.recovery.enabled);
    override_from(section, "recovery_candidates", cfg.recovery.candidates);
    override_from(section, "reward_noise", cfg.recovery.reward.noise);
    override_from(section, "elo_games_per_pair", cfg.elo_games_per_pair);
    override_from(section, "elo_online", cfg.elo_online);
    bool curriculum_set = section.contains("curriculum");
    override_from(section, "curriculum", cfg.curriculum);

    if (opts->iterations) cfg.iterations = *opts->iterations;
    if (opts->candidates) cfg.candidates = *opts->candidates;
    if (opts->inputs) cfg.inputs_per_iteration = *opts->inputs;
    if (opts->update_rate) cfg.update_rate = *opts->update_rate;
    if (opts->temperature) cfg.annotator.temperature = *opts->temperature;
    if (opts->epsilon) cfg.annotator.equal_margin = *opts->epsilon;
    if (opts->rating_noise) cfg.annotator.rating_noise = *opts->rating_noise;
    if (opts->recovery) cfg.recovery.enabled = true;
    if (opts->recover_n) cfg.recovery.candidates = *opts->recover_n;
    if (opts->reward_noise) cfg.recovery.reward.noise = *opts->reward_noise;
    if (opts->elo_games) cfg.elo_games_per_pair = *opts->elo_games;
    if (opts->online) cfg.elo_online = true;
    if (opts->curriculum) {
      cfg.curriculum = parse_list(*opts->curriculum);
      curriculum_set = true;
      if (!opts->iterations && !section.contains("iterations"))
        cfg.iterations = static_cast<int>(cfg.curriculum.size());
    }
    if (!curriculum_set && cfg.curriculum.size() != std::size_t(std::max(cfg.iterations, 0)))
      cfg.curriculum = linear_curriculum(std::max(cfg.iterations, 1));
    try {
      cfg.validate();
    } catch (const Error &e) {
      throw UsageError(e.what());
    }

    Rng rng(common.seed);
    EngineReport report = run_engine(cfg, rng);

    std::string text, csv = "iteration,model,rating\n";
    for (const auto &it : report.iterations) {
      text += dump_line(iteration_json(it));
      for (std::size_t m = 0; m < it.ratings.size(); ++m) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d,%zu,%.6f\n", it.iteration, m, it.ratings[m]);
        csv += buf;
      }
    }
    json config = {{"iterations", cfg.iterations},
                   {"candidates", cfg.candidates},
                   {"curriculum", cfg.curriculum},
                   {"inputs_per_iteration", cfg.inputs_per_iteration},
                   {"update_rate", cfg.update_rate},
                   {"temperature", cfg.annotator.temperature},
                   {"equal_margin", cfg.annotator.equal_margin},
                   {"rating_noise", cfg.annotator.rating_noise},
                   {"recovery", cfg.recovery.enabled},
                   {"recovery_candidates", cfg.recovery.candidates},
                   {"reward_noise", cfg.recovery.reward.noise},
                   {"elo_games_per_pair", cfg.elo_games_per_pair},
                   {"elo_online", cfg.elo_online},
                   {"seed", common.seed}};
    std::size_t accepted_total = 0;
    for (const auto &it : report.iterations) accepted_total += it.accepted;
    const IterationReport &last = report.iterations.back();
    json summary = {{"type", "summary"},
                    {"records", report.records.size()},
                    {"accepted", accepted_total},
                    {"aggregated", last.aggregated},
                    {"final_median_quality", last.current_median_quality},
                    {"final_elo_gain", last.elo_gain},
                    {"final_ratings", report.final_ratings},
                    {"config", config},
                    {"versions", versions_json()}};
    text += dump_line(summary);
    std::cout << text;
    if (!opts->elo_csv.empty()) write_text_file(opts->elo_csv, csv);
    if (fs::path dir = common.output_dir(); !dir.empty()) {
      write_text_file(dir / "engine.jsonl", text);
      write_text_file(dir / "elo.csv", csv);
    }
    return kExitOk;
  };
}

}  // namespace lift3d::cli
