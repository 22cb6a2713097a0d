#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lift3d/elo.hpp"
#include "lift3d/error.hpp"
#include "lift3d/random.hpp"

namespace lift3d {

// A candidate annotation for one input. The true quality is visible only to
// the simulated annotator and reward model.
struct Demonstration {
  std::uint64_t input_id = 0;
  std::uint64_t payload = 0;  // stands in for the shape / texture / layout
  double quality = 0.0;       // q* in [0, 1]
  std::string source;
};

struct PreferenceRecord {
  Demonstration chosen;
  std::vector<Demonstration> rejected;
  double rating = 0.0;
};

enum class Choice { left, right, equal };

struct AnnotatorModel {
  double temperature = 0.05;  // logistic noise scale; 0 is a perfect judge
  double equal_margin = 0.02;  // gaps below this are called "equal quality"
  double rating_noise = 0.05;  // sd of the absolute rating against the bar

  static AnnotatorModel perfect() { return {0.0, 0.0, 0.0}; }

  void validate() const {
    require(temperature >= 0.0 && equal_margin >= 0.0 && rating_noise >= 0.0,
            "annotator parameters must be non-negative");
  }
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Identical qualities, or a gap below the margin, are judged equal.
// Otherwise `a` wins with probability sigmoid((q_a - q_b) / temperature).
inline Choice pairwise_choice(const Demonstration &a, const Demonstration &b,
                              const AnnotatorModel &annotator, Rng &rng) {
  double gap = a.quality - b.quality;
  if (gap == 0.0 || std::abs(gap) < annotator.equal_margin) return Choice::equal;
  if (annotator.temperature == 0.0) return gap > 0.0 ? Choice::left : Choice::right;
  return rng.bernoulli(logistic(gap / annotator.temperature)) ? Choice::left : Choice::right;
}

struct Selection {
  std::size_t best = 0;
  std::vector<std::size_t> rejected;
  std::size_t comparisons = 0;
};

// Sequential knockout: candidates are shown in a random order, the current
// favorite against the next one, and the loser is dropped. Equal calls keep
// either one with a fair coin.
inline Selection knockout_select(const std::vector<Demonstration> &candidates,
                                 const AnnotatorModel &annotator, Rng &rng) {
  require(candidates.size() >= 2, "knockout needs at least two candidates");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  Selection out;
  std::size_t champion = order[0];
  for (std::size_t i = 1; i < order.size(); ++i) {
    std::size_t challenger = order[i];
    ++out.comparisons;
    Choice c = pairwise_choice(candidates[champion], candidates[challenger], annotator, rng);
    bool keep = c == Choice::left || (c == Choice::equal && rng.bernoulli(0.5));
    out.rejected.push_back(keep ? challenger : champion);
    if (!keep) champion = challenger;
  }
  out.best = champion;
  return out;
}

struct Rating {
  double value = 0.0;
  bool accept = false;
};

// Absolute rating against the quality bar: r = clamp(q* + noise, 0, 1),
// accepted iff r >= alpha.
inline Rating rate_and_gate(const Demonstration &d, double alpha,
                            const AnnotatorModel &annotator, Rng &rng) {
  require(alpha >= 0.0 && alpha <= 1.0, "quality bar must lie in [0, 1]");
  double noise = annotator.rating_noise > 0.0 ? annotator.rating_noise * rng.normal() : 0.0;
  double r = std::clamp(d.quality + noise, 0.0, 1.0);
  return {r, r >= alpha};
}

// Noisy scalar scorer: reward = q* + noise * N(0, 1).
struct RewardModel {
  double noise = 0.0;

  // About 67% binary agreement with the true preference on pairs from the
  // default ensemble, inside the 65-69% range reported for learned reward
  // models.
  static RewardModel standard() { return {0.35}; }
};

struct Tournament {
  std::size_t winner = 0;
  std::size_t comparisons = 0;
};

// Single-elimination bracket over a random order; an odd entrant out gets a
// bye. Each match draws fresh reward noise for both sides.
inline Tournament tournament_rank(const std::vector<Demonstration> &candidates,
                                  const RewardModel &reward, Rng &rng) {
  require(!candidates.empty(), "tournament needs at least one candidate");
  std::vector<std::size_t> round(candidates.size());
  std::iota(round.begin(), round.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(round));
  Tournament out;
  auto score = [&](std::size_t i) {
    return candidates[i].quality + (reward.noise > 0.0 ? reward.noise * rng.normal() : 0.0);
  };
  while (round.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i + 1 < round.size(); i += 2) {
      ++out.comparisons;
      double sa = score(round[i]);
      double sb = score(round[i + 1]);
      next.push_back(sa >= sb ? round[i] : round[i + 1]);
    }
    if (round.size() % 2 == 1) next.push_back(round.back());
    round = std::move(next);
  }
  out.winner = round.front();
  return out;
}

// Candidate source: quality = logistic(logit_mean - difficulty + logit_sd z).
struct GeneratorSpec {
  std::string name;
  double logit_mean = 0.0;
  double logit_sd = 1.0;
  double prior_weight = 1.0;

  double median_quality() const { return logistic(logit_mean); }
  double draw(double difficulty, Rng &rng) const {
    return logistic(logit_mean - difficulty + logit_sd * rng.normal());
  }
};

// Sources are picked with probability proportional to
// prior_weight * exp(sharpness * median quality), so the mix follows
// whichever generator is currently best.
inline std::vector<double> mixture_weights(const std::vector<GeneratorSpec> &sources,
                                           double sharpness) {
  std::vector<double> w;
  double total = 0.0;
  for (const auto &s : sources) {
    w.push_back(s.prior_weight * std::exp(sharpness * s.median_quality()));
    total += w.back();
  }
  for (auto &x : w) x /= total;
  return w;
}

inline std::size_t pick_source(const std::vector<double> &weights, Rng &rng) {
  double u = rng.uniform(), acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

struct RecoveryConfig {
  bool enabled = false;
  int candidates = 50;
  RewardModel reward = RewardModel::standard();
};

struct EngineConfig {
  int candidates = 8;  // N
  int iterations = 5;  // K
  std::vector<double> curriculum = {0.3, 0.4, 0.5, 0.55, 0.6};
  int inputs_per_iteration = 200;
  double input_difficulty_sd = 0.5;
  GeneratorSpec current = {"current", -1.5, 1.0, 1.0};
  std::vector<GeneratorSpec> auxiliary = {{"retrieval", -0.3, 0.8, 1.0},
                                          {"text-to-3d", -0.8, 1.2, 1.0}};
  double mix_sharpness = 4.0;
  double update_rate = 0.5;  // share of the gap to the accepted mean closed per step
  AnnotatorModel annotator;
  RecoveryConfig recovery;
  int elo_games_per_pair = 200;
  bool elo_online = false;  // sequential updates instead of the batch MLE

  void validate() const {
    require(candidates >= 2, "N must be at least 2");
    require(iterations >= 1, "K must be at least 1");
    require(curriculum.size() == static_cast<std::size_t>(iterations),
            "curriculum must have one threshold per iteration");
    for (std::size_t k = 0; k < curriculum.size(); ++k) {
      require(curriculum[k] >= 0.0 && curriculum[k] <= 1.0, "thresholds must lie in [0, 1]");
      require(k == 0 || curriculum[k] >= curriculum[k - 1], "curriculum must be non-decreasing");
    }
    require(inputs_per_iteration >= 1, "inputs per iteration must be positive");
    require(update_rate >= 0.0 && update_rate <= 1.0, "update rate must lie in [0, 1]");
    require(!recovery.enabled || recovery.candidates >= 1, "recovery needs candidates");
    require(elo_games_per_pair >= 0, "Elo game count must be non-negative");
    annotator.validate();
  }
};

struct SourceShare {
  std::string source;
  double fraction = 0.0;
};

struct IterationReport {
  int iteration = 0;
  double alpha = 0.0;
  std::size_t collected = 0;       // inputs processed this iteration
  std::size_t accepted = 0;        // of those, rated at or above alpha
  std::size_t aggregated = 0;      // all iterations' records passing alpha
  double mean_accepted_quality = 0.0;  // over the aggregated set
  std::size_t preference_pairs = 0;
  std::vector<SourceShare> source_mix;  // sources of this iteration's accepted picks
  double current_share = 0.0;           // mixture weight of the current model
  double current_median_quality = 0.0;  // after the update step
  double elo = 0.0;                     // current model, base model anchored with it
  double elo_gain = 0.0;                // current minus base
  bool elo_finite = true;
  std::vector<double> ratings;          // every snapshot so far, base model first
  std::size_t recovery_attempts = 0;
  std::size_t recovery_accepts = 0;
};

struct EngineReport {
  std::vector<IterationReport> iterations;
  std::vector<PreferenceRecord> records;  // every collected record
  std::vector<double> final_ratings;      // Elo of each model snapshot
};

namespace detail {

struct StoredRecord {
  PreferenceRecord record;
  int iteration = 0;
};

}  // namespace detail

// Alignment loop simulation. Each iteration amplifies the current model with
// the auxiliary generators, lets the annotator pick the best of N per input
// and rate it, aggregates every record so far that clears the current bar,
// forms preference pairs, and moves the current model's quality toward the
// accepted mean. Optional recovery retries rejected inputs with a large
// reward-ranked best-of-N. Model snapshots are compared by simulated games
// and fitted with Elo.
inline EngineReport run_engine(const EngineConfig &config, Rng &rng) {
  config.validate();
  EngineReport report;
  std::vector<detail::StoredRecord> store;
  GeneratorSpec current = config.current;
  std::vector<GeneratorSpec> snapshots = {current};
  std::vector<Outcome> games;
  std::uint64_t next_payload = 0, next_input = 0;

  auto draw = [&](const GeneratorSpec &g, std::uint64_t input, double difficulty) {
    return Demonstration{input, next_payload++, g.draw(difficulty, rng), g.name};
  };

  for (int k = 1; k <= config.iterations; ++k) {
    const double alpha = config.curriculum[static_cast<std::size_t>(k - 1)];
    std::vector<GeneratorSpec> ensemble = {current};
    ensemble.insert(ensemble.end(), config.auxiliary.begin(), config.auxiliary.end());
    std::vector<double> weights = mixture_weights(ensemble, config.mix_sharpness);

    IterationReport it;
    it.iteration = k;
    it.alpha = alpha;
    it.current_share = weights[0];
    std::vector<std::size_t> source_counts(ensemble.size(), 0);

    for (int i = 0; i < config.inputs_per_iteration; ++i) {
      std::uint64_t input = next_input++;
      double difficulty = config.input_difficulty_sd * rng.normal();
      std::vector<Demonstration> cands;
      std::vector<std::size_t> cand_source;
      for (int n = 0; n < config.candidates; ++n) {
        std::size_t s = pick_source(weights, rng);
        cand_source.push_back(s);
        cands.push_back(draw(ensemble[s], input, difficulty));
      }
      Selection sel = knockout_select(cands, config.annotator, rng);
      Rating rating = rate_and_gate(cands[sel.best], alpha, config.annotator, rng);
      PreferenceRecord rec{cands[sel.best], {}, rating.value};
      for (auto r : sel.rejected) rec.rejected.push_back(cands[r]);
      std::size_t chosen_source = cand_source[sel.best];

      if (!rating.accept && config.recovery.enabled) {
        ++it.recovery_attempts;
        std::vector<Demonstration> pool;
        for (int n = 0; n < config.recovery.candidates; ++n)
          pool.push_back(draw(current, input, difficulty));
        Tournament t = tournament_rank(pool, config.recovery.reward, rng);
        Rating second = rate_and_gate(pool[t.winner], alpha, config.annotator, rng);
        if (second.accept) {
          ++it.recovery_accepts;
          rec = PreferenceRecord{pool[t.winner], {}, second.value};
          for (std::size_t n = 0; n < pool.size(); ++n)
            if (n != t.winner) rec.rejected.push_back(pool[n]);
          chosen_source = 0;
          rating = second;
        }
      }
      ++it.collected;
      if (rating.accept) {
        ++it.accepted;
        ++source_counts[chosen_source];
      }
      store.push_back({rec, k});
    }

    double quality_sum = 0.0;
    for (const auto &s : store) {
      if (s.record.rating < alpha) continue;
      ++it.aggregated;
      quality_sum += s.record.chosen.quality;
      it.preference_pairs += s.record.rejected.size();
    }
    if (it.aggregated > 0) it.mean_accepted_quality = quality_sum / double(it.aggregated);
    for (std::size_t s = 0; s < ensemble.size(); ++s)
      it.source_mix.push_back(
          {ensemble[s].name,
           it.accepted > 0 ? double(source_counts[s]) / double(it.accepted) : 0.0});

    // Update step proxy: move the current model toward the accepted mean.
    if (it.aggregated > 0) {
      double target = logit(std::clamp(it.mean_accepted_quality, 1e-6, 1.0 - 1e-6));
      current.logit_mean += config.update_rate * (target - current.logit_mean);
    }
    it.current_median_quality = current.median_quality();
    snapshots.push_back(current);

    // Games of the new snapshot against every earlier one.
    Rng game_rng = rng.fork(static_cast<std::uint64_t>(k));
    std::size_t newest = snapshots.size() - 1;
    for (std::size_t old = 0; old < newest; ++old)
      for (int g = 0; g < config.elo_games_per_pair; ++g) {
        double difficulty = config.input_difficulty_sd * game_rng.normal();
        Demonstration a{0, 0, snapshots[newest].draw(difficulty, game_rng), "new"};
        Demonstration b{0, 0, snapshots[old].draw(difficulty, game_rng), "old"};
        Choice c = pairwise_choice(a, b, config.annotator, game_rng);
        games.push_back({newest, old, c == Choice::left ? 1.0 : c == Choice::right ? 0.0 : 0.5});
      }
    if (!games.empty()) {
      if (config.elo_online) {
        it.ratings = elo_online(snapshots.size(), games);
      } else {
        EloFit fit = elo_fit(snapshots.size(), games);
        it.ratings = fit.ratings;
        it.elo_finite = fit.finite;
      }
      it.elo = it.ratings[newest];
      it.elo_gain = it.ratings[newest] - it.ratings[0];
      report.final_ratings = it.ratings;
    }
    report.iterations.push_back(std::move(it));
  }
  for (auto &s : store) report.records.push_back(std::move(s.record));
  return report;
}

// ---------------------------------------------------------------------------
// Best-of-N experiments

// Quality of the knockout pick over `trials` independent inputs, each with
// n candidates from the mixture of `sources`.
inline std::vector<double> best_of_n_quality(const std::vector<GeneratorSpec> &sources,
                                             double sharpness, const AnnotatorModel &annotator,
                                             int n, int trials, Rng &rng) {
  require(n >= 2 && trials >= 1, "need n >= 2 and at least one trial");
  std::vector<double> weights = mixture_weights(sources, sharpness);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    std::vector<Demonstration> cands;
    for (int i = 0; i < n; ++i) {
      const GeneratorSpec &g = sources[pick_source(weights, rng)];
      cands.push_back({std::uint64_t(t), std::uint64_t(i), g.draw(0.0, rng), g.name});
    }
    out.push_back(cands[knockout_select(cands, annotator, rng).best].quality);
  }
  return out;
}

// A weak generator on hard inputs, for recovery experiments.
inline GeneratorSpec low_quality_generator() { return {"low-quality", -2.0, 1.2, 1.0}; }

// Share of inputs where a reward-ranked best-of-n pick clears the bar.
inline double recovery_yield(const GeneratorSpec &generator, const RewardModel &reward,
                             const AnnotatorModel &annotator, double alpha, int n, int trials,
                             Rng &rng) {
  require(n >= 1 && trials >= 1, "need n >= 1 and at least one trial");
  int accepted = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<Demonstration> pool;
    for (int i = 0; i < n; ++i)
      pool.push_back({std::uint64_t(t), std::uint64_t(i), generator.draw(0.0, rng), generator.name});
    Tournament tour = tournament_rank(pool, reward, rng);
    accepted += rate_and_gate(pool[tour.winner], alpha, annotator, rng).accept;
  }
  return double(accepted) / double(trials);
}

// Binary agreement of a reward model with the true preference on random
// pairs from a source mixture.
inline double reward_agreement(const RewardModel &reward,
                               const std::vector<GeneratorSpec> &sources, double sharpness,
                               int pairs, Rng &rng) {
  std::vector<double> weights = mixture_weights(sources, sharpness);
  int agree = 0, counted = 0;
  for (int p = 0; p < pairs; ++p) {
    double qa = sources[pick_source(weights, rng)].draw(0.0, rng);
    double qb = sources[pick_source(weights, rng)].draw(0.0, rng);
    if (qa == qb) continue;
    double sa = qa + reward.noise * rng.normal();
    double sb = qb + reward.noise * rng.normal();
    ++counted;
    agree += (sa > sb) == (qa > qb);
  }
  return counted > 0 ? double(agree) / double(counted) : 1.0;
}

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap confidence interval of the mean.
inline MeanCi bootstrap_mean_ci(const std::vector<double> &values, Rng &rng,
                                int resamples = 1000, double level = 0.95) {
  require(!values.empty(), "bootstrap needs data");
  require(resamples >= 1 && level > 0.0 && level < 1.0, "invalid bootstrap settings");
  MeanCi out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[rng.uniform_index(values.size())];
    means.push_back(s / double(values.size()));
  }
  std::sort(means.begin(), means.end());
  auto at = [&](double q) {
    auto idx = static_cast<std::size_t>(std::floor(q * double(means.size() - 1)));
    return means[idx];
  };
  out.lo = at((1.0 - level) / 2.0);
  out.hi = at(1.0 - (1.0 - level) / 2.0);
  return out;
}

}  // namespace lift3d
