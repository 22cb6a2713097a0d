#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "lift3d/error.hpp"

namespace lift3d {

// One game between models a and b; score_a is 1 for a win, 0 for a loss and
// 0.5 for a tie.
struct Outcome {
  std::size_t a = 0;
  std::size_t b = 0;
  double score_a = 1.0;
};

struct EloConfig {
  double anchor = 1000.0;  // mean rating within each connected component
  double tolerance = 1e-9;  // on the gradient or on a full Newton step
  int max_iterations = 200;
};

struct EloFit {
  std::vector<double> ratings;
  std::vector<std::size_t> component;  // component id per model
  std::size_t components = 0;
  bool converged = false;
  bool finite = true;  // false when the MLE does not exist
  int iterations = 0;
  std::string warning;  // set when the comparison graph is disconnected
};

inline constexpr double kEloScale = 400.0;  // 400 points = 10:1 odds

// P(A beats B) on the base-10 / 400 scale.
inline double elo_win_probability(double ra, double rb) {
  return 1.0 / (1.0 + std::pow(10.0, -(ra - rb) / kEloScale));
}

namespace detail {

inline std::size_t find_root(std::vector<std::size_t> &parent, std::size_t i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace detail

// Bradley-Terry maximum likelihood. Solved by damped Newton steps on the
// natural-log strengths with one model pinned per connected component; each
// component is then shifted so its mean rating equals the anchor. The MLE
// does not exist when some group of models never scores against the rest of
// its component; the fit then reports finite = false, converged = false, and
// the ratings reflect wherever the iteration stopped.
inline EloFit elo_fit(std::size_t n_models, const std::vector<Outcome> &outcomes,
                      const EloConfig &config = {}) {
  require(n_models >= 1, "at least one model is required");
  require(!outcomes.empty(), "at least one outcome is required");
  for (const auto &o : outcomes) {
    require(o.a < n_models && o.b < n_models, "outcome references an unknown model");
    require(o.a != o.b, "a model cannot play itself");
    require(o.score_a >= 0.0 && o.score_a <= 1.0, "score must lie in [0, 1]");
  }

  EloFit fit;
  std::vector<std::size_t> parent(n_models);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (const auto &o : outcomes)
    parent[detail::find_root(parent, o.a)] = detail::find_root(parent, o.b);
  fit.component.assign(n_models, 0);
  std::vector<std::size_t> root_id(n_models, n_models);
  std::vector<bool> pinned(n_models, false);
  for (std::size_t i = 0; i < n_models; ++i) {
    std::size_t r = detail::find_root(parent, i);
    if (root_id[r] == n_models) {
      root_id[r] = fit.components++;
      pinned[i] = true;
    }
    fit.component[i] = root_id[r];
  }
  if (fit.components > 1)
    fit.warning = "comparison graph has " + std::to_string(fit.components) +
                  " components; ratings are anchored per component";

  // Aggregate games and scores per ordered pair.
  const auto n = static_cast<Eigen::Index>(n_models);
  Eigen::MatrixXd games = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd won = Eigen::MatrixXd::Zero(n, n);  // score of row against column
  for (const auto &o : outcomes) {
    auto a = static_cast<Eigen::Index>(o.a), b = static_cast<Eigen::Index>(o.b);
    games(a, b) += 1.0;
    games(b, a) += 1.0;
    won(a, b) += o.score_a;
    won(b, a) += 1.0 - o.score_a;
  }
  const Eigen::VectorXd score = won.rowwise().sum();

  std::vector<Eigen::Index> free_index;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!pinned[static_cast<std::size_t>(i)]) free_index.push_back(i);
  const auto m = static_cast<Eigen::Index>(free_index.size());

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  auto log_sigmoid = [](double x) {
    return x > 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  };
  auto log_likelihood = [&](const Eigen::VectorXd &t) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (won(i, j) > 0.0) ll += won(i, j) * log_sigmoid(t[i] - t[j]);
    return ll;
  };

  if (m == 0) fit.converged = true;
  for (int iter = 0; iter < config.max_iterations && m > 0; ++iter) {
    fit.iterations = iter + 1;
    Eigen::VectorXd grad = score;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j || games(i, j) == 0.0) continue;
        double p = 1.0 / (1.0 + std::exp(theta[j] - theta[i]));
        grad[i] -= games(i, j) * p;
        double w = games(i, j) * p * (1.0 - p);
        info(i, i) += w;
        info(i, j) -= w;
      }
    Eigen::MatrixXd h(m, m);
    Eigen::VectorXd g(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      g[r] = grad[free_index[static_cast<std::size_t>(r)]];
      for (Eigen::Index c = 0; c < m; ++c)
        h(r, c) = info(free_index[static_cast<std::size_t>(r)], free_index[static_cast<std::size_t>(c)]);
    }
    if (g.cwiseAbs().maxCoeff() <= config.tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) break;
    // Backtracking keeps every step an ascent step of the concave likelihood.
    double ll0 = log_likelihood(theta), alpha = 1.0;
    Eigen::VectorXd next = theta;
    for (; alpha > 1e-8; alpha *= 0.5) {
      next = theta;
      for (Eigen::Index r = 0; r < m; ++r) next[free_index[static_cast<std::size_t>(r)]] += alpha * step[r];
      // The slack absorbs rounding once the likelihood is flat.
      if (log_likelihood(next) >= ll0 - 1e-13 * (1.0 + std::abs(ll0))) break;
    }
    if (alpha <= 1e-8) break;
    theta = next;
    if (alpha == 1.0 && step.cwiseAbs().maxCoeff() <= config.tolerance) {
      fit.converged = true;
      break;
    }
  }

  // Ford's condition: the MLE is finite iff, within each component, every
  // model can reach every other through "scored at least something against"
  // edges.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reach =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  for (Eigen::Index i = 0; i < n; ++i) reach(i, i) = true;
  for (const auto &o : outcomes) {
    auto a = static_cast<Eigen::Index>(o.a), b = static_cast<Eigen::Index>(o.b);
    if (o.score_a > 0.0) reach(a, b) = true;
    if (o.score_a < 1.0) reach(b, a) = true;
  }
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      if (reach(i, k))
        for (Eigen::Index j = 0; j < n; ++j) reach(i, j) = reach(i, j) || reach(k, j);
  for (std::size_t i = 0; i < n_models; ++i)
    for (std::size_t j = 0; j < n_models; ++j)
      if (fit.component[i] == fit.component[j] &&
          !reach(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))
        fit.finite = false;
  if (!fit.finite) {
    fit.converged = false;
    if (!fit.warning.empty()) fit.warning += "; ";
    fit.warning += "a model won or lost every game in its component; ratings are unbounded";
  }

  const double scale = kEloScale / std::numbers::ln10;
  fit.ratings.assign(n_models, 0.0);
  std::vector<double> sum(fit.components, 0.0);
  std::vector<std::size_t> count(fit.components, 0);
  for (std::size_t i = 0; i < n_models; ++i) {
    sum[fit.component[i]] += theta[static_cast<Eigen::Index>(i)];
    ++count[fit.component[i]];
  }
  for (std::size_t i = 0; i < n_models; ++i) {
    double mean = sum[fit.component[i]] / static_cast<double>(count[fit.component[i]]);
    fit.ratings[i] = config.anchor + scale * (theta[static_cast<Eigen::Index>(i)] - mean);
  }
  return fit;
}

// Sequential Elo updates in outcome order, offered for comparison with the
// batch fit; the result depends on the order of the games.
inline std::vector<double> elo_online(std::size_t n_models, const std::vector<Outcome> &outcomes,
                                      double k_factor = 32.0, double initial = 1000.0) {
  std::vector<double> r(n_models, initial);
  for (const auto &o : outcomes) {
    require(o.a < n_models && o.b < n_models && o.a != o.b, "invalid outcome");
    double e = elo_win_probability(r[o.a], r[o.b]);
    r[o.a] += k_factor * (o.score_a - e);
    r[o.b] -= k_factor * (o.score_a - e);
  }
  return r;
}

}  // namespace lift3d
