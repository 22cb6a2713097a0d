#pragma once

#include <Eigen/Core>

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lift3d/error.hpp"
#include "lift3d/random.hpp"

namespace lift3d {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Modality { shape = 0, rotation = 1, translation = 2, scale = 3 };
inline constexpr std::array<Modality, 4> kModalities = {
    Modality::shape, Modality::rotation, Modality::translation, Modality::scale};

inline const char *modality_name(Modality m) {
  switch (m) {
    case Modality::shape: return "shape";
    case Modality::rotation: return "rotation";
    case Modality::translation: return "translation";
    case Modality::scale: return "scale";
  }
  return "?";
}

struct ModalityWeights {
  std::array<double, 4> lambda = {1.0, 0.1, 1.0, 0.1};

  double operator[](Modality m) const { return lambda[static_cast<std::size_t>(m)]; }
  double &operator[](Modality m) { return lambda[static_cast<std::size_t>(m)]; }

  void validate() const {
    for (double l : lambda)
      require(std::isfinite(l) && l >= 0.0, "modality weights must be non-negative");
  }
};

// Conditioning token. `null` is the unconditioned input used by CFG.
struct Condition {
  std::uint64_t token = 0;
  bool null = false;

  static Condition none() { return {0, true}; }
  bool operator==(const Condition &) const = default;
};

// v(x, c, tau, d). d = 0 asks for the instantaneous velocity; d > 0 asks a
// shortcut model for the average velocity over a step of size d.
using VelocityField =
    std::function<Vector(const Vector &x, const Condition &c, double tau, double d)>;

// Wraps a field and counts its evaluations.
class CountingField {
 public:
  explicit CountingField(VelocityField f) : f_(std::move(f)) {}

  Vector operator()(const Vector &x, const Condition &c, double tau, double d) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return f_(x, c, tau, d);
  }
  VelocityField field() const {
    return [this](const Vector &x, const Condition &c, double tau, double d) {
      return (*this)(x, c, tau, d);
    };
  }
  std::size_t calls() const { return calls_.load(); }
  void reset() { calls_ = 0; }

 private:
  VelocityField f_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Flat state made of consecutive modality segments in the order
// shape, rotation, translation, scale. Absent modalities have length 0.
struct ModalityLayout {
  std::array<Eigen::Index, 4> sizes = {0, 0, 0, 0};

  static ModalityLayout single(Eigen::Index n) { return {{n, 0, 0, 0}}; }
  Eigen::Index total() const { return std::accumulate(sizes.begin(), sizes.end(), Eigen::Index{0}); }
  Eigen::Index offset(Modality m) const {
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(m); ++k) o += sizes[k];
    return o;
  }
  Eigen::Index size(Modality m) const { return sizes[static_cast<std::size_t>(m)]; }
};

struct FlowSample {
  Vector x0;  // noise state
  Vector x1;  // clean state
  Condition c;
  double tau = 0.0;
};

struct FlowBatch {
  ModalityLayout layout;
  std::vector<FlowSample> samples;

  void validate() const {
    for (const auto &s : samples) {
      require(s.x0.size() == layout.total() && s.x1.size() == layout.total(),
              "flow sample size does not match the modality layout");
      require(s.tau >= 0.0 && s.tau <= 1.0, "tau must lie in [0, 1]");
    }
  }
};

inline Vector interp_state(const Vector &x0, const Vector &x1, double tau) {
  require(x0.size() == x1.size(), "state shapes differ");
  require(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
  return tau * x1 + (1.0 - tau) * x0;
}

inline Vector target_velocity(const Vector &x0, const Vector &x1) {
  require(x0.size() == x1.size(), "state shapes differ");
  return x1 - x0;
}

inline Vector cfg_combine(const Vector &v_uncond, const Vector &v_cond, double w_cfg) {
  require(v_uncond.size() == v_cond.size(), "velocity shapes differ");
  return v_uncond + w_cfg * (v_cond - v_uncond);
}

namespace detail {

inline double weighted_sq(const Vector &r, const ModalityLayout &layout,
                          const ModalityWeights &w) {
  double total = 0.0;
  for (Modality m : kModalities)
    if (layout.size(m) > 0)
      total += w[m] * r.segment(layout.offset(m), layout.size(m)).squaredNorm();
  return total;
}

inline Vector checked_eval(const VelocityField &vf, const Vector &x, const Condition &c,
                           double tau, double d) {
  Vector v = vf(x, c, tau, d);
  require(v.size() == x.size(), "velocity field changed the state shape");
  return v;
}

}  // namespace detail

// Multi-modal flow-matching loss: batch mean of
// sum_m lambda_m |v^m - vf(x_tau, c, tau)^m|^2 with v = x1 - x0.
inline double cfm_loss(const VelocityField &vf, const FlowBatch &batch,
                       const ModalityWeights &weights = {}) {
  batch.validate();
  weights.validate();
  if (batch.samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto &s : batch.samples) {
    Vector xt = interp_state(s.x0, s.x1, s.tau);
    Vector r = target_velocity(s.x0, s.x1) - detail::checked_eval(vf, xt, s.c, s.tau, 0.0);
    total += detail::weighted_sq(r, batch.layout, weights);
  }
  return total / static_cast<double>(batch.samples.size());
}

// v(x) = A x + b, independent of c, tau and d.
struct LinearField {
  Matrix a;
  Vector b;

  Vector operator()(const Vector &x) const { return a * x + b; }
  VelocityField field() const {
    return [*this](const Vector &x, const Condition &, double, double) { return (*this)(x); };
  }
};

struct LinearFieldGradient {
  Matrix da;
  Vector db;
};

// Analytic gradient of cfm_loss with respect to (A, b) of a linear field.
inline LinearFieldGradient cfm_loss_gradient(const LinearField &f, const FlowBatch &batch,
                                             const ModalityWeights &weights = {}) {
  batch.validate();
  weights.validate();
  const Eigen::Index n = batch.layout.total();
  require(f.a.rows() == n && f.a.cols() == n && f.b.size() == n,
          "linear field does not match the layout");
  Vector lambda(n);
  for (Modality m : kModalities)
    lambda.segment(batch.layout.offset(m), batch.layout.size(m)).setConstant(weights[m]);
  LinearFieldGradient g{Matrix::Zero(n, n), Vector::Zero(n)};
  if (batch.samples.empty()) return g;
  for (const auto &s : batch.samples) {
    Vector xt = interp_state(s.x0, s.x1, s.tau);
    Vector r = target_velocity(s.x0, s.x1) - f(xt);
    Vector wr = -2.0 * lambda.cwiseProduct(r);
    g.da += wr * xt.transpose();
    g.db += wr;
  }
  double inv = 1.0 / static_cast<double>(batch.samples.size());
  g.da *= inv;
  g.db *= inv;
  return g;
}

// Self-consistency target for shortcut distillation: two CFG-guided steps of
// size d from x_tau, returned as the average velocity over the 2d jump. The
// result is a plain value; nothing differentiates through it.
inline Vector consistency_target(const VelocityField &vf, const Vector &x_tau,
                                 const Condition &c, double tau, double d, double w_cfg) {
  require(d > 0.0, "step size must be positive");
  require(tau >= 0.0 && tau + 2.0 * d <= 1.0, "tau + 2d must not exceed 1");
  const Condition none = Condition::none();
  auto guided = [&](const Vector &x, double t) {
    Vector u = detail::checked_eval(vf, x, none, t, d);
    return cfg_combine(u, detail::checked_eval(vf, x, c, t, d), w_cfg);
  };
  Vector x1 = x_tau + d * guided(x_tau, tau);
  Vector x2 = x1 + d * guided(x1, tau + d);
  return (x2 - x_tau) / (2.0 * d);
}

struct TimeStep {
  double tau = 0.0;
  double d = 0.0;
};

// Step sizes d = 2^-k for k in 1..7 and tau uniform on the multiples of d
// that leave room for a 2d jump.
inline TimeStep sample_dyadic_step(Rng &rng) {
  int k = 1 + static_cast<int>(rng.uniform_index(7));
  double d = std::ldexp(1.0, -k);
  auto slots = (std::uint64_t{1} << k) - 1;  // tau in {0, d, ..., 1 - 2d}
  return {d * static_cast<double>(rng.uniform_index(slots)), d};
}

struct ShortcutConfig {
  double mix = 0.75;  // share of samples that take the flow-matching term
  double w_cfg = 2.0;
  std::function<TimeStep(Rng &)> sampler = sample_dyadic_step;
};

// Shortcut objective. Each sample takes the flow-matching term at its own
// tau with probability `mix`; otherwise (tau, d) is drawn from the sampler
// and the field's 2d prediction is matched to the consistency target.
inline double shortcut_loss(const VelocityField &vf, const FlowBatch &batch, Rng &rng,
                            const ShortcutConfig &config = {}) {
  batch.validate();
  require(config.mix >= 0.0 && config.mix <= 1.0, "mix must lie in [0, 1]");
  if (batch.samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto &s : batch.samples) {
    if (rng.bernoulli(config.mix)) {
      Vector xt = interp_state(s.x0, s.x1, s.tau);
      total += (target_velocity(s.x0, s.x1) - detail::checked_eval(vf, xt, s.c, s.tau, 0.0))
                   .squaredNorm();
    } else {
      TimeStep ts = config.sampler(rng);
      Vector xt = interp_state(s.x0, s.x1, ts.tau);
      Vector target = consistency_target(vf, xt, s.c, ts.tau, ts.d, config.w_cfg);
      total += (target - detail::checked_eval(vf, xt, s.c, ts.tau, 2.0 * ts.d)).squaredNorm();
    }
  }
  return total / static_cast<double>(batch.samples.size());
}

struct PreferenceState {
  Vector x_tau;     // noised state
  Vector velocity;  // its target flow-matching velocity
};

// Difference of the policy's and the reference's flow-matching errors on the
// winner minus the same on the loser; negative when the policy prefers the
// winner more than the reference does.
inline double dpo_delta(const VelocityField &policy, const VelocityField &reference,
                        const PreferenceState &winner, const PreferenceState &loser,
                        const Condition &c, double tau) {
  require(winner.x_tau.size() == winner.velocity.size() &&
              loser.x_tau.size() == loser.velocity.size(),
          "preference state shapes differ");
  auto err = [&](const VelocityField &vf, const PreferenceState &s) {
    return (s.velocity - detail::checked_eval(vf, s.x_tau, c, tau, 0.0)).squaredNorm();
  };
  return (err(policy, winner) - err(reference, winner)) -
         (err(policy, loser) - err(reference, loser));
}

struct DpoConfig {
  double beta = 1.0;
  double horizon = 1.0;  // T, the upper end of the tau range
  std::function<double(double)> weight = [](double) { return 1.0; };

  void validate() const {
    require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
    require(horizon > 0.0 && std::isfinite(horizon), "T must be positive");
    require(static_cast<bool>(weight), "weight function is required");
  }
};

// -log sigmoid(-beta T w(tau) delta), evaluated without overflow.
inline double dpo_loss(double delta, const DpoConfig &config, double tau) {
  config.validate();
  double z = config.beta * config.horizon * config.weight(tau) * delta;
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct EulerConfig {
  double w_cfg = 1.0;
  // Flow-matching mode: guided steps on the first ceil(steps / 2) only.
  bool cfg_half_schedule = true;
  // Shortcut mode: one conditional evaluation per step with d = step size.
  bool shortcut = false;
};

struct EulerResult {
  Vector x;
  std::size_t evaluations = 0;
};

// Integrates dx/dtau = v from tau = 0 to 1 on a uniform grid.
inline EulerResult euler_sample(const VelocityField &vf, const Vector &x0, const Condition &c,
                                int steps, const EulerConfig &config = {}) {
  require(steps >= 1, "steps must be at least 1");
  const double dt = 1.0 / steps;
  const int guided_steps = config.cfg_half_schedule ? (steps + 1) / 2 : steps;
  EulerResult out{x0, 0};
  for (int i = 0; i < steps; ++i) {
    double tau = static_cast<double>(i) / steps;
    Vector v;
    if (config.shortcut) {
      v = detail::checked_eval(vf, out.x, c, tau, dt);
      out.evaluations += 1;
    } else if (i < guided_steps) {
      Vector u = detail::checked_eval(vf, out.x, Condition::none(), tau, 0.0);
      v = cfg_combine(u, detail::checked_eval(vf, out.x, c, tau, 0.0), config.w_cfg);
      out.evaluations += 2;
    } else {
      v = detail::checked_eval(vf, out.x, c, tau, 0.0);
      out.evaluations += 1;
    }
    out.x += dt * v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Self-check suite used by the command-line tool.

struct CheckRow {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double expected = 0.0;
};

inline std::vector<CheckRow> fm_self_check(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  auto add = [&](std::string name, double value, double expected, double tol) {
    rows.push_back({std::move(name), std::abs(value - expected) <= tol, value, expected});
  };
  Rng rng(seed);
  const Eigen::Index n = 6;
  auto random_vec = [&](Eigen::Index k) {
    Vector v(k);
    for (Eigen::Index i = 0; i < k; ++i) v[i] = rng.normal();
    return v;
  };

  FlowBatch batch;
  batch.layout = {{3, 1, 1, 1}};
  for (int i = 0; i < 16; ++i)
    batch.samples.push_back({random_vec(n), random_vec(n), {std::uint64_t(i), false},
                             rng.uniform()});
  // The exact field for sample i; the token identifies the sample.
  VelocityField exact = [&](const Vector &, const Condition &c, double, double) {
    const FlowSample &s = batch.samples[c.token];
    return Vector(s.x1 - s.x0);
  };
  add("cfm_loss_exact_field", cfm_loss(exact, batch), 0.0, 0.0);

  DpoConfig dpo;
  add("dpo_loss_zero_delta", dpo_loss(0.0, dpo, 0.5), std::log(2.0), 1e-12);

  Vector k = random_vec(n);
  VelocityField constant = [&](const Vector &, const Condition &, double, double) { return k; };
  double worst = 0.0;
  for (double d : {0.5, 0.25, 0.125, 0.0078125})
    for (double w : {0.0, 1.0, 2.0, 3.5})
      worst = std::max(worst,
                       (consistency_target(constant, random_vec(n), {1, false}, 0.0, d, w) - k)
                           .cwiseAbs()
                           .maxCoeff());
  add("consistency_constant_field", worst, 0.0, 1e-12);

  VelocityField identity = [](const Vector &x, const Condition &, double, double) { return x; };
  add("consistency_linear_example",
      consistency_target(identity, Vector::Ones(1), {1, false}, 0.0, 0.1, 1.0)[0], 1.05, 1e-12);

  LinearField lin{Matrix::Zero(n, n), random_vec(n)};
  for (Eigen::Index c = 0; c < n; ++c) lin.a.col(c) = 0.3 * random_vec(n);
  LinearFieldGradient g = cfm_loss_gradient(lin, batch);
  double max_rel = 0.0;
  const double h = 1e-6;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      LinearField p = lin, m = lin;
      p.a(r, c) += h;
      m.a(r, c) -= h;
      double fd = (cfm_loss(p.field(), batch) - cfm_loss(m.field(), batch)) / (2 * h);
      max_rel = std::max(max_rel, std::abs(fd - g.da(r, c)) / std::max(1.0, std::abs(fd)));
    }
  add("cfm_gradient_finite_difference", max_rel, 0.0, 1e-5);

  CountingField counter(constant);
  EulerConfig fm;
  fm.w_cfg = 2.0;
  add("nfe_flow_matching_25", double(euler_sample(counter.field(), k, {1, false}, 25, fm).evaluations),
      38.0, 0.0);
  EulerConfig sc;
  sc.shortcut = true;
  add("nfe_shortcut_4", double(euler_sample(counter.field(), k, {1, false}, 4, sc).evaluations),
      4.0, 0.0);
  return rows;
}

}  // namespace lift3d
