#ifndef BOXMC_SAMPLERS_HPP
#define BOXMC_SAMPLERS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include "boxmc/core.hpp"
#include "boxmc/integrators.hpp"

namespace boxmc {

inline constexpr int kAdaptWindow = 50;

inline void validate_config(const SamplerConfig& cfg, const TargetModel& target) {
  if (target.dim < 1) throw ConfigError("target: dimension must be positive");
  if (!target.potential || !target.gradient)
    throw ConfigError("target: potential and gradient callbacks are required");
  if (target.covariance.dim() != target.dim)
    throw ConfigError("target: covariance dimension mismatch");
  if (target.domain.dim() != target.dim)
    throw ConfigError("target: box dimension mismatch");
  if (!(cfg.delta > 0.0)) throw ConfigError("sampler: delta must be positive");
  if (cfg.n_inner < 1) throw ConfigError("sampler: n_inner must be at least 1");
  if (cfg.i_param < 0.0 || cfg.i_param > 1.0)
    throw ConfigError("sampler: refresh strength must lie in [0, 1]");
  if (cfg.algorithm == Algorithm::HMC && cfg.i_param != 1.0)
    throw ConfigError("sampler: the full-refresh kernel requires refresh strength 1");
  if (cfg.algorithm == Algorithm::SOLHMC && cfg.boundary_mode == BoundaryMode::Bounce &&
      cfg.delta >= kPi)
    throw ConfigError("sampler: rotation bounce requires delta < pi");
  if (cfg.n_samples < 1) throw ConfigError("sampler: n_samples must be positive");
  if (cfg.target_accept > 0.0 && cfg.target_accept >= 1.0)
    throw ConfigError("sampler: target acceptance must lie in (0, 1)");
}

/// Step-size bounds enforced during adaptation. The rotation-with-bounce
/// integrator is only defined for angles below pi; other integrators get
/// a wide safety range.
inline std::pair<double, double> delta_bounds(const SamplerConfig& cfg) {
  if (cfg.algorithm == Algorithm::SOLHMC && cfg.boundary_mode == BoundaryMode::Bounce)
    return {1e-8, kPi - 1e-8};
  return {1e-8, 100.0};
}

/// One Robbins-Monro update of the step size on the log scale, driven by
/// the mean acceptance over the last window. Pure so it can be tested in
/// isolation.
inline double adapt_step_size(double delta, double window_accept_mean, double target_accept,
                              long window_index, double lo, double hi) {
  if (window_index < 1) throw ConfigError("adapt_step_size: window index starts at 1");
  const double gamma = std::pow(static_cast<double>(window_index), -0.6);
  const double log_delta = std::log(delta) + gamma * (window_accept_mean - target_accept);
  return std::clamp(std::exp(log_delta), lo, hi);
}

struct StepResult {
  PhaseState state;
  double position_energy = 0.0;  // V + quadratic part at state.x
  double energy = 0.0;           // full Hamiltonian at state
  bool accepted = false;
  bool oob = false;  // proposal invalid: left the box or failed to evaluate
  int bounces = 0;
};

/// One transition of the unified kernel: partial momentum refresh,
/// deterministic proposal, accept/reject, momentum flip on rejection.
/// Full refresh (strength 1) makes the flip irrelevant, which is exactly
/// the classical full-refresh kernel; partial refresh keeps the flip and
/// the dynamics become irreversible. Consumes dim normal draws plus one
/// uniform draw per call regardless of the branch taken.
inline StepResult kernel_step(const PhaseState& current, double current_position_energy,
                              const SamplerConfig& cfg, const TargetModel& target, Rng& rng) {
  PhaseState start{current.x, ou_refresh(current.p, cfg.i_param, rng)};
  const double h0 = current_position_energy + 0.5 * start.p.squaredNorm();

  BounceRecord rec;
  PhaseState proposal;
  double proposal_position_energy = kInf;
  bool valid = true;
  try {
    proposal = integrate_proposal(start, cfg, target, &rec);
  } catch (const EvalFailure&) {
    valid = false;
  }
  if (valid && !proposal.finite()) valid = false;
  if (valid && cfg.boundary_mode == BoundaryMode::Reject &&
      !target.domain.contains(proposal.x))
    valid = false;
  if (valid) {
    proposal_position_energy = position_energy(proposal.x, target);
    if (!std::isfinite(proposal_position_energy)) valid = false;
  }

  double alpha = 0.0;
  double h1 = kInf;
  if (valid) {
    h1 = proposal_position_energy + 0.5 * proposal.p.squaredNorm();
    alpha = std::min(1.0, std::exp(h0 - h1));
  }
  const double u = draw_uniform(rng);

  StepResult out;
  out.bounces = rec.count;
  if (valid && u < alpha) {
    out.state = std::move(proposal);
    out.position_energy = proposal_position_energy;
    out.energy = h1;
    out.accepted = true;
  } else {
    out.state = PhaseState{current.x, -start.p};
    out.position_energy = current_position_energy;
    out.energy = h0;
    out.accepted = false;
    out.oob = !valid;
  }
  return out;
}

struct ChainHooks {
  /// Called for every post-burn-in sample, in order.
  std::function<void(long idx, const PhaseState& s, bool accepted, double energy, int bounces)>
      on_sample;
};

struct RunOptions {
  bool record_samples = true;
  bool record_momenta = false;
  const ChainHooks* hooks = nullptr;
};

/// Run one chain: burn-in (with optional step-size adaptation), then
/// n_samples recorded transitions. The random stream depends only on the
/// seed: dim normals for the initial momentum, then dim normals plus one
/// uniform per step.
inline ChainOutput run_chain(const TargetModel& target, const SamplerConfig& cfg, const Vec& x0,
                             const RunOptions& opts = {}) {
  validate_config(cfg, target);
  if (x0.size() != target.dim) throw ConfigError("run_chain: initial state dimension mismatch");
  if (!target.domain.contains(x0)) throw ConfigError("run_chain: initial state outside the box");

  Rng rng(cfg.seed);
  PhaseState s{x0, draw_standard_normal(rng, target.dim)};
  double e_pos = position_energy(s.x, target);
  if (!std::isfinite(e_pos))
    throw ConfigError("run_chain: initial state has non-finite energy");

  SamplerConfig live = cfg;  // delta evolves during burn-in when adapting
  const auto [delta_lo, delta_hi] = delta_bounds(cfg);
  const long burn = cfg.effective_burn_in();
  const long total = burn + cfg.n_samples;

  ChainOutput out;
  out.seed = cfg.seed;
  out.config_echo = cfg;
  if (opts.record_samples) out.samples.resize(cfg.n_samples, target.dim);
  if (opts.record_momenta) out.momenta.resize(cfg.n_samples, target.dim);
  out.acceptance_flags.reserve(static_cast<std::size_t>(cfg.n_samples));
  out.bounce_counts.reserve(static_cast<std::size_t>(cfg.n_samples));
  out.energy_trace.resize(cfg.n_samples);

  long window_hits = 0, window_len = 0, window_index = 0;
  long accepted_recorded = 0;

  for (long step = 0; step < total; ++step) {
    StepResult r = kernel_step(s, e_pos, live, target, rng);
    s = std::move(r.state);
    e_pos = r.position_energy;
    if (r.oob) ++out.oob_rejections;
    if (cfg.boundary_mode == BoundaryMode::Bounce && !target.domain.contains(s.x))
      throw std::logic_error("run_chain: bounce kernel produced an out-of-box state");

    if (step < burn) {
      if (live.adapt()) {
        ++window_len;
        window_hits += r.accepted ? 1 : 0;
        if (window_len == kAdaptWindow) {
          ++window_index;
          live.delta = adapt_step_size(live.delta,
                                       static_cast<double>(window_hits) /
                                           static_cast<double>(window_len),
                                       cfg.target_accept, window_index, delta_lo, delta_hi);
          window_hits = 0;
          window_len = 0;
        }
      }
      continue;
    }

    const long idx = step - burn;
    if (opts.record_samples) out.samples.row(idx) = s.x;
    if (opts.record_momenta) out.momenta.row(idx) = s.p;
    out.acceptance_flags.push_back(r.accepted ? 1 : 0);
    out.bounce_counts.push_back(r.bounces);
    out.energy_trace[idx] = r.energy;
    accepted_recorded += r.accepted ? 1 : 0;
    if (opts.hooks && opts.hooks->on_sample)
      opts.hooks->on_sample(idx, s, r.accepted, r.energy, r.bounces);
  }

  out.realized_acceptance =
      static_cast<double>(accepted_recorded) / static_cast<double>(cfg.n_samples);
  out.adapted_delta = live.delta;
  return out;
}

}  // namespace boxmc

#endif  // BOXMC_SAMPLERS_HPP
