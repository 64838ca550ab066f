#ifndef BOXMC_INTEGRATORS_HPP
#define BOXMC_INTEGRATORS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "boxmc/core.hpp"

namespace boxmc {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr int kMaxReflections = 1000;
inline constexpr double kTieTolerance = 1e-12;

/// Raised when a single bounce integration exceeds the reflection cap;
/// deliberately not an EvalFailure so it surfaces as an error instead of
/// a silent rejection.
struct ReflectionCapError : std::runtime_error {
  ReflectionCapError() : std::runtime_error("reflection cap (1000) exceeded in bounce integration") {}
};

/// Per-proposal reflection bookkeeping. excursion_forgiven marks a
/// rotation arc that left the box but was kept because its endpoint
/// landed back inside.
struct BounceRecord {
  int count = 0;
  bool excursion_forgiven = false;
};

inline PhaseState flip_momentum(PhaseState s) {
  s.p = -s.p;
  return s;
}

/// Free flight x <- x + t p.
inline PhaseState drift(PhaseState s, double t) {
  s.x += t * s.p;
  return s;
}

/// Momentum update with the full force: p <- p - t (x + C grad V(x)).
inline PhaseState kick_full(PhaseState s, double t, const TargetModel& target) {
  Vec g = target.gradient(s.x);
  if (!g.allFinite()) throw EvalFailure("gradient evaluation returned non-finite values");
  s.p -= t * (s.x + target.covariance.apply(g));
  return s;
}

/// Momentum update with the smooth-part force only: p <- p - t C grad V(x).
inline PhaseState kick_gradient(PhaseState s, double t, const TargetModel& target) {
  Vec g = target.gradient(s.x);
  if (!g.allFinite()) throw EvalFailure("gradient evaluation returned non-finite values");
  s.p -= t * target.covariance.apply(g);
  return s;
}

/// Exact flow of the quadratic part: componentwise rotation by angle t.
inline PhaseState rotate(PhaseState s, double t) {
  const double c = std::cos(t), sn = std::sin(t);
  Vec x = c * s.x + sn * s.p;
  s.p = c * s.p - sn * s.x;
  s.x = std::move(x);
  return s;
}

/// Partial momentum refresh p <- p sqrt(1 - i^2) + i xi with xi standard
/// normal. Always draws dim(p) normals so the random stream advances the
/// same way for every refresh strength.
inline Vec ou_refresh(const Vec& p, double i_param, Rng& rng) {
  if (i_param < 0.0 || i_param > 1.0)
    throw ConfigError("ou_refresh: refresh strength must lie in [0, 1]");
  Vec xi = draw_standard_normal(rng, p.size());
  return std::sqrt(std::max(0.0, 1.0 - i_param * i_param)) * p + i_param * xi;
}

namespace detail {

/// Snap coordinates that overshot a face by roundoff back onto it.
inline void snap_to_box(Vec& x, const BoxDomain& box) {
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double lim = box.half_width(j);
    const double over = std::abs(x[j]) - lim;
    if (over > 0.0 && over <= 1e-12 * std::max(1.0, lim))
      x[j] = std::copysign(lim, x[j]);
  }
}

/// Angle advance (in [0, 2 pi)) from the state (x, p) of one coordinate
/// to its first strictly outward face crossing under rotation, or +inf
/// if the orbit never leaves [-a, a]. Tangential contact (orbit radius
/// equal to a) does not count as a crossing.
inline double first_rotation_exit_1d(double x, double p, double a) {
  const double radius = std::hypot(x, p);
  if (radius <= a) return kInf;
  const double alpha = std::asin(std::min(1.0, a / radius));
  const double theta0 = std::atan2(x, p);  // x = radius sin(theta), p = radius cos(theta)
  const double two_pi = 2.0 * kPi;
  auto advance_to = [&](double target) {
    double d = std::fmod(target - theta0, two_pi);
    if (d < 0.0) d += two_pi;
    // A state sitting exactly on a face with outward momentum must exit
    // immediately; roundoff in atan2/asin can alias that 0 to ~2 pi.
    // Step angles are < pi, so anything this close to a full revolution
    // can only be such an alias.
    if (d >= two_pi - 1e-9) d = 0.0;
    return d;
  };
  // outward crossings: through +a with p > 0, through -a with p < 0
  return std::min(advance_to(alpha), advance_to(kPi + alpha));
}

}  // namespace detail

/// Free flight with specular reflection at the box faces. Coordinates
/// whose crossing times tie within kTieTolerance reflect together.
inline PhaseState drift_bounce(PhaseState s, double t, const BoxDomain& box,
                               BounceRecord* rec = nullptr) {
  if (t < 0.0) throw ConfigError("drift_bounce: negative integration time");
  if (!box.contains(s.x)) throw ConfigError("drift_bounce: state outside the box");
  const Vec& a = box.half_widths();
  const Eigen::Index n = s.dim();
  std::vector<double> texit(static_cast<std::size_t>(n));
  double remaining = t;
  int count = 0;
  while (remaining > 0.0) {
    double s_min = kInf;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pj = s.p[j];
      double sj = kInf;
      if (pj != 0.0) {
        const double face = pj > 0.0 ? a[j] : -a[j];
        sj = std::max(0.0, (face - s.x[j]) / pj);
      }
      texit[static_cast<std::size_t>(j)] = sj;
      s_min = std::min(s_min, sj);
    }
    if (s_min >= remaining) {
      s.x += remaining * s.p;
      break;
    }
    s.x += s_min * s.p;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (texit[static_cast<std::size_t>(j)] <= s_min + kTieTolerance) {
        s.x[j] = s.p[j] > 0.0 ? a[j] : -a[j];
        s.p[j] = -s.p[j];
        if (++count > kMaxReflections) throw ReflectionCapError();
      }
    }
    remaining -= s_min;
  }
  detail::snap_to_box(s.x, box);
  if (rec) rec->count += count;
  return s;
}

/// Componentwise rotation with reflection at the box faces, for angles
/// in [0, pi). Under the EndpointInside rule the plain endpoint of the
/// remaining arc is kept whenever it lies inside the box, even if the
/// arc left it; AlwaysReflect reflects at every first crossing instead.
inline PhaseState rotate_bounce(PhaseState s, double t, const BoxDomain& box,
                                RotationBounceRule rule,
                                BounceRecord* rec = nullptr) {
  if (t < 0.0 || t >= kPi)
    throw ConfigError("rotate_bounce: integration time must lie in [0, pi)");
  if (!box.contains(s.x)) throw ConfigError("rotate_bounce: state outside the box");
  const Vec& a = box.half_widths();
  const Eigen::Index n = s.dim();
  std::vector<double> texit(static_cast<std::size_t>(n));
  double remaining = t;
  int count = 0;
  bool forgiven = false;
  while (remaining > 0.0) {
    double s_min = kInf;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double sj = detail::first_rotation_exit_1d(s.x[j], s.p[j], a[j]);
      texit[static_cast<std::size_t>(j)] = sj;
      s_min = std::min(s_min, sj);
    }
    if (s_min > remaining) {  // the arc stays inside: take the plain endpoint
      s = rotate(s, remaining);
      break;
    }
    if (rule == RotationBounceRule::EndpointInside) {
      PhaseState endpoint = rotate(s, remaining);
      if (box.contains(endpoint.x)) {
        forgiven = true;
        s = std::move(endpoint);
        break;
      }
    }
    s = rotate(s, s_min);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (texit[static_cast<std::size_t>(j)] <= s_min + kTieTolerance) {
        s.x[j] = std::copysign(a[j], s.x[j]);
        s.p[j] = -s.p[j];
        if (++count > kMaxReflections) throw ReflectionCapError();
      }
    }
    remaining -= s_min;
  }
  detail::snap_to_box(s.x, box);
  if (rec) {
    rec->count += count;
    rec->excursion_forgiven = rec->excursion_forgiven || forgiven;
  }
  return s;
}

/// Symmetric splitting with exact free flight between half kicks
/// (velocity Verlet with the full force).
inline PhaseState leapfrog_step(PhaseState s, double delta, const TargetModel& target) {
  s = kick_full(s, 0.5 * delta, target);
  s = drift(s, delta);
  return kick_full(s, 0.5 * delta, target);
}

inline PhaseState leapfrog_bounce_step(PhaseState s, double delta, const TargetModel& target,
                                       BounceRecord* rec = nullptr) {
  s = kick_full(s, 0.5 * delta, target);
  s = drift_bounce(s, delta, target.domain, rec);
  return kick_full(s, 0.5 * delta, target);
}

/// Symmetric splitting with the exact rotation of the quadratic part
/// between smooth-force half kicks.
inline PhaseState rotation_splitting_step(PhaseState s, double delta, const TargetModel& target) {
  s = kick_gradient(s, 0.5 * delta, target);
  s = rotate(s, delta);
  return kick_gradient(s, 0.5 * delta, target);
}

inline PhaseState rotation_splitting_bounce_step(PhaseState s, double delta,
                                                 const TargetModel& target,
                                                 RotationBounceRule rule,
                                                 BounceRecord* rec = nullptr) {
  s = kick_gradient(s, 0.5 * delta, target);
  s = rotate_bounce(s, delta, target.domain, rule, rec);
  return kick_gradient(s, 0.5 * delta, target);
}

/// One proposal: n_inner integrator steps of the family matching the
/// sampler (leapfrog for HMC/Horowitz, rotation splitting for SOL-HMC),
/// with or without boundary reflection.
inline PhaseState integrate_proposal(PhaseState s, const SamplerConfig& cfg,
                                     const TargetModel& target,
                                     BounceRecord* rec = nullptr) {
  const bool rotation_family = cfg.algorithm == Algorithm::SOLHMC;
  for (int k = 0; k < cfg.n_inner; ++k) {
    if (cfg.boundary_mode == BoundaryMode::Bounce) {
      s = rotation_family
              ? rotation_splitting_bounce_step(s, cfg.delta, target, cfg.rotation_rule, rec)
              : leapfrog_bounce_step(s, cfg.delta, target, rec);
    } else {
      s = rotation_family ? rotation_splitting_step(s, cfg.delta, target)
                          : leapfrog_step(s, cfg.delta, target);
    }
  }
  return s;
}

}  // namespace boxmc

#endif  // BOXMC_INTEGRATORS_HPP
