#ifndef BOXMC_TARGETS_HPP
#define BOXMC_TARGETS_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "boxmc/core.hpp"
#include "boxmc/reservoir.hpp"

namespace boxmc {

/// Standard normal restricted to a box: zero smooth potential, identity
/// covariance.
inline TargetModel truncated_gaussian_target(double half_width, Eigen::Index dim = 2) {
  TargetModel t;
  t.dim = dim;
  t.potential = [](const Vec&) { return 0.0; };
  t.gradient = [dim](const Vec&) { return Vec::Zero(dim); };
  t.covariance = Covariance::scaled_identity(1.0, dim);
  t.domain = BoxDomain::uniform(half_width, dim);
  return t;
}

/// Chained quartic valley f(x) = sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
inline double rosenbrock(const Vec& x) {
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double d = x[i + 1] - x[i] * x[i];
    f += 100.0 * d * d + (1.0 - x[i]) * (1.0 - x[i]);
  }
  return f;
}

inline Vec rosenbrock_gradient(const Vec& x) {
  Vec g = Vec::Zero(x.size());
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double d = x[i + 1] - x[i] * x[i];
    g[i] += -400.0 * x[i] * d - 2.0 * (1.0 - x[i]);
    g[i + 1] += 200.0 * d;
  }
  return g;
}

/// Target with smooth part half the valley function and a scaled identity
/// covariance, restricted to a box.
inline TargetModel rosenbrock_target(double half_width, Eigen::Index dim = 5,
                                     double cov_scale = 0.3) {
  TargetModel t;
  t.dim = dim;
  t.potential = [](const Vec& x) { return 0.5 * rosenbrock(x); };
  t.gradient = [](const Vec& x) { return Vec(0.5 * rosenbrock_gradient(x)); };
  t.covariance = Covariance::scaled_identity(cov_scale, dim);
  t.domain = BoxDomain::uniform(half_width, dim);
  return t;
}

/// Log-scale bijection between positive physical parameters and the
/// sampling box [-a, a]^N. Coordinate i ranges over [l b_i, u b_i] in
/// physical space; the box midpoint maps to b_i sqrt(l u).
class ParameterTransform {
 public:
  ParameterTransform() = default;
  ParameterTransform(Vec base, double lower_factor, double upper_factor, double half_width)
      : base_(std::move(base)), a_(half_width) {
    if ((base_.array() <= 0.0).any())
      throw ConfigError("transform: base values must be positive");
    if (!(lower_factor > 0.0) || !(upper_factor > lower_factor))
      throw ConfigError("transform: need 0 < lower factor < upper factor");
    if (!(a_ > 0.0)) throw ConfigError("transform: half width must be positive");
    span_ = std::log10(upper_factor) - std::log10(lower_factor);
    log_lo_ = base_.array().log10() + std::log10(lower_factor);
  }

  Eigen::Index dim() const { return base_.size(); }
  double half_width() const { return a_; }
  const Vec& base() const { return base_; }

  Vec to_transformed(const Vec& x) const {
    if ((x.array() <= 0.0).any())
      throw ConfigError("transform: physical values must be positive");
    return (a_ * (2.0 * (x.array().log10() - log_lo_) / span_ - 1.0)).matrix();
  }

  Vec to_physical(const Vec& t) const {
    return Eigen::pow(10.0, log_lo_ + (t.array() / a_ + 1.0) * (span_ / 2.0)).matrix();
  }

  /// Diagonal of d(physical)/d(transformed) at box point t.
  Vec dphys_dtrans(const Vec& t) const {
    const double ln10 = std::log(10.0);
    return (to_physical(t).array() * (ln10 * span_ / (2.0 * a_))).matrix();
  }

 private:
  Vec base_;
  Eigen::ArrayXd log_lo_;
  double span_ = 0.0;
  double a_ = 1.0;
};

/// Reduction of the full parameter vector to per-layer multipliers:
/// aquifer volumes, transmissibilities, and well indices scale by one
/// multiplier per (quantity, layer); everything else stays at the
/// reference value.
struct LightweightMap {
  Vec base;                // reference full parameter vector
  std::vector<int> group;  // per full coordinate: -1 fixed, else multiplier index
  int n_multipliers = 0;

  Vec expand(const Vec& y) const {
    if (y.size() != n_multipliers)
      throw ConfigError("lightweight map: multiplier vector has wrong length");
    Vec x = base;
    for (std::size_t k = 0; k < group.size(); ++k)
      if (group[k] >= 0)
        x[static_cast<Eigen::Index>(k)] = base[static_cast<Eigen::Index>(k)] * y[group[k]];
    return x;
  }

  /// Chain rule: gradient with respect to the multipliers from a full
  /// parameter-space gradient.
  Vec reduce_gradient(const Vec& g_full) const {
    Vec g = Vec::Zero(n_multipliers);
    for (std::size_t k = 0; k < group.size(); ++k)
      if (group[k] >= 0)
        g[group[k]] +=
            base[static_cast<Eigen::Index>(k)] * g_full[static_cast<Eigen::Index>(k)];
    return g;
  }
};

inline int layer_count(const ReservoirModel& m) {
  int layers = 0;
  for (const Block& b : m.blocks) layers = std::max(layers, b.layer + 1);
  return layers;
}

/// Multiplier layout: volumes for layers 0..L-1, then transmissibilities,
/// then well indices. A connection belongs to the layer of its first
/// block, a perforation to the layer of its block.
inline LightweightMap make_lightweight_map(const ReservoirModel& m) {
  const int layers = layer_count(m);
  LightweightMap map;
  map.base = get_parameters(m);
  map.n_multipliers = 3 * layers;
  map.group.reserve(static_cast<std::size_t>(m.n_parameters()));
  for (const Block& b : m.blocks) map.group.push_back(b.is_aquifer ? b.layer : -1);
  for (const Connection& c : m.connections)
    map.group.push_back(layers + m.blocks[static_cast<std::size_t>(c.block_a)].layer);
  for (const Perforation& p : m.perforations)
    map.group.push_back(2 * layers + m.blocks[static_cast<std::size_t>(p.block)].layer);
  return map;
}

inline constexpr double kVolumeMultiplierCenter = 1.5;
inline constexpr double kTransmissibilityMultiplierCenter = 0.7;
inline constexpr double kWellIndexMultiplierCenter = 1.1;

inline Vec lightweight_centers(int layers) {
  Vec c(3 * layers);
  for (int l = 0; l < layers; ++l) {
    c[l] = kVolumeMultiplierCenter;
    c[layers + l] = kTransmissibilityMultiplierCenter;
    c[2 * layers + l] = kWellIndexMultiplierCenter;
  }
  return c;
}

/// Prior covariance for the multiplier space: 0.25 on the diagonal plus a
/// 0.1 coupling between the transmissibility and well-index multipliers
/// of the same layer.
inline Covariance lightweight_covariance(int layers, double diag = 0.25, double cross = 0.1) {
  Mat c = diag * Mat::Identity(3 * layers, 3 * layers);
  for (int l = 0; l < layers; ++l) {
    c(layers + l, 2 * layers + l) = cross;
    c(2 * layers + l, layers + l) = cross;
  }
  return Covariance::dense(c);
}

/// The model whose data the lightweight experiment inverts for: the
/// reference model with the multiplier centers applied.
inline ReservoirModel lightweight_truth_model(const ReservoirModel& base) {
  ReservoirModel m = base;
  LightweightMap map = make_lightweight_map(base);
  set_parameters(m, map.expand(lightweight_centers(layer_count(base))));
  return m;
}

enum class PosteriorSpace { Full, Lightweight };

/// Box/prior presets for the full parameter space: a one-decade box with
/// a tight prior, a three-decade box with the same tight prior, and the
/// three-decade box with a diffuse prior.
enum class FullPrior { Narrow, Wide, WideDiffuse };

/// Negative log likelihood of a reservoir model as a function of the
/// box-space coordinates, with an exact gradient from the adjoint pass.
/// Caches the last evaluation point so a potential lookup following a
/// gradient call at the same point is free.
class ReservoirPosterior {
 public:
  ReservoirPosterior(ReservoirModel model, std::vector<Observation> obs,
                     ParameterTransform transform, std::optional<LightweightMap> map)
      : model_(std::move(model)),
        obs_(std::move(obs)),
        transform_(std::move(transform)),
        map_(std::move(map)) {}

  double potential(const Vec& t) {
    if (!(cache_valid(t) && have_potential_)) evaluate(t, false);
    return potential_;
  }

  Vec gradient(const Vec& t) {
    if (!(cache_valid(t) && have_gradient_)) evaluate(t, true);
    return gradient_;
  }

 private:
  bool cache_valid(const Vec& t) const {
    return cached_t_.size() == t.size() && (cached_t_.array() == t.array()).all();
  }

  void evaluate(const Vec& t, bool with_gradient) {
    have_potential_ = have_gradient_ = false;
    cached_t_.resize(0);
    const Vec y = transform_.to_physical(t);
    if (!y.allFinite()) throw EvalFailure("transform produced non-finite parameters");
    set_parameters(model_, map_ ? map_->expand(y) : y);
    if (with_gradient) {
      LikelihoodGradient lg = log_likelihood_with_gradient(model_, obs_);
      potential_ = -lg.log_likelihood;
      const Vec gy = map_ ? map_->reduce_gradient(lg.gradient) : lg.gradient;
      gradient_ = -transform_.dphys_dtrans(t).cwiseProduct(gy);
      have_gradient_ = true;
    } else {
      potential_ = -log_likelihood(model_, obs_);
    }
    have_potential_ = true;
    cached_t_ = t;
  }

  ReservoirModel model_;
  std::vector<Observation> obs_;
  ParameterTransform transform_;
  std::optional<LightweightMap> map_;

  Vec cached_t_;
  double potential_ = 0.0;
  Vec gradient_;
  bool have_potential_ = false;
  bool have_gradient_ = false;
};

inline void full_prior_settings(FullPrior prior, double& lower, double& upper,
                                double& half_width, double& cov_scale) {
  switch (prior) {
    case FullPrior::Narrow:
      lower = 0.1; upper = 10.0; half_width = 1.0; cov_scale = 0.25;
      return;
    case FullPrior::Wide:
      lower = 1e-3; upper = 1e3; half_width = 3.0; cov_scale = 0.25;
      return;
    case FullPrior::WideDiffuse:
      lower = 1e-3; upper = 1e3; half_width = 3.0; cov_scale = 2.25;
      return;
  }
  throw ConfigError("unknown prior preset");
}

/// Bayesian posterior over reservoir parameters in box coordinates. The
/// reference model supplies the transform midpoints; the Gaussian prior
/// and box live on the transformed coordinates.
inline TargetModel reservoir_posterior_target(const ReservoirModel& model,
                                              std::vector<Observation> obs,
                                              PosteriorSpace space,
                                              FullPrior prior = FullPrior::Narrow) {
  model.validate();
  TargetModel target;
  std::shared_ptr<ReservoirPosterior> eval;
  if (space == PosteriorSpace::Full) {
    double lower, upper, half_width, cov_scale;
    full_prior_settings(prior, lower, upper, half_width, cov_scale);
    target.dim = model.n_parameters();
    target.covariance = Covariance::scaled_identity(cov_scale, target.dim);
    target.domain = BoxDomain::uniform(half_width, target.dim);
    eval = std::make_shared<ReservoirPosterior>(
        model, std::move(obs),
        ParameterTransform(get_parameters(model), lower, upper, half_width), std::nullopt);
  } else {
    const int layers = layer_count(model);
    LightweightMap map = make_lightweight_map(model);
    target.dim = map.n_multipliers;
    target.covariance = lightweight_covariance(layers);
    target.domain = BoxDomain::uniform(1.0, target.dim);
    eval = std::make_shared<ReservoirPosterior>(
        model, std::move(obs),
        ParameterTransform(lightweight_centers(layers), 0.1, 10.0, 1.0), std::move(map));
  }
  target.potential = [eval](const Vec& t) { return eval->potential(t); };
  target.gradient = [eval](const Vec& t) { return eval->gradient(t); };
  return target;
}

/// Posterior mode by projected gradient ascent with an adaptive
/// (secant-scaled) step and halving backtracking. Suited to the smooth
/// desk-scale posteriors it is used on.
struct MapResult {
  Vec t;
  double log_posterior = 0.0;
  double projected_grad_norm = 0.0;
  long iterations = 0;
  bool converged = false;
};

inline MapResult map_estimate(const TargetModel& target, const Vec& t0,
                              long max_iterations = 1000, double tolerance = 1e-6) {
  const Vec& a = target.domain.half_widths();
  auto clamp_box = [&](Vec v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = std::clamp(v[j], -a[j], a[j]);
    return v;
  };
  auto objective = [&](const Vec& t) { return -position_energy(t, target); };
  auto ascent_dir = [&](const Vec& t) {
    return Vec(-(target.gradient(t) + target.covariance.solve(t)));
  };

  MapResult res;
  Vec t = clamp_box(t0);
  double f = objective(t);
  if (!std::isfinite(f)) throw EvalFailure("map_estimate: start point cannot be evaluated");
  Vec g = ascent_dir(t);
  double step = 1e-2;
  long it = 0;
  for (; it < max_iterations; ++it) {
    res.projected_grad_norm = (clamp_box(t + g) - t).cwiseAbs().maxCoeff();
    if (res.projected_grad_norm < tolerance) {
      res.converged = true;
      break;
    }
    double s = step;
    Vec t_new;
    double f_new = -kInf;
    bool improved = false;
    for (int bt = 0; bt < 60; ++bt) {
      t_new = clamp_box(t + s * g);
      try {
        f_new = objective(t_new);
      } catch (const EvalFailure&) {
        f_new = -kInf;
      }
      if (std::isfinite(f_new) && f_new > f) {
        improved = true;
        break;
      }
      s *= 0.5;
    }
    if (!improved) break;
    Vec g_new = ascent_dir(t_new);
    const Vec dt = t_new - t;
    const Vec dg = g_new - g;
    const double denom = dg.squaredNorm();
    step = denom > 0.0 ? std::abs(dt.dot(dg)) / denom : 2.0 * s;
    if (!(step > 0.0) || !std::isfinite(step)) step = s;
    t = std::move(t_new);
    f = f_new;
    g = std::move(g_new);
  }
  res.t = t;
  res.log_posterior = f;
  res.iterations = it;
  return res;
}

}  // namespace boxmc

#endif  // BOXMC_TARGETS_HPP
