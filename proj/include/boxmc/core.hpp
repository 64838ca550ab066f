#ifndef BOXMC_CORE_HPP
#define BOXMC_CORE_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace boxmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Thrown when a potential/gradient evaluation cannot be completed
/// (e.g. the forward simulator diverged). Samplers map this to a
/// rejected proposal.
struct EvalFailure : std::runtime_error {
  explicit EvalFailure(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline Vec draw_standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = gauss(rng);
  return v;
}

inline double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Position/momentum pair, the state of the extended chain.
struct PhaseState {
  Vec x;
  Vec p;

  PhaseState() = default;
  PhaseState(Vec x_, Vec p_) : x(std::move(x_)), p(std::move(p_)) {
    if (x.size() != p.size() || x.size() < 1)
      throw ConfigError("phase state: x and p must have equal length >= 1");
  }

  Eigen::Index dim() const { return x.size(); }

  bool finite() const { return x.allFinite() && p.allFinite(); }
};

/// Axis-aligned box, per-axis half widths a_i > 0. Positions live in
/// the product of [-a_i, a_i].
class BoxDomain {
 public:
  BoxDomain() = default;
  explicit BoxDomain(Vec half_widths) : a_(std::move(half_widths)) {
    if (a_.size() < 1 || (a_.array() <= 0.0).any())
      throw ConfigError("box domain: half widths must be positive");
  }

  static BoxDomain uniform(double a, Eigen::Index n) {
    return BoxDomain(Vec::Constant(n, a));
  }

  Eigen::Index dim() const { return a_.size(); }
  const Vec& half_widths() const { return a_; }
  double half_width(Eigen::Index i) const { return a_[i]; }

  bool contains(const Vec& x) const {
    return (x.array().abs() <= a_.array()).all();
  }

  /// One point drawn uniformly from the box.
  Vec uniform_point(Rng& rng) const {
    Vec x(a_.size());
    for (Eigen::Index j = 0; j < a_.size(); ++j)
      x[j] = a_[j] * (2.0 * draw_uniform(rng) - 1.0);
    return x;
  }

 private:
  Vec a_;
};

/// Symmetric positive definite covariance operator. Either diagonal
/// (stored as the diagonal) or dense (stored with its Cholesky factor).
class Covariance {
 public:
  Covariance() = default;

  static Covariance diagonal(Vec d) {
    if ((d.array() <= 0.0).any())
      throw ConfigError("covariance: diagonal entries must be positive");
    Covariance c;
    c.diag_ = std::move(d);
    return c;
  }

  static Covariance scaled_identity(double s, Eigen::Index n) {
    return diagonal(Vec::Constant(n, s));
  }

  static Covariance dense(Mat m) {
    if (m.rows() != m.cols()) throw ConfigError("covariance: matrix not square");
    if (!m.isApprox(m.transpose(), 1e-12))
      throw ConfigError("covariance: matrix not symmetric");
    Covariance c;
    c.llt_ = Eigen::LLT<Mat>(m);
    if (c.llt_.info() != Eigen::Success)
      throw ConfigError("covariance: matrix not positive definite");
    c.dense_ = std::move(m);
    return c;
  }

  Eigen::Index dim() const { return diag_.size() > 0 ? diag_.size() : dense_.rows(); }
  bool is_diagonal() const { return diag_.size() > 0; }

  Vec apply(const Vec& v) const {
    if (is_diagonal()) return diag_.cwiseProduct(v);
    return dense_ * v;
  }

  Vec solve(const Vec& v) const {
    if (is_diagonal()) return v.cwiseQuotient(diag_);
    return llt_.solve(v);
  }

  /// <x, C^{-1} x>
  double quad(const Vec& x) const {
    if (is_diagonal()) return (x.array().square() / diag_.array()).sum();
    return x.dot(llt_.solve(x));
  }

  /// One draw from N(0, C).
  Vec sample(Rng& rng) const {
    Vec xi = draw_standard_normal(rng, dim());
    if (is_diagonal()) return diag_.array().sqrt().matrix().cwiseProduct(xi);
    return llt_.matrixL() * xi;
  }

  Mat matrix() const {
    if (is_diagonal()) return Mat(diag_.asDiagonal());
    return dense_;
  }

 private:
  Vec diag_;
  Mat dense_;
  Eigen::LLT<Mat> llt_;
};

/// Target measure pi(x) propto exp(-V(x) - <x, C^{-1}x>/2) restricted to
/// a box. The smooth part V is supplied as callables so targets backed
/// by a simulator and analytic ones share one interface. potential may
/// return a non-finite value (or throw EvalFailure) when it cannot be
/// evaluated; callers treat that as infinite energy.
struct TargetModel {
  Eigen::Index dim = 0;
  std::function<double(const Vec&)> potential;
  std::function<Vec(const Vec&)> gradient;
  Covariance covariance;
  BoxDomain domain;
};

/// V(x) + <x, C^{-1}x>/2, the position part of the energy. +inf when the
/// potential cannot be evaluated. Defined on all of R^N, not just the box
/// (rejection-mode trajectories evaluate outside).
inline double position_energy(const Vec& x, const TargetModel& t) {
  double v;
  try {
    v = t.potential(x);
  } catch (const EvalFailure&) {
    return kInf;
  }
  if (!std::isfinite(v)) return kInf;
  return v + 0.5 * t.covariance.quad(x);
}

/// H(x, p) = V(x) + <x, C^{-1}x>/2 + |p|^2/2. +inf on evaluation failure.
inline double hamiltonian(const PhaseState& s, const TargetModel& t) {
  if (s.dim() != t.dim) throw ConfigError("hamiltonian: dimension mismatch");
  double ex = position_energy(s.x, t);
  if (!std::isfinite(ex)) return kInf;
  return ex + 0.5 * s.p.squaredNorm();
}

/// Unnormalized log density of the target; -inf outside the box.
inline double log_target_density(const Vec& x, const TargetModel& t) {
  if (!t.domain.contains(x)) return -kInf;
  double ex = position_energy(x, t);
  if (!std::isfinite(ex)) return -kInf;
  return -ex;
}

enum class Algorithm { HMC, Horowitz, SOLHMC };
enum class BoundaryMode { Bounce, Reject };
/// Boundary rule for the rotation drift: keep the plain endpoint whenever
/// it lands inside the box (even if the arc left it), or reflect at every
/// first crossing.
enum class RotationBounceRule { EndpointInside, AlwaysReflect };

struct SamplerConfig {
  Algorithm algorithm = Algorithm::SOLHMC;
  BoundaryMode boundary_mode = BoundaryMode::Bounce;
  double delta = 0.1;
  int n_inner = 1;
  double i_param = 1.0;
  long n_samples = 0;
  long burn_in = -1;  // -1: default to n_samples / 10
  double target_accept = -1.0;  // <= 0: no adaptation
  std::uint64_t seed = 0;
  RotationBounceRule rotation_rule = RotationBounceRule::EndpointInside;

  long effective_burn_in() const { return burn_in >= 0 ? burn_in : n_samples / 10; }
  bool adapt() const { return target_accept > 0.0; }
};

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::HMC: return "hmc";
    case Algorithm::Horowitz: return "horowitz";
    case Algorithm::SOLHMC: return "solhmc";
  }
  return "?";
}

inline const char* boundary_mode_name(BoundaryMode m) {
  return m == BoundaryMode::Bounce ? "bounce" : "reject";
}

/// Record of one chain run: post-burn-in samples plus per-step
/// diagnostics and the configuration that produced them.
struct ChainOutput {
  Mat samples;                       // n_samples x dim
  Mat momenta;                       // n_samples x dim when requested, else empty
  std::vector<char> acceptance_flags;
  Vec energy_trace;
  std::vector<int> bounce_counts;
  long oob_rejections = 0;           // out-of-box or failed-evaluation proposals
  std::uint64_t seed = 0;
  SamplerConfig config_echo;
  double realized_acceptance = 0.0;  // post-burn-in mean of acceptance flags
  double adapted_delta = 0.0;        // delta in force after burn-in
};

}  // namespace boxmc

#endif  // BOXMC_CORE_HPP
