#ifndef BOXMC_RESERVOIR_HPP
#define BOXMC_RESERVOIR_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "boxmc/core.hpp"

namespace boxmc {

// Units: pressure in bar, time in days, volume in m^3, depth in metres
// (positive downward), rates in m^3/day, transmissibility and well index
// in m^3/(bar day), compressibility in 1/bar.

struct ReservoirConstants {
  double density_kg_m3 = 800.0;
  double gravity_m_s2 = 9.81;
  double datum_depth_m = 2020.0;
  double datum_pressure_bar = 200.0;
  double dt_days = 30.0;
  double horizon_days = 720.0;
};

struct Block {
  int id = 0;
  int layer = 0;
  double volume_m3 = 0.0;
  double compressibility_per_bar = 0.0;
  double depth_m = 0.0;
  bool is_aquifer = false;
  double p0_bar = 0.0;
};

struct Connection {
  int block_a = 0;
  int block_b = 0;
  double transmissibility = 0.0;
};

struct Well {
  int id = 0;
  double bhp_ref_depth_m = 0.0;
};

struct Perforation {
  int well = 0;
  int block = 0;
  double well_index = 0.0;
};

/// Constant surface rate over (start_day, end_day]; positive rates
/// produce, negative rates inject.
struct RatePeriod {
  int well = 0;
  double start_day = 0.0;
  double end_day = 0.0;
  double rate_m3_day = 0.0;
};

struct ReservoirModel {
  ReservoirConstants constants;
  std::vector<Block> blocks;
  std::vector<Connection> connections;
  std::vector<Well> wells;
  std::vector<Perforation> perforations;
  std::vector<RatePeriod> schedule;

  Eigen::Index n_blocks() const { return static_cast<Eigen::Index>(blocks.size()); }
  Eigen::Index n_wells() const { return static_cast<Eigen::Index>(wells.size()); }
  Eigen::Index n_unknowns() const { return n_blocks() + n_wells(); }
  /// Parameters exposed to inference: every block volume, then every
  /// connection transmissibility, then every perforation well index.
  Eigen::Index n_parameters() const {
    return n_blocks() + static_cast<Eigen::Index>(connections.size()) +
           static_cast<Eigen::Index>(perforations.size());
  }
  long n_steps() const {
    return std::lround(constants.horizon_days / constants.dt_days);
  }
  /// bar per metre of depth.
  double gravity_head() const {
    return constants.density_kg_m3 * constants.gravity_m_s2 / 1e5;
  }
  double well_rate(int well, double t_day) const {
    double rate = 0.0;
    for (const RatePeriod& r : schedule)
      if (r.well == well && t_day > r.start_day && t_day <= r.end_day) rate += r.rate_m3_day;
    return rate;
  }

  void validate() const {
    const auto& c = constants;
    if (!(c.density_kg_m3 > 0) || !(c.gravity_m_s2 > 0) || !(c.dt_days > 0) ||
        !(c.horizon_days > 0))
      throw ConfigError("reservoir: constants must be positive");
    const double steps = c.horizon_days / c.dt_days;
    if (std::abs(steps - std::round(steps)) > 1e-9)
      throw ConfigError("reservoir: horizon must be a whole number of time steps");
    if (blocks.empty()) throw ConfigError("reservoir: no blocks");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Block& b = blocks[i];
      if (b.id != static_cast<int>(i))
        throw ConfigError("reservoir: block ids must be consecutive from 0");
      if (!(b.volume_m3 > 0) || !(b.compressibility_per_bar > 0))
        throw ConfigError("reservoir: block volume and compressibility must be positive");
      if (b.layer < 0) throw ConfigError("reservoir: negative layer index");
    }
    for (std::size_t i = 0; i < wells.size(); ++i)
      if (wells[i].id != static_cast<int>(i))
        throw ConfigError("reservoir: well ids must be consecutive from 0");
    std::set<std::pair<int, int>> seen_conn;
    for (const Connection& k : connections) {
      if (k.block_a < 0 || k.block_a >= static_cast<int>(blocks.size()) || k.block_b < 0 ||
          k.block_b >= static_cast<int>(blocks.size()) || k.block_a == k.block_b)
        throw ConfigError("reservoir: connection references invalid blocks");
      if (!(k.transmissibility > 0))
        throw ConfigError("reservoir: transmissibility must be positive");
      auto key = std::minmax(k.block_a, k.block_b);
      if (!seen_conn.insert(key).second)
        throw ConfigError("reservoir: duplicate connection");
    }
    std::set<std::pair<int, int>> seen_perf;
    std::vector<int> perfs_per_well(wells.size(), 0);
    for (const Perforation& p : perforations) {
      if (p.well < 0 || p.well >= static_cast<int>(wells.size()) || p.block < 0 ||
          p.block >= static_cast<int>(blocks.size()))
        throw ConfigError("reservoir: perforation references invalid well or block");
      if (!(p.well_index > 0))
        throw ConfigError("reservoir: well index must be positive");
      if (!seen_perf.insert({p.well, p.block}).second)
        throw ConfigError("reservoir: duplicate perforation");
      ++perfs_per_well[static_cast<std::size_t>(p.well)];
    }
    for (std::size_t w = 0; w < wells.size(); ++w)
      if (perfs_per_well[w] == 0)
        throw ConfigError("reservoir: every well needs at least one perforation");
    for (const RatePeriod& r : schedule) {
      if (r.well < 0 || r.well >= static_cast<int>(wells.size()))
        throw ConfigError("reservoir: schedule references invalid well");
      if (!(r.end_day > r.start_day))
        throw ConfigError("reservoir: schedule period must have positive length");
      if (!std::isfinite(r.rate_m3_day))
        throw ConfigError("reservoir: schedule rate must be finite");
      for (double edge : {r.start_day, r.end_day}) {
        const double k = edge / c.dt_days;
        if (std::abs(k - std::round(k)) > 1e-9)
          throw ConfigError("reservoir: schedule edges must align with time steps");
      }
    }
  }
};

inline Vec get_parameters(const ReservoirModel& m) {
  Vec theta(m.n_parameters());
  Eigen::Index k = 0;
  for (const Block& b : m.blocks) theta[k++] = b.volume_m3;
  for (const Connection& c : m.connections) theta[k++] = c.transmissibility;
  for (const Perforation& p : m.perforations) theta[k++] = p.well_index;
  return theta;
}

inline void set_parameters(ReservoirModel& m, const Vec& theta) {
  if (theta.size() != m.n_parameters())
    throw ConfigError("reservoir: parameter vector has wrong length");
  if (!theta.allFinite() || (theta.array() <= 0.0).any())
    throw EvalFailure("reservoir: parameters must be positive and finite");
  Eigen::Index k = 0;
  for (Block& b : m.blocks) b.volume_m3 = theta[k++];
  for (Connection& c : m.connections) c.transmissibility = theta[k++];
  for (Perforation& p : m.perforations) p.well_index = theta[k++];
}

struct Observation {
  enum class Kind { BHP, BlockPressure };
  Kind kind = Kind::BHP;
  int entity = 0;  // well id for BHP, block id for BlockPressure
  double time_day = 0.0;
  double value_bar = 0.0;
  double sigma_bar = 1.0;
};

struct ForwardResult {
  Mat block_pressure;                    // (n_steps + 1) x n_blocks, row 0 initial
  Mat well_pressure;                     // n_steps x n_wells, row n-1 is step n
  std::vector<double> balance_residual;  // relative volumetric balance per step
};

namespace detail {

// The factorization member is neither copyable nor movable, so the
// system is assembled in place by the constructor.
struct AssembledSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor;
  Vec accumulation;  // c V / dt on block entries, 0 on well entries
  Vec gravity_rhs;   // time-independent gravity part of the right-hand side

  explicit AssembledSystem(const ReservoirModel& m);
};

inline AssembledSystem::AssembledSystem(const ReservoirModel& m) {
  const Eigen::Index nb = m.n_blocks(), n = m.n_unknowns();
  const double gamma = m.gravity_head();
  AssembledSystem& sys = *this;
  sys.accumulation = Vec::Zero(n);
  sys.gravity_rhs = Vec::Zero(n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.blocks.size() + 4 * m.connections.size() + 4 * m.perforations.size() +
               m.wells.size());
  for (const Block& b : m.blocks) {
    const double acc = b.compressibility_per_bar * b.volume_m3 / m.constants.dt_days;
    sys.accumulation[b.id] = acc;
    trip.emplace_back(b.id, b.id, acc);
  }
  for (const Connection& c : m.connections) {
    const int a = c.block_a, b = c.block_b;
    const double t = c.transmissibility;
    const double head = m.blocks[static_cast<std::size_t>(a)].depth_m -
                        m.blocks[static_cast<std::size_t>(b)].depth_m;
    trip.emplace_back(a, a, t);
    trip.emplace_back(b, b, t);
    trip.emplace_back(a, b, -t);
    trip.emplace_back(b, a, -t);
    sys.gravity_rhs[a] += t * gamma * head;
    sys.gravity_rhs[b] -= t * gamma * head;
  }
  for (const Perforation& p : m.perforations) {
    const Eigen::Index l = p.block, w = nb + p.well;
    const double j = p.well_index;
    const double head = m.blocks[static_cast<std::size_t>(p.block)].depth_m -
                        m.wells[static_cast<std::size_t>(p.well)].bhp_ref_depth_m;
    trip.emplace_back(l, l, j);
    trip.emplace_back(w, w, j);
    trip.emplace_back(l, w, -j);
    trip.emplace_back(w, l, -j);
    sys.gravity_rhs[l] += j * gamma * head;
    sys.gravity_rhs[w] -= j * gamma * head;
  }
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.factor.compute(sys.matrix);
  if (sys.factor.info() != Eigen::Success)
    throw EvalFailure("reservoir: pressure system factorization failed");
}

/// Backward-Euler states u^0..u^N; u^0 holds the initial block pressures
/// and zeros on the (undefined) well entries.
inline std::vector<Vec> simulate_states(const ReservoirModel& m, const AssembledSystem& sys,
                                        std::vector<double>* balance = nullptr) {
  const Eigen::Index nb = m.n_blocks(), nw = m.n_wells(), n = m.n_unknowns();
  const long steps = m.n_steps();
  std::vector<Vec> u(static_cast<std::size_t>(steps) + 1);
  u[0] = Vec::Zero(n);
  for (const Block& b : m.blocks) u[0][b.id] = b.p0_bar;
  if (balance) balance->assign(static_cast<std::size_t>(steps), 0.0);
  for (long nstep = 1; nstep <= steps; ++nstep) {
    const double t = static_cast<double>(nstep) * m.constants.dt_days;
    Vec f = sys.accumulation.cwiseProduct(u[static_cast<std::size_t>(nstep) - 1]) +
            sys.gravity_rhs;
    double q_total = 0.0, q_gross = 0.0;
    for (Eigen::Index w = 0; w < nw; ++w) {
      const double q = m.well_rate(static_cast<int>(w), t);
      f[nb + w] -= q;
      q_total += q;
      q_gross += std::abs(q);
    }
    Vec sol = sys.factor.solve(f);
    if (!sol.allFinite()) throw EvalFailure("reservoir: pressure solve diverged");
    if (balance) {
      double acc = 0.0, gross = q_gross;
      for (Eigen::Index b = 0; b < nb; ++b) {
        const double a =
            sys.accumulation[b] * (sol[b] - u[static_cast<std::size_t>(nstep) - 1][b]);
        acc += a;
        gross += std::abs(a);
      }
      (*balance)[static_cast<std::size_t>(nstep) - 1] =
          std::abs(acc + q_total) / std::max(gross, 1e-30);
    }
    u[static_cast<std::size_t>(nstep)] = std::move(sol);
  }
  return u;
}

}  // namespace detail

inline ForwardResult forward_simulate(const ReservoirModel& m) {
  m.validate();
  detail::AssembledSystem sys(m);
  ForwardResult out;
  std::vector<Vec> u = detail::simulate_states(m, sys, &out.balance_residual);
  const Eigen::Index nb = m.n_blocks(), nw = m.n_wells();
  const long steps = m.n_steps();
  out.block_pressure.resize(steps + 1, nb);
  out.well_pressure.resize(steps, nw);
  for (long n = 0; n <= steps; ++n) {
    out.block_pressure.row(n) = u[static_cast<std::size_t>(n)].head(nb);
    if (n >= 1) out.well_pressure.row(n - 1) = u[static_cast<std::size_t>(n)].tail(nw);
  }
  return out;
}

/// Time-step index of one observation, validating alignment and range.
inline long observation_step(const ReservoirModel& m, const Observation& o) {
  const double k = o.time_day / m.constants.dt_days;
  if (std::abs(k - std::round(k)) > 1e-9)
    throw ConfigError("observation time does not align with the time grid");
  const long step = std::lround(k);
  if (step < 0 || step > m.n_steps())
    throw ConfigError("observation time outside the simulated horizon");
  if (o.kind == Observation::Kind::BHP && step == 0)
    throw ConfigError("well pressure is undefined at the initial time");
  if (o.kind == Observation::Kind::BHP &&
      (o.entity < 0 || o.entity >= static_cast<int>(m.wells.size())))
    throw ConfigError("observation references an invalid well");
  if (o.kind == Observation::Kind::BlockPressure &&
      (o.entity < 0 || o.entity >= static_cast<int>(m.blocks.size())))
    throw ConfigError("observation references an invalid block");
  if (!(o.sigma_bar > 0)) throw ConfigError("observation noise level must be positive");
  return step;
}

inline Vec extract_data(const ReservoirModel& m, const ForwardResult& fr,
                        const std::vector<Observation>& obs) {
  Vec d(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const long step = observation_step(m, obs[i]);
    d[static_cast<Eigen::Index>(i)] =
        obs[i].kind == Observation::Kind::BHP
            ? fr.well_pressure(step - 1, obs[i].entity)
            : fr.block_pressure(step, obs[i].entity);
  }
  return d;
}

inline double log_likelihood(const ReservoirModel& m, const std::vector<Observation>& obs) {
  ForwardResult fr = forward_simulate(m);
  Vec d = extract_data(m, fr, obs);
  double s = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double r = (d[static_cast<Eigen::Index>(i)] - obs[i].value_bar) / obs[i].sigma_bar;
    s += r * r;
  }
  return -0.5 * s;
}

struct LikelihoodGradient {
  double log_likelihood = 0.0;
  Vec gradient;  // with respect to (volumes, transmissibilities, well indices)
};

/// Likelihood and its exact gradient from one forward solve plus one
/// adjoint (backward) solve sequence reusing the same factorization.
inline LikelihoodGradient log_likelihood_with_gradient(const ReservoirModel& m,
                                                       const std::vector<Observation>& obs) {
  m.validate();
  const Eigen::Index nb = m.n_blocks(), n = m.n_unknowns();
  const double gamma = m.gravity_head();
  const long steps = m.n_steps();

  detail::AssembledSystem sys(m);
  std::vector<Vec> u = detail::simulate_states(m, sys);

  // group the mismatch terms by time step
  std::map<long, std::vector<std::pair<Eigen::Index, std::size_t>>> by_step;
  double logl = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const long step = observation_step(m, obs[i]);
    const Eigen::Index idx = obs[i].kind == Observation::Kind::BHP
                                 ? nb + obs[i].entity
                                 : static_cast<Eigen::Index>(obs[i].entity);
    const double r =
        (u[static_cast<std::size_t>(step)][idx] - obs[i].value_bar) / obs[i].sigma_bar;
    logl += -0.5 * r * r;
    if (step >= 1) by_step[step].push_back({idx, i});
  }

  LikelihoodGradient out;
  out.log_likelihood = logl;
  out.gradient = Vec::Zero(m.n_parameters());
  const Eigen::Index off_t = nb;
  const Eigen::Index off_j = nb + static_cast<Eigen::Index>(m.connections.size());

  Vec lambda_next = Vec::Zero(n);
  for (long nstep = steps; nstep >= 1; --nstep) {
    Vec rhs = sys.accumulation.cwiseProduct(lambda_next);
    auto it = by_step.find(nstep);
    if (it != by_step.end()) {
      for (auto [idx, i] : it->second) {
        const Observation& o = obs[i];
        rhs[idx] -= (u[static_cast<std::size_t>(nstep)][idx] - o.value_bar) /
                    (o.sigma_bar * o.sigma_bar);
      }
    }
    Vec lambda = sys.factor.solve(rhs);
    if (!lambda.allFinite()) throw EvalFailure("reservoir: adjoint solve diverged");

    const Vec& un = u[static_cast<std::size_t>(nstep)];
    const Vec& up = u[static_cast<std::size_t>(nstep) - 1];
    for (const Block& b : m.blocks) {
      const double dres = (b.compressibility_per_bar / m.constants.dt_days) *
                          (un[b.id] - up[b.id]);
      out.gradient[b.id] -= lambda[b.id] * dres;
    }
    for (std::size_t k = 0; k < m.connections.size(); ++k) {
      const Connection& c = m.connections[k];
      const double head = m.blocks[static_cast<std::size_t>(c.block_a)].depth_m -
                          m.blocks[static_cast<std::size_t>(c.block_b)].depth_m;
      const double d = un[c.block_a] - un[c.block_b] - gamma * head;
      out.gradient[off_t + static_cast<Eigen::Index>(k)] -=
          lambda[c.block_a] * d - lambda[c.block_b] * d;
    }
    for (std::size_t k = 0; k < m.perforations.size(); ++k) {
      const Perforation& p = m.perforations[k];
      const Eigen::Index l = p.block, w = nb + p.well;
      const double head = m.blocks[static_cast<std::size_t>(p.block)].depth_m -
                          m.wells[static_cast<std::size_t>(p.well)].bhp_ref_depth_m;
      const double d = un[l] - un[w] - gamma * head;
      out.gradient[off_j + static_cast<Eigen::Index>(k)] -= lambda[l] * d - lambda[w] * d;
    }
    lambda_next = std::move(lambda);
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic models

enum class ModelPreset { Desk, Field };

namespace detail {

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::pow(10.0, std::uniform_real_distribution<double>(std::log10(lo),
                                                                std::log10(hi))(rng));
}

}  // namespace detail

/// Small five-block, two-well model for unit-level work.
inline ReservoirModel build_desk_model() {
  ReservoirModel m;
  m.constants = {800.0, 9.81, 2020.0, 200.0, 30.0, 720.0};
  const double gamma = m.gravity_head();
  auto block = [&](int id, int layer, double v, double c, double z, bool aq) {
    m.blocks.push_back(
        {id, layer, v, c, z, aq,
         m.constants.datum_pressure_bar + gamma * (z - m.constants.datum_depth_m)});
  };
  block(0, 0, 2.0e5, 5.0e-5, 2000.0, false);
  block(1, 0, 3.0e5, 5.0e-5, 2010.0, false);
  block(2, 1, 2.5e5, 6.0e-5, 2020.0, false);
  block(3, 1, 4.0e5, 5.0e-5, 2030.0, false);
  block(4, 1, 5.0e7, 4.0e-5, 2040.0, true);
  m.connections = {{0, 1, 15.0}, {1, 2, 8.0}, {2, 3, 12.0}, {3, 4, 20.0}};
  m.wells = {{0, 1995.0}, {1, 2015.0}};
  m.perforations = {{0, 0, 10.0}, {0, 2, 6.0}, {1, 3, 9.0}};
  m.schedule = {{0, 0.0, 360.0, 40.0}, {0, 360.0, 720.0, 60.0}, {1, 0.0, 720.0, -25.0}};
  m.validate();
  return m;
}

/// Seven-layer synthetic field: 124 blocks (86 active, 38 aquifer),
/// 139 connections, 40 wells, 75 perforations. Topology is fixed;
/// parameter values are drawn log-uniformly from the seed.
inline ReservoirModel build_field_model(std::uint64_t seed) {
  Rng rng(seed);
  ReservoirModel m;
  m.constants = {800.0, 9.81, 2035.0, 200.0, 30.0, 4320.0};
  const double gamma = m.gravity_head();
  const int n_layers = 7;
  const int active_per_layer[n_layers] = {13, 13, 12, 12, 12, 12, 12};
  const int aquifer_per_layer[n_layers] = {6, 6, 6, 5, 5, 5, 5};

  std::vector<std::vector<int>> active_ids(n_layers), aquifer_ids(n_layers);
  int next_id = 0;
  auto add_block = [&](int layer, bool aquifer) {
    const double depth = 2000.0 + 8.0 * layer +
                         std::uniform_real_distribution<double>(0.0, 4.0)(rng);
    const double vol = aquifer ? detail::log_uniform(rng, 1.0e7, 5.0e7)
                               : detail::log_uniform(rng, 5.0e4, 1.0e6);
    const double comp = detail::log_uniform(rng, 4.5e-5, 6.5e-5);
    m.blocks.push_back(
        {next_id, layer, vol, comp, depth, aquifer,
         m.constants.datum_pressure_bar + gamma * (depth - m.constants.datum_depth_m)});
    (aquifer ? aquifer_ids : active_ids)[static_cast<std::size_t>(layer)].push_back(next_id);
    ++next_id;
  };
  for (int l = 0; l < n_layers; ++l)
    for (int k = 0; k < active_per_layer[l]; ++k) add_block(l, false);
  for (int l = 0; l < n_layers; ++l)
    for (int k = 0; k < aquifer_per_layer[l]; ++k) add_block(l, true);

  // within-layer chains (active blocks first, aquifer tail), then a few
  // vertical ties between neighbouring layers
  auto connect = [&](int a, int b) {
    m.connections.push_back({a, b, detail::log_uniform(rng, 2.0, 50.0)});
  };
  for (int l = 0; l < n_layers; ++l) {
    std::vector<int> chain = active_ids[static_cast<std::size_t>(l)];
    chain.insert(chain.end(), aquifer_ids[static_cast<std::size_t>(l)].begin(),
                 aquifer_ids[static_cast<std::size_t>(l)].end());
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) connect(chain[k], chain[k + 1]);
  }
  for (int gap = 0; gap < n_layers - 1; ++gap) {
    const int ties = gap < 4 ? 4 : 3;
    for (int k = 0; k < ties; ++k)
      connect(active_ids[static_cast<std::size_t>(gap)][static_cast<std::size_t>(k)],
              active_ids[static_cast<std::size_t>(gap) + 1][static_cast<std::size_t>(k)]);
  }

  // 40 wells on active blocks; the first 35 get a second perforation in
  // the next layer up, giving 75 perforations in total
  const int n_wells = 40;
  for (int w = 0; w < n_wells; ++w) {
    m.wells.push_back({w, 1990.0 + std::uniform_real_distribution<double>(0.0, 6.0)(rng)});
    const int l1 = w % n_layers;
    const auto& lane1 = active_ids[static_cast<std::size_t>(l1)];
    const int b1 = lane1[static_cast<std::size_t>((w * 3) % static_cast<int>(lane1.size()))];
    m.perforations.push_back({w, b1, detail::log_uniform(rng, 3.0, 25.0)});
    if (w < 35) {
      const int l2 = (l1 + 1) % n_layers;
      const auto& lane2 = active_ids[static_cast<std::size_t>(l2)];
      const int b2 =
          lane2[static_cast<std::size_t>((w * 5 + 1) % static_cast<int>(lane2.size()))];
      m.perforations.push_back({w, b2, detail::log_uniform(rng, 3.0, 25.0)});
    }
  }

  // 30 producers with a mid-life rate increase, 10 steady injectors
  for (int w = 0; w < n_wells; ++w) {
    if (w < 30) {
      const double q1 = detail::log_uniform(rng, 16.0, 50.0);
      const double q2 = q1 * std::uniform_real_distribution<double>(1.2, 1.6)(rng);
      m.schedule.push_back({w, 0.0, 2160.0, q1});
      m.schedule.push_back({w, 2160.0, 4320.0, q2});
    } else {
      m.schedule.push_back({w, 0.0, 4320.0,
                            -detail::log_uniform(rng, 32.0, 80.0)});
    }
  }
  m.validate();
  return m;
}

inline ReservoirModel build_synthetic_model(ModelPreset preset, std::uint64_t seed) {
  return preset == ModelPreset::Desk ? build_desk_model() : build_field_model(seed);
}

/// Observation layout: well-major (well, semiannual time) pairs for the
/// first n_bhp pressure points, then n_block block-pressure points spread
/// evenly over the active blocks and the earliest semiannual times.
inline std::vector<Observation> synthetic_observations(const ReservoirModel& m,
                                                       std::uint64_t seed, int n_bhp,
                                                       int n_block, bool with_noise,
                                                       double obs_interval_days = 180.0,
                                                       double sigma_bhp = 20.0,
                                                       double sigma_block = 3.0) {
  m.validate();
  const long per = std::lround(obs_interval_days / m.constants.dt_days);
  if (per < 1 || std::abs(obs_interval_days - static_cast<double>(per) * m.constants.dt_days) >
                     1e-9)
    throw ConfigError("observation interval must be a whole number of time steps");
  const int n_times = static_cast<int>(m.constants.horizon_days / obs_interval_days);
  if (n_times < 1) throw ConfigError("horizon too short for any observations");
  const int nw = static_cast<int>(m.wells.size());
  if (n_bhp > nw * n_times)
    throw ConfigError("not enough well/time pairs for the requested pressure points");
  std::vector<int> active;
  for (const Block& b : m.blocks)
    if (!b.is_aquifer) active.push_back(b.id);
  if (n_block > 0 && active.empty())
    throw ConfigError("block observations need at least one active block");

  ForwardResult fr = forward_simulate(m);
  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(n_bhp + n_block));
  for (int k = 0; k < n_bhp; ++k) {
    const int w = k / n_times;
    const int ti = k % n_times;
    const double t = obs_interval_days * static_cast<double>(ti + 1);
    Observation o{Observation::Kind::BHP, w, t, 0.0, sigma_bhp};
    o.value_bar = fr.well_pressure(observation_step(m, o) - 1, w);
    obs.push_back(o);
  }
  for (int k = 0; k < n_block; ++k) {
    const int b = active[static_cast<std::size_t>(
        (static_cast<long>(k) * (static_cast<long>(active.size()) - 1)) /
        std::max(1, n_block - 1))];
    const double t = obs_interval_days * static_cast<double>((k % n_times) + 1);
    Observation o{Observation::Kind::BlockPressure, b, t, 0.0, sigma_block};
    o.value_bar = fr.block_pressure(observation_step(m, o), b);
    obs.push_back(o);
  }
  if (with_noise) {
    Rng rng(seed);
    for (Observation& o : obs)
      o.value_bar += o.sigma_bar * std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return obs;
}

// ---------------------------------------------------------------------------
// file round trip

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string strip(const std::string& line) {
  std::string s = line;
  const std::size_t hash = s.find('#');
  if (hash != std::string::npos) s.erase(hash);
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& tok, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + ": '" + tok + "'");
  }
  if (used != tok.size()) throw ConfigError("trailing junk in " + what + ": '" + tok + "'");
  return v;
}

inline long parse_long(const std::string& tok, const std::string& what) {
  const double v = parse_double(tok, what);
  if (v != std::floor(v)) throw ConfigError(what + " must be an integer: '" + tok + "'");
  return static_cast<long>(v);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

inline void write_model(const ReservoirModel& m, std::ostream& out) {
  using detail::g17;
  out << "[constants]\n";
  out << "density_kg_m3 = " << g17(m.constants.density_kg_m3) << "\n";
  out << "gravity_m_s2 = " << g17(m.constants.gravity_m_s2) << "\n";
  out << "datum_depth_m = " << g17(m.constants.datum_depth_m) << "\n";
  out << "datum_pressure_bar = " << g17(m.constants.datum_pressure_bar) << "\n";
  out << "dt_days = " << g17(m.constants.dt_days) << "\n";
  out << "horizon_days = " << g17(m.constants.horizon_days) << "\n";
  out << "\n[blocks]\n# id layer volume_m3 compressibility_per_bar depth_m aquifer p0_bar\n";
  for (const Block& b : m.blocks)
    out << b.id << " " << b.layer << " " << g17(b.volume_m3) << " "
        << g17(b.compressibility_per_bar) << " " << g17(b.depth_m) << " "
        << (b.is_aquifer ? 1 : 0) << " " << g17(b.p0_bar) << "\n";
  out << "\n[connections]\n# block_a block_b transmissibility\n";
  for (const Connection& c : m.connections)
    out << c.block_a << " " << c.block_b << " " << g17(c.transmissibility) << "\n";
  out << "\n[wells]\n# id bhp_ref_depth_m\n";
  for (const Well& w : m.wells) out << w.id << " " << g17(w.bhp_ref_depth_m) << "\n";
  out << "\n[perforations]\n# well block well_index\n";
  for (const Perforation& p : m.perforations)
    out << p.well << " " << p.block << " " << g17(p.well_index) << "\n";
  out << "\n[schedule]\n# well start_day end_day rate_m3_day\n";
  for (const RatePeriod& r : m.schedule)
    out << r.well << " " << g17(r.start_day) << " " << g17(r.end_day) << " "
        << g17(r.rate_m3_day) << "\n";
}

inline void write_model_file(const ReservoirModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open model file for writing: " + path);
  write_model(m, out);
  if (!out.good()) throw ConfigError("failed writing model file: " + path);
}

inline ReservoirModel read_model(std::istream& in) {
  ReservoirModel m;
  std::string line, section;
  std::set<std::string> constants_seen;
  while (std::getline(in, line)) {
    const std::string s = detail::strip(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header: " + s);
      section = s.substr(1, s.size() - 2);
      continue;
    }
    if (section == "constants") {
      const std::size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("expected key = value in [constants]: " + s);
      const std::string key = detail::strip(s.substr(0, eq));
      const double val = detail::parse_double(detail::strip(s.substr(eq + 1)), key);
      if (!constants_seen.insert(key).second)
        throw ConfigError("duplicate constant: " + key);
      if (key == "density_kg_m3") m.constants.density_kg_m3 = val;
      else if (key == "gravity_m_s2") m.constants.gravity_m_s2 = val;
      else if (key == "datum_depth_m") m.constants.datum_depth_m = val;
      else if (key == "datum_pressure_bar") m.constants.datum_pressure_bar = val;
      else if (key == "dt_days") m.constants.dt_days = val;
      else if (key == "horizon_days") m.constants.horizon_days = val;
      else throw ConfigError("unknown constant: " + key);
      continue;
    }
    const std::vector<std::string> tok = detail::split_ws(s);
    if (section == "blocks") {
      if (tok.size() != 7) throw ConfigError("block rows need 7 fields: " + s);
      Block b;
      b.id = static_cast<int>(detail::parse_long(tok[0], "block id"));
      b.layer = static_cast<int>(detail::parse_long(tok[1], "block layer"));
      b.volume_m3 = detail::parse_double(tok[2], "block volume");
      b.compressibility_per_bar = detail::parse_double(tok[3], "block compressibility");
      b.depth_m = detail::parse_double(tok[4], "block depth");
      b.is_aquifer = detail::parse_long(tok[5], "block aquifer flag") != 0;
      b.p0_bar = detail::parse_double(tok[6], "block initial pressure");
      m.blocks.push_back(b);
    } else if (section == "connections") {
      if (tok.size() != 3) throw ConfigError("connection rows need 3 fields: " + s);
      m.connections.push_back(
          {static_cast<int>(detail::parse_long(tok[0], "connection block")),
           static_cast<int>(detail::parse_long(tok[1], "connection block")),
           detail::parse_double(tok[2], "transmissibility")});
    } else if (section == "wells") {
      if (tok.size() != 2) throw ConfigError("well rows need 2 fields: " + s);
      m.wells.push_back({static_cast<int>(detail::parse_long(tok[0], "well id")),
                         detail::parse_double(tok[1], "well reference depth")});
    } else if (section == "perforations") {
      if (tok.size() != 3) throw ConfigError("perforation rows need 3 fields: " + s);
      m.perforations.push_back(
          {static_cast<int>(detail::parse_long(tok[0], "perforation well")),
           static_cast<int>(detail::parse_long(tok[1], "perforation block")),
           detail::parse_double(tok[2], "well index")});
    } else if (section == "schedule") {
      if (tok.size() != 4) throw ConfigError("schedule rows need 4 fields: " + s);
      m.schedule.push_back({static_cast<int>(detail::parse_long(tok[0], "schedule well")),
                            detail::parse_double(tok[1], "schedule start"),
                            detail::parse_double(tok[2], "schedule end"),
                            detail::parse_double(tok[3], "schedule rate")});
    } else {
      throw ConfigError(section.empty() ? "data before any section header: " + s
                                        : "unknown section: " + section);
    }
  }
  m.validate();
  return m;
}

inline ReservoirModel read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  return read_model(in);
}

inline void write_observations(const std::vector<Observation>& obs, std::ostream& out) {
  out << "[observations]\n# kind entity time_day value_bar sigma_bar\n";
  for (const Observation& o : obs)
    out << (o.kind == Observation::Kind::BHP ? "BHP" : "BLOCK") << " " << o.entity << " "
        << detail::g17(o.time_day) << " " << detail::g17(o.value_bar) << " "
        << detail::g17(o.sigma_bar) << "\n";
}

inline void write_observations_file(const std::vector<Observation>& obs,
                                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open observation file for writing: " + path);
  write_observations(obs, out);
  if (!out.good()) throw ConfigError("failed writing observation file: " + path);
}

inline std::vector<Observation> read_observations(std::istream& in) {
  std::vector<Observation> obs;
  std::string line, section;
  while (std::getline(in, line)) {
    const std::string s = detail::strip(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header: " + s);
      section = s.substr(1, s.size() - 2);
      if (section != "observations")
        throw ConfigError("unknown section in observation file: " + section);
      continue;
    }
    if (section != "observations")
      throw ConfigError("data before [observations] header: " + s);
    const std::vector<std::string> tok = detail::split_ws(s);
    if (tok.size() != 5) throw ConfigError("observation rows need 5 fields: " + s);
    Observation o;
    if (tok[0] == "BHP") o.kind = Observation::Kind::BHP;
    else if (tok[0] == "BLOCK") o.kind = Observation::Kind::BlockPressure;
    else throw ConfigError("unknown observation kind: " + tok[0]);
    o.entity = static_cast<int>(detail::parse_long(tok[1], "observation entity"));
    o.time_day = detail::parse_double(tok[2], "observation time");
    o.value_bar = detail::parse_double(tok[3], "observation value");
    o.sigma_bar = detail::parse_double(tok[4], "observation noise level");
    obs.push_back(o);
  }
  return obs;
}

inline std::vector<Observation> read_observations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open observation file: " + path);
  return read_observations(in);
}

}  // namespace boxmc

#endif  // BOXMC_RESERVOIR_HPP
