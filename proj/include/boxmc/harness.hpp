#ifndef BOXMC_HARNESS_HPP
#define BOXMC_HARNESS_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxmc/core.hpp"
#include "boxmc/diagnostics.hpp"
#include "boxmc/reservoir.hpp"
#include "boxmc/samplers.hpp"
#include "boxmc/targets.hpp"

namespace boxmc {

/// Declarative description of one experiment, read from a strict
/// `key = value` file: unknown or duplicate keys are errors, as are
/// malformed values.
struct ExperimentConfig {
  std::string target;  // truncated-gaussian | rosenbrock | reservoir-full | reservoir-lightweight
  long dim = -1;                // analytic targets; -1 picks the target default
  double half_width = 1.0;      // analytic targets
  double cov_scale = -1.0;      // analytic targets; -1 picks the target default
  std::string model_path;       // reservoir targets
  std::string observations_path;
  std::string prior = "narrow";  // reservoir-full: narrow | wide | wide-diffuse

  std::string algorithm;  // hmc | horowitz | solhmc
  std::string boundary;   // bounce | reject
  double delta = 0.0;
  double i_param = -1.0;  // -1 picks 1.0 for hmc, 0.6 otherwise
  long n_inner = 1;
  long n_samples = 0;
  long burn_in = -1;
  double target_accept = -1.0;
  long seeds = 1;
  long seed_base = 1;
  std::string rotation_rule = "endpoint-inside";  // or always-reflect
  std::string init = "zero";                      // zero | map | comma-separated point
  bool write_chains = true;
  bool record_momenta = false;
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: " + key + " must be true or false");
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& what) {
  std::vector<double> out;
  std::string token;
  std::istringstream in(v);
  while (std::getline(in, token, ',')) out.push_back(parse_double(strip(token), what));
  if (out.empty()) throw ConfigError("config: empty list for " + what);
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = detail::strip(line);
    if (s.empty()) continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::strip(s.substr(0, eq));
    const std::string val = detail::strip(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
    if (!seen.insert(key).second)
      throw ConfigError("config: duplicate key '" + key + "'");
    if (key == "target") c.target = val;
    else if (key == "dim") c.dim = detail::parse_long(val, key);
    else if (key == "half_width") c.half_width = detail::parse_double(val, key);
    else if (key == "cov_scale") c.cov_scale = detail::parse_double(val, key);
    else if (key == "model") c.model_path = val;
    else if (key == "observations") c.observations_path = val;
    else if (key == "prior") c.prior = val;
    else if (key == "algorithm") c.algorithm = val;
    else if (key == "boundary") c.boundary = val;
    else if (key == "delta") c.delta = detail::parse_double(val, key);
    else if (key == "i_param") c.i_param = detail::parse_double(val, key);
    else if (key == "n_inner") c.n_inner = detail::parse_long(val, key);
    else if (key == "n_samples") c.n_samples = detail::parse_long(val, key);
    else if (key == "burn_in") c.burn_in = detail::parse_long(val, key);
    else if (key == "target_accept") c.target_accept = detail::parse_double(val, key);
    else if (key == "seeds") c.seeds = detail::parse_long(val, key);
    else if (key == "seed_base") c.seed_base = detail::parse_long(val, key);
    else if (key == "rotation_rule") c.rotation_rule = val;
    else if (key == "init") c.init = val;
    else if (key == "write_chains") c.write_chains = detail::parse_bool(val, key);
    else if (key == "record_momenta") c.record_momenta = detail::parse_bool(val, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  if (c.target.empty()) throw ConfigError("config: missing required key 'target'");
  if (c.algorithm.empty()) throw ConfigError("config: missing required key 'algorithm'");
  if (c.boundary.empty()) throw ConfigError("config: missing required key 'boundary'");
  if (!(c.delta > 0.0)) throw ConfigError("config: missing or non-positive 'delta'");
  if (c.n_samples < 1) throw ConfigError("config: missing or non-positive 'n_samples'");
  if (c.seeds < 1) throw ConfigError("config: 'seeds' must be positive");
  return c;
}

inline ExperimentConfig parse_experiment_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_experiment_config(in);
}

inline Algorithm algorithm_from_name(const std::string& s) {
  if (s == "hmc") return Algorithm::HMC;
  if (s == "horowitz") return Algorithm::Horowitz;
  if (s == "solhmc") return Algorithm::SOLHMC;
  throw ConfigError("unknown algorithm: " + s);
}

inline BoundaryMode boundary_from_name(const std::string& s) {
  if (s == "bounce") return BoundaryMode::Bounce;
  if (s == "reject") return BoundaryMode::Reject;
  throw ConfigError("unknown boundary mode: " + s);
}

inline RotationBounceRule rotation_rule_from_name(const std::string& s) {
  if (s == "endpoint-inside") return RotationBounceRule::EndpointInside;
  if (s == "always-reflect") return RotationBounceRule::AlwaysReflect;
  throw ConfigError("unknown rotation rule: " + s);
}

inline FullPrior prior_from_name(const std::string& s) {
  if (s == "narrow") return FullPrior::Narrow;
  if (s == "wide") return FullPrior::Wide;
  if (s == "wide-diffuse") return FullPrior::WideDiffuse;
  throw ConfigError("unknown prior preset: " + s);
}

/// Resolved i_param: full refresh for the full-refresh kernel, the
/// conventional partial-refresh default otherwise.
inline double effective_i_param(const ExperimentConfig& c) {
  if (c.i_param >= 0.0) return c.i_param;
  return c.algorithm == "hmc" ? 1.0 : 0.6;
}

inline SamplerConfig sampler_config_from(const ExperimentConfig& c, std::uint64_t seed) {
  SamplerConfig s;
  s.algorithm = algorithm_from_name(c.algorithm);
  s.boundary_mode = boundary_from_name(c.boundary);
  s.delta = c.delta;
  s.n_inner = static_cast<int>(c.n_inner);
  s.i_param = effective_i_param(c);
  s.n_samples = c.n_samples;
  s.burn_in = c.burn_in;
  s.target_accept = c.target_accept;
  s.seed = seed;
  s.rotation_rule = rotation_rule_from_name(c.rotation_rule);
  return s;
}

inline TargetModel build_target(const ExperimentConfig& c) {
  if (c.target == "truncated-gaussian") {
    const Eigen::Index dim = c.dim > 0 ? c.dim : 2;
    TargetModel t = truncated_gaussian_target(c.half_width, dim);
    if (c.cov_scale > 0.0) t.covariance = Covariance::scaled_identity(c.cov_scale, dim);
    return t;
  }
  if (c.target == "rosenbrock") {
    const Eigen::Index dim = c.dim > 0 ? c.dim : 5;
    return rosenbrock_target(c.half_width, dim, c.cov_scale > 0.0 ? c.cov_scale : 0.3);
  }
  if (c.target == "reservoir-full" || c.target == "reservoir-lightweight") {
    if (c.model_path.empty() || c.observations_path.empty())
      throw ConfigError("config: reservoir targets need 'model' and 'observations'");
    ReservoirModel model = read_model_file(c.model_path);
    std::vector<Observation> obs = read_observations_file(c.observations_path);
    const PosteriorSpace space = c.target == "reservoir-full" ? PosteriorSpace::Full
                                                              : PosteriorSpace::Lightweight;
    return reservoir_posterior_target(model, std::move(obs), space,
                                      prior_from_name(c.prior));
  }
  throw ConfigError("unknown target: " + c.target);
}

/// Chain start point in box coordinates.
inline Vec initial_point(const ExperimentConfig& c, const TargetModel& target) {
  if (c.init == "zero") return Vec::Zero(target.dim);
  if (c.init == "map") return map_estimate(target, Vec::Zero(target.dim)).t;
  const std::vector<double> vals = detail::parse_double_list(c.init, "init");
  if (static_cast<Eigen::Index>(vals.size()) != target.dim)
    throw ConfigError("config: init point has wrong dimension");
  Vec v(target.dim);
  for (Eigen::Index j = 0; j < target.dim; ++j) v[j] = vals[static_cast<std::size_t>(j)];
  return v;
}

/// Echo of the effective configuration, used as the comment header of
/// every output file so results are self-describing.
inline std::vector<std::string> config_echo_lines(const ExperimentConfig& c) {
  using detail::g17;
  std::vector<std::string> out;
  auto add = [&](const std::string& k, const std::string& v) { out.push_back(k + " = " + v); };
  add("target", c.target);
  if (c.dim > 0) add("dim", std::to_string(c.dim));
  if (c.target == "truncated-gaussian" || c.target == "rosenbrock") {
    add("half_width", g17(c.half_width));
    if (c.cov_scale > 0.0) add("cov_scale", g17(c.cov_scale));
  }
  if (!c.model_path.empty()) add("model", c.model_path);
  if (!c.observations_path.empty()) add("observations", c.observations_path);
  if (c.target == "reservoir-full") add("prior", c.prior);
  add("algorithm", c.algorithm);
  add("boundary", c.boundary);
  add("delta", g17(c.delta));
  add("i_param", g17(effective_i_param(c)));
  add("n_inner", std::to_string(c.n_inner));
  add("n_samples", std::to_string(c.n_samples));
  add("burn_in", std::to_string(c.burn_in));
  if (c.target_accept > 0.0) add("target_accept", g17(c.target_accept));
  add("seeds", std::to_string(c.seeds));
  add("seed_base", std::to_string(c.seed_base));
  add("rotation_rule", c.rotation_rule);
  add("init", c.init);
  add("write_chains", c.write_chains ? "true" : "false");
  add("record_momenta", c.record_momenta ? "true" : "false");
  return out;
}

struct SeedSummary {
  std::uint64_t seed = 0;
  double acceptance = 0.0;
  double adapted_delta = 0.0;
  long oob_rejections = 0;
  double mean_bounces = 0.0;
  std::vector<double> coord_mean;
  std::vector<double> coord_ness;
  std::vector<double> coord_tau;
};

struct ExperimentResult {
  ExperimentConfig config;
  Eigen::Index dim = 0;
  std::vector<SeedSummary> seeds;
  std::vector<PercentileSummary> mean_summary;  // per coordinate, across seeds
  std::vector<PercentileSummary> ness_summary;
  std::vector<double> tau_median;
};

namespace detail {

inline void write_chain_csv(const std::string& path, const ExperimentConfig& cfg,
                            std::uint64_t seed, const ChainOutput& chain) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open chain file for writing: " + path);
  for (const std::string& l : config_echo_lines(cfg)) out << "# " << l << "\n";
  out << "# seed = " << seed << "\n";
  const Eigen::Index dim = chain.samples.cols();
  out << "step";
  for (Eigen::Index j = 0; j < dim; ++j) out << ",x" << j;
  if (chain.momenta.size() > 0)
    for (Eigen::Index j = 0; j < dim; ++j) out << ",p" << j;
  out << ",accepted,energy,bounces\n";
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < dim; ++j) out << "," << g17(chain.samples(i, j));
    if (chain.momenta.size() > 0)
      for (Eigen::Index j = 0; j < dim; ++j) out << "," << g17(chain.momenta(i, j));
    out << "," << static_cast<int>(chain.acceptance_flags[static_cast<std::size_t>(i)]) << ","
        << g17(chain.energy_trace[i]) << ","
        << chain.bounce_counts[static_cast<std::size_t>(i)] << "\n";
  }
  if (!out.good()) throw ConfigError("failed writing chain file: " + path);
}

}  // namespace detail

/// Run the configured experiment over all seeds. If out_dir is non-empty
/// it is created and populated with per-seed chain files (optional), a
/// per-coordinate summary, a per-seed table, and a JSON manifest. All
/// file content is a pure function of the configuration.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::string& out_dir = "") {
  TargetModel target = build_target(cfg);
  if (cfg.n_samples * target.dim > 50'000'000L)
    throw ConfigError(
        "experiment too large to hold in memory; reduce n_samples or the dimension");
  const Vec x0 = initial_point(cfg, target);

  ExperimentResult res;
  res.config = cfg;
  res.dim = target.dim;

  std::vector<std::string> outputs;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (long s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.seed_base + s);
    SamplerConfig sc = sampler_config_from(cfg, seed);
    RunOptions opts;
    opts.record_momenta = cfg.record_momenta;
    ChainOutput chain = run_chain(target, sc, x0, opts);

    SeedSummary ss;
    ss.seed = seed;
    ss.acceptance = chain.realized_acceptance;
    ss.adapted_delta = chain.adapted_delta;
    ss.oob_rejections = chain.oob_rejections;
    double b = 0.0;
    for (int n : chain.bounce_counts) b += n;
    ss.mean_bounces = b / static_cast<double>(chain.bounce_counts.size());
    ss.coord_mean.resize(static_cast<std::size_t>(target.dim));
    ss.coord_ness.resize(static_cast<std::size_t>(target.dim));
    ss.coord_tau.resize(static_cast<std::size_t>(target.dim));
    for (Eigen::Index j = 0; j < target.dim; ++j) {
      EssResult e = effective_sample_size(chain.samples.col(j));
      ss.coord_mean[static_cast<std::size_t>(j)] = e.mean;
      ss.coord_ness[static_cast<std::size_t>(j)] = e.normalized_ess;
      ss.coord_tau[static_cast<std::size_t>(j)] = e.tau;
    }
    if (!out_dir.empty() && cfg.write_chains) {
      const std::string name = "chain_" + std::to_string(seed) + ".csv";
      detail::write_chain_csv(out_dir + "/" + name, cfg, seed, chain);
      outputs.push_back(name);
    }
    res.seeds.push_back(std::move(ss));
  }

  res.mean_summary.resize(static_cast<std::size_t>(res.dim));
  res.ness_summary.resize(static_cast<std::size_t>(res.dim));
  res.tau_median.resize(static_cast<std::size_t>(res.dim));
  for (Eigen::Index j = 0; j < res.dim; ++j) {
    std::vector<double> means, nesses, taus;
    for (const SeedSummary& ss : res.seeds) {
      means.push_back(ss.coord_mean[static_cast<std::size_t>(j)]);
      nesses.push_back(ss.coord_ness[static_cast<std::size_t>(j)]);
      taus.push_back(ss.coord_tau[static_cast<std::size_t>(j)]);
    }
    res.mean_summary[static_cast<std::size_t>(j)] = percentile_summary(means);
    res.ness_summary[static_cast<std::size_t>(j)] = percentile_summary(nesses);
    res.tau_median[static_cast<std::size_t>(j)] = percentile(taus, 0.5);
  }

  if (!out_dir.empty()) {
    using detail::g17;
    {
      std::ofstream out(out_dir + "/summary.csv");
      if (!out) throw ConfigError("cannot open summary.csv for writing");
      for (const std::string& l : config_echo_lines(cfg)) out << "# " << l << "\n";
      out << "coord,mean_p10,mean_p50,mean_p90,ness_p10,ness_p50,ness_p90,tau_p50\n";
      for (Eigen::Index j = 0; j < res.dim; ++j) {
        const auto& ms = res.mean_summary[static_cast<std::size_t>(j)];
        const auto& ns = res.ness_summary[static_cast<std::size_t>(j)];
        out << j << "," << g17(ms.p10) << "," << g17(ms.p50) << "," << g17(ms.p90) << ","
            << g17(ns.p10) << "," << g17(ns.p50) << "," << g17(ns.p90) << ","
            << g17(res.tau_median[static_cast<std::size_t>(j)]) << "\n";
      }
      if (!out.good()) throw ConfigError("failed writing summary.csv");
      outputs.push_back("summary.csv");
    }
    {
      std::ofstream out(out_dir + "/seeds.csv");
      if (!out) throw ConfigError("cannot open seeds.csv for writing");
      for (const std::string& l : config_echo_lines(cfg)) out << "# " << l << "\n";
      out << "seed,acceptance,adapted_delta,oob_rejections,mean_bounces\n";
      for (const SeedSummary& ss : res.seeds)
        out << ss.seed << "," << g17(ss.acceptance) << "," << g17(ss.adapted_delta) << ","
            << ss.oob_rejections << "," << g17(ss.mean_bounces) << "\n";
      if (!out.good()) throw ConfigError("failed writing seeds.csv");
      outputs.push_back("seeds.csv");
    }
    {
      nlohmann::ordered_json man;
      man["command"] = "run";
      nlohmann::ordered_json conf;
      for (const std::string& l : config_echo_lines(cfg)) {
        const std::size_t eq = l.find('=');
        conf[detail::strip(l.substr(0, eq))] = detail::strip(l.substr(eq + 1));
      }
      man["config"] = conf;
      man["dimension"] = static_cast<long>(res.dim);
      man["samples_per_seed"] = cfg.n_samples;
      nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
      for (const SeedSummary& ss : res.seeds) {
        nlohmann::ordered_json j;
        j["seed"] = ss.seed;
        j["acceptance"] = ss.acceptance;
        j["adapted_delta"] = ss.adapted_delta;
        j["oob_rejections"] = ss.oob_rejections;
        j["mean_bounces"] = ss.mean_bounces;
        seeds.push_back(j);
      }
      man["seeds"] = seeds;
      man["outputs"] = outputs;
      std::ofstream out(out_dir + "/manifest.json");
      if (!out) throw ConfigError("cannot open manifest.json for writing");
      out << man.dump(2) << "\n";
      if (!out.good()) throw ConfigError("failed writing manifest.json");
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// summary round trip and comparison

struct SummaryRow {
  long coord = 0;
  double mean_p10 = 0, mean_p50 = 0, mean_p90 = 0;
  double ness_p10 = 0, ness_p50 = 0, ness_p90 = 0;
  double tau_p50 = 0;
};

inline std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open summary file: " + path);
  std::vector<SummaryRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    const std::string s = detail::strip(line);
    if (s.empty()) continue;
    if (!header_seen) {
      if (s != "coord,mean_p10,mean_p50,mean_p90,ness_p10,ness_p50,ness_p90,tau_p50")
        throw ConfigError("unexpected summary header in " + path);
      header_seen = true;
      continue;
    }
    std::vector<std::string> tok;
    std::string t;
    std::istringstream ls(s);
    while (std::getline(ls, t, ',')) tok.push_back(t);
    if (tok.size() != 8) throw ConfigError("summary rows need 8 fields: " + s);
    SummaryRow r;
    r.coord = detail::parse_long(tok[0], "coord");
    r.mean_p10 = detail::parse_double(tok[1], "mean_p10");
    r.mean_p50 = detail::parse_double(tok[2], "mean_p50");
    r.mean_p90 = detail::parse_double(tok[3], "mean_p90");
    r.ness_p10 = detail::parse_double(tok[4], "ness_p10");
    r.ness_p50 = detail::parse_double(tok[5], "ness_p50");
    r.ness_p90 = detail::parse_double(tok[6], "ness_p90");
    r.tau_p50 = detail::parse_double(tok[7], "tau_p50");
    rows.push_back(r);
  }
  if (!header_seen) throw ConfigError("no header found in summary file: " + path);
  return rows;
}

/// Coordinate-wise ratio of median normalized effective sample sizes
/// between two runs over the same target.
struct CompareReport {
  std::vector<double> ratio;  // per coordinate: first / second
  double median_ratio = 0.0;
  double fraction_at_least_one = 0.0;
  std::vector<long> hist;
  double hist_lo = 0.0, hist_hi = 0.0;
};

inline CompareReport compare_summaries(const std::vector<SummaryRow>& a,
                                       const std::vector<SummaryRow>& b, int bins = 30) {
  if (a.size() != b.size() || a.empty())
    throw ConfigError("compare: summaries must cover the same non-empty coordinate set");
  CompareReport rep;
  long at_least_one = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j].coord != b[j].coord)
      throw ConfigError("compare: coordinate sets do not match");
    if (!(b[j].ness_p50 > 0.0))
      throw ConfigError("compare: non-positive effective sample size in second summary");
    const double r = a[j].ness_p50 / b[j].ness_p50;
    rep.ratio.push_back(r);
    if (r >= 1.0) ++at_least_one;
  }
  rep.median_ratio = percentile(rep.ratio, 0.5);
  rep.fraction_at_least_one =
      static_cast<double>(at_least_one) / static_cast<double>(rep.ratio.size());
  rep.hist_lo = 0.0;
  rep.hist_hi = std::max(2.0, *std::max_element(rep.ratio.begin(), rep.ratio.end()));
  rep.hist = histogram(rep.ratio, bins, rep.hist_lo, rep.hist_hi);
  return rep;
}

// ---------------------------------------------------------------------------
// box-width sweep

struct SweepRow {
  double half_width = 0.0;
  std::string boundary;
  long coord = 0;
  PercentileSummary mean;
  PercentileSummary ness;
  double acceptance_p50 = 0.0;
  double adapted_delta_p50 = 0.0;
};

/// Run the base experiment at each box half width and boundary mode.
/// Only meaningful for the analytic targets whose box is part of the
/// configuration.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base,
                                       const std::vector<double>& half_widths,
                                       const std::vector<std::string>& boundaries) {
  if (base.target != "truncated-gaussian" && base.target != "rosenbrock")
    throw ConfigError("sweep: only the analytic targets take a box sweep");
  if (half_widths.empty() || boundaries.empty())
    throw ConfigError("sweep: need at least one half width and one boundary mode");
  std::vector<SweepRow> rows;
  for (double a : half_widths) {
    for (const std::string& mode : boundaries) {
      ExperimentConfig cfg = base;
      cfg.half_width = a;
      cfg.boundary = mode;
      cfg.write_chains = false;
      ExperimentResult res = run_experiment(cfg, "");
      std::vector<double> acc, del;
      for (const SeedSummary& ss : res.seeds) {
        acc.push_back(ss.acceptance);
        del.push_back(ss.adapted_delta);
      }
      for (Eigen::Index j = 0; j < res.dim; ++j) {
        SweepRow r;
        r.half_width = a;
        r.boundary = mode;
        r.coord = j;
        r.mean = res.mean_summary[static_cast<std::size_t>(j)];
        r.ness = res.ness_summary[static_cast<std::size_t>(j)];
        r.acceptance_p50 = percentile(acc, 0.5);
        r.adapted_delta_p50 = percentile(del, 0.5);
        rows.push_back(r);
      }
    }
  }
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const ExperimentConfig& base,
                            const std::string& path) {
  using detail::g17;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open sweep file for writing: " + path);
  for (const std::string& l : config_echo_lines(base)) out << "# " << l << "\n";
  out << "half_width,boundary,coord,mean_p10,mean_p50,mean_p90,ness_p10,ness_p50,ness_p90,"
         "acceptance_p50,adapted_delta_p50\n";
  for (const SweepRow& r : rows)
    out << g17(r.half_width) << "," << r.boundary << "," << r.coord << "," << g17(r.mean.p10)
        << "," << g17(r.mean.p50) << "," << g17(r.mean.p90) << "," << g17(r.ness.p10) << ","
        << g17(r.ness.p50) << "," << g17(r.ness.p90) << "," << g17(r.acceptance_p50) << ","
        << g17(r.adapted_delta_p50) << "\n";
  if (!out.good()) throw ConfigError("failed writing sweep file: " + path);
}

// ---------------------------------------------------------------------------
// chain health check

struct CheckReport {
  std::vector<double> split_z;  // per coordinate: first half vs second half
  FluxResult flux;              // coordinate 0 phase-plane flux
  bool stationary = false;
};

/// Split-half stationarity screen plus the phase-plane flux probe on the
/// first coordinate. Large |z| in the flux probe is a property of the
/// irreversible kernels, not a failure; the pass verdict only covers the
/// split-half moments.
inline CheckReport run_check(const ExperimentConfig& cfg, double z_threshold = 4.0) {
  ExperimentConfig c = cfg;
  c.record_momenta = true;
  TargetModel target = build_target(c);
  if (c.n_samples * target.dim > 50'000'000L)
    throw ConfigError("check run too large to hold in memory; reduce n_samples");
  SamplerConfig sc = sampler_config_from(c, static_cast<std::uint64_t>(c.seed_base));
  RunOptions opts;
  opts.record_momenta = true;
  ChainOutput chain = run_chain(target, sc, initial_point(c, target), opts);

  CheckReport rep;
  const long n = chain.samples.rows();
  const long half = n / 2;
  rep.stationary = true;
  for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) {
    EssResult e1 = effective_sample_size(chain.samples.col(j).head(half));
    EssResult e2 = effective_sample_size(chain.samples.col(j).tail(n - half));
    const double se = std::sqrt(e1.se_mean * e1.se_mean + e2.se_mean * e2.se_mean);
    const double z = se > 0.0 ? (e1.mean - e2.mean) / se : 0.0;
    rep.split_z.push_back(z);
    if (!(std::abs(z) < z_threshold)) rep.stationary = false;
  }
  std::vector<int> region(static_cast<std::size_t>(n));
  for (long t = 0; t < n; ++t)
    region[static_cast<std::size_t>(t)] = flux_region(chain.samples(t, 0), chain.momenta(t, 0));
  rep.flux = flux_asymmetry(region);
  return rep;
}

}  // namespace boxmc

#endif  // BOXMC_HARNESS_HPP
