#pragma once

// Command orchestration: RunConfig -> Report. Single-threaded; module code
// owns its own parallelism.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "subriem/cc_distance.hpp"
#include "subriem/corpus.hpp"
#include "subriem/functionals.hpp"
#include "subriem/gibbs.hpp"
#include "subriem/heat_kernel.hpp"
#include "subriem/isoperimetry.hpp"
#include "subriem/measures.hpp"
#include "subriem/profile.hpp"
#include "subriem/report.hpp"

namespace subriem {

inline const std::vector<std::string>& run_commands() {
  static const std::vector<std::string> c{"dist", "sample", "verify", "iso", "heat", "gibbs", "all"};
  return c;
}

// Named tolerance overrides accepted in RunConfig.tolerances.
inline const std::vector<std::string>& tolerance_names() {
  static const std::vector<std::string> t{"surface_stabilization", "ifi2_clip", "exp_max_relative_se",
                                          "bracket_max_relative_se", "min_ess"};
  return t;
}

struct RunConfig {
  std::string command;
  std::optional<std::string> spec_path;
  std::string corpus_id = "builtin:standard";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_path;
  std::map<std::string, double> tolerances;
  nlohmann::json options = nlohmann::json::object();  // command-specific

  bool stochastic() const { return command != "dist"; }

  double tolerance(const std::string& name, double fallback) const {
    const auto it = tolerances.find(name);
    return it == tolerances.end() ? fallback : it->second;
  }

  void validate() const {
    if (std::find(run_commands().begin(), run_commands().end(), command) == run_commands().end())
      throw ConfigError("field 'command': unknown command '" + command + "'");
    if (stochastic() && !seed) throw ConfigError("field 'seed': required for '" + command + "'");
    for (const auto& [k, v] : tolerances) {
      if (std::find(tolerance_names().begin(), tolerance_names().end(), k) == tolerance_names().end())
        throw ConfigError("field 'tolerances': unknown tolerance '" + k + "'");
      if (!(v > 0) || !std::isfinite(v)) throw ConfigError("field 'tolerances." + k + "': must be positive");
    }
    if (!options.is_object()) throw ConfigError("field 'options': must be an object");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"command", c.command}, {"corpus_id", c.corpus_id}, {"options", c.options}};
  j["spec_path"] = c.spec_path ? nlohmann::json(*c.spec_path) : nlohmann::json(nullptr);
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
  j["output_path"] = c.output_path ? nlohmann::json(*c.output_path) : nlohmann::json(nullptr);
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [k, v] : c.tolerances) t[k] = v;
  j["tolerances"] = t;
  return j;
}

namespace detail {

template <class T>
T field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("field '" + where + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("field '" + where + it.key() + "': unknown key");
}

}  // namespace detail

// Strict: unknown keys are rejected, every field error names the field.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be an object");
  detail::reject_unknown(j, {"command", "spec_path", "corpus_id", "seed", "output_path", "tolerances", "options"}, "");
  RunConfig c;
  c.command = detail::field<std::string>(j, "command", "");
  if (j.contains("spec_path") && !j.at("spec_path").is_null()) c.spec_path = detail::field<std::string>(j, "spec_path", "");
  if (j.contains("corpus_id")) c.corpus_id = detail::field<std::string>(j, "corpus_id", "");
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = detail::field<std::uint64_t>(j, "seed", "");
  if (j.contains("output_path") && !j.at("output_path").is_null())
    c.output_path = detail::field<std::string>(j, "output_path", "");
  if (j.contains("tolerances")) c.tolerances = detail::field<std::map<std::string, double>>(j, "tolerances", "");
  if (j.contains("options")) c.options = j.at("options");
  c.validate();
  return c;
}

namespace detail {

// Typed access to RunConfig.options with the allowed keys of one command.
class Options {
 public:
  Options(const nlohmann::json& j, std::set<std::string> allowed) : j_(j) { reject_unknown(j_, allowed, "options."); }
  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  template <class T>
  T get(const std::string& k, T fallback) const {
    return has(k) ? field<T>(j_, k, "options.") : fallback;
  }
  const nlohmann::json& raw(const std::string& k) const { return j_.at(k); }

 private:
  const nlohmann::json& j_;
};

struct Context {
  const RunConfig& cfg;
  Report& report;
  nlohmann::json inputs = nlohmann::json::object();  // content digests of referenced files

  std::uint64_t seed() const { return *cfg.seed; }

  nlohmann::json load_json(const std::string& role, const std::string& path) {
    const auto text = read_text(path);
    inputs[role] = git_blob_sha1(text);
    return parse_json_text(text, path);
  }

  MeasureSpec spec(const Options& o) {
    if (cfg.spec_path) return measure_from_json(load_json("spec", *cfg.spec_path));
    MeasureSpec s;
    s.structure = o.has("group") ? structure_from_json(o.raw("group")) : presets::heisenberg(1);
    s.p = o.get<double>("p", 2.0);
    s.alpha = o.get<double>("alpha", 1.0);
    s.validate();
    return s;
  }

  // From options.samples (CSV path) or a fresh draw of options.n points.
  SampleSet samples(const Options& o, const MeasureSpec& spec, std::size_t default_n) {
    if (o.has("samples")) {
      const auto path = o.get<std::string>("samples", "");
      const auto text = read_text(path);
      inputs["samples"] = git_blob_sha1(text);
      return read_samples_csv(text, spec, path);
    }
    ChainConfig cc;
    cc.seed = seed();
    const auto n = o.get<std::size_t>("n", default_n);
    if (n < cc.n_chains) throw ConfigError("field 'options.n': need at least " + std::to_string(cc.n_chains) + " samples");
    cc.n_samples = (n + cc.n_chains - 1) / cc.n_chains;
    return sample_measure(spec, cc);
  }

  // corpus_id: a builtin name or a path to a corpus JSON document.
  FunctionCorpus corpus(const MeasureSpec& spec) {
    const auto& id = cfg.corpus_id;
    if (id.size() > 5 && id.substr(id.size() - 5) == ".json") return corpus_from_json(load_json("corpus_file", id), spec);
    return corpus_from_json(id, spec);
  }

  void absorb(const InequalityReport& r, nlohmann::json& slot) {
    slot = to_json(r);
    report.status = worst(report.status, status_of(r));
    for (const auto& w : r.warnings) report.warnings.push_back(to_string(r.kind) + ": " + w);
  }
};

inline std::vector<double> parse_point(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double d = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') throw ConfigError("field 'options.point': bad number '" + item + "'");
    v.push_back(d);
  }
  return v;
}

inline GroupPoint point_from(const HTypeStructure& S, const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != S.m() + S.n())
    throw ConfigError("field 'options.point': expected " + std::to_string(S.m() + S.n()) + " coordinates");
  GroupPoint g = S.identity();
  for (int i = 0; i < S.m(); ++i) g.x[i] = v[i];
  for (int k = 0; k < S.n(); ++k) g.z[k] = v[S.m() + k];
  return g;
}

inline void run_dist(Context& c) {
  Options o(c.cfg.options, {"group", "point", "oracle", "segments"});
  const auto S = o.has("group") ? structure_from_json(o.raw("group")) : presets::heisenberg(1);
  std::vector<double> pv;
  if (o.has("point")) {
    const auto& p = o.raw("point");
    pv = p.is_string() ? parse_point(p.get<std::string>()) : o.get<std::vector<double>>("point", {});
  } else {
    pv.assign(S.m() + S.n(), 0.0);
  }
  const auto g = point_from(S, pv);
  auto& R = c.report.results;
  R["group"] = to_json(S);
  R["point"] = pv;
  if (S.n() == 0) {
    R["distance"] = g.x.norm();
    R["arc_parameter"] = 0.0;
    R["residual"] = 0.0;
  } else {
    const auto sol = cc_distance(S, g);
    R["distance"] = sol.distance;
    R["arc_parameter"] = sol.arc_parameter;
    R["residual"] = sol.residual;
  }
  if (o.get<bool>("oracle", false)) {
    TranscriptionConfig tc;
    tc.segments = o.get<int>("segments", tc.segments);
    const auto tr = cc_distance_transcription(S, g, tc);
    R["oracle"] = {{"length", tr.length}, {"violation", tr.violation}, {"segments", tr.segments}, {"ladder", tr.ladder}};
  }
}

inline void run_sample(Context& c) {
  Options o(c.cfg.options, {"group", "p", "alpha", "n", "n_chains", "burn_in", "thinning", "proposal_scale", "samples_out"});
  const auto spec = c.spec(o);
  ChainConfig cc;
  cc.seed = c.seed();
  cc.n_chains = o.get<std::size_t>("n_chains", cc.n_chains);
  cc.burn_in = o.get<std::size_t>("burn_in", cc.burn_in);
  cc.thinning = o.get<std::size_t>("thinning", cc.thinning);
  cc.proposal_scale = o.get<double>("proposal_scale", cc.proposal_scale);
  const auto n = o.get<std::size_t>("n", 100000);
  if (cc.n_chains == 0) throw ConfigError("field 'options.n_chains': must be positive");
  cc.n_samples = (n + cc.n_chains - 1) / cc.n_chains;
  cc.validate();
  const auto s = sample_measure(spec, cc);
  const auto csv = samples_csv(s);
  auto& R = c.report.results;
  R["spec"] = to_json(spec);
  R["chain"] = to_json(cc);
  R["n"] = s.size();
  R["ess"] = s.ess();
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& d : s.meta.chains)
    chains.push_back({{"seed", d.seed}, {"acceptance_rate", d.acceptance_rate}, {"ess", d.ess}, {"screened", d.screened}});
  R["chains"] = chains;
  R["mean_d"] = to_json(batch_mean(s.distances));
  R["samples_digest"] = git_blob_sha1(csv);
  for (const auto& w : s.meta.warnings) c.report.warnings.push_back(w);
  if (o.has("samples_out")) {
    const auto path = o.get<std::string>("samples_out", "");
    write_text(path, csv);
    R["samples_csv"] = std::filesystem::path(path).filename().string();
  }
}

inline std::string csv_path(const RunConfig& cfg, const std::string& tag) {
  if (!cfg.output_path || *cfg.output_path == "-") return {};
  std::filesystem::path p(*cfg.output_path);
  p.replace_extension();
  return p.string() + "." + tag + ".csv";
}

inline const std::vector<std::string>& verify_kinds() {
  static const std::vector<std::string> k{"ubound", "cheeger", "l1phi", "lsq", "ifi2", "tight_ledoux", "exp_int", "sobolev"};
  return k;
}

inline InequalityReport verify_one(const std::string& kind, const MeasureSpec& spec, const CorpusTable& t,
                                   const FunctionCorpus& corpus, const Options& o, const RunConfig& cfg) {
  const PhiSpec ps(o.get<double>("beta", spec.beta()));
  if (kind == "ubound") return verify_ubound(spec, t);
  if (kind == "cheeger") return verify_cheeger(t);
  if (kind == "l1phi") return verify_l1phi_entropy(ps, t);
  if (kind == "lsq") return verify_lsq(PhiSpec(1.0 / o.get<double>("q", 2.0)), t);
  if (kind == "tight_ledoux") return verify_tight_ledoux(ps, t);
  if (kind == "ifi2") return verify_ifi2(t, ProfileTable(2.0), cfg.tolerance("ifi2_clip", 1e-9));
  if (kind == "exp_int") {
    ExpIntConfig ec;
    ec.max_relative_se = cfg.tolerance("exp_max_relative_se", ec.max_relative_se);
    if (o.has("lambdas")) ec.lambdas = o.get<std::vector<double>>("lambdas", {});
    return verify_exp_integrability(spec, t, ec);
  }
  if (kind == "sobolev") {
    if (spec.perturbed()) throw UnsupportedError("sobolev baseline uses the unperturbed structure only");
    return verify_sobolev_baseline(spec.structure, corpus, SobolevConfig{});
  }
  throw ConfigError("field 'options.kind': unknown kind '" + kind + "'");
}

inline void run_verify(Context& c) {
  Options o(c.cfg.options, {"group", "p", "alpha", "kind", "samples", "n", "beta", "q", "lambdas"});
  const auto kind = o.get<std::string>("kind", "l1phi");
  std::vector<std::string> kinds;
  if (kind == "all") kinds = {"ubound", "cheeger", "l1phi", "lsq", "ifi2", "tight_ledoux"};
  else if (std::find(verify_kinds().begin(), verify_kinds().end(), kind) != verify_kinds().end()) kinds = {kind};
  else throw ConfigError("field 'options.kind': unknown kind '" + kind + "'");
  const auto spec = c.spec(o);
  const auto corpus = c.corpus(spec);
  corpus.require_fit_size();
  const auto samples = c.samples(o, spec, 20000);
  const auto table = build_corpus_table(spec, samples, corpus);
  auto& R = c.report.results;
  R["spec_digest"] = json_digest(to_json(spec));
  R["spec"] = to_json(spec);
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& k : kinds) {
    const auto rep = verify_one(k, spec, table, corpus, o, c.cfg);
    nlohmann::json slot;
    c.absorb(rep, slot);
    slot["spec_digest"] = R["spec_digest"];
    const auto path = csv_path(c.cfg, k);
    if (!path.empty()) {
      std::size_t rows = 0;
      write_text(path, per_function_csv(rep, &rows));
      slot["csv"] = std::filesystem::path(path).filename().string();
      slot["csv_rows"] = rows;
    }
    reps.push_back(slot);
  }
  if (kinds.size() == 1) {
    for (auto it = reps[0].begin(); it != reps[0].end(); ++it) R[it.key()] = it.value();
  } else {
    R["reports"] = reps;
  }
}

inline nlohmann::json to_json(const SurfaceEstimate& s) {
  nlohmann::json ladder = nlohmann::json::array();
  for (const auto& [e, d] : s.eps_ladder) ladder.push_back({{"eps", e}, {"D", to_json(d)}});
  return {{"label", s.label},         {"mu_A", to_json(s.mu_A)},
          {"mu_plus", to_json(s.mu_plus)}, {"eps_ladder", ladder},
          {"extrapolation_order", s.extrapolation_order}, {"relative_change", s.relative_change},
          {"stable", s.stable},       {"status", s.status}};
}

inline void run_iso(Context& c) {
  Options o(c.cfg.options, {"group", "p", "alpha", "sets", "samples", "n", "profile_q", "coarea", "levels"});
  const auto spec = c.spec(o);
  const auto samples = c.samples(o, spec, 40000);
  auto bc = default_boundary_config(spec, c.seed());
  bc.stabilization = c.cfg.tolerance("surface_stabilization", bc.stabilization);
  const double q = o.get<double>("profile_q", 2.0);
  const ProfileTable pt(q);
  std::vector<std::string> labels = o.get<std::vector<std::string>>("sets", {"ball:1", "ball:1.5", "ball:2"});
  if (labels.empty()) throw ConfigError("field 'options.sets': empty");
  std::vector<TestSet> sets;
  for (const auto& l : labels) sets.push_back(test_set_from_string(l, spec.structure));
  std::vector<IsoRatio> details;
  const auto rep = verify_isoperimetry(sets, samples, pt, bc, &details);
  auto& R = c.report.results;
  R["spec"] = to_json(spec);
  R["profile_q"] = q;
  nlohmann::json ds = nlohmann::json::array();
  for (const auto& d : details)
    ds.push_back({{"surface", to_json(d.surface)}, {"ratio", to_json(d.ratio)}, {"defined", d.defined}, {"status", d.status}});
  R["sets"] = ds;
  c.absorb(rep, R["isoperimetry"]);
  if (o.get<bool>("coarea", false)) {
    const auto corpus = c.corpus(spec);
    const auto cr = coarea_corpus(corpus, samples, bc, o.get<std::size_t>("levels", 8));
    c.absorb(cr, R["coarea"]);
    const auto path = csv_path(c.cfg, "coarea");
    if (!path.empty()) write_text(path, per_function_csv(cr));
  }
}

inline void run_heat(Context& c) {
  Options o(c.cfg.options, {"group", "t", "paths", "steps", "verify_gradient"});
  const auto S = o.has("group") ? structure_from_json(o.raw("group")) : presets::heisenberg(1);
  PathConfig pc;
  pc.t = o.get<double>("t", 1.0);
  pc.n_paths = o.get<std::size_t>("paths", 100000);
  pc.n_steps = o.get<int>("steps", 256);
  pc.seed = c.seed();
  pc.validate();
  const auto es = simulate_horizontal_bm(S, S.identity(), pc);
  auto& R = c.report.results;
  R["group"] = to_json(S);
  R["paths"] = to_json(pc);
  ScalarField one, x2;
  one.eval = [](const GroupPoint&) { return 1.0; };
  x2.eval = [](const GroupPoint& g) { return g.x.squaredNorm(); };
  R["conservativeness"] = to_json(heat_semigroup_apply(one, es));
  const auto m2 = heat_semigroup_apply(x2, es);
  const double expect = 2.0 * S.m() * pc.t;
  R["sum_x2"] = {{"estimate", to_json(m2)}, {"expected", expect}};
  if (std::abs(m2.mean - expect) > 3 * m2.se) {
    c.report.status = worst(c.report.status, RunStatus::VIOLATIONS);
    c.report.warnings.push_back("P_t(sum x_i^2)(e) differs from 2mt by more than 3 SE");
  }
  if (S.n() > 0) {
    const auto ks = dilation_covariance_ks(S, pc);
    R["dilation_ks"] = {{"statistic", ks.statistic}, {"p_value", ks.p_value}};
    if (ks.p_value < 0.01) {
      c.report.status = worst(c.report.status, RunStatus::VIOLATIONS);
      c.report.warnings.push_back("dilation KS rejects at 0.01");
    }
  }
  if (o.has("verify_gradient")) {
    MeasureSpec hs{S, 2.0, 1.0 / pc.t, std::nullopt, std::nullopt};
    const auto& v = o.raw("verify_gradient");
    FunctionCorpus corpus;
    if (v.is_string() && v.get<std::string>().size() > 5 &&
        v.get<std::string>().substr(v.get<std::string>().size() - 5) == ".json")
      corpus = corpus_from_json(c.load_json("corpus", v.get<std::string>()), hs);
    else if (v.is_boolean())
      corpus = heat_corpus(S, pc.t);
    else
      corpus = corpus_from_json(v, hs);
    const auto rep = verify_semigroup_gradient_bound(S, corpus, pc.t, pc);
    c.absorb(rep, R["gradient_bound"]);
    const auto path = csv_path(c.cfg, "gradient");
    if (!path.empty()) write_text(path, per_function_csv(rep));
  }
}

inline void run_gibbs(Context& c) {
  Options o(c.cfg.options, {"lattice", "sweeps", "burn_in", "verify", "chains", "r_max", "n_outer", "n_inner"});
  LatticeConfig lc;
  if (o.has("lattice")) {
    const auto& l = o.raw("lattice");
    lc = lattice_from_json(l.is_string() ? c.load_json("lattice", l.get<std::string>()) : l);
  }
  lc.seed = c.seed();
  const GibbsModel G(lc);
  auto& R = c.report.results;
  R["lattice"] = to_json(lc);
  const auto b = check_interaction_bounds(lc);
  R["interaction_bounds"] = {{"sup", b.sup}, {"sup_grad", b.sup_grad}, {"ok", b.ok}};
  if (!b.ok) c.report.warnings.push_back("interaction exceeds its declared bound M");
  const auto what = o.get<std::string>("verify", "l1phi");
  if (what == "none") return;
  if (what == "l1phi") {
    GibbsConfig gc;
    gc.seed = c.seed();
    gc.n_sweeps = o.get<std::size_t>("sweeps", gc.n_sweeps);
    gc.burn_in = o.get<std::size_t>("burn_in", gc.burn_in);
    gc.merge_chains = o.get<std::size_t>("chains", gc.merge_chains);
    gc.merge_r_max = o.get<std::size_t>("r_max", gc.merge_r_max);
    const auto res = verify_gibbs_l1phi(G, cylinder_corpus(G), PhiSpec(lc.site.beta()), gc);
    R["sweep"] = to_json(res.sweep);
    c.absorb(res.l1phi, R["l1phi"]);
    c.absorb(res.ifi2, R["ifi2"]);
    c.absorb(res.sqrt_n, R["sqrt_n_l2"]);
    if (b.ok) {
      // c0: single-site Cheeger constant on a fresh draw of the site measure.
      ChainConfig sc;
      sc.seed = derive_seed(c.seed(), 5);
      sc.n_samples = 5000;
      const auto ss = sample_measure(lc.site, sc);
      const auto c0 = verify_cheeger(build_corpus_table(lc.site, ss, standard_corpus(lc.site))).constant("c0");
      R["single_site_c0"] = to_json(c0);
      R["proof_threshold_J0"] = to_json(proof_threshold_J0(G, c0));
    }
    const auto path = csv_path(c.cfg, "l1phi");
    if (!path.empty()) write_text(path, per_function_csv(res.l1phi));
    return;
  }
  if (what == "contraction") {
    ContractionConfig cc;
    cc.seed = c.seed();
    cc.n_outer = o.get<std::size_t>("n_outer", cc.n_outer);
    cc.n_inner = o.get<std::size_t>("n_inner", cc.n_inner);
    const auto rep = verify_gradient_contraction(G, neighbor_corpus(G), cc);
    c.absorb(rep, R["contraction"]);
    const auto path = csv_path(c.cfg, "contraction");
    if (!path.empty()) write_text(path, per_function_csv(rep));
    return;
  }
  throw ConfigError("field 'options.verify': expected l1phi, contraction or none");
}

}  // namespace detail

inline Report run_command(const RunConfig& cfg);

namespace detail {

// Desk-scale pass over every command.
inline void run_all(Context& c) {
  Options o(c.cfg.options, {"scale"});
  const double k = o.get<double>("scale", 1.0);
  if (!(k > 0)) throw ConfigError("field 'options.scale': must be positive");
  auto sz = [k](double n) { return static_cast<std::size_t>(std::max(64.0, std::round(n * k))); };
  std::vector<std::pair<std::string, RunConfig>> subs;
  auto sub = [&](const std::string& name, const std::string& cmd, nlohmann::json opts) {
    RunConfig r;
    r.command = cmd;
    r.seed = derive_seed(c.seed(), subs.size() + 1);
    r.corpus_id = c.cfg.corpus_id;
    r.tolerances = c.cfg.tolerances;
    r.options = std::move(opts);
    subs.emplace_back(name, std::move(r));
  };
  sub("dist", "dist", {{"point", "1,0,1"}});
  sub("sample", "sample", {{"n", sz(20000)}});
  sub("verify", "verify", {{"kind", "all"}, {"n", sz(20000)}});
  sub("iso", "iso", {{"n", sz(40000)}});
  sub("heat", "heat", {{"paths", sz(20000)}, {"verify_gradient", true}});
  sub("gibbs", "gibbs", {{"lattice", {{"J", 0.1}, {"pool_size", 5000}}}, {"sweeps", sz(400)}});
  for (const auto& [name, r] : subs) {
    const auto rep = run_command(r);
    nlohmann::json j = to_json(rep, false);
    c.report.results[name] = j;
    c.report.status = worst(c.report.status, rep.status);
    for (const auto& w : rep.warnings) c.report.warnings.push_back(name + ": " + w);
  }
}

}  // namespace detail

// Runs one command. Refusals become status "refused" (exit 3); every other
// library error propagates to the caller (exit 1).
inline Report run_command(const RunConfig& cfg) {
  cfg.validate();
  Report rep;
  rep.command = cfg.command;
  rep.config = to_json(cfg);
  detail::Context c{cfg, rep};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (cfg.command == "dist") detail::run_dist(c);
    else if (cfg.command == "sample") detail::run_sample(c);
    else if (cfg.command == "verify") detail::run_verify(c);
    else if (cfg.command == "iso") detail::run_iso(c);
    else if (cfg.command == "heat") detail::run_heat(c);
    else if (cfg.command == "gibbs") detail::run_gibbs(c);
    else detail::run_all(c);
  } catch (const RefusedError& e) {
    rep.status = RunStatus::REFUSED;
    rep.results["refused"] = e.what();
  }
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  // Paths do not enter the digest, only file contents.
  nlohmann::json in = rep.config;
  in.erase("output_path");
  if (!in["spec_path"].is_null()) in["spec_path"] = c.inputs.value("spec", "");
  for (const char* k : {"samples", "lattice"})
    if (c.inputs.contains(k)) in["options"][k] = c.inputs[k];
  if (c.inputs.contains("corpus")) in["options"]["verify_gradient"] = c.inputs["corpus"];
  if (c.inputs.contains("corpus_file")) in["corpus_id"] = c.inputs["corpus_file"];
  if (in["options"].contains("samples_out")) in["options"].erase("samples_out");
  rep.input_digest = json_digest(in);
  return rep;
}

}  // namespace subriem
