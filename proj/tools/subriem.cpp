#include <iostream>

#include "CLI11.hpp"
#include "subriem/run.hpp"

using namespace subriem;
using nlohmann::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string spec;
  std::string corpus = "builtin:standard";
  std::vector<std::string> tol;
  bool no_wall_time = false;
};

void add_common(CLI::App* app, Common& c, bool spec = true) {
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "report path (default: stdout)");
  if (spec) {
    app->add_option("--spec", c.spec, "measure spec JSON {group, p, alpha, W?, V?}");
    app->add_option("--corpus", c.corpus, "corpus name (builtin:standard, builtin:bumps)");
  }
  app->add_option("--tol", c.tol, "tolerance override name=value");
  app->add_flag("--no-wall-time", c.no_wall_time, "omit wall_time so whole files compare byte for byte");
}

RunConfig base_config(const std::string& cmd, const Common& c) {
  RunConfig r;
  r.command = cmd;
  r.seed = c.seed;
  if (!c.spec.empty()) r.spec_path = c.spec;
  r.corpus_id = c.corpus;
  if (!c.out.empty()) r.output_path = c.out;
  for (const auto& t : c.tol) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("--tol expects name=value, got '" + t + "'");
    char* end = nullptr;
    const double v = std::strtod(t.c_str() + eq + 1, &end);
    if (*end != '\0') throw ConfigError("--tol " + t + ": bad number");
    r.tolerances[t.substr(0, eq)] = v;
  }
  return r;
}

json group_value(const std::string& g) {
  // A preset name or a path to a {m, n, J} document.
  if (g.size() > 5 && g.substr(g.size() - 5) == ".json") return read_json_file(g);
  return g;
}

int finish(const RunConfig& cfg, bool no_wall_time, const std::string& report_path) {
  const auto rep = run_command(cfg);
  emit_report(rep, report_path.empty() ? "-" : report_path, !no_wall_time);
  if (rep.status != RunStatus::PASSED)
    std::cerr << "subriem: status " << to_string(rep.status) << " (exit " << rep.exit_code() << ")\n";
  return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-Riemannian functional inequalities on H-type groups: desk-scale numerical checks"};
  app.require_subcommand(0, 1);
  bool version = false, list_presets = false;
  app.add_flag("--version", version, "print version and schema version");
  app.add_flag("--list-presets", list_presets, "list built-in group presets");

  Common dc, sc, vc, ic, hc, gc, ac, rc;

  auto* dist = app.add_subcommand("dist", "CC distance from the identity");
  std::string d_group = "heisenberg1", d_point;
  bool d_oracle = false;
  int d_segments = 64;
  dist->add_option("--group", d_group, "preset name or structure JSON path");
  dist->add_option("--point", d_point, "x_1,..,x_m,z_1,..,z_n")->required();
  dist->add_flag("--oracle", d_oracle, "also run the direct-transcription oracle");
  dist->add_option("--segments", d_segments, "oracle polygon segments");
  add_common(dist, dc, false);

  auto* sample = app.add_subcommand("sample", "draw from mu_p (CSV x_1..x_m, z_1..z_n, weight)");
  std::size_t s_n = 100000;
  std::string s_group, s_report;
  sample->add_option("--n", s_n, "total samples");
  sample->add_option("--group", s_group, "preset when no --spec is given");
  sample->add_option("--report", s_report, "JSON report path (default: stdout)");
  add_common(sample, sc);

  auto* verify = app.add_subcommand("verify", "fit and check one functional inequality on a corpus");
  std::string v_kind = "l1phi", v_samples, v_group;
  std::size_t v_n = 20000;
  std::optional<double> v_beta;
  verify->add_option("--kind", v_kind, "ubound|cheeger|l1phi|lsq|ifi2|tight_ledoux|exp_int|sobolev|all");
  verify->add_option("--samples", v_samples, "samples CSV (otherwise drawn with --seed)");
  verify->add_option("--n", v_n, "samples to draw when no CSV is given");
  verify->add_option("--beta", v_beta, "Phi exponent (default 1 - 1/p)");
  verify->add_option("--group", v_group, "preset when no --spec is given");
  add_common(verify, vc);

  auto* iso = app.add_subcommand("iso", "surface measure and isoperimetric ratios");
  std::vector<std::string> i_sets;
  std::string i_samples, i_profile = "q=2", i_group;
  std::size_t i_n = 40000, i_levels = 8;
  bool i_coarea = false;
  iso->add_option("--set", i_sets, "ball:r | halfspace:c[:n1,..] | complement:...");
  iso->add_option("--samples", i_samples, "samples CSV");
  iso->add_option("--n", i_n, "samples to draw when no CSV is given");
  iso->add_option("--profile", i_profile, "q=<value>");
  iso->add_flag("--coarea", i_coarea, "also run the coarea check over the corpus");
  iso->add_option("--levels", i_levels, "coarea levels");
  iso->add_option("--group", i_group, "preset when no --spec is given");
  add_common(iso, ic);

  auto* heat = app.add_subcommand("heat", "horizontal Brownian motion and the heat semigroup");
  std::string h_group = "heisenberg1", h_verify;
  double h_t = 1.0;
  std::size_t h_paths = 100000;
  int h_steps = 256;
  heat->add_option("--group", h_group, "preset name or structure JSON path");
  heat->add_option("--t", h_t, "time");
  heat->add_option("--paths", h_paths, "number of paths");
  heat->add_option("--steps", h_steps, "Euler steps per path");
  heat->add_option("--verify-gradient", h_verify, "corpus JSON path or builtin name ('builtin' = scaled standard corpus)");
  add_common(heat, hc, false);

  auto* gibbs = app.add_subcommand("gibbs", "lattice Gibbs measure: sweep diagnostic and entropy inequalities");
  std::string g_config, g_verify = "l1phi";
  std::optional<std::size_t> g_sweeps;
  gibbs->add_option("--config", g_config, "lattice JSON (LatticeConfig)");
  gibbs->add_option("--sweeps", g_sweeps, "sweeps kept for nu");
  gibbs->add_option("--verify", g_verify, "l1phi|contraction|none");
  add_common(gibbs, gc, false);

  auto* all = app.add_subcommand("all", "desk-scale pass over every command");
  double a_scale = 1.0;
  all->add_option("--scale", a_scale, "multiplies every sample size");
  add_common(all, ac, false);

  auto* run = app.add_subcommand("run", "re-run a RunConfig JSON or the config echo of a report");
  std::string r_config;
  run->add_option("config", r_config, "RunConfig or report JSON")->required();
  add_common(run, rc, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (version) {
      std::cout << "subriem " << kVersion << " (report schema " << kSchemaVersion << ")\n";
      return 0;
    }
    if (list_presets) {
      for (const auto& name : presets::names()) {
        const auto S = structure_from_preset(name == "euclidean(m)" ? "euclidean(1)" : name);
        std::cout << name << "\tm=" << (name == "euclidean(m)" ? std::string("m") : std::to_string(S.m()))
                  << " n=" << S.n() << "\n";
      }
      return 0;
    }
    if (*dist) {
      auto cfg = base_config("dist", dc);
      cfg.options = {{"group", group_value(d_group)}, {"point", d_point}, {"oracle", d_oracle}, {"segments", d_segments}};
      return finish(cfg, dc.no_wall_time, dc.out);
    }
    if (*sample) {
      auto cfg = base_config("sample", sc);
      cfg.output_path.reset();
      cfg.options = {{"n", s_n}};
      if (!s_group.empty()) cfg.options["group"] = group_value(s_group);
      if (!sc.out.empty()) cfg.options["samples_out"] = sc.out;
      return finish(cfg, sc.no_wall_time, s_report);
    }
    if (*verify) {
      auto cfg = base_config("verify", vc);
      cfg.options = {{"kind", v_kind}, {"n", v_n}};
      if (!v_samples.empty()) cfg.options["samples"] = v_samples;
      if (v_beta) cfg.options["beta"] = *v_beta;
      if (!v_group.empty()) cfg.options["group"] = group_value(v_group);
      return finish(cfg, vc.no_wall_time, vc.out);
    }
    if (*iso) {
      auto cfg = base_config("iso", ic);
      if (i_profile.rfind("q=", 0) != 0) throw ConfigError("--profile expects q=<value>");
      cfg.options = {{"n", i_n}, {"profile_q", std::stod(i_profile.substr(2))}, {"coarea", i_coarea}, {"levels", i_levels}};
      if (!i_sets.empty()) cfg.options["sets"] = i_sets;
      if (!i_samples.empty()) cfg.options["samples"] = i_samples;
      if (!i_group.empty()) cfg.options["group"] = group_value(i_group);
      return finish(cfg, ic.no_wall_time, ic.out);
    }
    if (*heat) {
      auto cfg = base_config("heat", hc);
      cfg.options = {{"group", group_value(h_group)}, {"t", h_t}, {"paths", h_paths}, {"steps", h_steps}};
      if (h_verify == "builtin") cfg.options["verify_gradient"] = true;
      else if (!h_verify.empty()) cfg.options["verify_gradient"] = h_verify;
      return finish(cfg, hc.no_wall_time, hc.out);
    }
    if (*gibbs) {
      auto cfg = base_config("gibbs", gc);
      cfg.options = {{"verify", g_verify}};
      if (!g_config.empty()) cfg.options["lattice"] = g_config;
      if (g_sweeps) cfg.options["sweeps"] = *g_sweeps;
      return finish(cfg, gc.no_wall_time, gc.out);
    }
    if (*all) {
      auto cfg = base_config("all", ac);
      cfg.options = {{"scale", a_scale}};
      return finish(cfg, ac.no_wall_time, ac.out);
    }
    if (*run) {
      auto j = read_json_file(r_config);
      if (j.contains("schema_version") && j.contains("config")) j = j.at("config");
      auto cfg = run_config_from_json(j);
      if (rc.seed) cfg.seed = rc.seed;
      std::string out = rc.out.empty() ? cfg.output_path.value_or("") : rc.out;
      return finish(cfg, rc.no_wall_time, out);
    }
    std::cout << app.help();
    return 0;
  } catch (const Error& e) {
    std::cerr << "subriem: error [" << e.kind() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "subriem: error: " << e.what() << "\n";
    return 1;
  }
}
