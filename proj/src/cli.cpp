#include "mspde/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "mspde/ensemble.hpp"
#include "mspde/errors.hpp"
#include "mspde/io.hpp"
#include "mspde/verify.hpp"

#ifndef MSPDE_VERSION
#define MSPDE_VERSION "0.0.0"
#endif

namespace mspde {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string padded(std::size_t i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return buf;
}

std::string csv_line(std::initializer_list<std::string> cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out + '\n';
}

void emit_error(const Error& e, const std::optional<fs::path>& dir, std::optional<double> suggested_tau) {
  json rec = {{"kind", e.kind()}, {"message", e.what()}};
  if (suggested_tau) rec["suggested_tau"] = *suggested_tau;
  std::cerr << rec.dump() << std::endl;
  if (!dir) return;
  try {
    write_json(*dir / "error.json", rec);
  } catch (...) {
  }
}

DiagnosticRecord record(std::string name, double lhs, double rhs, bool pass) {
  return {std::move(name), lhs, rhs, rhs - lhs, pass};
}

}  // namespace

json make_manifest(const RunConfig& cfg, const std::string& command, const std::string& seed_source) {
  json m = emit_config(cfg);
  m["run"] = {{"tool", "mspde"},
              {"version", MSPDE_VERSION},
              {"command", command},
              {"seed_source", seed_source},
              {"workers_effective", cfg.experiment.workers > 0 ? cfg.experiment.workers : available_workers()}};
  return m;
}

int run_solve(const RunConfig& cfg, const std::string& dir_s) {
  const fs::path dir(dir_s);
  check_stability(*cfg.grid, cfg.solver);
  const EnsembleSpec spec = build_ensemble(cfg);
  const EnsembleResult result = run_ensemble(spec, cfg.experiment.snapshot_times);

  std::string csv = "time,mean_l2,var_l2\n";
  for (const auto& r : result.rows)
    csv += csv_line({format_double(r.time), format_double(r.mean_l2), format_double(r.var_l2)});
  write_text(dir / "ensemble.csv", csv);

  for (const auto& p : result.paths) {
    json j = {{"path", p.path},
              {"seed", cfg.experiment.seed},
              {"final_l2", p.final_l2},
              {"picard_iters", p.picard_iters},
              {"kappa", p.kappa.to_json()},
              {"l2", p.l2}};
    write_json(dir / "paths" / ("path_" + padded(p.path) + ".json"), j);
  }
  for (std::size_t k = 0; k < result.snapshots.size(); ++k) {
    const auto& s = result.snapshots[k];
    write_json(dir / "snapshots" / ("snapshot_" + padded(k, 3) + ".json"), field_snapshot(s.field, s.time));
    write_text(dir / "snapshots" / ("snapshot_" + padded(k, 3) + ".csv"), field_csv(s.field));
  }
  if (cfg.experiment.dump_noise) {
    const std::size_t steps = cfg.solver.steps();
    for (std::size_t p = 0; p < cfg.experiment.paths; ++p)
      write_noise(dir / "noise" / ("path_" + padded(p)), sample_increments(spec.wiener, steps, cfg.solver.tau, p));
  }
  return 0;
}

int run_verify(const RunConfig& cfg, const std::string& dir_s) {
  const fs::path dir(dir_s);
  check_stability(*cfg.grid, cfg.solver);
  const EnsembleSpec spec = build_ensemble(cfg);
  SolverConfig solver = cfg.solver;
  solver.record_stride = 1;
  const std::size_t steps = solver.steps();

  struct PathOut {
    double residual = 0.0;
    UiAccumulator ui;
    KappaDiagnostics kappa;
    std::vector<Field> fields;
    double det_residual = 0.0;
    double det_scale = 1.0;
  };
  auto outs = run_paths(
      spec.paths,
      [&](std::size_t path) {
        const auto noise = path_noise(spec, path, steps, solver.tau);
        const SolutionPath sol = solve_path(spec.potential, spec.diffusion, spec.u0, solver, noise);
        PathOut out{0.0, UiAccumulator(spec.potential, solver.lambda, cfg.experiment.thresholds), {}, {}, 0.0, 1.0};
        out.residual = energy_identity_residual(sol, spec.diffusion).residual;
        for (std::size_t n = 0; n < steps; ++n)
          out.ui.add(gradient(sol.fields[n]), sol.drift_flux[n], solver.tau);
        out.ui.end_path();
        out.kappa = kappa_diagnostics(sol, spec.potential);
        const std::vector<Field> f = forcing_path(sol, spec.diffusion);
        out.det_residual = deterministic_energy_identity(sol.fields, step_fluxes(sol), f, solver.tau);
        for (std::size_t n = 0; n < f.size(); ++n) {
          const Field z = sol.fields[n] - f[n];
          out.det_scale = std::max(out.det_scale, inner(z, z));
        }
        if (path == 0) out.fields = sol.fields;
        return out;
      },
      cfg.experiment.workers);

  std::vector<DiagnosticRecord> records;
  double mean_abs = 0.0;
  for (const auto& o : outs) mean_abs += std::abs(o.residual);
  mean_abs /= static_cast<double>(outs.size());

  double det_worst = 0.0, det_scale = 1.0;
  for (const auto& o : outs)
    if (std::abs(o.det_residual) / o.det_scale >= det_worst / det_scale) {
      det_worst = std::abs(o.det_residual);
      det_scale = o.det_scale;
    }
  records.push_back(record("deterministic_energy_identity", det_worst, 1e-10 * det_scale, det_worst <= 1e-10 * det_scale));

  std::vector<double> taus = cfg.experiment.ladder.tau;
  if (taus.empty()) taus = {solver.tau, 0.5 * solver.tau, 0.25 * solver.tau};
  const LadderResult ladder = tau_ladder(spec, taus);
  double worst_ratio = 0.0;
  bool in_band = ladder.rows.size() > 1;
  for (const auto& r : ladder.rows)
    if (r.ratio) {
      worst_ratio = std::max(worst_ratio, std::abs(std::log2(*r.ratio) + 1.0));
      in_band = in_band && *r.ratio >= 0.3 && *r.ratio <= 0.7;
    }
  records.push_back(record("energy_identity_refinement_rate", worst_ratio, 0.5, in_band));

  std::string refinement = "path,level,tau,residual\n";
  for (std::size_t p = 0; p < ladder.per_path.size(); ++p)
    for (std::size_t i = 0; i < taus.size(); ++i)
      refinement += csv_line({std::to_string(p), std::to_string(i), format_double(taus[i]),
                              format_double(ladder.per_path[p][i])});
  write_text(dir / "refinement.csv", refinement);

  MaximalEstimateConfig mcfg;
  mcfg.steps = steps;
  mcfg.tau = solver.tau;
  mcfg.seed = cfg.experiment.seed + 1000003;
  const DiffusionOperator beff = effective_diffusion(spec.diffusion, solver);
  const MaximalEstimateTable maximal = maximal_estimate_check(outs.front().fields, beff, spec.wiener, mcfg,
                                                              std::max<std::size_t>(100, cfg.experiment.paths),
                                                              cfg.experiment.eps_grid);
  double min_slack = INFINITY, max_lhs = 0.0, min_rhs = INFINITY;
  for (const auto& r : maximal.rows) {
    min_slack = std::min(min_slack, r.slack);
    max_lhs = std::max(max_lhs, r.lhs);
    min_rhs = std::min(min_rhs, r.rhs);
  }
  records.push_back({"maximal_estimate", max_lhs, min_rhs, min_slack, maximal.all_pass()});

  UiAccumulator ui(spec.potential, solver.lambda, cfg.experiment.thresholds);
  for (const auto& o : outs) ui.merge(o.ui);
  const UiReport uir = ui.report();
  double worst = 0.0;
  for (std::size_t i = 0; i < uir.thresholds.size(); ++i)
    if (uir.majorant[i] > 0.0) worst = std::max(worst, uir.tail_mass[i] / uir.majorant[i]);
  records.push_back(record("uniform_integrability_tail", worst, 1.0, uir.holds()));

  double pluto_worst = 0.0, pluto_scale = 1.0;
  for (const auto& o : outs) {
    pluto_worst = std::max(pluto_worst, std::abs(o.kappa.int_k_resolvent_plus_kstar - o.kappa.int_pluto_pairing));
    pluto_scale = std::max(pluto_scale, std::abs(o.kappa.int_pluto_pairing));
  }
  records.push_back(record("kappa_pluto_identity", pluto_worst, 1e-8 * pluto_scale, pluto_worst <= 1e-8 * pluto_scale));

  json report;
  report["checks"] = json::array();
  for (const auto& r : records) report["checks"].push_back(r.to_json());
  report["energy_identity"] = {{"mean_abs_residual", mean_abs}, {"paths", outs.size()}};
  report["refinement"] = ladder.to_json();
  report["maximal_estimate"] = maximal.to_json();
  report["uniform_integrability"] = uir.to_json();
  report["kappa_path0"] = outs.front().kappa.to_json();
  write_json(dir / "diagnostics.json", report);
  return 0;
}

int run_converge(const RunConfig& cfg, const std::string& dir_s) {
  const fs::path dir(dir_s);
  const EnsembleSpec spec = build_ensemble(cfg);
  const LadderSettings& l = cfg.experiment.ladder;
  if (l.lambda.empty() && l.epsilon.empty() && l.tau.empty())
    throw ConfigError("converge needs at least one of experiment.ladder.{lambda, epsilon, tau}");
  std::vector<LadderResult> results;
  if (!l.lambda.empty()) results.push_back(lambda_ladder(spec, l.lambda));
  if (!l.epsilon.empty()) {
    check_stability(*cfg.grid, cfg.solver);
    results.push_back(epsilon_ladder(spec, l.epsilon));
  }
  if (!l.tau.empty()) {
    SolverConfig coarse = cfg.solver;
    coarse.tau = *std::max_element(l.tau.begin(), l.tau.end());
    check_stability(*cfg.grid, coarse);
    results.push_back(tau_ladder(spec, l.tau));
  }
  std::string csv = "ladder,level,value,metric,ratio,bound_term\n";
  json j = json::array();
  for (const auto& r : results) {
    for (const auto& row : r.rows)
      csv += csv_line({r.ladder, std::to_string(row.level), format_double(row.value), format_double(row.metric),
                       row.ratio ? format_double(*row.ratio) : "", row.bound_term ? format_double(*row.bound_term) : ""});
    j.push_back(r.to_json());
  }
  write_text(dir / "converge.csv", csv);
  write_json(dir / "converge.json", j);
  return 0;
}

int run_potential_table(const RunConfig& cfg, const std::string& dir_s) {
  const fs::path dir(dir_s);
  const Potential p = build_potential(cfg);
  const ExperimentSettings& e = cfg.experiment;
  std::string header = "x,k,gamma,kstar";
  for (double lam : e.table_lambdas) {
    const std::string s = short_number(lam);
    header += ",resolvent_" + s + ",yosida_" + s + ",moreau_" + s;
  }
  std::string csv = header + '\n';
  Vec x = Vec::Zero(p.dim());
  for (std::size_t i = 0; i < e.table_points; ++i) {
    x[0] = -e.table_radius + 2.0 * e.table_radius * static_cast<double>(i) / static_cast<double>(e.table_points - 1);
    std::string line = format_double(x[0]) + ',' + format_double(p.k(x)) + ',' + format_double(p.gamma(x)[0]) + ',' +
                       format_double(conjugate(p, x));
    for (double lam : e.table_lambdas)
      line += ',' + format_double(resolvent(p, lam, x)[0]) + ',' + format_double(yosida(p, lam, x)[0]) + ',' +
              format_double(moreau(p, lam, x));
    csv += line + '\n';
  }
  write_text(dir / "potential_table.csv", csv);
  return 0;
}

int execute(const CliRequest& request) {
  std::optional<fs::path> dir;
  if (request.output) dir = fs::path(*request.output);
  try {
    if (!fs::exists(request.config_path))
      throw ConfigError("config file '" + request.config_path + "' not found", "config_not_found");
    json raw = read_json(request.config_path);

    std::string seed_source = "config";
    std::optional<std::uint64_t> seed;
    if (const char* env = std::getenv("MSPDE_SEED"); env && *env) {
      try {
        seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError("MSPDE_SEED must be a nonnegative integer");
      }
      seed_source = "env";
    }
    if (request.seed_override) {
      seed = request.seed_override;
      seed_source = "flag";
    }
    if (seed) {
      if (raw.contains("noise") && raw["noise"].is_object()) raw["noise"].erase("seed");
      raw["experiment"]["seed"] = *seed;
    }
    if (request.command != "run") raw["experiment"]["kind"] = request.command;
    RunConfig cfg = parse_config(raw);
    if (request.output) cfg.experiment.output_dir = *request.output;
    dir = fs::path(cfg.experiment.output_dir);
    if (cfg.experiment.workers > 0) default_workers() = cfg.experiment.workers;

    fs::create_directories(*dir);
    write_json(*dir / "manifest.json", make_manifest(cfg, request.command, seed_source));
    const std::string& kind = cfg.experiment.kind;
    if (kind == "solve") return run_solve(cfg, dir->string());
    if (kind == "verify") return run_verify(cfg, dir->string());
    if (kind == "converge") return run_converge(cfg, dir->string());
    return run_potential_table(cfg, dir->string());
  } catch (const StabilityViolation& e) {
    emit_error(e, dir, e.suggested_tau());
    return 3;
  } catch (const Error& e) {
    emit_error(e, dir, std::nullopt);
    return e.numerical() ? 3 : 2;
  } catch (const std::exception& e) {
    emit_error(Error("internal_error", e.what()), dir, std::nullopt);
    return 2;
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Solver and verification harness for divergence-form stochastic PDEs"};
  app.set_version_flag("--version", std::string(MSPDE_VERSION));
  app.require_subcommand(1);
  CliRequest request;
  std::string output;
  std::uint64_t seed = 0;
  for (const char* name : {"solve", "verify", "converge", "potential-table", "run"}) {
    CLI::App* sub = app.add_subcommand(name, std::string(name) == "run" ? "Run the experiment named in the config"
                                                                         : std::string("Run the ") + name + " experiment");
    sub->add_option("--config", request.config_path, "Config JSON file")->required();
    sub->add_option("--output", output, "Output directory (overrides experiment.output_dir)");
    sub->add_option("--seed-override", seed, "RNG seed (overrides config and MSPDE_SEED)");
    sub->callback([&request, &output, &seed, sub, name] {
      request.command = name;
      if (sub->count("--output")) request.output = output;
      if (sub->count("--seed-override")) request.seed_override = seed;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << json{{"kind", "usage"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }
  return execute(request);
}

}  // namespace mspde
