#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cctmpc/json_io.hpp"

namespace {

using namespace cctmpc;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInfeasibleSynthesis = 2;
constexpr int kExitRuntimeInfeasible = 3;
constexpr int kExitSchemaError = 4;

Eigen::VectorXd parse_state(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      vals.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw SchemaError("cannot parse state entry \"" + item + "\"");
    }
  }
  if (vals.empty()) throw SchemaError("empty state vector");
  return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
}

struct LoadedProblem {
  ProblemSpec spec;
  TemplatePolytope tmpl;
  VertexConfiguration config;
  StageCost cost;
  Eigen::VectorXd w_bar;
};

LoadedProblem load_problem(const std::string& spec_path, const std::string& template_path) {
  LoadedProblem out{parse_problem(read_text_file(spec_path)), {}, {}, {}, {}};
  ValidationReport report = validate_system(out.spec.system, out.spec.solver);
  if (!report.ok) {
    std::string msg = "system validation failed:";
    for (const auto& issue : report.issues) msg += "\n  - " + issue;
    throw SchemaError(msg);
  }
  if (template_path.empty()) {
    auto built = build_template(out.spec.template_source, out.spec.solver);
    out.tmpl = std::move(built.first);
    out.config = std::move(built.second);
  } else {
    auto loaded = template_from_json(read_text_file(template_path));
    out.tmpl = std::move(loaded.first);
    out.config = std::move(loaded.second);
  }
  out.cost = build_stage_cost(out.spec.cost, out.config, out.spec.system);
  out.w_bar = disturbance_support(out.tmpl, out.spec.system, SupportMethod::Auto,
                                  out.spec.solver)
                  .w_bar;
  return out;
}

DisturbanceMode parse_disturbance_mode(const std::string& s) {
  if (s == "box-uniform") return DisturbanceMode::BoxUniform;
  if (s == "vertex-extreme") return DisturbanceMode::VertexExtreme;
  throw SchemaError("unknown disturbance mode \"" + s + "\"");
}

ModelMode parse_model_mode(const std::string& s) {
  if (s == "fixed-vertex") return ModelMode::FixedVertex;
  if (s == "dirichlet-mix") return ModelMode::DirichletMix;
  throw SchemaError("unknown model mode \"" + s + "\"");
}

int cmd_template(const std::string& spec_path, const std::string& out_path) {
  LoadedProblem p = load_problem(spec_path, "");
  write_text_file(out_path, template_to_json(p.tmpl, p.config));
  std::printf("template: m=%d n=%d vertices=%d reduced E rows=%d\n", p.tmpl.num_rows(),
              p.tmpl.dim(), p.config.num_vertices(), static_cast<int>(p.config.E.rows()));
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& template_path,
              const std::string& out_path, double beta_override) {
  LoadedProblem p = load_problem(spec_path, template_path);
  SynthesisOptions options;
  options.beta = beta_override > 0.0 ? beta_override : p.spec.beta;
  options.solver = p.spec.solver;
  FMembershipBlock block(p.tmpl, p.config, p.spec.system, p.w_bar);

  ContractiveSynthesis contract = synthesize_contractive(p.tmpl, p.config, p.spec.system,
                                                         p.w_bar, options.beta, options.solver);
  if (!contract.feasible) {
    std::fprintf(stderr,
                 "contraction synthesis infeasible at beta=%g; the template needs more rows\n",
                 options.beta);
    return kExitInfeasibleSynthesis;
  }
  SynthesisData data = run_synthesis(block, p.cost, options);
  write_text_file(out_path, synthesis_to_json(data));
  std::printf("synthesis: gamma=%s rho=%s V_s=%s\n", format_double(data.gamma).c_str(),
              format_double(data.rho).c_str(), format_double(data.V_s).c_str());
  return kExitOk;
}

int cmd_mpc_step(const std::string& spec_path, const std::string& template_path,
                 const std::string& synth_path, const std::string& state_text,
                 const std::string& out_path, int horizon_override) {
  LoadedProblem p = load_problem(spec_path, template_path);
  SynthesisData synth = synthesis_from_json(read_text_file(synth_path));
  FMembershipBlock block(p.tmpl, p.config, p.spec.system, p.w_bar);
  ControllerConfig config;
  config.horizon = horizon_override > 0 ? horizon_override : p.spec.horizon;
  config.solver = p.spec.solver;
  CctmpcController controller(block, p.cost, synth, config);
  Eigen::VectorXd x = parse_state(state_text);
  TubeSolution sol = controller.mpc_step(x);
  FeedbackResult fb = controller.vertex_feedback(x, sol);
  write_text_file(out_path, solution_to_json(sol, fb));
  std::printf("mpc-step: objective=%s alpha=%s applied_u=%s\n",
              format_double(sol.objective).c_str(), format_double(sol.alpha).c_str(),
              format_double(fb.input.size() == 1 ? fb.input[0] : fb.input.norm()).c_str());
  return kExitOk;
}

int cmd_simulate(const std::string& spec_path, const std::string& template_path,
                 const std::string& synth_path, const std::string& x0_text,
                 std::uint64_t seed, int steps, const std::string& out_path,
                 const std::string& tubes_path, const std::string& dist_mode,
                 const std::string& model_mode, int horizon_override) {
  LoadedProblem p = load_problem(spec_path, template_path);
  SynthesisData synth = synthesis_from_json(read_text_file(synth_path));
  FMembershipBlock block(p.tmpl, p.config, p.spec.system, p.w_bar);
  ControllerConfig config;
  config.horizon = horizon_override > 0 ? horizon_override : p.spec.horizon;
  config.solver = p.spec.solver;
  CctmpcController controller(block, p.cost, synth, config);

  ScenarioConfig scenario;
  scenario.seed = seed;
  scenario.steps = steps;
  scenario.x0 = parse_state(x0_text);
  scenario.disturbance_mode = parse_disturbance_mode(dist_mode);
  scenario.model_mode = parse_model_mode(model_mode);

  std::vector<StepLog> logs = run_closed_loop(controller, p.spec.system, scenario);
  write_text_file(out_path, logs_to_csv(logs));
  if (!tubes_path.empty()) write_text_file(tubes_path, tube_dump_json(logs, p.tmpl, p.config));
  std::printf("simulate: %zu steps, final lyapunov=%s max residual=%s\n", logs.size(),
              format_double(logs.back().lyapunov).c_str(),
              format_double([&] {
                double r = 0.0;
                for (const auto& log : logs) r = std::max(r, log.residual);
                return r;
              }()).c_str());
  return kExitOk;
}

int cmd_export_plot(const std::string& spec_path, const std::string& template_path,
                    const std::string& synth_path, const std::string& state_text,
                    const std::string& out_path, int horizon_override) {
  LoadedProblem p = load_problem(spec_path, template_path);
  SynthesisData synth = synthesis_from_json(read_text_file(synth_path));
  FMembershipBlock block(p.tmpl, p.config, p.spec.system, p.w_bar);
  ControllerConfig config;
  config.horizon = horizon_override > 0 ? horizon_override : p.spec.horizon;
  config.solver = p.spec.solver;
  CctmpcController controller(block, p.cost, synth, config);
  TubeSolution sol = controller.mpc_step(parse_state(state_text));
  write_text_file(out_path, tube_polylines_csv(sol, p.tmpl, p.config));
  std::printf("export-plot: %zu tube cross sections written\n", sol.y.size());
  return kExitOk;
}

int cmd_verify(const std::string& spec_path, std::uint64_t seed) {
  bool all_ok = true;
  auto report = [&all_ok](const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.empty() ? "" : ": ",
                detail.c_str());
    if (!ok) all_ok = false;
  };

  ProblemSpec spec = parse_problem(read_text_file(spec_path));
  ValidationReport vreport = validate_system(spec.system, spec.solver);
  report("system validation", vreport.ok,
         vreport.ok ? "" : vreport.issues.front() + (vreport.issues.size() > 1 ? ", ..." : ""));
  if (!vreport.ok) return kExitFailure;

  // Seed simplicity is reported on the raw template before any perturbation.
  {
    TemplatePolytope raw;
    if (spec.template_source.kind == TemplateSource::Kind::Explicit) {
      raw.Y = spec.template_source.Y;
      raw.sigma = spec.template_source.sigma;
      SimplicityReport rep = check_entirely_simple(raw);
      if (!rep.entirely_simple && !rep.witnesses.empty()) {
        std::string w = "{";
        for (size_t i = 0; i < rep.witnesses.front().size(); ++i)
          w += (i ? "," : "") + std::to_string(rep.witnesses.front()[i] + 1);
        w += "}";
        std::printf("[WARN] seed polytope is not entirely simple, witness rows %s; "
                    "a perturbed seed will be used\n",
                    w.c_str());
      }
    }
  }

  auto built = build_template(spec.template_source, spec.solver);
  TemplatePolytope& t = built.first;
  VertexConfiguration& vc = built.second;
  Eigen::VectorXd w_bar =
      disturbance_support(t, spec.system, SupportMethod::Auto, spec.solver).w_bar;

  // Hull equality: sampled cone parameters keep every mapped vertex inside
  // the polytope, and LP-extreme points of the polytope stay inside the
  // mapped-vertex hull.
  {
    bool ok = true;
    std::string detail;
    CounterRng rng(seed);
    auto samples = sample_configuration_parameters(t, vc, 100, seed, spec.solver);
    for (const auto& y : samples) {
      double tol = 1e-8 * (1.0 + y.lpNorm<Eigen::Infinity>());
      std::vector<Eigen::VectorXd> pts;
      for (const auto& V : vc.vertex_maps) {
        Eigen::VectorXd pt = V * y;
        if ((t.Y * pt - y).maxCoeff() > tol) {
          ok = false;
          detail = "mapped vertex escapes the polytope";
          break;
        }
        pts.push_back(std::move(pt));
      }
      if (!ok) break;
      for (int probe = 0; probe < 5; ++probe) {
        Eigen::VectorXd dir(t.dim());
        for (int d = 0; d < t.dim(); ++d) dir[d] = 2.0 * rng.next_double() - 1.0;
        LinearProgram lp;
        lp.c = -dir;
        lp.G = t.Y.sparseView();
        lp.h = y;
        lp.A.resize(0, t.dim());
        lp.b.resize(0);
        SolveResult r = solve_lp(lp, spec.solver);
        if (!r.optimal()) continue;
        // the probe point carries the LP's own feasibility tolerance
        if (!hull_membership(r.z, pts, 1e-7, spec.solver)) {
          ok = false;
          detail = "extreme point outside the vertex hull";
          break;
        }
      }
      if (!ok) break;
    }
    report("hull equality (100 sampled cone parameters)", ok, detail);
  }

  FMembershipBlock block(t, vc, spec.system, w_bar);
  StageCost cost = build_stage_cost(spec.cost, vc, spec.system);
  ContractiveSynthesis contract =
      synthesize_contractive(t, vc, spec.system, w_bar, spec.beta, spec.solver);
  report("contractive synthesis", contract.feasible,
         contract.feasible ? "" : "infeasible; template needs more rows");
  if (!contract.feasible) return kExitInfeasibleSynthesis;

  SynthesisOptions options;
  options.beta = spec.beta;
  options.solver = spec.solver;
  SynthesisData data = run_synthesis(block, cost, options);

  {
    bool ok = true;
    std::string detail;
    for (int k = 0; k <= 20 && ok; ++k) {
      double g = std::pow(data.gamma, k);
      Eigen::VectorXd yk = g * data.sigma + (1.0 - g) * data.y_s;
      double gn = std::pow(data.gamma, k + 1);
      Eigen::VectorXd yk1 = gn * data.sigma + (1.0 - gn) * data.y_s;
      if (!f_membership_feasible(block, yk, yk1, spec.solver)) {
        ok = false;
        detail = "membership fails at k=" + std::to_string(k);
      }
      double decay = std::abs((yk - data.y_s).lpNorm<Eigen::Infinity>() -
                              g * (data.sigma - data.y_s).lpNorm<Eigen::Infinity>());
      if (decay > 1e-12 * (1.0 + data.sigma.lpNorm<Eigen::Infinity>())) {
        ok = false;
        detail = "decay identity off by " + format_double(decay);
      }
    }
    report("contraction sequence membership (k = 0..20)", ok, detail);
  }

  {
    bool ok = true;
    std::string detail;
    ControllerConfig config;
    config.horizon = spec.horizon;
    config.solver = spec.solver;
    Eigen::VectorXd center = Eigen::VectorXd::Zero(t.dim());
    for (const auto& V : vc.vertex_maps) center += V * data.y_s;
    center /= vc.num_vertices();
    for (std::uint64_t s : {seed + 1, seed + 2}) {
      CctmpcController controller(block, cost, data, config);
      ScenarioConfig scenario;
      scenario.seed = s;
      scenario.steps = 12;
      scenario.x0 = center;
      scenario.disturbance_mode = DisturbanceMode::BoxUniform;
      try {
        auto logs = run_closed_loop(controller, spec.system, scenario);
        for (size_t k = 0; k + 1 < logs.size(); ++k) {
          if (logs[k + 1].lyapunov > logs[k].lyapunov + 1e-6 &&
              logs[k].lyapunov > 1e-6) {
            ok = false;
            detail = "Lyapunov increase at step " + std::to_string(k);
          }
          if (logs[k].residual > 1e-7) {
            ok = false;
            detail = "membership residual " + format_double(logs[k].residual);
          }
        }
      } catch (const CctmpcError& err) {
        ok = false;
        detail = err.what();
      }
      if (!ok) break;
    }
    report("closed-loop descent (2 seeds)", ok, detail);
  }

  return all_ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Configuration-constrained tube MPC toolkit"};
  app.require_subcommand(1);

  std::string spec_path, template_path, synth_path, out_path, state_text, x0_text, tubes_path;
  std::string dist_mode = "box-uniform", model_mode = "dirichlet-mix";
  double beta_override = -1.0;
  int horizon_override = -1;
  int steps = 30;
  std::uint64_t seed = 1;

  auto* sub_template = app.add_subcommand("template", "Build template and vertex configuration");
  sub_template->add_option("--spec", spec_path, "Problem file")->required();
  sub_template->add_option("--out", out_path, "Output template.json")->required();

  auto* sub_synth = app.add_subcommand("synth", "Offline synthesis of the controller data");
  sub_synth->add_option("--spec", spec_path)->required();
  sub_synth->add_option("--template", template_path, "Optional prebuilt template.json");
  sub_synth->add_option("--out", out_path, "Output synth.json")->required();
  sub_synth->add_option("--beta", beta_override, "Override the contraction factor");

  auto* sub_step = app.add_subcommand("mpc-step", "Solve one control step");
  sub_step->add_option("--spec", spec_path)->required();
  sub_step->add_option("--template", template_path);
  sub_step->add_option("--synth", synth_path)->required();
  sub_step->add_option("--state", state_text, "Comma-separated measurement")->required();
  sub_step->add_option("--out", out_path, "Output solution.json")->required();
  sub_step->add_option("--horizon", horizon_override);

  auto* sub_sim = app.add_subcommand("simulate", "Seeded closed-loop run");
  sub_sim->add_option("--spec", spec_path)->required();
  sub_sim->add_option("--template", template_path);
  sub_sim->add_option("--synth", synth_path)->required();
  sub_sim->add_option("--x0", x0_text, "Comma-separated initial state")->required();
  sub_sim->add_option("--seed", seed);
  sub_sim->add_option("--steps", steps);
  sub_sim->add_option("--out", out_path, "Output CSV log")->required();
  sub_sim->add_option("--tubes", tubes_path, "Optional JSON dump of the per-step tube vertices");
  sub_sim->add_option("--disturbance", dist_mode, "box-uniform | vertex-extreme");
  sub_sim->add_option("--model", model_mode, "fixed-vertex | dirichlet-mix");
  sub_sim->add_option("--horizon", horizon_override);

  auto* sub_verify = app.add_subcommand("verify", "Run the property suite");
  sub_verify->add_option("--spec", spec_path)->required();
  sub_verify->add_option("--seed", seed);

  auto* sub_plot = app.add_subcommand("export-plot", "Emit predicted tube polylines");
  sub_plot->add_option("--spec", spec_path)->required();
  sub_plot->add_option("--template", template_path);
  sub_plot->add_option("--synth", synth_path)->required();
  sub_plot->add_option("--state", state_text)->required();
  sub_plot->add_option("--out", out_path)->required();
  sub_plot->add_option("--horizon", horizon_override);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sub_template->parsed()) return cmd_template(spec_path, out_path);
    if (sub_synth->parsed()) return cmd_synth(spec_path, template_path, out_path, beta_override);
    if (sub_step->parsed())
      return cmd_mpc_step(spec_path, template_path, synth_path, state_text, out_path,
                          horizon_override);
    if (sub_sim->parsed())
      return cmd_simulate(spec_path, template_path, synth_path, x0_text, seed, steps, out_path,
                          tubes_path, dist_mode, model_mode, horizon_override);
    if (sub_verify->parsed()) return cmd_verify(spec_path, seed);
    if (sub_plot->parsed())
      return cmd_export_plot(spec_path, template_path, synth_path, state_text, out_path,
                             horizon_override);
  } catch (const SchemaError& err) {
    std::fprintf(stderr, "schema error: %s\n", err.what());
    return kExitSchemaError;
  } catch (const InfeasibleStateError& err) {
    std::fprintf(stderr, "infeasible: %s\n", err.what());
    return kExitRuntimeInfeasible;
  } catch (const RecursiveFeasibilityViolation& err) {
    std::fprintf(stderr, "infeasible: %s\n", err.what());
    return kExitRuntimeInfeasible;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitFailure;
  }
  return kExitFailure;
}
