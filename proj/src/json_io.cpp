#include "cctmpc/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cctmpc/rng.hpp"

namespace cctmpc {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string vector_json(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out + "]";
}

std::string matrix_json(const Eigen::MatrixXd& M) {
  std::string out = "[";
  for (int r = 0; r < M.rows(); ++r) {
    if (r) out += ",";
    out += vector_json(M.row(r).transpose());
  }
  return out + "]";
}

Eigen::VectorXd parse_vector(const json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + ": expected an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(what + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + ": expected an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  Eigen::MatrixXd M(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw SchemaError(what + ": ragged or non-array row " + std::to_string(r));
    for (size_t c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

HPolytope parse_polytope(const json& j, int dim, const std::string& what) {
  if (j.is_null()) return HPolytope::unbounded(dim);
  if (!j.is_object() || !j.contains("H") || !j.contains("h"))
    throw SchemaError(what + ": expected {\"H\": ..., \"h\": ...}");
  HPolytope p;
  p.H = parse_matrix(j["H"], what + ".H");
  p.h = parse_vector(j["h"], what + ".h");
  if (p.H.rows() == 0) p.H.resize(0, dim);
  if (p.H.rows() != p.h.size()) throw SchemaError(what + ": H/h row mismatch");
  if (p.H.rows() > 0 && p.H.cols() != dim)
    throw SchemaError(what + ": expected " + std::to_string(dim) + " columns");
  return p;
}

const json& require(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(ctx + ": missing \"" + key + "\"");
  return *it;
}

}  // namespace

ProblemSpec parse_problem(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw SchemaError(std::string("problem file: ") + err.what());
  }
  ProblemSpec spec;

  const json& jsys = require(j, "system", "problem");
  const json& jA = require(jsys, "A_vertices", "system");
  const json& jB = require(jsys, "B_vertices", "system");
  if (!jA.is_array() || !jB.is_array() || jA.empty() || jA.size() != jB.size())
    throw SchemaError("system: A_vertices/B_vertices must be nonempty arrays of equal length");
  for (size_t v = 0; v < jA.size(); ++v) {
    spec.system.A_vertices.push_back(parse_matrix(jA[v], "A vertex"));
    spec.system.B_vertices.push_back(parse_matrix(jB[v], "B vertex"));
  }
  spec.system.C = parse_matrix(require(jsys, "C", "system"), "C");
  const int nx = spec.system.state_dim();
  const int nu = spec.system.input_dim();
  const int nw = spec.system.disturbance_dim();
  spec.system.W = parse_polytope(require(jsys, "W", "system"), nw, "W");
  spec.system.X = jsys.contains("X") ? parse_polytope(jsys["X"], nx, "X") : HPolytope::unbounded(nx);
  spec.system.U = jsys.contains("U") ? parse_polytope(jsys["U"], nu, "U") : HPolytope::unbounded(nu);

  const json& jt = require(j, "template", "problem");
  std::string kind = require(jt, "type", "template").get<std::string>();
  if (kind == "angles_2d") {
    spec.template_source.kind = TemplateSource::Kind::Angles2d;
    Eigen::VectorXd a = parse_vector(require(jt, "angles", "template"), "angles");
    spec.template_source.angles.assign(a.data(), a.data() + a.size());
  } else if (kind == "regular_2d") {
    spec.template_source.kind = TemplateSource::Kind::Angles2d;
    int mrows = require(jt, "m", "template").get<int>();
    if (mrows < 3) throw SchemaError("template: regular_2d needs m >= 3");
    spec.template_source.angles.resize(mrows);
    for (int i = 0; i < mrows; ++i)
      spec.template_source.angles[i] = 2.0 * M_PI * i / mrows;
  } else if (kind == "grid_3d") {
    spec.template_source.kind = TemplateSource::Kind::Grid3d;
    spec.template_source.grid_range = require(jt, "range", "template").get<int>();
    if (spec.template_source.grid_range < 1) throw SchemaError("template: grid range must be >= 1");
  } else if (kind == "explicit") {
    spec.template_source.kind = TemplateSource::Kind::Explicit;
    spec.template_source.Y = parse_matrix(require(jt, "Y", "template"), "Y");
    spec.template_source.sigma = parse_vector(require(jt, "sigma", "template"), "sigma");
  } else {
    throw SchemaError("template: unknown type \"" + kind + "\"");
  }

  const json& jc = require(j, "cost", "problem");
  std::string ckind = require(jc, "type", "cost").get<std::string>();
  if (ckind == "vertex_weights") {
    spec.cost.kind = CostSpec::Kind::VertexWeights;
    spec.cost.Q = parse_matrix(require(jc, "Q", "cost"), "Q");
    spec.cost.R = parse_matrix(require(jc, "R", "cost"), "R");
    spec.cost.S = parse_matrix(require(jc, "S", "cost"), "S");
    spec.cost.T = parse_matrix(require(jc, "T", "cost"), "T");
  } else if (ckind == "parameter_quadratic") {
    spec.cost.kind = CostSpec::Kind::ParameterQuadratic;
    spec.cost.P = parse_matrix(require(jc, "P", "cost"), "P");
  } else {
    throw SchemaError("cost: unknown type \"" + ckind + "\"");
  }

  if (j.contains("beta")) spec.beta = j["beta"].get<double>();
  if (j.contains("horizon")) spec.horizon = j["horizon"].get<int>();
  if (j.contains("solver")) {
    const json& js = j["solver"];
    if (js.contains("feas_tol")) spec.solver.feas_tol = js["feas_tol"].get<double>();
    if (js.contains("stat_tol")) spec.solver.stat_tol = js["stat_tol"].get<double>();
    if (js.contains("comp_tol")) spec.solver.comp_tol = js["comp_tol"].get<double>();
    if (js.contains("max_iter")) spec.solver.max_iter = js["max_iter"].get<int>();
  }
  return spec;
}

std::pair<TemplatePolytope, VertexConfiguration> build_template(const TemplateSource& source,
                                                                const SolverSettings& settings) {
  TemplatePolytope t;
  switch (source.kind) {
    case TemplateSource::Kind::Angles2d:
      return build_template_2d(source.angles);
    case TemplateSource::Kind::Grid3d: {
      const int r = source.grid_range;
      std::vector<Eigen::RowVector3d> rows;
      for (int i = -r; i <= r; ++i)
        for (int jj = -r; jj <= r; ++jj)
          for (int k = -r; k <= r; ++k) {
            if (!i && !jj && !k) continue;
            Eigen::RowVector3d v(i, jj, k);
            rows.push_back(v / v.norm());
          }
      t.Y.resize(static_cast<int>(rows.size()), 3);
      for (size_t rr = 0; rr < rows.size(); ++rr) t.Y.row(rr) = rows[rr];
      t.sigma = Eigen::VectorXd::Ones(t.Y.rows());
      break;
    }
    case TemplateSource::Kind::Explicit:
      t.Y = source.Y;
      t.sigma = source.sigma;
      break;
  }
  // Degenerate seeds (coincident facets happen with duplicate grid
  // directions) get a small deterministic nudge before enumeration.
  CounterRng rng(0x7e3177a7eull);
  for (int attempt = 0;; ++attempt) {
    try {
      VertexConfiguration vc = enumerate_vertex_configuration(t, settings);
      return {std::move(t), std::move(vc)};
    } catch (const NotEntirelySimpleError&) {
      if (attempt >= 5) throw;
      double scale = 1e-6 * (1.0 + t.sigma.lpNorm<Eigen::Infinity>());
      for (int i = 0; i < t.sigma.size(); ++i)
        t.sigma[i] += scale * (2.0 * rng.next_double() - 1.0);
    }
  }
}

StageCost build_stage_cost(const CostSpec& spec, const VertexConfiguration& vc,
                           const UncertainSystem& sys) {
  if (spec.kind == CostSpec::Kind::VertexWeights)
    return StageCost::vertex_form(spec.Q, spec.R, spec.S, spec.T, vc);
  return StageCost::parameter_form(spec.P, vc.num_vertices() * sys.input_dim());
}

std::string template_to_json(const TemplatePolytope& t, const VertexConfiguration& vc) {
  std::string out = "{\n  \"Y\": " + matrix_json(t.Y) + ",\n  \"sigma\": " + vector_json(t.sigma) +
                    ",\n  \"vertex_sets\": [";
  for (size_t i = 0; i < vc.vertex_sets.size(); ++i) {
    if (i) out += ",";
    out += "[";
    for (size_t k = 0; k < vc.vertex_sets[i].size(); ++k) {
      if (k) out += ",";
      out += std::to_string(vc.vertex_sets[i][k]);
    }
    out += "]";
  }
  out += "],\n  \"E\": " + matrix_json(vc.E) + "\n}\n";
  return out;
}

std::pair<TemplatePolytope, VertexConfiguration> template_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw SchemaError(std::string("template file: ") + err.what());
  }
  TemplatePolytope t;
  t.Y = parse_matrix(require(j, "Y", "template"), "Y");
  t.sigma = parse_vector(require(j, "sigma", "template"), "sigma");
  VertexConfiguration vc;
  const json& sets = require(j, "vertex_sets", "template");
  const int n = t.dim();
  for (const auto& s : sets) {
    std::vector<int> idx;
    for (const auto& e : s) idx.push_back(e.get<int>());
    if (static_cast<int>(idx.size()) != n) throw SchemaError("template: vertex set of wrong size");
    vc.vertex_sets.push_back(std::move(idx));
  }
  // Vertex maps are implied by Y and the index sets.
  for (const auto& I : vc.vertex_sets) {
    Eigen::MatrixXd YI(n, n);
    for (int k = 0; k < n; ++k) {
      if (I[k] < 0 || I[k] >= t.num_rows()) throw SchemaError("template: vertex index out of range");
      YI.row(k) = t.Y.row(I[k]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(YI);
    if (!lu.isInvertible()) throw SchemaError("template: singular vertex basis");
    Eigen::MatrixXd Yinv = lu.inverse();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, t.num_rows());
    for (int k = 0; k < n; ++k) V.col(I[k]) = Yinv.col(k);
    vc.vertex_maps.push_back(std::move(V));
  }
  vc.E = parse_matrix(require(j, "E", "template"), "E");
  if (vc.E.rows() > 0 && vc.E.cols() != t.num_rows())
    throw SchemaError("template: E column count mismatch");
  vc.E_raw = conic_matrix(t, vc.vertex_maps);
  return {std::move(t), std::move(vc)};
}

std::string synthesis_to_json(const SynthesisData& data) {
  std::string out = "{\n";
  out += "  \"sigma\": " + vector_json(data.sigma) + ",\n";
  out += "  \"beta\": " + format_double(data.beta) + ",\n";
  out += "  \"y_s\": " + vector_json(data.y_s) + ",\n";
  out += "  \"u_s\": " + vector_json(data.u_s) + ",\n";
  out += "  \"lambda\": " + vector_json(data.lambda) + ",\n";
  out += "  \"V_s\": " + format_double(data.V_s) + ",\n";
  out += "  \"u_sigma\": " + vector_json(data.u_sigma) + ",\n";
  out += "  \"gamma\": " + format_double(data.gamma) + ",\n";
  out += "  \"lipschitz\": " + format_double(data.lipschitz) + ",\n";
  out += "  \"rho\": " + format_double(data.rho) + "\n}\n";
  return out;
}

SynthesisData synthesis_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw SchemaError(std::string("synthesis file: ") + err.what());
  }
  SynthesisData d;
  d.sigma = parse_vector(require(j, "sigma", "synthesis"), "sigma");
  d.beta = require(j, "beta", "synthesis").get<double>();
  d.y_s = parse_vector(require(j, "y_s", "synthesis"), "y_s");
  d.u_s = parse_vector(require(j, "u_s", "synthesis"), "u_s");
  d.lambda = parse_vector(require(j, "lambda", "synthesis"), "lambda");
  d.V_s = require(j, "V_s", "synthesis").get<double>();
  d.u_sigma = parse_vector(require(j, "u_sigma", "synthesis"), "u_sigma");
  d.gamma = require(j, "gamma", "synthesis").get<double>();
  d.lipschitz = require(j, "lipschitz", "synthesis").get<double>();
  d.rho = require(j, "rho", "synthesis").get<double>();
  return d;
}

std::string solution_to_json(const TubeSolution& sol, const FeedbackResult& feedback) {
  std::string out = "{\n  \"y\": [";
  for (size_t k = 0; k < sol.y.size(); ++k) {
    if (k) out += ",";
    out += vector_json(sol.y[k]);
  }
  out += "],\n  \"u\": [";
  for (size_t k = 0; k < sol.u.size(); ++k) {
    if (k) out += ",";
    out += vector_json(sol.u[k]);
  }
  out += "],\n  \"u_terminal\": " + vector_json(sol.u_terminal);
  out += ",\n  \"alpha\": " + format_double(sol.alpha);
  out += ",\n  \"objective\": " + format_double(sol.objective);
  out += ",\n  \"theta\": " + vector_json(feedback.theta);
  out += ",\n  \"applied_u\": " + vector_json(feedback.input) + "\n}\n";
  return out;
}

std::string logs_to_csv(const std::vector<StepLog>& logs) {
  if (logs.empty()) return "";
  std::string out = "k";
  for (int i = 0; i < logs[0].x.size(); ++i) out += ",x" + std::to_string(i);
  for (int i = 0; i < logs[0].u.size(); ++i) out += ",u" + std::to_string(i);
  for (int i = 0; i < logs[0].w.size(); ++i) out += ",w" + std::to_string(i);
  out += ",lyapunov,residual\n";
  for (const auto& log : logs) {
    out += std::to_string(log.k);
    for (int i = 0; i < log.x.size(); ++i) out += "," + format_double(log.x[i]);
    for (int i = 0; i < log.u.size(); ++i) out += "," + format_double(log.u[i]);
    for (int i = 0; i < log.w.size(); ++i) out += "," + format_double(log.w[i]);
    out += "," + format_double(log.lyapunov) + "," + format_double(log.residual) + "\n";
  }
  return out;
}

std::string tube_dump_json(const std::vector<StepLog>& logs, const TemplatePolytope& t,
                           const VertexConfiguration& vc) {
  std::string out = "{\n  \"steps\": [";
  for (size_t k = 0; k < logs.size(); ++k) {
    if (k) out += ",";
    ConfiguredPolytope cp{&t, &vc, logs[k].y0};
    out += "\n    {\"k\": " + std::to_string(logs[k].k) + ", \"vertices\": [";
    auto pts = vertices_of(cp);
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) out += ",";
      out += vector_json(pts[i]);
    }
    out += "]}";
  }
  out += "\n  ]\n}\n";
  return out;
}

std::string tube_polylines_csv(const TubeSolution& sol, const TemplatePolytope& t,
                               const VertexConfiguration& vc) {
  std::string out = "step,vertex";
  for (int d = 0; d < t.dim(); ++d) out += ",x" + std::to_string(d);
  out += "\n";
  for (size_t k = 0; k < sol.y.size(); ++k) {
    ConfiguredPolytope cp{&t, &vc, sol.y[k]};
    std::vector<Eigen::VectorXd> pts = vertices_of(cp);
    const int count = static_cast<int>(pts.size());
    // 2-D templates built from sorted angles already list vertices in facet
    // order, so repeating the first point closes the polyline.
    const int emit = t.dim() == 2 ? count + 1 : count;
    for (int i = 0; i < emit; ++i) {
      const Eigen::VectorXd& v = pts[i % count];
      out += std::to_string(k) + "," + std::to_string(i % count);
      for (int d = 0; d < t.dim(); ++d) out += "," + format_double(v[d]);
      out += "\n";
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CctmpcError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CctmpcError("cannot write " + path);
  f << content;
}

}  // namespace cctmpc
