#pragma once

#include <string>
#include <vector>

#include "cctmpc/controller.hpp"
#include "cctmpc/simulator.hpp"
#include "cctmpc/stage_cost.hpp"
#include "cctmpc/synthesis.hpp"
#include "cctmpc/system.hpp"

namespace cctmpc {

class SchemaError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

/// Template source options accepted in a problem file.
struct TemplateSource {
  enum class Kind { Angles2d, Grid3d, Explicit } kind = Kind::Explicit;
  std::vector<double> angles;  // Angles2d
  int grid_range = 1;          // Grid3d: {-r..r}^3 \ {0}
  Eigen::MatrixXd Y;           // Explicit
  Eigen::VectorXd sigma;
};

struct CostSpec {
  enum class Kind { VertexWeights, ParameterQuadratic } kind = Kind::VertexWeights;
  Eigen::MatrixXd Q, R, S, T;  // VertexWeights
  Eigen::MatrixXd P;           // ParameterQuadratic
};

struct ProblemSpec {
  UncertainSystem system;
  TemplateSource template_source;
  CostSpec cost;
  double beta = 0.95;
  int horizon = 10;
  SolverSettings solver;
};

/// Parses a problem file; throws SchemaError with a description on malformed
/// input.
ProblemSpec parse_problem(const std::string& json_text);

/// Builds the template and vertex configuration a problem asks for: the
/// closed-form 2-D path for angle lists, the normalized integer-grid rows
/// for 3-D recipes, and plain enumeration otherwise. Degenerate seeds are
/// retried with a small deterministic perturbation before giving up.
std::pair<TemplatePolytope, VertexConfiguration> build_template(const TemplateSource& source,
                                                                const SolverSettings& settings = {});

StageCost build_stage_cost(const CostSpec& spec, const VertexConfiguration& vc,
                           const UncertainSystem& sys);

std::string template_to_json(const TemplatePolytope& t, const VertexConfiguration& vc);
std::pair<TemplatePolytope, VertexConfiguration> template_from_json(const std::string& json_text);

std::string synthesis_to_json(const SynthesisData& data);
SynthesisData synthesis_from_json(const std::string& json_text);

std::string solution_to_json(const TubeSolution& sol, const FeedbackResult& feedback);

std::string logs_to_csv(const std::vector<StepLog>& logs);

/// Per-step polytope vertex lists of a closed-loop run, as JSON.
std::string tube_dump_json(const std::vector<StepLog>& logs, const TemplatePolytope& t,
                           const VertexConfiguration& vc);

/// Per-step polytope boundary polylines; 2-D vertices are emitted in facet
/// order so the polyline closes, higher dimensions list the raw vertices.
std::string tube_polylines_csv(const TubeSolution& sol, const TemplatePolytope& t,
                               const VertexConfiguration& vc);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Shortest-width decimal with 17 significant digits; round-trips exactly.
std::string format_double(double v);

}  // namespace cctmpc
