#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cctmpc/solver.hpp"

namespace cctmpc {

/// Family of polytopes P(Y,y) = {x : Yx <= y} with fixed facet normals Y and
/// a seed parameter sigma.
struct TemplatePolytope {
  Eigen::MatrixXd Y;      // m x n
  Eigen::VectorXd sigma;  // size m

  int num_rows() const { return static_cast<int>(Y.rows()); }
  int dim() const { return static_cast<int>(Y.cols()); }

  /// Checks for zero rows and that P(Y,sigma) is nonempty and bounded
  /// (one LP per +-coordinate direction). Throws CctmpcError on violation.
  void validate(const SolverSettings& settings = {}) const;
};

/// Vertex index sets, vertex maps and the conic configuration matrix of an
/// entirely simple seed polytope. For any y with E y <= 0 the polytope
/// P(Y,y) equals conv{V_i y}.
struct VertexConfiguration {
  std::vector<std::vector<int>> vertex_sets;  // each a sorted n-subset, 0-based
  std::vector<Eigen::MatrixXd> vertex_maps;   // V_i, n x m
  Eigen::MatrixXd E_raw;                      // stacked Y V_i - I blocks
  Eigen::MatrixXd E;                          // after redundancy removal

  int num_vertices() const { return static_cast<int>(vertex_sets.size()); }
};

/// Polytope P(Y,y) whose parameter lies in the vertex configuration cone.
struct ConfiguredPolytope {
  const TemplatePolytope* tmpl = nullptr;
  const VertexConfiguration* config = nullptr;
  Eigen::VectorXd y;
};

class NotEntirelySimpleError : public CctmpcError {
 public:
  NotEntirelySimpleError(std::string msg, std::vector<std::vector<int>> witnesses)
      : CctmpcError(std::move(msg)), witnesses_(std::move(witnesses)) {}
  const std::vector<std::vector<int>>& witnesses() const { return witnesses_; }

 private:
  std::vector<std::vector<int>> witnesses_;
};

class AngleSpacingError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

class ConfigurationViolatedError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

/// True iff the face of P(Y,y) with active rows I is nonempty. I may be
/// empty, in which case this tests P(Y,y) itself.
bool face_nonempty(const TemplatePolytope& t, const Eigen::VectorXd& y,
                   const std::vector<int>& rows, const SolverSettings& settings = {});

/// Enumerates all vertices of P(Y,sigma) by exhausting the n-subsets of rows,
/// builds the vertex maps V_i = Y_I^{-1} 1_I, the raw conic matrix and its
/// reduced form. Throws NotEntirelySimpleError when a feasible basic point
/// has more than n active rows, and CctmpcError when the seed is unbounded.
VertexConfiguration enumerate_vertex_configuration(const TemplatePolytope& t,
                                                   const SolverSettings& settings = {});

struct SimplicityReport {
  bool entirely_simple = false;
  std::vector<std::vector<int>> witnesses;  // active sets with > n rows
  int num_vertices = 0;
};

/// Vertex-level entirely-simple check: every vertex has exactly n active,
/// linearly independent rows. Report-style; never throws on a degeneracy.
SimplicityReport check_entirely_simple(const TemplatePolytope& t);

/// Stacks the blocks Y V_i - I into the raw conic constraint matrix.
Eigen::MatrixXd conic_matrix(const TemplatePolytope& t,
                             const std::vector<Eigen::MatrixXd>& vertex_maps);

/// Removes redundant rows of a conic matrix. The scan is sequential and
/// greedy in row order: a row is dropped iff its support value over the cone
/// of all other currently retained rows (intersected with the unit box) is
/// nonpositive. Zero rows and positively scaled duplicates are dropped
/// upfront. The per-row LPs are solved with constraint generation so that
/// large inputs stay tractable; the result is identical to solving each LP
/// against the full retained set.
Eigen::MatrixXd reduce_conic_rows(const Eigen::MatrixXd& E_raw,
                                  const SolverSettings& settings = {});

/// Certifies cone equality of a reduction: every row of E_raw must have
/// support value <= tol over {E_reduced y <= 0, ||y||_inf <= 1}.
bool reduction_certificate(const Eigen::MatrixXd& E_raw, const Eigen::MatrixXd& E_reduced,
                           double tol = 1e-8, const SolverSettings& settings = {});

/// Closed-form 2-D construction: normals [cos(phi_i), sin(phi_i)] for sorted
/// angles, seed sigma = 1, vertex sets {i, i+1} with wraparound, and a banded
/// conic matrix built directly from the angle differences (m rows, <= 3m
/// nonzeros) without going through conic_matrix + reduction.
std::pair<TemplatePolytope, VertexConfiguration> build_template_2d(const std::vector<double>& angles);

/// All points V_i y (duplicates retained). Requires E y <= cone_tol with
/// cone_tol = 1e-9 * (1 + ||y||_inf); throws ConfigurationViolatedError.
std::vector<Eigen::VectorXd> vertices_of(const ConfiguredPolytope& cp);

/// LP test for x in conv(vertices), up to Chebyshev distance tol.
bool hull_membership(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& vertices,
                     double tol = 1e-8, const SolverSettings& settings = {});

/// Support parameter y_i = max_v Y_i v over a vertex cloud.
Eigen::VectorXd support_parameter(const TemplatePolytope& t,
                                  const std::vector<Eigen::VectorXd>& vertices);

/// Random parameters inside the configuration cone {E y <= 0}, produced by
/// mixing LP-extreme points of the cone's unit-box section with the seed.
/// Deterministic for a fixed seed.
std::vector<Eigen::VectorXd> sample_configuration_parameters(const TemplatePolytope& t,
                                                             const VertexConfiguration& vc,
                                                             int count, std::uint64_t seed,
                                                             const SolverSettings& settings = {});

}  // namespace cctmpc
