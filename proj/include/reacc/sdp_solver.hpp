#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <vector>

#include "reacc/conic.hpp"

namespace reacc::conic {

// Infeasible-start primal-dual interior-point method (HKM direction, Mehrotra
// predictor-corrector) for min c'x s.t. F0 + sum x_i F_i >= 0 (PSD blocks) and
// a'x + b >= 0 rows. Equalities are eliminated through a nullspace basis.
class InteriorPointBackend final : public ConicBackend {
 public:
  std::string name() const override { return "primal-dual-ipm"; }
  SolveResult solve(const ConicProgram& program, const SolverOptions& options) const override;
};

namespace detail {

struct CoeffEntry {
  int row = 0;
  int col = 0;  // row <= col
  double value = 0.0;
};

// One PSD block in solver form. Each coefficient matrix is factorized as
// sum_t (e_{hub_t} g_t' + g_t e_{hub_t}') so Schur entries reduce to small dense products.
struct BlockStructure {
  int dim = 0;
  Eigen::MatrixXd constant;
  std::vector<int> vars;                          // solver variable indices
  std::vector<std::vector<CoeffEntry>> coeffs;    // parallel to vars

  std::vector<int> group_hub;
  std::vector<int> group_var;  // solver variable index of each group
  Eigen::SparseMatrix<double> G;  // dim x groups

  void factorize();
  Eigen::MatrixXd coefficient(int local) const;
};

// Adds tr(F_i X F_j Z) for all variable pairs of the block into `schur`.
void accumulate_schur(const BlockStructure& block, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& Z, Eigen::MatrixXd& schur);

// Reference implementation with dense coefficient matrices.
void accumulate_schur_naive(const BlockStructure& block, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Z, Eigen::MatrixXd& schur);

// min(1, tau * a_max) where a_max is the largest a keeping X + a dX PSD, given the
// Cholesky factor of X. Blocks above `dense_limit` use a Lanczos estimate; with `verify`
// the returned step is backtracked until X + a dX factorizes.
double step_length(const Eigen::LLT<Eigen::MatrixXd>& chol_x, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& dX, double tau, bool verify, int dense_limit = 200);

// Same quantity from the inverse Cholesky factor Linv = L^{-1} of X. Larger blocks use the
// smallest Lanczos Ritz value; with `verify` the step is confirmed by a Cholesky test of
// I + (a / tau) Linv dX Linv' and recomputed from exact eigenvalues when the test fails.
double step_length_inverse(const Eigen::MatrixXd& Linv, const Eigen::MatrixXd& dX, double tau,
                           bool verify);

}  // namespace detail
}  // namespace reacc::conic
