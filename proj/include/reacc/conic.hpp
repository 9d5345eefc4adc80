#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reacc::conic {

// Affine scalar c + sum a_i x_i over program variables.
struct AffineExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;

  AffineExpr() = default;
  AffineExpr(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)

  static AffineExpr var(int index, double coeff = 1.0);

  AffineExpr& operator+=(const AffineExpr& other);
  AffineExpr& operator-=(const AffineExpr& other);
  AffineExpr& operator*=(double k);

  // Sorted by variable with duplicates merged and zeros dropped.
  AffineExpr normalized() const;
  double evaluate(const Eigen::VectorXd& x) const;
};

AffineExpr operator+(AffineExpr a, const AffineExpr& b);
AffineExpr operator-(AffineExpr a, const AffineExpr& b);
AffineExpr operator*(AffineExpr a, double k);
AffineExpr operator*(double k, AffineExpr a);

// One upper-triangle coefficient of a PSD block; var == kConstant marks F0.
struct BlockTerm {
  int var = -1;
  int row = 0;
  int col = 0;
  double value = 0.0;
};

constexpr int kConstant = -1;

// Affine symmetric map F0 + sum x_i F_i stored as upper-triangle triplets.
class PsdBlock {
 public:
  PsdBlock() = default;
  PsdBlock(int dim, std::string name = {});

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const std::vector<BlockTerm>& terms() const { return terms_; }

  // Adds expr to entry (i, j) and its mirror.
  void add(int i, int j, const AffineExpr& expr);
  void add_constant(int i, int j, double value);
  void add_term(int var, int i, int j, double value);

  // Merges duplicate triplets and drops exact zeros.
  void compress();

  // Multiplies every coefficient by k > 0 (PSD-ness is unchanged).
  void scale(double k);
  double max_abs_coefficient() const;
  // Scales so the largest absolute coefficient is 1 and returns the factor applied.
  double normalize();

  Eigen::MatrixXd constant_matrix() const;
  Eigen::MatrixXd coefficient_matrix(int var) const;
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const;

 private:
  int dim_ = 0;
  std::string name_;
  std::vector<BlockTerm> terms_;
};

enum class Sense { kGreaterEqual, kEqual };

// expr >= 0 or expr == 0.
struct LinearConstraint {
  std::string name;
  AffineExpr expr;
  Sense sense = Sense::kGreaterEqual;
};

struct NonnegGroup {
  std::string name;
  std::vector<int> vars;
};

struct BlockHandle {
  int index = -1;
};

class ConicProgram {
 public:
  int add_variable(const std::string& name);
  // Adds `count` variables named prefix[0..count) and returns the first index.
  int add_variables(const std::string& prefix, int count);
  int n_vars() const { return static_cast<int>(names_.size()); }
  const std::string& variable_name(int i) const { return names_.at(i); }
  int find_variable(std::string_view name) const;

  // Minimized.
  void set_objective(const AffineExpr& objective);
  const AffineExpr& objective() const { return objective_; }

  BlockHandle add_psd_block(PsdBlock block);
  int add_linear(LinearConstraint constraint);
  void add_diag_nonneg(const std::string& name, std::vector<int> vars);

  const std::vector<PsdBlock>& psd_blocks() const { return blocks_; }
  const std::vector<LinearConstraint>& linear_constraints() const { return linear_; }
  const std::vector<NonnegGroup>& nonneg_groups() const { return nonneg_; }

  // Throws std::invalid_argument if a variable index or block entry is out of range.
  void validate() const;

  std::string dump() const;
  static ConicProgram parse(std::string_view text);

 private:
  void check_expr(const AffineExpr& e, const std::string& where) const;

  std::vector<std::string> names_;
  AffineExpr objective_;
  std::vector<PsdBlock> blocks_;
  std::vector<LinearConstraint> linear_;
  std::vector<NonnegGroup> nonneg_;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };

const char* to_string(SolveStatus status);

struct SolverOptions {
  double feas_tol = 1e-7;
  double gap_tol = 1e-6;
  int max_iterations = 120;
  bool verbose = false;  // per-iteration log on stderr
};

struct SolveResult {
  SolveStatus status = SolveStatus::kNumericalFailure;
  Eigen::VectorXd values;  // empty unless optimal
  double objective_value = 0.0;
  double solve_time = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double relative_gap = 0.0;
  std::string message;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual std::string name() const = 0;
  virtual SolveResult solve(const ConicProgram& program, const SolverOptions& options) const = 0;
};

std::shared_ptr<const ConicBackend> default_backend();

SolveResult solve(const ConicProgram& program, const SolverOptions& options = {});

struct PsdCheck {
  bool psd = false;
  double min_eigenvalue = 0.0;
};

// Dense symmetric eigen-decomposition; rejects asymmetric input.
PsdCheck check_psd(const Eigen::MatrixXd& matrix, double tol);

struct FeasibilityReport {
  std::vector<double> block_min_eigenvalues;
  std::vector<double> block_scales;  // max(1, largest |entry|) of each assembled block
  double min_inequality = 0.0;       // smallest expr value over >= rows and nonneg vars
  double max_equality_violation = 0.0;
};

FeasibilityReport evaluate_feasibility(const ConicProgram& program, const Eigen::VectorXd& x);

}  // namespace reacc::conic
