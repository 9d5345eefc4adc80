#include "reacc/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "reacc/sdp_solver.hpp"

namespace reacc::conic {

AffineExpr AffineExpr::var(int index, double coeff) {
  AffineExpr e;
  e.terms.emplace_back(index, coeff);
  return e;
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& other) {
  constant += other.constant;
  terms.insert(terms.end(), other.terms.begin(), other.terms.end());
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other) {
  constant -= other.constant;
  for (const auto& [v, a] : other.terms) {
    terms.emplace_back(v, -a);
  }
  return *this;
}

AffineExpr& AffineExpr::operator*=(double k) {
  constant *= k;
  for (auto& t : terms) {
    t.second *= k;
  }
  return *this;
}

AffineExpr AffineExpr::normalized() const {
  std::map<int, double> acc;
  for (const auto& [v, a] : terms) {
    acc[v] += a;
  }
  AffineExpr out(constant);
  for (const auto& [v, a] : acc) {
    if (a != 0.0) {
      out.terms.emplace_back(v, a);
    }
  }
  return out;
}

double AffineExpr::evaluate(const Eigen::VectorXd& x) const {
  double s = constant;
  for (const auto& [v, a] : terms) {
    s += a * x(v);
  }
  return s;
}

AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
AffineExpr operator*(AffineExpr a, double k) { return a *= k; }
AffineExpr operator*(double k, AffineExpr a) { return a *= k; }

PsdBlock::PsdBlock(int dim, std::string name) : dim_(dim), name_(std::move(name)) {
  if (dim < 1) {
    throw std::invalid_argument("psd block: dimension must be >= 1");
  }
}

void PsdBlock::add_term(int var, int i, int j, double value) {
  if (i < 0 || j < 0 || i >= dim_ || j >= dim_) {
    throw std::invalid_argument("psd block '" + name_ + "': entry (" + std::to_string(i) + "," +
                                std::to_string(j) + ") outside dimension " + std::to_string(dim_));
  }
  if (value == 0.0) {
    return;
  }
  terms_.push_back({var, std::min(i, j), std::max(i, j), value});
}

void PsdBlock::add_constant(int i, int j, double value) { add_term(kConstant, i, j, value); }

void PsdBlock::add(int i, int j, const AffineExpr& expr) {
  add_term(kConstant, i, j, expr.constant);
  for (const auto& [v, a] : expr.terms) {
    add_term(v, i, j, a);
  }
}

void PsdBlock::scale(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) {
    throw std::invalid_argument("psd block: scale factor must be positive and finite");
  }
  for (auto& t : terms_) {
    t.value *= k;
  }
}

double PsdBlock::max_abs_coefficient() const {
  double out = 0.0;
  for (const auto& t : terms_) {
    out = std::max(out, std::abs(t.value));
  }
  return out;
}

double PsdBlock::normalize() {
  compress();
  const double top = max_abs_coefficient();
  if (top == 0.0) {
    return 1.0;
  }
  scale(1.0 / top);
  return 1.0 / top;
}

void PsdBlock::compress() {
  std::map<std::tuple<int, int, int>, double> acc;
  for (const auto& t : terms_) {
    acc[{t.var, t.row, t.col}] += t.value;
  }
  terms_.clear();
  for (const auto& [key, value] : acc) {
    if (value != 0.0) {
      terms_.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), value});
    }
  }
}

namespace {

void scatter(Eigen::MatrixXd& m, const BlockTerm& t, double scale) {
  m(t.row, t.col) += scale * t.value;
  if (t.row != t.col) {
    m(t.col, t.row) += scale * t.value;
  }
}

}  // namespace

Eigen::MatrixXd PsdBlock::constant_matrix() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& t : terms_) {
    if (t.var == kConstant) {
      scatter(m, t, 1.0);
    }
  }
  return m;
}

Eigen::MatrixXd PsdBlock::coefficient_matrix(int var) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& t : terms_) {
    if (t.var == var) {
      scatter(m, t, 1.0);
    }
  }
  return m;
}

Eigen::MatrixXd PsdBlock::evaluate(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& t : terms_) {
    scatter(m, t, t.var == kConstant ? 1.0 : x(t.var));
  }
  return m;
}

int ConicProgram::add_variable(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
    throw std::invalid_argument("conic program: variable names must be non-empty without spaces");
  }
  names_.push_back(name);
  return static_cast<int>(names_.size()) - 1;
}

int ConicProgram::add_variables(const std::string& prefix, int count) {
  const int first = n_vars();
  for (int i = 0; i < count; ++i) {
    add_variable(prefix + "[" + std::to_string(i) + "]");
  }
  return first;
}

int ConicProgram::find_variable(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

void ConicProgram::check_expr(const AffineExpr& e, const std::string& where) const {
  if (!std::isfinite(e.constant)) {
    throw std::invalid_argument(where + ": non-finite constant");
  }
  for (const auto& [v, a] : e.terms) {
    if (v < 0 || v >= n_vars()) {
      throw std::invalid_argument(where + ": unknown variable index " + std::to_string(v));
    }
    if (!std::isfinite(a)) {
      throw std::invalid_argument(where + ": non-finite coefficient");
    }
  }
}

void ConicProgram::set_objective(const AffineExpr& objective) {
  check_expr(objective, "objective");
  objective_ = objective.normalized();
}

BlockHandle ConicProgram::add_psd_block(PsdBlock block) {
  if (block.dim() < 1) {
    throw std::invalid_argument("add_psd_block: block dimension must be >= 1");
  }
  block.compress();
  for (const auto& t : block.terms()) {
    if (t.row < 0 || t.col < 0 || t.row >= block.dim() || t.col >= block.dim()) {
      throw std::invalid_argument("add_psd_block: entry outside block dimension");
    }
    if (t.var != kConstant && (t.var < 0 || t.var >= n_vars())) {
      throw std::invalid_argument("add_psd_block: unknown variable index " +
                                  std::to_string(t.var));
    }
    if (!std::isfinite(t.value)) {
      throw std::invalid_argument("add_psd_block: non-finite coefficient");
    }
  }
  blocks_.push_back(std::move(block));
  return {static_cast<int>(blocks_.size()) - 1};
}

int ConicProgram::add_linear(LinearConstraint constraint) {
  check_expr(constraint.expr, "linear constraint '" + constraint.name + "'");
  constraint.expr = constraint.expr.normalized();
  linear_.push_back(std::move(constraint));
  return static_cast<int>(linear_.size()) - 1;
}

void ConicProgram::add_diag_nonneg(const std::string& name, std::vector<int> vars) {
  for (int v : vars) {
    if (v < 0 || v >= n_vars()) {
      throw std::invalid_argument("add_diag_nonneg: unknown variable index " + std::to_string(v));
    }
  }
  nonneg_.push_back({name, std::move(vars)});
}

void ConicProgram::validate() const {
  check_expr(objective_, "objective");
  for (const auto& b : blocks_) {
    for (const auto& t : b.terms()) {
      if (t.row > t.col || t.col >= b.dim() || t.row < 0) {
        throw std::invalid_argument("block '" + b.name() + "': malformed entry");
      }
      if (t.var != kConstant && (t.var < 0 || t.var >= n_vars())) {
        throw std::invalid_argument("block '" + b.name() + "': unknown variable");
      }
    }
  }
  for (const auto& c : linear_) {
    check_expr(c.expr, "linear constraint '" + c.name + "'");
  }
  for (const auto& g : nonneg_) {
    for (int v : g.vars) {
      if (v < 0 || v >= n_vars()) {
        throw std::invalid_argument("nonneg group '" + g.name + "': unknown variable");
      }
    }
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string label(const std::string& s) { return s.empty() ? "-" : s; }

std::string unlabel(const std::string& s) { return s == "-" ? std::string() : s; }

void write_expr(std::ostringstream& os, const AffineExpr& e) {
  os << fmt_double(e.constant) << ' ' << e.terms.size();
  for (const auto& [v, a] : e.terms) {
    os << ' ' << v << ' ' << fmt_double(a);
  }
  os << '\n';
}

AffineExpr read_expr(std::istringstream& is) {
  AffineExpr e;
  std::size_t n = 0;
  if (!(is >> e.constant >> n)) {
    throw std::invalid_argument("conic dump: malformed affine expression");
  }
  for (std::size_t i = 0; i < n; ++i) {
    int v = 0;
    double a = 0.0;
    if (!(is >> v >> a)) {
      throw std::invalid_argument("conic dump: malformed affine term");
    }
    e.terms.emplace_back(v, a);
  }
  return e;
}

}  // namespace

std::string ConicProgram::dump() const {
  std::ostringstream os;
  os << "conic-program 1\n";
  os << "variables " << names_.size() << '\n';
  for (std::size_t i = 0; i < names_.size(); ++i) {
    os << "var " << i << ' ' << names_[i] << '\n';
  }
  os << "objective ";
  write_expr(os, objective_);
  for (const auto& b : blocks_) {
    os << "block " << label(b.name()) << ' ' << b.dim() << ' ' << b.terms().size() << '\n';
    for (const auto& t : b.terms()) {
      os << t.var << ' ' << t.row << ' ' << t.col << ' ' << fmt_double(t.value) << '\n';
    }
  }
  for (const auto& c : linear_) {
    os << "linear " << (c.sense == Sense::kEqual ? "eq" : "ge") << ' ' << label(c.name) << ' ';
    write_expr(os, c.expr);
  }
  for (const auto& g : nonneg_) {
    os << "nonneg " << label(g.name) << ' ' << g.vars.size();
    for (int v : g.vars) {
      os << ' ' << v;
    }
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

ConicProgram ConicProgram::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  ConicProgram prog;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("conic dump line " + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line[0] != '#') {
        return true;
      }
    }
    return false;
  };
  if (!next_line() || line.rfind("conic-program 1", 0) != 0) {
    fail("missing 'conic-program 1' header");
  }
  bool ended = false;
  while (next_line()) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "variables") {
      continue;
    }
    if (key == "var") {
      std::size_t idx = 0;
      std::string name;
      if (!(is >> idx >> name) || idx != prog.names_.size()) {
        fail("bad variable record");
      }
      prog.add_variable(name);
    } else if (key == "objective") {
      prog.set_objective(read_expr(is));
    } else if (key == "block") {
      std::string name;
      int dim = 0;
      std::size_t count = 0;
      if (!(is >> name >> dim >> count)) {
        fail("bad block header");
      }
      PsdBlock block(dim, unlabel(name));
      for (std::size_t i = 0; i < count; ++i) {
        if (!next_line()) {
          fail("truncated block");
        }
        std::istringstream es(line);
        BlockTerm t;
        if (!(es >> t.var >> t.row >> t.col >> t.value)) {
          fail("bad block entry");
        }
        block.add_term(t.var, t.row, t.col, t.value);
      }
      prog.add_psd_block(std::move(block));
    } else if (key == "linear") {
      std::string sense;
      std::string name;
      if (!(is >> sense >> name) || (sense != "eq" && sense != "ge")) {
        fail("bad linear record");
      }
      prog.add_linear({unlabel(name), read_expr(is),
                       sense == "eq" ? Sense::kEqual : Sense::kGreaterEqual});
    } else if (key == "nonneg") {
      std::string name;
      std::size_t n = 0;
      if (!(is >> name >> n)) {
        fail("bad nonneg record");
      }
      std::vector<int> vars(n);
      for (auto& v : vars) {
        if (!(is >> v)) {
          fail("bad nonneg index");
        }
      }
      prog.add_diag_nonneg(unlabel(name), std::move(vars));
    } else if (key == "end") {
      ended = true;
      break;
    } else {
      fail("unknown record '" + key + "'");
    }
  }
  if (!ended) {
    fail("missing 'end'");
  }
  return prog;
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kInfeasible:
      return "infeasible";
    case SolveStatus::kUnbounded:
      return "unbounded";
    case SolveStatus::kNumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

std::shared_ptr<const ConicBackend> default_backend() {
  static const auto backend = std::make_shared<const InteriorPointBackend>();
  return backend;
}

SolveResult solve(const ConicProgram& program, const SolverOptions& options) {
  return default_backend()->solve(program, options);
}

PsdCheck check_psd(const Eigen::MatrixXd& matrix, double tol) {
  if (matrix.rows() != matrix.cols()) {
    throw std::invalid_argument("check_psd: matrix must be square");
  }
  if (matrix.size() == 0) {
    return {true, 0.0};
  }
  if (!matrix.allFinite()) {
    throw std::invalid_argument("check_psd: non-finite entry");
  }
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("check_psd: matrix is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("check_psd: eigen-decomposition failed");
  }
  const double lo = eig.eigenvalues().minCoeff();
  return {lo >= -tol, lo};
}

FeasibilityReport evaluate_feasibility(const ConicProgram& program, const Eigen::VectorXd& x) {
  if (x.size() != program.n_vars()) {
    throw std::invalid_argument("evaluate_feasibility: value vector has wrong length");
  }
  FeasibilityReport rep;
  for (const auto& b : program.psd_blocks()) {
    const Eigen::MatrixXd m = b.evaluate(x);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    rep.block_min_eigenvalues.push_back(eig.eigenvalues().minCoeff());
    rep.block_scales.push_back(std::max(1.0, m.cwiseAbs().maxCoeff()));
  }
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& c : program.linear_constraints()) {
    const double v = c.expr.evaluate(x);
    if (c.sense == Sense::kEqual) {
      rep.max_equality_violation = std::max(rep.max_equality_violation, std::abs(v));
    } else {
      lo = std::min(lo, v);
    }
  }
  for (const auto& g : program.nonneg_groups()) {
    for (int v : g.vars) {
      lo = std::min(lo, x(v));
    }
  }
  rep.min_inequality = std::isfinite(lo) ? lo : 0.0;
  return rep;
}

}  // namespace reacc::conic
