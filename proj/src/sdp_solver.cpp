#include "reacc/sdp_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

namespace reacc::conic {

namespace detail {

namespace {

constexpr int kExactStepDim = 16;
constexpr int kLanczosSteps = 40;

}  // namespace

void BlockStructure::factorize() {
  group_hub.clear();
  group_var.clear();
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<int> count(dim, 0);
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const auto& entries = coeffs[j];
    for (const auto& e : entries) {
      count[e.row] += (e.row == e.col) ? 2 : 1;
      count[e.col] += (e.row == e.col) ? 0 : 1;
    }
    std::map<int, std::map<int, double>> groups;
    for (const auto& e : entries) {
      if (e.row == e.col) {
        groups[e.row][e.row] += 0.5 * e.value;
        continue;
      }
      const bool row_hub = count[e.row] > count[e.col] ||
                           (count[e.row] == count[e.col] && e.row < e.col);
      const int hub = row_hub ? e.row : e.col;
      const int other = row_hub ? e.col : e.row;
      groups[hub][other] += e.value;
    }
    for (const auto& e : entries) {
      count[e.row] = 0;
      count[e.col] = 0;
    }
    for (const auto& [hub, g] : groups) {
      const int t = static_cast<int>(group_hub.size());
      group_hub.push_back(hub);
      group_var.push_back(vars[j]);
      for (const auto& [idx, v] : g) {
        trip.emplace_back(idx, t, v);
      }
    }
  }
  G.resize(dim, static_cast<int>(group_hub.size()));
  G.setFromTriplets(trip.begin(), trip.end());
  G.makeCompressed();
}

Eigen::MatrixXd BlockStructure::coefficient(int local) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& e : coeffs[local]) {
    m(e.row, e.col) += e.value;
    if (e.row != e.col) {
      m(e.col, e.row) += e.value;
    }
  }
  return m;
}

void accumulate_schur(const BlockStructure& block, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& Z, Eigen::MatrixXd& schur) {
  const int T = static_cast<int>(block.group_hub.size());
  if (T == 0) {
    return;
  }
  const Eigen::MatrixXd XG = X * block.G;
  const Eigen::MatrixXd ZG = Z * block.G;
  const Eigen::MatrixXd GXG = block.G.transpose() * XG;
  const Eigen::MatrixXd GZG = block.G.transpose() * ZG;
  Eigen::MatrixXd XGh(T, T);
  Eigen::MatrixXd ZGh(T, T);
  Eigen::MatrixXd Xhh(T, T);
  Eigen::MatrixXd Zhh(T, T);
  for (int t = 0; t < T; ++t) {
    const int a = block.group_hub[t];
    XGh.row(t) = XG.row(a);
    ZGh.row(t) = ZG.row(a);
    for (int s = 0; s < T; ++s) {
      const int b = block.group_hub[s];
      Xhh(t, s) = X(a, b);
      Zhh(t, s) = Z(a, b);
    }
  }
  const Eigen::MatrixXd term = XGh.transpose().cwiseProduct(ZGh) +
                               XGh.cwiseProduct(ZGh.transpose()) + GXG.cwiseProduct(Zhh) +
                               Xhh.cwiseProduct(GZG);
  for (int t = 0; t < T; ++t) {
    const int i = block.group_var[t];
    for (int s = 0; s < T; ++s) {
      schur(i, block.group_var[s]) += term(t, s);
    }
  }
}

void accumulate_schur_naive(const BlockStructure& block, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Z, Eigen::MatrixXd& schur) {
  const int nv = static_cast<int>(block.vars.size());
  std::vector<Eigen::MatrixXd> XFZ(nv);
  for (int j = 0; j < nv; ++j) {
    XFZ[j] = X * block.coefficient(j) * Z;
  }
  for (int i = 0; i < nv; ++i) {
    const Eigen::MatrixXd Fi = block.coefficient(i);
    for (int j = 0; j < nv; ++j) {
      schur(block.vars[i], block.vars[j]) += (Fi.cwiseProduct(XFZ[j])).sum();
    }
  }
}

namespace {

// Smallest eigenvalue estimate of L^{-1} dX L^{-T} by Lanczos with full reorthogonalization.
double lanczos_min_eig(const Eigen::LLT<Eigen::MatrixXd>& chol, const Eigen::MatrixXd& dX,
                       int steps) {
  const int n = static_cast<int>(dX.rows());
  const auto L = chol.matrixL();
  auto apply = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd w = L.transpose().solve(v);
    w = dX * w;
    return L.solve(w);
  };
  Eigen::MatrixXd V(n, steps + 1);
  Eigen::VectorXd alpha(steps);
  Eigen::VectorXd beta(steps);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    v(i) += 0.1 * std::sin(1.0 + 7.0 * i);
  }
  V.col(0) = v.normalized();
  int k = 0;
  for (; k < steps; ++k) {
    Eigen::VectorXd w = apply(V.col(k));
    alpha(k) = V.col(k).dot(w);
    w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    beta(k) = w.norm();
    if (beta(k) < 1e-12 * (1.0 + std::abs(alpha(k)))) {
      ++k;
      break;
    }
    V.col(k + 1) = w / beta(k);
  }
  Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    Tm(i, i) = alpha(i);
    if (i + 1 < k) {
      Tm(i, i + 1) = Tm(i + 1, i) = beta(i);
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
  const double theta = es.eigenvalues()(0);
  const double resid = std::abs(beta(k - 1) * es.eigenvectors()(k - 1, 0));
  return theta - resid;
}

// Smallest Ritz value of a dense symmetric matrix (an upper bound on its smallest eigenvalue).
double lanczos_min_ritz(const Eigen::MatrixXd& W, int steps) {
  const int n = static_cast<int>(W.rows());
  Eigen::MatrixXd V(n, steps + 1);
  Eigen::VectorXd alpha(steps);
  Eigen::VectorXd beta(steps);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = 1.0 + 0.5 * std::sin(1.0 + 7.0 * i);
  }
  V.col(0) = v.normalized();
  int k = 0;
  for (; k < steps; ++k) {
    Eigen::VectorXd w = W * V.col(k);
    alpha(k) = V.col(k).dot(w);
    w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    beta(k) = w.norm();
    if (beta(k) < 1e-13 * (1.0 + std::abs(alpha(k)))) {
      ++k;
      break;
    }
    V.col(k + 1) = w / beta(k);
  }
  Eigen::VectorXd diag = alpha.head(k);
  Eigen::VectorXd off = beta.head(std::max(k - 1, 0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

double step_length(const Eigen::LLT<Eigen::MatrixXd>& chol_x, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& dX, double tau, bool verify, int dense_limit) {
  const int n = static_cast<int>(X.rows());
  double lam = 0.0;
  const bool dense = n <= dense_limit;
  if (dense) {
    const Eigen::MatrixXd half = chol_x.matrixL().solve(dX);
    const Eigen::MatrixXd half_t = half.transpose();
    Eigen::MatrixXd W = chol_x.matrixL().solve(half_t);
    W = 0.5 * (W + W.transpose());
    lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W, Eigen::EigenvaluesOnly)
              .eigenvalues()(0);
  } else {
    lam = lanczos_min_eig(chol_x, dX, std::min(n, 30));
  }
  double alpha = (lam < 0.0) ? std::min(1.0, -tau / lam) : 1.0;
  if (dense || !verify) {
    return alpha;
  }
  for (int attempt = 0; attempt < 40; ++attempt) {
    const Eigen::LLT<Eigen::MatrixXd> trial(X + alpha * dX);
    if (trial.info() == Eigen::Success) {
      return alpha;
    }
    alpha *= 0.8;
  }
  return 0.0;
}

double step_length_inverse(const Eigen::MatrixXd& Linv, const Eigen::MatrixXd& dX, double tau,
                           bool verify) {
  const int n = static_cast<int>(dX.rows());
  if (n == 1) {
    const double lam = dX(0, 0) * Linv(0, 0) * Linv(0, 0);
    return (lam < 0.0) ? std::min(1.0, -tau / lam) : 1.0;
  }
  Eigen::MatrixXd W = Linv.triangularView<Eigen::Lower>() * dX;
  W = (Linv.triangularView<Eigen::Lower>() * W.transpose()).eval();
  W = 0.5 * (W + W.transpose());
  auto exact = [&] {
    const double lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W, Eigen::EigenvaluesOnly)
                           .eigenvalues()(0);
    return (lam < 0.0) ? std::min(1.0, -tau / lam) : 1.0;
  };
  if (n <= kExactStepDim) {
    return exact();
  }
  const double theta = lanczos_min_ritz(W, std::min(n, kLanczosSteps));
  const double alpha = (theta < 0.0) ? std::min(1.0, -tau / theta) : 1.0;
  if (!verify) {
    return alpha;
  }
  const Eigen::LLT<Eigen::MatrixXd> check(Eigen::MatrixXd::Identity(n, n) + (alpha / tau) * W);
  return check.info() == Eigen::Success ? alpha : exact();
}

}  // namespace detail

namespace {

using detail::BlockStructure;
using detail::CoeffEntry;
using Clock = std::chrono::steady_clock;

// Extra iterations spent tightening toward the internal tolerances once the caller's are met.
constexpr int kPolishIterations = 2;

struct LpRow {
  std::map<int, double> coeffs;  // original variable index
  double constant = 0.0;
};

// Solver-form problem over reduced variables y, with x = x_off + T y.
struct Prepared {
  int n_orig = 0;
  int n = 0;
  bool identity_map = true;
  Eigen::MatrixXd T;           // used when !identity_map
  std::vector<int> orig_of;    // identity_map: solver var -> original var
  Eigen::VectorXd x_off;
  Eigen::VectorXd c;
  double c0 = 0.0;
  std::vector<BlockStructure> blocks;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd var_scale;
  double obj_scale = 1.0;

  bool decided = false;
  SolveStatus status = SolveStatus::kNumericalFailure;
  std::string message;
};

double frob(const Eigen::MatrixXd& m) { return m.norm(); }

// Expresses program data over free variables y (equalities eliminated).
Prepared prepare(const ConicProgram& prog) {
  Prepared P;
  P.n_orig = prog.n_vars();
  const int n0 = P.n_orig;

  std::vector<const LinearConstraint*> eqs;
  std::vector<LpRow> lp;
  for (const auto& c : prog.linear_constraints()) {
    if (c.sense == Sense::kEqual) {
      eqs.push_back(&c);
    } else {
      LpRow r;
      r.constant = c.expr.constant;
      for (const auto& [v, a] : c.expr.terms) {
        r.coeffs[v] += a;
      }
      lp.push_back(std::move(r));
    }
  }
  for (const auto& g : prog.nonneg_groups()) {
    for (int v : g.vars) {
      LpRow r;
      r.coeffs[v] = 1.0;
      lp.push_back(std::move(r));
    }
  }

  // Affine map x = x_off + T y.
  int ny = n0;
  Eigen::MatrixXd T;
  P.x_off = Eigen::VectorXd::Zero(n0);
  if (!eqs.empty()) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(static_cast<int>(eqs.size()), n0);
    Eigen::VectorXd e(static_cast<int>(eqs.size()));
    for (std::size_t i = 0; i < eqs.size(); ++i) {
      e(i) = eqs[i]->expr.constant;
      for (const auto& [v, a] : eqs[i]->expr.terms) {
        E(i, v) += a;
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(E);
    lu.setThreshold(1e-12);
    P.x_off = lu.solve(-e);
    if ((E * P.x_off + e).norm() > 1e-9 * (1.0 + e.norm())) {
      P.decided = true;
      P.status = SolveStatus::kInfeasible;
      P.message = "inconsistent linear equalities";
      return P;
    }
    const Eigen::MatrixXd K = lu.kernel();
    if (lu.rank() == n0 || (K.cols() == 1 && K.norm() == 0.0)) {
      T.resize(n0, 0);
    } else {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(K);
      T = qr.householderQ() * Eigen::MatrixXd::Identity(n0, K.cols());
    }
    ny = static_cast<int>(T.cols());
    P.identity_map = false;
  }

  // Objective over y.
  Eigen::VectorXd c_orig = Eigen::VectorXd::Zero(n0);
  for (const auto& [v, a] : prog.objective().terms) {
    c_orig(v) += a;
  }
  Eigen::VectorXd cy = P.identity_map ? c_orig : Eigen::VectorXd(T.transpose() * c_orig);
  double c0 = prog.objective().constant + c_orig.dot(P.x_off);

  // Blocks over y.
  struct RawBlock {
    int dim;
    Eigen::MatrixXd F0;
    std::map<int, std::map<std::pair<int, int>, double>> coef;
  };
  std::vector<RawBlock> raw;
  for (const auto& blk : prog.psd_blocks()) {
    RawBlock rb{blk.dim(), Eigen::MatrixXd::Zero(blk.dim(), blk.dim()), {}};
    for (const auto& t : blk.terms()) {
      auto put_const = [&](double v) {
        rb.F0(t.row, t.col) += v;
        if (t.row != t.col) {
          rb.F0(t.col, t.row) += v;
        }
      };
      if (t.var == kConstant) {
        put_const(t.value);
        continue;
      }
      if (P.identity_map) {
        rb.coef[t.var][{t.row, t.col}] += t.value;
      } else {
        put_const(t.value * P.x_off(t.var));
        for (int k = 0; k < ny; ++k) {
          const double w = T(t.var, k);
          if (w != 0.0) {
            rb.coef[k][{t.row, t.col}] += t.value * w;
          }
        }
      }
    }
    raw.push_back(std::move(rb));
  }

  // Linear rows over y; 1x1 blocks become rows.
  struct RowY {
    Eigen::VectorXd a;
    double b;
  };
  std::vector<RowY> rows;
  auto add_row = [&](const std::map<int, double>& coeffs_y, double constant) {
    RowY r{Eigen::VectorXd::Zero(ny), constant};
    for (const auto& [k, a] : coeffs_y) {
      r.a(k) += a;
    }
    rows.push_back(std::move(r));
  };
  for (const auto& r : lp) {
    if (P.identity_map) {
      add_row(r.coeffs, r.constant);
    } else {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(n0);
      for (const auto& [v, w] : r.coeffs) {
        a(v) += w;
      }
      RowY ry{T.transpose() * a, r.constant + a.dot(P.x_off)};
      rows.push_back(std::move(ry));
    }
  }

  std::vector<RawBlock> kept;
  for (auto& rb : raw) {
    // Drop rows/cols untouched by variables and decoupled in F0.
    std::vector<char> touched(rb.dim, 0);
    for (const auto& [k, entries] : rb.coef) {
      for (const auto& [pq, v] : entries) {
        if (v != 0.0) {
          touched[pq.first] = touched[pq.second] = 1;
        }
      }
    }
    std::vector<int> keep_idx;
    for (int p = 0; p < rb.dim; ++p) {
      bool coupled = touched[p] != 0;
      for (int q = 0; q < rb.dim && !coupled; ++q) {
        coupled = (q != p && rb.F0(p, q) != 0.0);
      }
      if (coupled) {
        keep_idx.push_back(p);
      } else if (rb.F0(p, p) < 0.0) {
        P.decided = true;
        P.status = SolveStatus::kInfeasible;
        P.message = "constant negative diagonal in a PSD block";
        return P;
      }
    }
    if (keep_idx.empty()) {
      continue;
    }
    bool has_vars = false;
    for (int p : keep_idx) {
      has_vars = has_vars || touched[p];
    }
    if (!has_vars) {
      Eigen::MatrixXd sub(keep_idx.size(), keep_idx.size());
      for (std::size_t i = 0; i < keep_idx.size(); ++i) {
        for (std::size_t j = 0; j < keep_idx.size(); ++j) {
          sub(i, j) = rb.F0(keep_idx[i], keep_idx[j]);
        }
      }
      const double lo =
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sub, Eigen::EigenvaluesOnly)
              .eigenvalues()(0);
      if (lo < -1e-12 * std::max(1.0, sub.cwiseAbs().maxCoeff())) {
        P.decided = true;
        P.status = SolveStatus::kInfeasible;
        P.message = "constant PSD block is not PSD";
        return P;
      }
      continue;
    }
    std::vector<int> new_of(rb.dim, -1);
    for (std::size_t i = 0; i < keep_idx.size(); ++i) {
      new_of[keep_idx[i]] = static_cast<int>(i);
    }
    RawBlock nb{static_cast<int>(keep_idx.size()), Eigen::MatrixXd(keep_idx.size(), keep_idx.size()),
                {}};
    for (std::size_t i = 0; i < keep_idx.size(); ++i) {
      for (std::size_t j = 0; j < keep_idx.size(); ++j) {
        nb.F0(i, j) = rb.F0(keep_idx[i], keep_idx[j]);
      }
    }
    for (const auto& [k, entries] : rb.coef) {
      for (const auto& [pq, v] : entries) {
        if (v != 0.0) {
          const int a = new_of[pq.first];
          const int b = new_of[pq.second];
          nb.coef[k][{std::min(a, b), std::max(a, b)}] += v;
        }
      }
    }
    if (nb.dim == 1) {
      std::map<int, double> coeffs_y;
      for (const auto& [k, entries] : nb.coef) {
        for (const auto& [pq, v] : entries) {
          coeffs_y[k] += v;
        }
      }
      add_row(coeffs_y, nb.F0(0, 0));
      continue;
    }
    kept.push_back(std::move(nb));
  }

  // Constant rows.
  std::vector<RowY> live_rows;
  for (auto& r : rows) {
    if (r.a.size() == 0 || r.a.cwiseAbs().maxCoeff() == 0.0) {
      if (r.b < 0.0) {
        P.decided = true;
        P.status = SolveStatus::kInfeasible;
        P.message = "constant linear inequality violated";
        return P;
      }
      continue;
    }
    live_rows.push_back(std::move(r));
  }

  // Variables used somewhere.
  std::vector<char> used(ny, 0);
  for (const auto& rb : kept) {
    for (const auto& [k, entries] : rb.coef) {
      used[k] = 1;
    }
  }
  for (const auto& r : live_rows) {
    for (int k = 0; k < ny; ++k) {
      if (r.a(k) != 0.0) {
        used[k] = 1;
      }
    }
  }
  std::vector<int> solver_of(ny, -1);
  std::vector<int> y_of;
  for (int k = 0; k < ny; ++k) {
    if (used[k]) {
      solver_of[k] = static_cast<int>(y_of.size());
      y_of.push_back(k);
    } else if (cy(k) != 0.0) {
      P.decided = true;
      P.status = SolveStatus::kUnbounded;
      P.message = "objective variable free of all constraints";
      return P;
    }
  }
  const int n = static_cast<int>(y_of.size());
  P.n = n;
  if (P.identity_map) {
    P.orig_of = y_of;
  } else {
    P.T.resize(n0, n);
    for (int i = 0; i < n; ++i) {
      P.T.col(i) = T.col(y_of[i]);
    }
  }
  P.c.resize(n);
  for (int i = 0; i < n; ++i) {
    P.c(i) = cy(y_of[i]);
  }
  P.c0 = c0;
  P.A.resize(static_cast<int>(live_rows.size()), n);
  P.b.resize(static_cast<int>(live_rows.size()));
  for (std::size_t l = 0; l < live_rows.size(); ++l) {
    for (int i = 0; i < n; ++i) {
      P.A(l, i) = live_rows[l].a(y_of[i]);
    }
    P.b(l) = live_rows[l].b;
  }
  for (auto& rb : kept) {
    BlockStructure bs;
    bs.dim = rb.dim;
    bs.constant = rb.F0;
    for (const auto& [k, entries] : rb.coef) {
      std::vector<CoeffEntry> list;
      for (const auto& [pq, v] : entries) {
        if (v != 0.0) {
          list.push_back({pq.first, pq.second, v});
        }
      }
      if (!list.empty()) {
        bs.vars.push_back(solver_of[k]);
        bs.coeffs.push_back(std::move(list));
      }
    }
    P.blocks.push_back(std::move(bs));
  }
  if (n == 0) {
    P.decided = true;
    P.status = SolveStatus::kOptimal;
    P.message = "no free variables remain";
  }
  return P;
}

// Geometric equilibration of blocks, rows and variables; objective normalized.
void equilibrate(Prepared& P) {
  const int n = P.n;
  P.var_scale = Eigen::VectorXd::Ones(n);
  for (int round = 0; round < 6; ++round) {
    for (auto& blk : P.blocks) {
      double mx = 0.0;
      for (const auto& list : blk.coeffs) {
        for (const auto& e : list) {
          mx = std::max(mx, std::abs(e.value));
        }
      }
      if (mx > 0.0) {
        const double s = 1.0 / std::sqrt(mx);
        blk.constant *= s;
        for (auto& list : blk.coeffs) {
          for (auto& e : list) {
            e.value *= s;
          }
        }
      }
    }
    for (int l = 0; l < P.A.rows(); ++l) {
      const double mx = P.A.row(l).cwiseAbs().maxCoeff();
      if (mx > 0.0) {
        const double s = 1.0 / std::sqrt(mx);
        P.A.row(l) *= s;
        P.b(l) *= s;
      }
    }
    Eigen::VectorXd vmax = Eigen::VectorXd::Zero(n);
    for (const auto& blk : P.blocks) {
      for (std::size_t j = 0; j < blk.vars.size(); ++j) {
        for (const auto& e : blk.coeffs[j]) {
          vmax(blk.vars[j]) = std::max(vmax(blk.vars[j]), std::abs(e.value));
        }
      }
    }
    if (P.A.rows() > 0) {
      vmax = vmax.cwiseMax(P.A.cwiseAbs().colwise().maxCoeff().transpose());
    }
    for (int i = 0; i < n; ++i) {
      const double s = vmax(i) > 0.0 ? 1.0 / std::sqrt(vmax(i)) : 1.0;
      P.var_scale(i) *= s;
      vmax(i) = s;
    }
    for (auto& blk : P.blocks) {
      for (std::size_t j = 0; j < blk.vars.size(); ++j) {
        for (auto& e : blk.coeffs[j]) {
          e.value *= vmax(blk.vars[j]);
        }
      }
    }
    if (P.A.rows() > 0) {
      P.A = P.A * vmax.asDiagonal();
    }
  }
  P.c = P.c.cwiseProduct(P.var_scale);
  const double cmax = P.c.size() ? P.c.cwiseAbs().maxCoeff() : 0.0;
  P.obj_scale = cmax > 0.0 ? cmax : 1.0;
  P.c /= P.obj_scale;
  for (auto& blk : P.blocks) {
    blk.factorize();
  }
}

void add_coeffs(const BlockStructure& blk, const Eigen::VectorXd& x, Eigen::MatrixXd& out) {
  for (std::size_t j = 0; j < blk.vars.size(); ++j) {
    const double xv = x(blk.vars[j]);
    if (xv == 0.0) {
      continue;
    }
    for (const auto& e : blk.coeffs[j]) {
      out(e.row, e.col) += xv * e.value;
      if (e.row != e.col) {
        out(e.col, e.row) += xv * e.value;
      }
    }
  }
}

void adjoint(const BlockStructure& blk, const Eigen::MatrixXd& Y, Eigen::VectorXd& out) {
  for (std::size_t j = 0; j < blk.vars.size(); ++j) {
    double s = 0.0;
    for (const auto& e : blk.coeffs[j]) {
      s += e.value * (e.row == e.col ? Y(e.row, e.row) : Y(e.row, e.col) + Y(e.col, e.row));
    }
    out(blk.vars[j]) += s;
  }
}

struct Iterate {
  Eigen::VectorXd x;
  std::vector<Eigen::MatrixXd> X, S;
  Eigen::VectorXd z, s;
};

struct Direction {
  Eigen::VectorXd dx;
  std::vector<Eigen::MatrixXd> dX, dS;
  Eigen::VectorXd dz, ds;
};

struct IpmOutcome {
  SolveStatus status = SolveStatus::kNumericalFailure;
  Eigen::VectorXd x;
  int iterations = 0;
  double pinf = 0.0, dinf = 0.0, gap = 0.0;
  std::string message;
};

IpmOutcome run_ipm(const Prepared& P, const SolverOptions& opt) {
  const int n = P.n;
  const int nb = static_cast<int>(P.blocks.size());
  const int L = static_cast<int>(P.A.rows());
  double nu = L;
  for (const auto& blk : P.blocks) {
    nu += blk.dim;
  }

  Iterate it;
  it.x = Eigen::VectorXd::Zero(n);
  double f0_norm = P.b.size() ? P.b.squaredNorm() : 0.0;
  const double c_norm = P.c.norm();
  for (int k = 0; k < nb; ++k) {
    const auto& blk = P.blocks[k];
    const int d = blk.dim;
    double fmax = 0.0;
    double ratio = 0.0;
    for (std::size_t j = 0; j < blk.vars.size(); ++j) {
      double fn = 0.0;
      for (const auto& e : blk.coeffs[j]) {
        fn += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
      }
      fn = std::sqrt(fn);
      fmax = std::max(fmax, fn);
      ratio = std::max(ratio, (1.0 + std::abs(P.c(blk.vars[j]))) / (1.0 + fn));
    }
    const double xi = std::max({10.0, std::sqrt(static_cast<double>(d)), d * ratio});
    const double eta = std::max({10.0, std::sqrt(static_cast<double>(d)), fmax, frob(blk.constant)});
    it.X.push_back(xi * Eigen::MatrixXd::Identity(d, d));
    it.S.push_back(eta * Eigen::MatrixXd::Identity(d, d));
    f0_norm += blk.constant.squaredNorm();
  }
  f0_norm = std::sqrt(f0_norm);
  {
    double ratio = 0.0;
    double amax = 0.0;
    for (int l = 0; l < L; ++l) {
      const double an = P.A.row(l).norm();
      amax = std::max(amax, an);
      for (int i = 0; i < n; ++i) {
        if (P.A(l, i) != 0.0) {
          ratio = std::max(ratio, (1.0 + std::abs(P.c(i))) / (1.0 + an));
        }
      }
    }
    const double xi = std::max(10.0, ratio);
    const double eta = std::max({10.0, amax, P.b.size() ? P.b.cwiseAbs().maxCoeff() : 0.0});
    it.z = Eigen::VectorXd::Constant(L, xi);
    it.s = Eigen::VectorXd::Constant(L, eta);
  }

  const double tol_feas = std::min(1e-9, opt.feas_tol);
  const double tol_gap = std::min(1e-9, opt.gap_tol);

  IpmOutcome out;
  IpmOutcome best;
  double best_merit = std::numeric_limits<double>::infinity();
  int stall = 0;
  int first_relaxed = -1;  // first iteration meeting the caller's tolerances

  std::vector<Eigen::MatrixXd> Rd(nb), Z(nb);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> cholX(nb), cholS(nb);
  std::vector<Eigen::MatrixXd> LinvX(nb), LinvS(nb);
  constexpr int kDenseLimit = 200;
  Eigen::VectorXd rd(L);
  Direction pred;
  Direction corr;

  for (int iter = 0; iter <= opt.max_iterations; ++iter) {
    // Residuals.
    Eigen::VectorXd rp = P.c;
    double dual_obj_lin = 0.0;
    double rd_norm2 = 0.0;
    double comp = 0.0;
    for (int k = 0; k < nb; ++k) {
      const auto& blk = P.blocks[k];
      Rd[k] = blk.constant;
      add_coeffs(blk, it.x, Rd[k]);
      Rd[k] -= it.S[k];
      rd_norm2 += Rd[k].squaredNorm();
      Eigen::VectorXd atx = Eigen::VectorXd::Zero(n);
      adjoint(blk, it.X[k], atx);
      rp -= atx;
      dual_obj_lin += (blk.constant.cwiseProduct(it.X[k])).sum();
      comp += (it.X[k].cwiseProduct(it.S[k])).sum();
    }
    if (L > 0) {
      rd = P.A * it.x + P.b - it.s;
      rd_norm2 += rd.squaredNorm();
      rp -= P.A.transpose() * it.z;
      dual_obj_lin += P.b.dot(it.z);
      comp += it.z.dot(it.s);
    }
    const double mu = comp / nu;
    const double pobj = P.c.dot(it.x);
    const double dobj = -dual_obj_lin;
    out.pinf = rp.norm() / (1.0 + c_norm);
    out.dinf = std::sqrt(rd_norm2) / (1.0 + f0_norm);
    out.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    out.iterations = iter;
    out.x = it.x;

    if (opt.verbose) {
      std::fprintf(stderr, "ipm %3d pobj %+.9e dobj %+.9e pinf %.2e dinf %.2e gap %.2e mu %.2e\n",
                   iter, pobj, dobj, out.pinf, out.dinf, out.gap, mu);
    }
    if (!it.x.allFinite() || !std::isfinite(mu)) {
      out.status = SolveStatus::kNumericalFailure;
      out.message = "non-finite iterate";
      break;
    }
    if (out.pinf <= tol_feas && out.dinf <= tol_feas && out.gap <= tol_gap) {
      out.status = SolveStatus::kOptimal;
      return out;
    }
    const double merit = std::max({out.pinf / opt.feas_tol, out.dinf / opt.feas_tol,
                                   out.gap / opt.gap_tol});
    if (merit < best_merit) {
      best_merit = merit;
      best = out;
    }
    if (merit <= 1.0 && first_relaxed < 0) {
      first_relaxed = iter;
    }
    if (first_relaxed >= 0 && iter - first_relaxed >= kPolishIterations) {
      break;
    }

    // Dual ray: X >= 0 with A*(X) ~ 0 and <F0, X> < 0 certifies infeasibility.
    const double t_inf = dobj;
    if (t_inf > 1e3) {
      const double ray = (P.c - rp).norm() / t_inf;
      if (ray < 1e-8) {
        out.status = SolveStatus::kInfeasible;
        out.message = "dual ray certificate";
        return out;
      }
    }
    // Primal ray: F(x) - F0 >= 0 with c'x < 0 certifies unboundedness.
    const double t_unb = -pobj;
    if (t_unb > 1e3) {
      const double ray = (f0_norm + std::sqrt(rd_norm2)) / t_unb;
      if (ray < 1e-8) {
        out.status = SolveStatus::kUnbounded;
        out.message = "primal ray certificate";
        return out;
      }
    }
    if (iter == opt.max_iterations) {
      out.message = "iteration limit";
      break;
    }

    // Schur complement.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    bool chol_ok = true;
    for (int k = 0; k < nb; ++k) {
      const auto& cs = cholS[k].compute(it.S[k]);
      cholX[k].compute(it.X[k]);
      if (cs.info() != Eigen::Success || cholX[k].info() != Eigen::Success) {
        chol_ok = false;
        break;
      }
      const int d = static_cast<int>(it.S[k].rows());
      if (d <= kDenseLimit) {
        LinvS[k] = cs.matrixL().solve(Eigen::MatrixXd::Identity(d, d));
        LinvX[k] = cholX[k].matrixL().solve(Eigen::MatrixXd::Identity(d, d));
        Z[k].noalias() = LinvS[k].transpose() * LinvS[k];
      } else {
        Z[k] = cs.solve(Eigen::MatrixXd::Identity(d, d));
        Z[k] = 0.5 * (Z[k] + Z[k].transpose());
      }
      detail::accumulate_schur(P.blocks[k], it.X[k], Z[k], M);
    }
    if (!chol_ok || (L > 0 && (it.s.minCoeff() <= 0.0 || it.z.minCoeff() <= 0.0))) {
      out.message = "lost positive definiteness";
      break;
    }
    Eigen::VectorXd zs;
    if (L > 0) {
      zs = it.z.cwiseQuotient(it.s);
      M.noalias() += P.A.transpose() * zs.asDiagonal() * P.A;
    }
    M = 0.5 * (M + M.transpose());
    Eigen::LLT<Eigen::MatrixXd> cholM;
    const double diag_max = std::max(M.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    double reg = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      cholM.compute(M + reg * Eigen::MatrixXd::Identity(n, n));
      if (cholM.info() == Eigen::Success) {
        break;
      }
      reg = (reg == 0.0) ? 1e-14 * diag_max : reg * 100.0;
    }
    if (cholM.info() != Eigen::Success) {
      out.message = "Schur complement factorization failed";
      break;
    }

    // Solves for a direction given complementarity targets Rc (blocks) and rc (LP).
    auto solve_dir = [&](const std::vector<Eigen::MatrixXd>& Rc, const Eigen::VectorXd& rc,
                         Direction& dir) {
      Eigen::VectorXd rhs = -rp;
      std::vector<Eigen::MatrixXd> tmp(nb);
      for (int k = 0; k < nb; ++k) {
        tmp[k] = Rc[k] - it.X[k] * Rd[k] * Z[k];
        adjoint(P.blocks[k], tmp[k], rhs);
      }
      if (L > 0) {
        rhs += P.A.transpose() * (rc - zs.cwiseProduct(rd));
      }
      dir.dx = cholM.solve(rhs);
      dir.dX.resize(nb);
      dir.dS.resize(nb);
      for (int k = 0; k < nb; ++k) {
        dir.dS[k] = Rd[k];
        add_coeffs(P.blocks[k], dir.dx, dir.dS[k]);
        const Eigen::MatrixXd t = it.X[k] * (dir.dS[k] * Z[k]);
        dir.dX[k] = Rc[k] - 0.5 * (t + t.transpose());
      }
      if (L > 0) {
        dir.ds = rd + P.A * dir.dx;
        dir.dz = rc - zs.cwiseProduct(dir.ds);
      }
    };
    auto steps = [&](const Direction& dir, double tau, bool verify) {
      double ap = 1.0;
      double ad = 1.0;
      for (int k = 0; k < nb; ++k) {
        if (it.X[k].rows() <= kDenseLimit) {
          ap = std::min(ap, detail::step_length_inverse(LinvX[k], dir.dX[k], tau, verify));
          ad = std::min(ad, detail::step_length_inverse(LinvS[k], dir.dS[k], tau, verify));
        } else {
          ap = std::min(ap, detail::step_length(cholX[k], it.X[k], dir.dX[k], tau, verify));
          ad = std::min(ad, detail::step_length(cholS[k], it.S[k], dir.dS[k], tau, verify));
        }
      }
      for (int l = 0; l < L; ++l) {
        if (dir.dz(l) < 0.0) {
          ap = std::min(ap, -tau * it.z(l) / dir.dz(l));
        }
        if (dir.ds(l) < 0.0) {
          ad = std::min(ad, -tau * it.s(l) / dir.ds(l));
        }
      }
      return std::pair<double, double>(ap, ad);
    };

    // Predictor.
    std::vector<Eigen::MatrixXd> Rc(nb);
    for (int k = 0; k < nb; ++k) {
      Rc[k] = -it.X[k];
    }
    Eigen::VectorXd rc = -it.z;
    solve_dir(Rc, rc, pred);
    const auto [ap_a, ad_a] = steps(pred, 1.0, false);
    double comp_a = 0.0;
    for (int k = 0; k < nb; ++k) {
      comp_a += ((it.X[k] + ap_a * pred.dX[k]).cwiseProduct(it.S[k] + ad_a * pred.dS[k])).sum();
    }
    if (L > 0) {
      comp_a += (it.z + ap_a * pred.dz).dot(it.s + ad_a * pred.ds);
    }
    const double mu_a = std::max(comp_a / nu, 0.0);
    const double expon = std::max(1.0, 3.0 * std::pow(std::min(ap_a, ad_a), 2));
    const double sigma = std::min(1.0, std::pow(mu_a / mu, expon));

    // Corrector.
    for (int k = 0; k < nb; ++k) {
      const Eigen::MatrixXd t = pred.dX[k] * pred.dS[k] * Z[k];
      Rc[k] = sigma * mu * Z[k] - it.X[k] - 0.5 * (t + t.transpose());
    }
    if (L > 0) {
      rc = (sigma * mu) * it.s.cwiseInverse() - it.z -
           pred.dz.cwiseProduct(pred.ds).cwiseQuotient(it.s);
    }
    solve_dir(Rc, rc, corr);
    const double tau = 0.9 + 0.09 * std::min(ap_a, ad_a);
    const auto [ap, ad] = steps(corr, tau, true);
    if (opt.verbose) {
      std::fprintf(stderr, "    pred %.3f %.3f sigma %.3e corr %.3f %.3f |dx| %.3e\n", ap_a, ad_a, sigma,
                   ap, ad, corr.dx.norm());
    }

    for (int k = 0; k < nb; ++k) {
      it.X[k] += ap * corr.dX[k];
      it.X[k] = 0.5 * (it.X[k] + it.X[k].transpose());
      it.S[k] += ad * corr.dS[k];
      it.S[k] = 0.5 * (it.S[k] + it.S[k].transpose());
    }
    it.x += ad * corr.dx;
    if (L > 0) {
      it.z += ap * corr.dz;
      it.s += ad * corr.ds;
    }
    stall = (std::max(ap, ad) < 1e-6) ? stall + 1 : 0;
    if (stall >= 3) {
      out.message = "step length stagnation";
      break;
    }
  }
  if (best_merit <= 1.0) {
    best.status = SolveStatus::kOptimal;
    best.message = "accepted at relaxed tolerance";
    return best;
  }
  out.status = SolveStatus::kNumericalFailure;
  if (out.message.empty()) {
    out.message = "no convergence";
  }
  return out;
}

Eigen::VectorXd recover(const Prepared& P, const Eigen::VectorXd& y_scaled) {
  const Eigen::VectorXd y = y_scaled.cwiseProduct(P.var_scale);
  Eigen::VectorXd x = P.x_off;
  if (P.identity_map) {
    for (int i = 0; i < P.n; ++i) {
      x(P.orig_of[i]) += y(i);
    }
  } else if (P.n > 0) {
    x += P.T * y;
  }
  return x;
}

}  // namespace

SolveResult InteriorPointBackend::solve(const ConicProgram& program,
                                        const SolverOptions& options) const {
  const auto t0 = Clock::now();
  program.validate();
  SolveResult res;
  Prepared P = prepare(program);
  auto finish = [&](SolveResult& r) {
    r.solve_time = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
  };
  if (P.decided) {
    res.status = P.status;
    res.message = P.message;
    if (P.status == SolveStatus::kOptimal) {
      P.var_scale = Eigen::VectorXd::Ones(P.n);
      res.values = recover(P, Eigen::VectorXd::Zero(P.n));
      res.objective_value = program.objective().evaluate(res.values);
    }
    return finish(res);
  }
  equilibrate(P);
  const IpmOutcome ipm = run_ipm(P, options);
  res.iterations = ipm.iterations;
  res.primal_residual = ipm.pinf;
  res.dual_residual = ipm.dinf;
  res.relative_gap = ipm.gap;
  res.message = ipm.message;
  res.status = ipm.status;
  if (ipm.status == SolveStatus::kOptimal) {
    res.values = recover(P, ipm.x);
    res.objective_value = program.objective().evaluate(res.values);
    const FeasibilityReport rep = evaluate_feasibility(program, res.values);
    bool ok = true;
    for (std::size_t k = 0; k < rep.block_min_eigenvalues.size(); ++k) {
      ok = ok && rep.block_min_eigenvalues[k] >= -options.feas_tol * rep.block_scales[k];
    }
    double lin_scale = 1.0;
    for (const auto& c : program.linear_constraints()) {
      double s = std::abs(c.expr.constant);
      for (const auto& [v, a] : c.expr.terms) {
        s += std::abs(a * res.values(v));
      }
      lin_scale = std::max(lin_scale, s);
    }
    ok = ok && rep.min_inequality >= -options.feas_tol * lin_scale &&
         rep.max_equality_violation <= options.feas_tol * lin_scale;
    if (!ok) {
      res.status = SolveStatus::kNumericalFailure;
      res.message = "solution failed the feasibility re-check";
      res.values.resize(0);
    }
  }
  return finish(res);
}

}  // namespace reacc::conic
