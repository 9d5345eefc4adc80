#include <gtest/gtest.h>

#include <random>

#include "reacc/conic.hpp"
#include "reacc/sdp_solver.hpp"

namespace reacc::conic {
namespace {

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      a(i, j) = nd(rng);
    }
  }
  return 0.5 * (a + a.transpose());
}

TEST(ConicProgram, ScalarBlockIsNonnegativity) {
  ConicProgram prog;
  const int x = prog.add_variable("x");
  PsdBlock blk(1, "nonneg");
  blk.add(0, 0, AffineExpr::var(x));
  prog.add_psd_block(blk);
  prog.set_objective(AffineExpr::var(x));
  const auto res = solve(prog);
  ASSERT_EQ(res.status, SolveStatus::kOptimal) << res.message;
  EXPECT_NEAR(res.values(x), 0.0, 1e-7);
}

TEST(ConicProgram, EigenvalueCondition) {
  ConicProgram prog;
  const int t = prog.add_variable("t");
  PsdBlock blk(2, "eig");
  blk.add(0, 0, AffineExpr::var(t));
  blk.add(1, 1, AffineExpr::var(t));
  blk.add(0, 1, 1.0);
  prog.add_psd_block(blk);
  prog.set_objective(AffineExpr::var(t));
  const auto res = solve(prog);
  ASSERT_EQ(res.status, SolveStatus::kOptimal) << res.message;
  EXPECT_NEAR(res.values(t), 1.0, 1e-7);
  EXPECT_NEAR(res.objective_value, 1.0, 1e-7);
}

TEST(ConicProgram, HyperbolicBlock) {
  // [[x,1],[1,y]] >= 0 with min x + 4y gives x = 2, y = 1/2.
  ConicProgram prog;
  const int x = prog.add_variable("x");
  const int y = prog.add_variable("y");
  PsdBlock blk(2, "hyp");
  blk.add(0, 0, AffineExpr::var(x));
  blk.add(1, 1, AffineExpr::var(y));
  blk.add(0, 1, 1.0);
  prog.add_psd_block(blk);
  prog.set_objective(AffineExpr::var(x) + AffineExpr::var(y, 4.0));
  const auto res = solve(prog);
  ASSERT_EQ(res.status, SolveStatus::kOptimal) << res.message;
  EXPECT_NEAR(res.values(x), 2.0, 1e-6);
  EXPECT_NEAR(res.values(y), 0.5, 1e-6);
  EXPECT_GE(res.values(x) * res.values(y), 1.0 - 1e-7);
}

TEST(ConicProgram, ConstantNegativeBlockIsInfeasible) {
  ConicProgram prog;
  const int x = prog.add_variable("x");
  PsdBlock blk(3, "minus_identity");
  for (int i = 0; i < 3; ++i) {
    blk.add_constant(i, i, -1.0);
  }
  prog.add_psd_block(blk);
  PsdBlock other(1, "x_nonneg");
  other.add(0, 0, AffineExpr::var(x));
  prog.add_psd_block(other);
  prog.set_objective(AffineExpr::var(x));
  EXPECT_EQ(solve(prog).status, SolveStatus::kInfeasible);
}

TEST(ConicProgram, CoupledInfeasibleLmi) {
  // [[x, 1],[1, -x]] >= 0 has no solution.
  ConicProgram prog;
  const int x = prog.add_variable("x");
  PsdBlock blk(2, "bad");
  blk.add(0, 0, AffineExpr::var(x));
  blk.add(1, 1, AffineExpr::var(x, -1.0));
  blk.add(0, 1, 1.0);
  prog.add_psd_block(blk);
  prog.set_objective(AffineExpr::var(x));
  EXPECT_EQ(solve(prog).status, SolveStatus::kInfeasible);
}

TEST(ConicProgram, UnboundedDirection) {
  ConicProgram prog;
  const int x = prog.add_variable("x");
  PsdBlock blk(2, "open");
  blk.add(0, 0, AffineExpr::var(x));
  blk.add(1, 1, 1.0);
  prog.add_psd_block(blk);
  prog.set_objective(AffineExpr::var(x, -1.0));
  EXPECT_EQ(solve(prog).status, SolveStatus::kUnbounded);
}

TEST(ConicProgram, LinearAndEqualityRows) {
  // min x + y s.t. x - y = 1, y >= 2, [[x, 0.5],[0.5, 1]] >= 0.
  ConicProgram prog;
  const int x = prog.add_variable("x");
  const int y = prog.add_variable("y");
  prog.add_linear({"link", AffineExpr::var(x) - AffineExpr::var(y) - 1.0, Sense::kEqual});
  prog.add_linear({"floor", AffineExpr::var(y) - 2.0, Sense::kGreaterEqual});
  PsdBlock blk(2, "blk");
  blk.add(0, 0, AffineExpr::var(x));
  blk.add(0, 1, 0.5);
  blk.add(1, 1, 1.0);
  prog.add_psd_block(blk);
  prog.set_objective(AffineExpr::var(x) + AffineExpr::var(y));
  const auto res = solve(prog);
  ASSERT_EQ(res.status, SolveStatus::kOptimal) << res.message;
  EXPECT_NEAR(res.values(x), 3.0, 1e-6);
  EXPECT_NEAR(res.values(y), 2.0, 1e-6);
}

TEST(ConicProgram, RandomDiagonalSdpMatchesAnalyticOptimum) {
  // min sum c_i x_i s.t. diag(x_i - l_i) >= 0 embedded as a rotated dense block:
  // optimum x_i = l_i for c_i > 0.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ud(0.1, 3.0);
  std::uniform_real_distribution<double> lo(-5.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial % 5;
    const Eigen::MatrixXd Qr =
        Eigen::HouseholderQR<Eigen::MatrixXd>(random_symmetric(rng, n)).householderQ();
    ConicProgram prog;
    const int x0 = prog.add_variables("x", n);
    Eigen::VectorXd c(n);
    Eigen::VectorXd l(n);
    PsdBlock blk(n, "rot");
    AffineExpr obj;
    double expected = 0.0;
    for (int i = 0; i < n; ++i) {
      c(i) = ud(rng);
      l(i) = lo(rng);
      obj += AffineExpr::var(x0 + i, c(i));
      expected += c(i) * l(i);
      for (int p = 0; p < n; ++p) {
        for (int q = p; q < n; ++q) {
          const double w = Qr(p, i) * Qr(q, i);
          blk.add(p, q, AffineExpr::var(x0 + i, w) + AffineExpr(-l(i) * w));
        }
      }
    }
    prog.add_psd_block(blk);
    prog.set_objective(obj);
    const auto res = solve(prog);
    ASSERT_EQ(res.status, SolveStatus::kOptimal) << res.message;
    EXPECT_NEAR(res.objective_value, expected, 1e-5 * (1.0 + std::abs(expected)));
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(res.values(x0 + i), l(i), 1e-5);
    }
  }
}

TEST(ConicProgram, DumpRoundTripIsIdentical) {
  ConicProgram prog;
  const int a = prog.add_variables("a", 3);
  const int g = prog.add_variable("gamma");
  PsdBlock blk(4, "main");
  blk.add(0, 0, AffineExpr::var(g) + 0.1);
  blk.add(0, 3, AffineExpr::var(a, 1.0 / 3.0) + AffineExpr::var(a + 2, -2.5e-9));
  blk.add(2, 1, AffineExpr::var(a + 1, 1e12));
  blk.add(3, 3, 1.0);
  prog.add_psd_block(blk);
  prog.add_linear({"row", AffineExpr::var(a) - 0.7, Sense::kGreaterEqual});
  prog.add_linear({"", AffineExpr::var(a + 1) + AffineExpr::var(a + 2), Sense::kEqual});
  prog.add_diag_nonneg("D", {a, a + 1});
  prog.set_objective(AffineExpr::var(g, 2.0) + 3.0);

  const std::string text = prog.dump();
  const ConicProgram back = ConicProgram::parse(text);
  EXPECT_EQ(back.dump(), text);
  ASSERT_EQ(back.psd_blocks().size(), 1u);
  for (int v = -1; v < prog.n_vars(); ++v) {
    const Eigen::MatrixXd m0 = v < 0 ? prog.psd_blocks()[0].constant_matrix()
                                     : prog.psd_blocks()[0].coefficient_matrix(v);
    const Eigen::MatrixXd m1 = v < 0 ? back.psd_blocks()[0].constant_matrix()
                                     : back.psd_blocks()[0].coefficient_matrix(v);
    EXPECT_EQ(m0, m1);
  }
  EXPECT_EQ(back.variable_name(g), "gamma");
}

TEST(ConicProgram, DimensionErrors) {
  PsdBlock blk(2, "small");
  EXPECT_THROW(blk.add(0, 2, 1.0), std::invalid_argument);
  EXPECT_THROW(PsdBlock(0), std::invalid_argument);
  ConicProgram prog;
  PsdBlock stray(2, "stray");
  stray.add(0, 0, AffineExpr::var(5));
  EXPECT_THROW(prog.add_psd_block(stray), std::invalid_argument);
  EXPECT_THROW(ConicProgram::parse("garbage"), std::invalid_argument);
}

TEST(CheckPsd, BasicCases) {
  const auto id = check_psd(Eigen::MatrixXd::Identity(3, 3), 0.0);
  EXPECT_TRUE(id.psd);
  EXPECT_DOUBLE_EQ(id.min_eigenvalue, 1.0);
  Eigen::MatrixXd d = Eigen::Vector2d(1.0, -1.0).asDiagonal();
  const auto neg = check_psd(d, 1e-9);
  EXPECT_FALSE(neg.psd);
  EXPECT_NEAR(neg.min_eigenvalue, -1.0, 1e-14);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 2.0, 0.0, 1.0;
  EXPECT_THROW(check_psd(asym, 0.0), std::invalid_argument);
}

TEST(CheckPsd, AgreesWithCholeskyOnRandomMatrices) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 8);
  std::normal_distribution<double> nd;
  const double tol = 1e-9;
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = dim(rng);
    // Mix of PSD, indefinite and near-singular matrices.
    Eigen::MatrixXd B = random_symmetric(rng, n);
    Eigen::MatrixXd A = (trial % 3 == 0) ? Eigen::MatrixXd(B * B) : B;
    if (trial % 7 == 0) {
      const Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(n, [&]() { return nd(rng); });
      A = v * v.transpose();
    }
    A = 0.5 * (A + A.transpose());
    const auto chk = check_psd(A, tol);
    const Eigen::LLT<Eigen::MatrixXd> llt(A + tol * Eigen::MatrixXd::Identity(n, n));
    const bool chol_ok = llt.info() == Eigen::Success;
    const double margin = std::abs(chk.min_eigenvalue + tol);
    if (margin > 1e-12) {
      EXPECT_EQ(chk.psd, chol_ok) << "trial " << trial << " min eig " << chk.min_eigenvalue;
      ++compared;
    }
  }
  EXPECT_GE(compared, 990);
}

TEST(SolverKernels, FactorizedSchurMatchesNaive) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> pick(0, 9);
  detail::BlockStructure blk;
  blk.dim = 10;
  blk.constant = Eigen::MatrixXd::Zero(10, 10);
  for (int v = 0; v < 6; ++v) {
    blk.vars.push_back(v);
    std::vector<detail::CoeffEntry> list;
    if (v % 2 == 0) {
      const int hub = pick(rng);
      for (int q = 0; q < 10; ++q) {
        if (q % 3 != 1) {
          list.push_back({std::min(hub, q), std::max(hub, q), nd(rng)});
        }
      }
    } else {
      for (int e = 0; e < 5; ++e) {
        const int p = pick(rng);
        const int q = pick(rng);
        list.push_back({std::min(p, q), std::max(p, q), nd(rng)});
      }
    }
    std::map<std::pair<int, int>, double> merged;
    for (const auto& e : list) {
      merged[{e.row, e.col}] += e.value;
    }
    list.clear();
    for (const auto& [pq, val] : merged) {
      list.push_back({pq.first, pq.second, val});
    }
    blk.coeffs.push_back(list);
  }
  blk.factorize();
  const Eigen::MatrixXd R1 = random_symmetric(rng, 10);
  const Eigen::MatrixXd R2 = random_symmetric(rng, 10);
  const Eigen::MatrixXd X = R1 * R1 + Eigen::MatrixXd::Identity(10, 10);
  const Eigen::MatrixXd Z = R2 * R2 + Eigen::MatrixXd::Identity(10, 10);
  Eigen::MatrixXd fast = Eigen::MatrixXd::Zero(6, 6);
  Eigen::MatrixXd slow = Eigen::MatrixXd::Zero(6, 6);
  detail::accumulate_schur(blk, X, Z, fast);
  detail::accumulate_schur_naive(blk, X, Z, slow);
  EXPECT_LE((fast - slow).cwiseAbs().maxCoeff(), 1e-10 * slow.cwiseAbs().maxCoeff());
}

TEST(SolverKernels, StepLengthDenseAndLanczosAgree) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 40;
    const Eigen::MatrixXd R = random_symmetric(rng, n);
    const Eigen::MatrixXd X = R * R + 0.5 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd dX = 3.0 * random_symmetric(rng, n);
    const Eigen::LLT<Eigen::MatrixXd> chol(X);
    const double exact = detail::step_length(chol, X, dX, 0.95, false, n);
    const double approx = detail::step_length(chol, X, dX, 0.95, true, 0);
    EXPECT_LE(approx, exact / 0.95 * (1.0 + 1e-6));
    EXPECT_GE(approx, 0.5 * exact);
    EXPECT_TRUE(Eigen::LLT<Eigen::MatrixXd>(X + approx * dX).info() == Eigen::Success);
  }
}

}  // namespace
}  // namespace reacc::conic
