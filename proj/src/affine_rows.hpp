#pragma once

#include <Eigen/Dense>

#include "reacc/conic.hpp"

namespace reacc::detail {

// constant + sum_j coeffs(j) x_{first + j}, skipping zero coefficients.
inline conic::AffineExpr affine_row(const Eigen::Ref<const Eigen::RowVectorXd>& coeffs,
                                    double constant, int first) {
  conic::AffineExpr e(constant);
  for (Eigen::Index j = 0; j < coeffs.size(); ++j) {
    if (coeffs(j) != 0.0) {
      e.terms.emplace_back(first + static_cast<int>(j), coeffs(j));
    }
  }
  return e;
}

}  // namespace reacc::detail
