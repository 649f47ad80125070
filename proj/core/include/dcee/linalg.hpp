#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace dcee {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// 2-norm condition number (ratio of extreme singular values); +inf when singular.
double condition_number(const Matrix& a);

/// Solves a square system with a rank-revealing QR after checking that the
/// reciprocal condition number is at least `min_rcond`. Throws NumericalError
/// naming `what` and the condition number otherwise.
Vector solve_checked(const Matrix& a, const Vector& b, double min_rcond, std::string_view what);

/// Inverse with the same conditioning check as solve_checked.
Matrix inverse_checked(const Matrix& a, double min_rcond, std::string_view what);

/// Smallest eigenvalue of the symmetric part of `a`.
double min_symmetric_eigenvalue(const Matrix& a);

}  // namespace dcee
