#include "dcee/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "dcee/error.hpp"

namespace dcee {

double condition_number(const Matrix& a) {
  if (a.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0) || !std::isfinite(smax)) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

namespace {

void check_conditioning(const Matrix& a, double min_rcond, std::string_view what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw NumericalError(std::string(what) + ": matrix must be square and non-empty");
  }
  if (!a.allFinite()) throw NumericalError(std::string(what) + ": matrix has non-finite entries");
  const double cond = condition_number(a);
  if (!(1.0 / cond >= min_rcond)) {
    std::ostringstream msg;
    msg << what << " is singular or ill-conditioned (condition number " << cond
        << ", reciprocal below " << min_rcond << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

Vector solve_checked(const Matrix& a, const Vector& b, double min_rcond, std::string_view what) {
  check_conditioning(a, min_rcond, what);
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  Vector x = qr.solve(b);
  // one step of iterative refinement keeps the residual at rounding level
  x += qr.solve(b - a * x);
  return x;
}

Matrix inverse_checked(const Matrix& a, double min_rcond, std::string_view what) {
  check_conditioning(a, min_rcond, what);
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  return qr.inverse();
}

double min_symmetric_eigenvalue(const Matrix& a) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace dcee
