// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "rlpf/error.hpp"
#include "rlpf/stats.hpp"

namespace rlpf::stats {

LinFit fit_linear(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                  const Eigen::VectorXd& y) {
  const auto n = X.rows();
  const auto k = X.cols();
  if (static_cast<std::size_t>(k) != names.size())
    fail(ErrorKind::InvalidInput, "fit_linear: names do not match columns");
  if (y.size() != n) fail(ErrorKind::InvalidInput, "fit_linear: response length does not match design");
  if (n <= k) fail(ErrorKind::InsufficientData, "fit_linear: need more observations than coefficients");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k) fail(ErrorKind::Design, "fit_linear: design matrix is rank deficient");
  LinFit fit;
  fit.names = names;
  fit.n = static_cast<std::size_t>(n);
  fit.k = static_cast<std::size_t>(k);
  fit.coef = qr.solve(y);
  fit.residuals = y - X * fit.coef;
  const double rss = fit.residuals.squaredNorm();
  fit.sigma2 = rss / static_cast<double>(n - k);
  const double tss = (y.array() - y.mean()).square().sum();
  fit.r2 = tss > 0.0 ? 1.0 - rss / tss : 0.0;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  fit.cov_hc1 = hc1_covariance(X, ones, fit.residuals);
  // (X'X)^-1 through the QR factor: R^-1 R^-T, un-permuted.
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const auto& P = qr.colsPermutation();
  const Eigen::MatrixXd XtXinv = P * (Rinv * Rinv.transpose()) * P.transpose();
  fit.cov_model = fit.sigma2 * XtXinv;
  return fit;
}

}  // namespace rlpf::stats
