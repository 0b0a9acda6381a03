// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "rlpf/error.hpp"
#include "rlpf/stats.hpp"

namespace rlpf::stats {

std::size_t Fit::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  fail(ErrorKind::InvalidInput, "fit has no coefficient '" + std::string(name) + "'");
}

double Fit::se(std::size_t i, bool robust) const {
  const auto& c = robust ? cov_hc1 : cov_model;
  const auto j = static_cast<Eigen::Index>(i);
  return std::sqrt(std::max(0.0, c(j, j)));
}

namespace {

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& A, const char* what) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail(ErrorKind::Numerical, std::string(what) + ": matrix is not positive definite");
  const auto& D = ldlt.vectorD();
  const double dmax = D.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || D.minCoeff() <= dmax * 1e-14)
    fail(ErrorKind::Numerical, std::string(what) + ": matrix is singular");
  return ldlt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

struct Moments {
  Eigen::VectorXd mu;   // mean on the response scale used by the family
  Eigen::VectorXd w;    // IRLS weight
  Eigen::VectorXd z;    // working response (without offset)
  Eigen::VectorXd s;    // score contribution w * (z - eta)
  double deviance = 0.0;
  double pearson = 0.0;
  bool feasible = true;
};

double ylogy(double y, double m) { return y > 0.0 ? y * std::log(y / m) : 0.0; }

Moments moments(Family family, Link link, const Eigen::VectorXd& eta, const Eigen::VectorXd& off,
                const Eigen::VectorXd& y, const Eigen::VectorXd& n) {
  const auto N = eta.size();
  Moments m;
  m.mu.resize(N);
  m.w.resize(N);
  m.z.resize(N);
  m.s.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double e = eta[i];
    if (family == Family::Poisson) {
      const double mu = std::exp(e + off[i]);
      m.mu[i] = mu;
      m.w[i] = mu;
      m.z[i] = e + (y[i] - mu) / mu;
      m.s[i] = y[i] - mu;
      m.deviance += 2.0 * (ylogy(y[i], mu) - (y[i] - mu));
      m.pearson += (y[i] - mu) * (y[i] - mu) / mu;
      if (!std::isfinite(mu) || mu <= 0.0) m.feasible = false;
      continue;
    }
    double mu;
    if (link == Link::Log) {
      mu = std::exp(e);
      if (!(mu < 1.0)) {
        m.feasible = false;
        mu = std::nextafter(1.0, 0.0);
      }
    } else {
      mu = 1.0 / (1.0 + std::exp(-e));
    }
    mu = std::max(mu, std::numeric_limits<double>::min());
    const double ni = n[i];
    const double pi = y[i] / ni;
    m.mu[i] = mu;
    if (link == Link::Log) {
      m.w[i] = ni * mu / (1.0 - mu);
      m.z[i] = e + (pi - mu) / mu;
      m.s[i] = (y[i] - ni * mu) / (1.0 - mu);
    } else {
      m.w[i] = ni * mu * (1.0 - mu);
      m.z[i] = e + (pi - mu) / (mu * (1.0 - mu));
      m.s[i] = y[i] - ni * mu;
    }
    m.deviance += 2.0 * (ylogy(y[i], ni * mu) + ylogy(ni - y[i], ni * (1.0 - mu)));
    m.pearson += (y[i] - ni * mu) * (y[i] - ni * mu) / (ni * mu * (1.0 - mu));
  }
  if (!std::isfinite(m.deviance)) m.feasible = false;
  return m;
}

}  // namespace

Eigen::MatrixXd hc1_covariance(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& scores) {
  const auto n = X.rows();
  const auto k = X.cols();
  if (n <= k) fail(ErrorKind::InvalidInput, "hc1_covariance: need more rows than columns");
  const Eigen::MatrixXd B = inverse_spd(X.transpose() * weights.asDiagonal() * X, "hc1_covariance");
  const Eigen::MatrixXd meat = X.transpose() * scores.array().square().matrix().asDiagonal() * X;
  Eigen::MatrixXd V = B * meat * B * (static_cast<double>(n) / static_cast<double>(n - k));
  return 0.5 * (V + V.transpose());
}

GlmFit fit_glm(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
               const Eigen::VectorXd& y, const Eigen::VectorXd& n, Family family, Link link,
               const std::optional<Eigen::VectorXd>& offset, const GlmOptions& opt) {
  const auto N = X.rows();
  const auto k = X.cols();
  if (static_cast<std::size_t>(k) != names.size()) fail(ErrorKind::InvalidInput, "fit_glm: names do not match columns");
  if (y.size() != N || n.size() != N || (offset && offset->size() != N))
    fail(ErrorKind::InvalidInput, "fit_glm: response length does not match design");
  if (N <= k) fail(ErrorKind::InsufficientData, "fit_glm: need more observations than coefficients");
  if (family == Family::Poisson && link != Link::Log)
    fail(ErrorKind::InvalidInput, "fit_glm: Poisson family supports the log link only");
  for (Eigen::Index i = 0; i < N; ++i) {
    if (!(y[i] >= 0.0)) fail(ErrorKind::InvalidInput, "fit_glm: negative response");
    if (family == Family::Binomial && (!(n[i] >= 1.0) || y[i] > n[i]))
      fail(ErrorKind::InvalidInput, "fit_glm: binomial rows need 1 <= n and y <= n");
  }
  const Eigen::VectorXd off = offset ? *offset : Eigen::VectorXd::Zero(N);

  GlmFit fit;
  fit.names = names;
  fit.family = family;
  fit.link = link;
  fit.has_offset = offset.has_value();
  fit.n = static_cast<std::size_t>(N);
  fit.k = static_cast<std::size_t>(k);

  // Start from the pooled rate on the intercept, zeros elsewhere.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  const auto constant = std::find(names.begin(), names.end(), "Constant");
  const double rate = family == Family::Poisson ? y.sum() / off.array().exp().sum() : y.sum() / n.sum();
  const double r = std::clamp(rate, 1e-10, 1.0 - 1e-10);
  const double start = link == Link::Logit ? std::log(r / (1.0 - r)) : std::log(family == Family::Poisson ? rate : r);
  if (constant != names.end() && std::isfinite(start))
    beta[constant - names.begin()] = start;

  Eigen::VectorXd eta = X * beta;
  Moments m = moments(family, link, eta, off, y, n);
  if (!m.feasible) {
    beta.setZero();
    if (constant != names.end()) beta[constant - names.begin()] = family == Family::Poisson ? 0.0 : std::log(0.5);
    eta = X * beta;
    m = moments(family, link, eta, off, y, n);
  }

  for (int it = 1; it <= opt.max_iter; ++it) {
    fit.iterations = it;
    const Eigen::MatrixXd XtW = X.transpose() * m.w.asDiagonal();
    const Eigen::VectorXd target = XtW * m.z;
    Eigen::VectorXd proposal = (XtW * X).ldlt().solve(target);
    if (!proposal.allFinite()) break;
    // Step-halving keeps log-binomial means below one and the deviance from rising.
    Eigen::VectorXd step = proposal - beta;
    Moments next;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      const Eigen::VectorXd cand = beta + step;
      const Eigen::VectorXd cand_eta = X * cand;
      next = moments(family, link, cand_eta, off, y, n);
      if (next.feasible && next.deviance <= m.deviance * (1.0 + 1e-12) + 1e-12) {
        proposal = cand;
        eta = cand_eta;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double dcoef = (proposal - beta).cwiseAbs().maxCoeff() / (beta.cwiseAbs().maxCoeff() + 1e-10);
    const double ddev = std::abs(next.deviance - m.deviance) / (std::abs(next.deviance) + 0.1);
    beta = proposal;
    m = std::move(next);
    if (dcoef < opt.tol_coef || ddev < opt.tol_deviance) {
      fit.converged = true;
      break;
    }
  }

  fit.coef = beta;
  fit.eta = eta;
  fit.mu = m.mu;
  fit.weights = m.w;
  fit.scores = m.s;
  fit.deviance = m.deviance;
  fit.pearson_chi2 = m.pearson;
  fit.dispersion = m.pearson / static_cast<double>(N - k);
  if (family == Family::Binomial && link == Link::Log)
    fit.boundary = (m.mu.array() > 1.0 - 1e-8).any();
  fit.cov_model = inverse_spd(X.transpose() * m.w.asDiagonal() * X, "fit_glm");
  fit.cov_hc1 = hc1_covariance(X, m.w, m.s);
  return fit;
}

QuasiResult quasi_dispersion(const GlmFit& fit) {
  if (fit.n <= fit.k) fail(ErrorKind::InvalidInput, "quasi_dispersion: need n > k");
  QuasiResult q;
  q.phi = fit.pearson_chi2 / static_cast<double>(fit.n - fit.k);
  q.se.resize(static_cast<Eigen::Index>(fit.k));
  for (std::size_t i = 0; i < fit.k; ++i) q.se[static_cast<Eigen::Index>(i)] = fit.se(i, false) * std::sqrt(q.phi);
  return q;
}

GlmFit as_quasi(const GlmFit& fit) {
  GlmFit q = fit;
  q.cov_model = fit.cov_model * quasi_dispersion(fit).phi;
  return q;
}

}  // namespace rlpf::stats
