//
// Copyright 2026 The Percept Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

// Frechet distance between Gaussians fitted to embedding sets:
//
//   FD = |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))
//
// The trace of the (non-symmetric) square root is taken from the symmetric
// similar matrix S1^(1/2) S2 S1^(1/2), which has the same eigenvalues as
// S1 S2 and a stable real eigendecomposition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "percept/detail/parallel.hpp"
#include "percept/detail/rng.hpp"
#include "percept/embedio.hpp"
#include "percept/error.hpp"
#include "percept/gstats.hpp"

namespace percept {

struct FdResult {
  double total = 0.0;       // mean_term + trace_term
  double mean_term = 0.0;   // |mu1 - mu2|^2
  double trace_term = 0.0;  // clamped at 0
  double clamped = 0.0;     // magnitude removed by the trace_term clamp
};

namespace detail {

// Eigenvalues below -tol are treated as corruption, the rest are clamped.
// The first term tracks the matrix's own scale, the second the solver's
// round-off on rank-deficient input.
inline double eigen_clamp_tolerance(const Eigen::VectorXd& evals, double trace) {
  const double n = static_cast<double>(std::max<Eigen::Index>(evals.size(), 1));
  const double max_abs = evals.size() ? evals.cwiseAbs().maxCoeff() : 0.0;
  return 1e-8 * std::max(trace / n, 0.0) +
         16.0 * n * std::numeric_limits<double>::epsilon() * max_abs;
}

inline Eigen::VectorXd checked_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es,
                                           double trace, const char* what) {
  if (es.info() != Eigen::Success) {
    throw NumericalError(std::string("eigendecomposition failed for ") + what);
  }
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = eigen_clamp_tolerance(ev, trace);
  const double lowest = ev.size() ? ev.minCoeff() : 0.0;
  if (lowest < -tol) {
    throw NumericalError(std::string(what) + " has eigenvalue " + std::to_string(lowest) +
                         " below -" + std::to_string(tol) + " (not PSD)");
  }
  return ev.cwiseMax(0.0);
}

// Symmetric PSD square root via eigendecomposition.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const Eigen::VectorXd ev = checked_eigenvalues(es, s.trace(), what);
  const Eigen::MatrixXd& v = es.eigenvectors();
  const Eigen::MatrixXd scaled = v * ev.cwiseSqrt().asDiagonal();
  return scaled * v.transpose();
}

}  // namespace detail

// Tr((S1 S2)^(1/2)) via the symmetric form.
inline double trace_sqrt_product(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2) {
  const Eigen::MatrixXd r1 = detail::psd_sqrt(s1, "covariance 1");
  Eigen::MatrixXd m = r1 * s2 * r1;
  m = (m + m.transpose()).eval() * 0.5;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = detail::checked_eigenvalues(es, m.trace(), "sqrt(S1) S2 sqrt(S1)");
  return ev.cwiseSqrt().sum();
}

inline FdResult frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2) {
  if (g1.dim != g2.dim) {
    throw DataError("dimension mismatch: " + std::to_string(g1.dim) + " vs " +
                    std::to_string(g2.dim));
  }
  validate_summary(g1);
  validate_summary(g2);
  FdResult r;
  r.mean_term = (g1.mean - g2.mean).squaredNorm();
  const double tr1 = g1.cov.trace();
  const double tr2 = g2.cov.trace();
  const double raw = tr1 + tr2 - 2.0 * trace_sqrt_product(g1.cov, g2.cov);
  if (!std::isfinite(raw) || !std::isfinite(r.mean_term)) {
    throw NumericalError("Frechet distance is not finite");
  }
  if (raw < 0.0) {
    r.clamped = -raw;
    if (r.clamped > 1e-6 * (tr1 + tr2)) {
      std::clog << "warning: trace term " << raw << " clamped to 0 (exceeds 1e-6 of "
                << "Tr(S1)+Tr(S2) = " << (tr1 + tr2) << ")\n";
    }
  }
  r.trace_term = std::max(raw, 0.0);
  r.total = r.mean_term + r.trace_term;
  return r;
}

inline FdResult fd_between_sets(const EmbeddingSet& a, const EmbeddingSet& b,
                                std::size_t threads = 1) {
  if (a.dim() != b.dim()) {
    throw DataError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()));
  }
  return frechet_distance(summarize(a, threads), summarize(b, threads));
}

// Bias-corrected FD: FD measured at several subsample sizes N, a least-squares
// line in 1/N, and its intercept as the N -> infinity estimate.
struct ExtrapolationResult {
  double fd_infinity = 0.0;
  double slope = 0.0;
  // Standard error of the intercept, propagated from the per-size spread
  // of the draws through the fit weights.
  double intercept_stderr = 0.0;
  std::vector<std::size_t> sample_sizes;
  std::vector<double> fd_at_n;      // mean over draws
  std::vector<double> fd_std_at_n;  // population std over draws
  std::vector<double> residuals;    // fd_at_n - fitted line
};

struct ExtrapolationOptions {
  std::vector<std::size_t> sizes;
  std::size_t draws_per_size = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Default schedule: n/8, n/4, n/2, n for n = min row count.
inline std::vector<std::size_t> default_extrapolation_sizes(std::size_t n) {
  return {n / 8, n / 4, n / 2, n};
}

inline ExtrapolationResult extrapolate_fd(const EmbeddingSet& a, const EmbeddingSet& b,
                                          const ExtrapolationOptions& opt) {
  const auto& sizes = opt.sizes;
  if (sizes.size() < 3) throw UsageError("need >= 3 sizes for extrapolation");
  if (opt.draws_per_size == 0) throw UsageError("draws_per_size must be positive");
  if (a.dim() != b.dim()) throw DataError("dimension mismatch");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 2) throw UsageError("extrapolation sizes must be >= 2");
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw UsageError("sizes must be strictly increasing");
  }
  const std::size_t available = std::min(a.rows(), b.rows());
  if (sizes.back() > available) {
    throw DataError("sizes exceed available rows: max size " + std::to_string(sizes.back()) +
                    " > " + std::to_string(available));
  }

  const std::size_t draws = opt.draws_per_size;
  std::vector<double> fds(sizes.size() * draws);
  detail::parallel_for(fds.size(), opt.threads, [&](std::size_t task) {
    const std::size_t si = task / draws;
    const std::size_t di = task % draws;
    detail::CounterRng ra(detail::stream_key(opt.seed, {si, di, 0}));
    detail::CounterRng rb(detail::stream_key(opt.seed, {si, di, 1}));
    const auto ia = detail::sample_without_replacement(a.rows(), sizes[si], ra);
    const auto ib = detail::sample_without_replacement(b.rows(), sizes[si], rb);
    fds[task] = frechet_distance(summarize(a, ia), summarize(b, ib)).total;
  });

  ExtrapolationResult res;
  res.sample_sizes = sizes;
  const std::size_t m = sizes.size();
  std::vector<double> x(m), var_mean(m);
  for (std::size_t si = 0; si < m; ++si) {
    double sum = 0.0;
    for (std::size_t di = 0; di < draws; ++di) sum += fds[si * draws + di];
    const double mean = sum / static_cast<double>(draws);
    double ss = 0.0;
    for (std::size_t di = 0; di < draws; ++di) {
      const double e = fds[si * draws + di] - mean;
      ss += e * e;
    }
    const double var = ss / static_cast<double>(draws);
    res.fd_at_n.push_back(mean);
    res.fd_std_at_n.push_back(std::sqrt(var));
    var_mean[si] = draws > 1 ? ss / static_cast<double>(draws - 1) / static_cast<double>(draws)
                             : 0.0;
    x[si] = 1.0 / static_cast<double>(sizes[si]);
  }

  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    xbar += x[i];
    ybar += res.fd_at_n[i];
  }
  xbar /= static_cast<double>(m);
  ybar /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (res.fd_at_n[i] - ybar);
  }
  res.slope = sxy / sxx;
  res.fd_infinity = ybar - res.slope * xbar;
  double var_icept = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    res.residuals.push_back(res.fd_at_n[i] - (res.fd_infinity + res.slope * x[i]));
    // intercept = sum_i w_i y_i with w_i = 1/m - xbar (x_i - xbar) / sxx
    const double w = 1.0 / static_cast<double>(m) - xbar * (x[i] - xbar) / sxx;
    var_icept += w * w * var_mean[i];
  }
  res.intercept_stderr = std::sqrt(var_icept);
  return res;
}

}  // namespace percept
