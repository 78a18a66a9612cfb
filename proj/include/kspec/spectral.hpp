#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kspec/kernels.hpp"

namespace kspec::spectral {

// Eigenpairs of a symmetric kernel matrix, eigenvalues non-increasing.
// `mu` holds the raw eigenvalues; small negative values from round-off are
// kept here and only clamped when metrics are computed.
struct EigenSystem {
    Eigen::VectorXd mu;
    Eigen::MatrixXd U;  // column k is the eigenvector of mu[k]

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(mu.size()); }
    // max(mu, 0), the spectrum every metric is computed on.
    [[nodiscard]] std::vector<double> clamped() const;
};

// Throws ValidationError for a non-symmetric matrix (relative 1e-12) and logs
// a warning when an eigenvalue falls below -1e-8 * mu_1.
EigenSystem eigendecompose(const Eigen::MatrixXd& k);
inline EigenSystem eigendecompose(const kernels::KernelMatrix& k) { return eigendecompose(k.values); }

// K^(r) = sum_{k<=r} mu_k u_k u_k^T.
Eigen::MatrixXd truncated_gram(const EigenSystem& eig, std::size_t r);

// Projects each cross-kernel column onto the span of the top-r training
// eigenvectors: U_r U_r^T Kx. On training points this reproduces K^(r); at
// r = n it returns Kx.
kernels::CrossKernel approx_truncated_cross(const EigenSystem& eig, std::size_t r,
                                            const kernels::CrossKernel& kx);
Eigen::MatrixXd approx_truncated_cross(const EigenSystem& eig, std::size_t r, const Eigen::MatrixXd& kx);

// Eigenvalues at or below this fraction of mu_1 are left out of the
// log-log regression.
inline constexpr double kPowerLawFloor = 1e-12;

// Negated OLS slope of log mu_j against log j (j = 1, 2, ...) over the
// positive part of the spectrum. The input is sorted descending first.
double power_law_alpha(std::span<const double> mu);

struct RankMetrics {
    double sse = 0;  // exponentiated Shannon entropy of mu / sum(mu)
    double id = 0;   // sum(mu) / mu_1
    double sr = 0;   // sum(mu^2) / mu_1^2
};

// Computed on max(mu, 0); throws NumericalError when no eigenvalue is positive.
RankMetrics spectral_metrics(std::span<const double> mu);

struct SpectrumMetrics {
    std::optional<double> alpha;  // empty when fewer than two eigenvalues are positive
    double sse = 0;
    double id = 0;
    double sr = 0;
};

SpectrumMetrics all_metrics(std::span<const double> mu);

// Metrics over sorted positions 4 .. floor(n/2) (1-based), re-indexed from 1.
// Requires n >= 8.
SpectrumMetrics truncated_metrics(std::span<const double> mu);

struct SpectrumReport {
    std::size_t n = 0;
    std::size_t numerical_rank = 0;
    double min_eigenvalue = 0;  // raw
    SpectrumMetrics full;
    std::optional<SpectrumMetrics> truncated;  // empty when n < 8
};

SpectrumReport spectrum_report(const EigenSystem& eig);

// Count of eigenvalues above n * eps * mu_1.
std::size_t numerical_rank(std::span<const double> mu);

}  // namespace kspec::spectral
