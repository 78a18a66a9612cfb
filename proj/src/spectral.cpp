#include "kspec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "kspec/errors.hpp"
#include "kspec/log.hpp"

namespace kspec::spectral {

namespace {

std::vector<double> sorted_descending(std::span<const double> mu) {
    std::vector<double> out(mu.begin(), mu.end());
    std::stable_sort(out.begin(), out.end(), std::greater<>());
    return out;
}

void check_rank(const EigenSystem& eig, std::size_t r) {
    if (r < 1 || r > eig.size()) {
        throw ValidationError("truncation rank " + std::to_string(r) + " outside [1, " +
                              std::to_string(eig.size()) + "]");
    }
}

}  // namespace

std::vector<double> EigenSystem::clamped() const {
    std::vector<double> out(mu.begin(), mu.end());
    for (auto& v : out) v = std::max(v, 0.0);
    return out;
}

EigenSystem eigendecompose(const Eigen::MatrixXd& k) {
    if (k.rows() != k.cols() || k.rows() == 0) throw ValidationError("kernel matrix must be square and non-empty");
    const double scale = k.cwiseAbs().maxCoeff();
    if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ValidationError("kernel matrix is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
    if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");

    // Eigen returns ascending eigenvalues; reverse into descending order.
    const Eigen::Index n = k.rows();
    EigenSystem eig;
    eig.mu = solver.eigenvalues().reverse();
    eig.U = solver.eigenvectors().rowwise().reverse();

    const double top = eig.mu[0];
    const double bottom = eig.mu[n - 1];
    if (bottom < -kernels::kPsdTolerance * std::max(top, 0.0)) {
        std::ostringstream msg;
        msg << "kernel matrix has eigenvalue " << bottom << " below -" << kernels::kPsdTolerance
            << " * mu_1 (mu_1 = " << top << ")";
        log_warning(msg.str());
    }
    return eig;
}

Eigen::MatrixXd truncated_gram(const EigenSystem& eig, std::size_t r) {
    check_rank(eig, r);
    const auto rr = static_cast<Eigen::Index>(r);
    const auto ur = eig.U.leftCols(rr);
    return ur * eig.mu.head(rr).asDiagonal() * ur.transpose();
}

Eigen::MatrixXd approx_truncated_cross(const EigenSystem& eig, std::size_t r, const Eigen::MatrixXd& kx) {
    check_rank(eig, r);
    if (kx.rows() != eig.U.rows()) {
        throw ValidationError("cross kernel has " + std::to_string(kx.rows()) + " training rows, expected " +
                              std::to_string(eig.U.rows()));
    }
    const auto ur = eig.U.leftCols(static_cast<Eigen::Index>(r));
    return ur * (ur.transpose() * kx);
}

kernels::CrossKernel approx_truncated_cross(const EigenSystem& eig, std::size_t r,
                                            const kernels::CrossKernel& kx) {
    return {approx_truncated_cross(eig, r, kx.values), kx.config, kx.train_ids, kx.test_ids};
}

double power_law_alpha(std::span<const double> mu) {
    const auto sorted = sorted_descending(mu);
    if (sorted.empty() || !(sorted.front() > 0.0)) {
        throw NumericalError("power-law fit needs at least 2 positive eigenvalues");
    }
    const double floor = kPowerLawFloor * sorted.front();
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t j = 0; j < sorted.size() && sorted[j] > floor; ++j) {
        xs.push_back(std::log(static_cast<double>(j + 1)));
        ys.push_back(std::log(sorted[j]));
    }
    if (xs.size() < 2) throw NumericalError("power-law fit needs at least 2 positive eigenvalues");

    const double m = static_cast<double>(xs.size());
    const double x_mean = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
    const double y_mean = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - x_mean) * (ys[k] - y_mean);
        sxx += (xs[k] - x_mean) * (xs[k] - x_mean);
    }
    return -sxy / sxx;
}

RankMetrics spectral_metrics(std::span<const double> mu) {
    auto s = sorted_descending(mu);
    for (auto& v : s) v = std::max(v, 0.0);
    if (s.empty() || !(s.front() > 0.0)) throw NumericalError("spectral metrics need a positive eigenvalue");
    const double top = s.front();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double v : s) {
        sum += v;
        sum_sq += (v / top) * (v / top);
    }
    double entropy = 0.0;
    for (double v : s) {
        if (v <= 0.0) continue;  // 0 log 0 := 0
        const double p = v / sum;
        entropy -= p * std::log(p);
    }
    return {std::exp(entropy), sum / top, sum_sq};
}

SpectrumMetrics all_metrics(std::span<const double> mu) {
    const auto rank = spectral_metrics(mu);
    SpectrumMetrics out{std::nullopt, rank.sse, rank.id, rank.sr};
    try {
        out.alpha = power_law_alpha(mu);
    } catch (const NumericalError&) {
        out.alpha.reset();
    }
    return out;
}

SpectrumMetrics truncated_metrics(std::span<const double> mu) {
    const std::size_t n = mu.size();
    if (n < 8) {
        throw ValidationError("truncated metrics need n >= 8 (window 4..n/2 is empty), got n = " +
                              std::to_string(n));
    }
    const auto sorted = sorted_descending(mu);
    const std::span<const double> window(sorted.data() + 3, n / 2 - 3);
    return all_metrics(window);
}

std::size_t numerical_rank(std::span<const double> mu) {
    if (mu.empty()) return 0;
    const double top = *std::max_element(mu.begin(), mu.end());
    if (!(top > 0.0)) return 0;
    const double tol = static_cast<double>(mu.size()) * std::numeric_limits<double>::epsilon() * top;
    return static_cast<std::size_t>(std::count_if(mu.begin(), mu.end(), [&](double v) { return v > tol; }));
}

SpectrumReport spectrum_report(const EigenSystem& eig) {
    SpectrumReport report;
    report.n = eig.size();
    const std::vector<double> raw(eig.mu.begin(), eig.mu.end());
    report.numerical_rank = numerical_rank(raw);
    report.min_eigenvalue = raw.empty() ? 0.0 : raw.back();
    const auto clamped = eig.clamped();
    report.full = all_metrics(clamped);
    if (report.n >= 8) {
        try {
            report.truncated = truncated_metrics(clamped);
        } catch (const NumericalError&) {
            // window holds no positive eigenvalue (e.g. rank <= 3)
        }
    }
    return report;
}

}  // namespace kspec::spectral
