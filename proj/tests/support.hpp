#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kspec/dataset_io.hpp"
#include "kspec/kernels.hpp"

namespace kspec::testing {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
}

// A A^T / n + shift I; strictly positive definite for shift > 0.
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::uint64_t seed, double shift = 0.1) {
    std::mt19937_64 rng(seed);
    const Eigen::MatrixXd a = gaussian_matrix(n, n, rng);
    Eigen::MatrixXd k = a * a.transpose() / static_cast<double>(n);
    k.diagonal().array() += shift;
    return 0.5 * (k + k.transpose());
}

inline std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "m") {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
    return ids;
}

inline kernels::KernelMatrix wrap(const Eigen::MatrixXd& k, const std::vector<std::string>& ids) {
    return {k, kernels::KernelConfig{}, ids};
}

inline std::vector<std::vector<std::uint8_t>> random_bits(std::size_t n, std::size_t d, double p,
                                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution bit(p);
    std::vector<std::vector<std::uint8_t>> rows(n, std::vector<std::uint8_t>(d));
    for (auto& row : rows) {
        for (auto& b : row) b = bit(rng) ? 1 : 0;
    }
    return rows;
}

inline io::FeatureDataset random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {make_ids(n), gaussian_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng)};
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace kspec::testing
