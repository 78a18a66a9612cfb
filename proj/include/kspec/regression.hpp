#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "kspec/kernels.hpp"
#include "kspec/parallel.hpp"
#include "kspec/spectral.hpp"

namespace kspec::regression {

struct KRRModel {
    Eigen::VectorXd alpha;  // dual coefficients
    double lambda = 0.0;
    std::vector<std::string> train_ids;
    kernels::KernelConfig config;
};

struct Score {
    double r2 = 0.0;
    double mae = 0.0;
};

struct CvEntry {
    double lambda = 0.0;
    std::optional<double> mean_r2;  // empty when some fold could not be solved
};

struct FitReport {
    double lambda_selected = 0.0;
    double r2 = 0.0;
    double mae = 0.0;
    std::vector<CvEntry> cv_table;
    std::uint64_t seed = 0;
};

struct CvOptions {
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::size_t jobs = default_jobs();
};

// Solves (K + lambda I) alpha = y by Cholesky, falling back to a symmetric
// eigendecomposition. At lambda = 0 a numerically singular K is a
// NumericalError.
Eigen::VectorXd solve_dual(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double lambda);
// Same, one right-hand side per column of y.
Eigen::MatrixXd solve_dual(const Eigen::MatrixXd& k, const Eigen::MatrixXd& y, double lambda);

KRRModel fit(const kernels::KernelMatrix& k, const Eigen::VectorXd& y, double lambda);

// Exact solution of (K^(r) + lambda I) alpha = y through the eigenpairs of
// K. At lambda = 0 this is the minimum-norm (pseudo-inverse) solution on
// span(U_r); it fails when one of the kept eigenvalues is numerically zero.
Eigen::VectorXd solve_truncated(const spectral::EigenSystem& eig, std::size_t r, const Eigen::VectorXd& y,
                                double lambda);

// prediction_j = sum_i alpha_i Kx(i, j)
Eigen::VectorXd predict(const KRRModel& model, const kernels::CrossKernel& kx);
Eigen::VectorXd predict(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& kx);

Score score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Grid search over lambda with k-fold cross-validation. Folds are contiguous
// blocks of seeded_permutation(n, seed); the lambda with the highest mean
// validation R^2 wins, ties going to the larger lambda. r2/mae of the report
// are left at 0 for the caller to fill in after scoring on a test set.
FitReport tune_lambda(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, const std::vector<double>& grid,
                      const CvOptions& options = {});
// Tunes every column of y independently while sharing one factorization per
// (lambda, fold).
std::vector<FitReport> tune_lambda(const Eigen::MatrixXd& k, const Eigen::MatrixXd& y,
                                   const std::vector<double>& grid, const CvOptions& options = {});

// {0} U {1e-12, 1e-11, ..., 1e2}
std::vector<double> default_lambda_grid();

void to_json(nlohmann::json& j, const FitReport& report);

}  // namespace kspec::regression
