#include "kspec/regression.hpp"

#include <cmath>
#include <limits>

#include "kspec/errors.hpp"
#include "kspec/random.hpp"

namespace kspec::regression {

namespace {

double singular_tolerance(Eigen::Index n, double scale) {
    return static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
}

Eigen::MatrixXd take(const Eigen::MatrixXd& k, const std::vector<Eigen::Index>& rows,
                     const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = k(rows[r], cols[c]);
        }
    }
    return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& y, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), y.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = y.row(rows[r]);
    return out;
}

}  // namespace

Eigen::MatrixXd solve_dual(const Eigen::MatrixXd& k, const Eigen::MatrixXd& y, double lambda) {
    const Eigen::Index n = k.rows();
    if (k.cols() != n || y.rows() != n) throw ValidationError("kernel matrix and targets have different sizes");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite value >= 0");
    if (n == 0) throw ValidationError("empty training set");

    Eigen::MatrixXd system = k;
    system.diagonal().array() += lambda;
    const Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() == Eigen::Success && (lambda > 0.0 || llt.rcond() > singular_tolerance(n, 1.0))) {
        return llt.solve(y);
    }

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
    if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
    const Eigen::VectorXd shifted = eig.eigenvalues().array() + lambda;
    const double tol = singular_tolerance(n, shifted.cwiseAbs().maxCoeff());
    if ((shifted.array().abs() <= tol).any()) {
        if (lambda == 0.0) {
            throw NumericalError("kernel matrix is numerically singular; ridgeless (lambda = 0) "
                                 "regression is undefined here, use lambda > 0");
        }
        throw NumericalError("regularized kernel system is numerically singular");
    }
    const Eigen::MatrixXd coef = shifted.cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * y);
    return eig.eigenvectors() * coef;
}

Eigen::VectorXd solve_dual(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double lambda) {
    return solve_dual(k, Eigen::MatrixXd(y), lambda).col(0);
}

KRRModel fit(const kernels::KernelMatrix& k, const Eigen::VectorXd& y, double lambda) {
    return {solve_dual(k.values, y, lambda), lambda, k.ids, k.config};
}

Eigen::VectorXd solve_truncated(const spectral::EigenSystem& eig, std::size_t r, const Eigen::VectorXd& y,
                                double lambda) {
    if (r < 1 || r > eig.size()) throw ValidationError("truncation rank out of range");
    if (y.size() != eig.U.rows()) throw ValidationError("targets do not match the eigensystem size");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite value >= 0");

    const auto rr = static_cast<Eigen::Index>(r);
    const auto ur = eig.U.leftCols(rr);
    const Eigen::VectorXd coef = ur.transpose() * y;
    const Eigen::ArrayXd shifted = eig.mu.head(rr).array() + lambda;
    const double tol = singular_tolerance(eig.U.rows(), std::max(eig.mu[0], 0.0) + lambda);
    if ((shifted <= tol).any()) {
        throw NumericalError(lambda == 0.0 ? "truncated kernel keeps a numerically zero eigenvalue; "
                                             "ridgeless solve is undefined at this rank"
                                           : "truncated regularized system is numerically singular");
    }
    Eigen::VectorXd alpha = ur * (coef.array() / shifted).matrix();
    if (lambda > 0.0) alpha += (y - ur * coef) / lambda;
    return alpha;
}

Eigen::VectorXd predict(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& kx) {
    if (kx.rows() != alpha.size()) {
        throw ValidationError("cross kernel has " + std::to_string(kx.rows()) + " training rows but the model has " +
                              std::to_string(alpha.size()) + " coefficients");
    }
    return kx.transpose() * alpha;
}

Eigen::VectorXd predict(const KRRModel& model, const kernels::CrossKernel& kx) {
    if (!model.train_ids.empty() && !kx.train_ids.empty() && model.train_ids != kx.train_ids) {
        throw ValidationError("cross kernel training ids do not match the model");
    }
    return predict(model.alpha, kx.values);
}

Score score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
    if (y_true.size() != y_pred.size()) throw ValidationError("score: length mismatch");
    if (y_true.size() < 2) throw ValidationError("score needs at least 2 points");
    const double mean = y_true.mean();
    const double ss_tot = (y_true.array() - mean).square().sum();
    if (ss_tot == 0.0) throw ValidationError("undefined R^2: targets are constant");
    const double ss_res = (y_true - y_pred).squaredNorm();
    return {1.0 - ss_res / ss_tot, (y_true - y_pred).cwiseAbs().mean()};
}

std::vector<FitReport> tune_lambda(const Eigen::MatrixXd& k, const Eigen::MatrixXd& y,
                                   const std::vector<double>& grid, const CvOptions& options) {
    const auto n = static_cast<std::size_t>(y.rows());
    const auto targets = static_cast<std::size_t>(y.cols());
    if (k.rows() != y.rows() || k.cols() != y.rows()) throw ValidationError("kernel matrix and targets have different sizes");
    if (grid.empty()) throw ValidationError("lambda grid is empty");
    if (options.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");

    const auto perm = seeded_permutation(n, options.seed);
    struct Fold {
        std::vector<Eigen::Index> train;
        std::vector<Eigen::Index> valid;
        Eigen::MatrixXd k_train;
        Eigen::MatrixXd k_cross;
        Eigen::MatrixXd y_train;
        Eigen::MatrixXd y_valid;
    };
    std::vector<Fold> folds(options.folds);
    for (std::size_t f = 0; f < options.folds; ++f) {
        auto& fold = folds[f];
        const std::size_t begin = f * n / options.folds;
        const std::size_t end = (f + 1) * n / options.folds;
        for (std::size_t p = 0; p < n; ++p) {
            auto& dst = (p >= begin && p < end) ? fold.valid : fold.train;
            dst.push_back(static_cast<Eigen::Index>(perm[p]));
        }
        if (fold.valid.size() < 2 || fold.train.empty()) {
            throw ValidationError("fold too small: " + std::to_string(n) + " points cannot fill " +
                                  std::to_string(options.folds) + " folds of >= 2");
        }
        fold.k_train = take(k, fold.train, fold.train);
        fold.k_cross = take(k, fold.train, fold.valid);
        fold.y_train = take_rows(y, fold.train);
        fold.y_valid = take_rows(y, fold.valid);
    }

    // One job per (lambda, fold); results land in fixed slots so the
    // reduction below is independent of scheduling.
    const std::size_t jobs = grid.size() * options.folds;
    std::vector<std::vector<std::optional<double>>> fold_r2(jobs, std::vector<std::optional<double>>(targets));
    parallel_for(jobs, options.jobs, [&](std::size_t job) {
        const std::size_t g = job / options.folds;
        const auto& fold = folds[job % options.folds];
        Eigen::MatrixXd pred;
        try {
            pred = fold.k_cross.transpose() * solve_dual(fold.k_train, fold.y_train, grid[g]);
        } catch (const NumericalError&) {
            return;
        }
        for (std::size_t t = 0; t < targets; ++t) {
            const auto c = static_cast<Eigen::Index>(t);
            const double r2 = score(fold.y_valid.col(c), pred.col(c)).r2;
            if (std::isfinite(r2)) fold_r2[job][t] = r2;
        }
    });

    std::vector<FitReport> reports(targets);
    for (std::size_t t = 0; t < targets; ++t) {
        auto& report = reports[t];
        report.seed = options.seed;
        std::optional<std::size_t> best;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            CvEntry entry{grid[g], 0.0};
            for (std::size_t f = 0; f < options.folds; ++f) {
                const auto& v = fold_r2[g * options.folds + f][t];
                if (!v) {
                    entry.mean_r2.reset();
                    break;
                }
                *entry.mean_r2 += *v;
            }
            if (entry.mean_r2) *entry.mean_r2 /= static_cast<double>(options.folds);
            report.cv_table.push_back(entry);
            if (!entry.mean_r2) continue;
            if (!best) {
                best = g;
                continue;
            }
            const auto& incumbent = report.cv_table[*best];
            if (*entry.mean_r2 > *incumbent.mean_r2 ||
                (*entry.mean_r2 == *incumbent.mean_r2 && entry.lambda > incumbent.lambda)) {
                best = g;
            }
        }
        if (!best) throw NumericalError("no lambda in the grid gave a solvable system on every fold");
        report.lambda_selected = grid[*best];
    }
    return reports;
}

FitReport tune_lambda(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, const std::vector<double>& grid,
                      const CvOptions& options) {
    return tune_lambda(k, Eigen::MatrixXd(y), grid, options).front();
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid{0.0};
    for (int e = -12; e <= 2; ++e) grid.push_back(std::stod("1e" + std::to_string(e)));
    return grid;
}

void to_json(nlohmann::json& j, const FitReport& report) {
    nlohmann::json cv = nlohmann::json::array();
    for (const auto& entry : report.cv_table) {
        cv.push_back({entry.lambda, entry.mean_r2 ? nlohmann::json(*entry.mean_r2) : nlohmann::json(nullptr)});
    }
    j = {{"lambda", report.lambda_selected},
         {"r2", report.r2},
         {"mae", report.mae},
         {"cv", std::move(cv)},
         {"seed", report.seed}};
}

}  // namespace kspec::regression
