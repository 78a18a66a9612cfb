#include "kspec/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "kspec/errors.hpp"

namespace kspec::experiments {

namespace {

struct Standardizer {
    double mean = 0.0;
    double scale = 1.0;

    static Standardizer of(const Eigen::VectorXd& y) {
        Standardizer s;
        s.mean = y.mean();
        const double var = (y.array() - s.mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(y.size() - 1, 1));
        s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
        return s;
    }
};

Eigen::MatrixXd target_matrix(const io::TargetTable& targets, const std::vector<std::string>& properties,
                              std::span<const std::string> ids) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(properties.size()));
    for (std::size_t p = 0; p < properties.size(); ++p) {
        y.col(static_cast<Eigen::Index>(p)) = targets.column(properties[p], ids);
    }
    return y;
}

void check_properties(const io::TargetTable& targets, const std::vector<std::string>& properties) {
    if (properties.empty()) throw ValidationError("no target properties selected");
    for (const auto& p : properties) {
        if (!targets.has_property(p)) throw ValidationError("targets have no property '" + p + "'");
    }
}

Thresholds thresholds_for(std::span<const double> levels, std::span<const std::optional<double>> r2,
                          std::optional<double> reference) {
    Thresholds t;
    if (!reference) return t;
    t.pct95 = threshold_level(levels, r2, 0.95 * *reference);
    t.pct99 = threshold_level(levels, r2, 0.99 * *reference);
    return t;
}

}  // namespace

SplitEvaluation evaluate_split(const kernels::KernelMatrix& gram, const kernels::CrossKernel& cross,
                               const io::TargetTable& targets, const std::vector<std::string>& properties,
                               const EvalOptions& options, std::uint64_t cv_seed) {
    check_properties(targets, properties);
    if (cross.values.rows() != gram.values.rows()) throw ValidationError("cross kernel does not match the Gram matrix");
    const auto& train_ids = gram.ids;
    const auto& test_ids = cross.test_ids;

    Eigen::MatrixXd y_train = target_matrix(targets, properties, train_ids);
    const Eigen::MatrixXd y_test = target_matrix(targets, properties, test_ids);
    std::vector<Standardizer> scalers(properties.size());
    if (options.standardize) {
        for (std::size_t p = 0; p < properties.size(); ++p) {
            const auto c = static_cast<Eigen::Index>(p);
            scalers[p] = Standardizer::of(y_train.col(c));
            y_train.col(c) = (y_train.col(c).array() - scalers[p].mean) / scalers[p].scale;
        }
    }

    const regression::CvOptions cv{options.folds, cv_seed, options.jobs};
    auto reports = regression::tune_lambda(gram.values, y_train, options.lambda_grid, cv);

    SplitEvaluation out;
    out.seed = cv_seed;
    for (std::size_t p = 0; p < properties.size(); ++p) {
        const auto c = static_cast<Eigen::Index>(p);
        auto& report = reports[p];
        const Eigen::VectorXd alpha = regression::solve_dual(gram.values, Eigen::VectorXd(y_train.col(c)), report.lambda_selected);
        Eigen::VectorXd pred = regression::predict(alpha, cross.values);
        if (options.standardize) pred = (pred.array() * scalers[p].scale + scalers[p].mean).matrix();
        const auto s = regression::score(y_test.col(c), pred);
        report.r2 = s.r2;
        report.mae = s.mae;
        out.properties.push_back({properties[p], std::move(report)});
    }
    std::vector<double> r2s;
    for (const auto& fit : out.properties) r2s.push_back(fit.report.r2);
    out.avg_r2 = average(r2s);
    return out;
}

std::vector<std::string> shared_ids(const kernels::Representation& data, const io::TargetTable& targets) {
    const std::unordered_set<std::string> labelled(targets.ids().begin(), targets.ids().end());
    std::vector<std::string> out;
    for (const auto& id : kernels::ids_of(data)) {
        if (labelled.contains(id)) out.push_back(id);
    }
    return out;
}

EvaluationResult evaluate(const kernels::Representation& data, const kernels::KernelConfig& config,
                          const io::TargetTable& targets, const std::vector<std::string>& properties,
                          const SplitPlan& plan, const EvalOptions& options) {
    if (plan.seeds.empty()) throw ValidationError("at least one trial seed is required");
    const auto pool = shared_ids(data, targets);
    std::vector<io::SplitSpec> splits;
    for (const auto seed : plan.seeds) splits.push_back(io::make_split(pool, plan.n_train, plan.n_test, seed));
    return evaluate(data, config, targets, properties, splits, options);
}

EvaluationResult evaluate(const kernels::Representation& data, const kernels::KernelConfig& config,
                          const io::TargetTable& targets, const std::vector<std::string>& properties,
                          const std::vector<io::SplitSpec>& splits, const EvalOptions& options) {
    if (splits.empty()) throw ValidationError("at least one trial is required");
    check_properties(targets, properties);
    kernels::check_compatible(data, config);
    const auto& all_ids = kernels::ids_of(data);

    EvaluationResult result;
    for (const auto& split : splits) {
        const auto train = kernels::subset(data, io::positions_of(all_ids, split.train_ids));
        const auto test = kernels::subset(data, io::positions_of(all_ids, split.test_ids));
        const auto k = kernels::gram(train, config, options.jobs);
        const auto kx = kernels::cross(train, test, config, options.jobs);
        result.trials.push_back(evaluate_split(k, kx, targets, properties, options, split.seed));
    }

    std::vector<double> trial_avg;
    for (const auto& t : result.trials) trial_avg.push_back(t.avg_r2);
    for (std::size_t p = 0; p < properties.size(); ++p) {
        std::vector<double> r2;
        std::vector<double> mae;
        for (const auto& t : result.trials) {
            r2.push_back(t.properties[p].report.r2);
            mae.push_back(t.properties[p].report.mae);
        }
        result.properties.push_back({properties[p], average(r2), sample_stddev(r2), average(mae), sample_stddev(mae)});
    }
    std::vector<double> means;
    for (const auto& s : result.properties) means.push_back(s.mean_r2);
    result.avg_r2 = average(means);
    result.avg_r2_std = sample_stddev(trial_avg);
    return result;
}

double average(std::span<const double> values) {
    if (values.empty()) throw ValidationError("average of an empty list");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double mean = average(values);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::vector<double> default_truncation_levels() {
    return {0.1, 0.2, 0.5, 1,  2,  2.9, 3.8, 4.6, 5.5, 6.4, 7.2, 8.1, 9,  10, 15, 20,
            25,  30,  35,  40, 45, 50,  55,  60,  65,  70,  75,  80,  85, 90, 95, 100};
}

std::size_t rank_for_level(double level, std::size_t n) {
    const double r = std::round(level * static_cast<double>(n) / 100.0);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1, n);
}

std::optional<double> threshold_level(std::span<const double> levels, std::span<const std::optional<double>> r2,
                                      double target) {
    if (levels.size() != r2.size()) throw ValidationError("levels and R^2 values differ in length");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (r2[i] && *r2[i] >= target) return levels[i];
    }
    return std::nullopt;
}

TruncationSweepResult truncation_sweep(const kernels::KernelMatrix& gram, const spectral::EigenSystem& eig,
                                       const kernels::CrossKernel& cross,
                                       const std::vector<PropertyTargets>& targets, const SweepOptions& options) {
    const std::size_t n = gram.size();
    if (eig.size() != n) throw ValidationError("eigensystem does not match the Gram matrix");
    if (static_cast<std::size_t>(cross.values.rows()) != n) throw ValidationError("cross kernel does not match the Gram matrix");
    if (targets.empty()) throw ValidationError("no target properties selected");
    if (options.levels.empty()) throw ValidationError("truncation level list is empty");
    for (std::size_t i = 0; i < options.levels.size(); ++i) {
        const double l = options.levels[i];
        if (!(l > 0.0 && l <= 100.0)) throw ValidationError("truncation levels must lie in (0, 100]");
        if (i > 0 && !(l > options.levels[i - 1])) throw ValidationError("truncation levels must be strictly increasing");
    }

    const auto p_count = targets.size();
    Eigen::MatrixXd y_train(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p_count));
    for (std::size_t p = 0; p < p_count; ++p) {
        if (static_cast<std::size_t>(targets[p].train.size()) != n || targets[p].test.size() != cross.values.cols()) {
            throw ValidationError("targets for '" + targets[p].property + "' do not match the kernel sizes");
        }
        y_train.col(static_cast<Eigen::Index>(p)) = targets[p].train;
    }

    TruncationSweepResult result;
    result.regularized = options.regularized;
    result.levels = options.levels;
    for (double l : options.levels) result.ranks.push_back(rank_for_level(l, n));
    result.properties.resize(p_count);
    for (std::size_t p = 0; p < p_count; ++p) {
        result.properties[p].property = targets[p].property;
        result.properties[p].r2.resize(options.levels.size());
        result.properties[p].lambda.assign(options.levels.size(), 0.0);
    }

    // Untruncated reference: KRR with lambda tuned on the full Gram.
    const regression::CvOptions cv{options.folds, options.cv_seed, options.jobs};
    const auto full_reports = regression::tune_lambda(gram.values, y_train, options.lambda_grid, cv);
    for (std::size_t p = 0; p < p_count; ++p) {
        auto& sweep = result.properties[p];
        sweep.full_krr_lambda = full_reports[p].lambda_selected;
        try {
            const auto alpha = regression::solve_dual(gram.values, targets[p].train, sweep.full_krr_lambda);
            sweep.full_krr_r2 = regression::score(targets[p].test, regression::predict(alpha, cross.values)).r2;
        } catch (const NumericalError&) {
        }
    }

    // U^T Kx once; the level-r cross kernel is U_r (U^T Kx)_{1..r}.
    const Eigen::MatrixXd projected = eig.U.transpose() * cross.values;

    for (std::size_t li = 0; li < options.levels.size(); ++li) {
        const std::size_t r = result.ranks[li];
        std::vector<double> lambdas(p_count, 0.0);
        if (options.regularized) {
            if (r == n) {
                for (std::size_t p = 0; p < p_count; ++p) lambdas[p] = full_reports[p].lambda_selected;
            } else {
                try {
                    const auto reports =
                        regression::tune_lambda(spectral::truncated_gram(eig, r), y_train, options.lambda_grid, cv);
                    for (std::size_t p = 0; p < p_count; ++p) lambdas[p] = reports[p].lambda_selected;
                } catch (const NumericalError&) {
                    continue;  // every lambda failed: the level stays empty
                }
            }
        }
        const auto rr = static_cast<Eigen::Index>(r);
        const auto ur = eig.U.leftCols(rr);
        for (std::size_t p = 0; p < p_count; ++p) {
            auto& sweep = result.properties[p];
            sweep.lambda[li] = lambdas[p];
            try {
                Eigen::VectorXd pred;
                if (r == n) {
                    // K^(n) is K itself; the dense solve avoids eigenbasis round-off.
                    pred = regression::predict(regression::solve_dual(gram.values, targets[p].train, lambdas[p]),
                                               cross.values);
                } else {
                    const Eigen::VectorXd alpha = regression::solve_truncated(eig, r, targets[p].train, lambdas[p]);
                    pred = projected.topRows(rr).transpose() * (ur.transpose() * alpha);
                }
                sweep.r2[li] = regression::score(targets[p].test, pred).r2;
            } catch (const NumericalError&) {
            }
        }
    }

    for (auto& sweep : result.properties) {
        std::optional<double> best;
        for (const auto& v : sweep.r2) {
            if (v && (!best || *v > *best)) best = v;
        }
        sweep.of_max = thresholds_for(result.levels, sweep.r2, best);
        sweep.of_full = thresholds_for(result.levels, sweep.r2, sweep.full_krr_r2);
    }
    return result;
}

LearningCurveResult learning_curve(const kernels::Representation& data, const kernels::KernelConfig& config,
                                   const io::TargetTable& targets, const std::vector<std::string>& properties,
                                   const std::vector<std::size_t>& sizes, std::size_t test_size,
                                   const std::vector<std::uint64_t>& seeds, const EvalOptions& options) {
    if (sizes.empty()) throw ValidationError("learning curve needs at least one training size");
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (!(sizes[i] > sizes[i - 1])) throw ValidationError("training sizes must be strictly increasing");
    }
    const std::size_t available = shared_ids(data, targets).size();
    if (sizes.back() + test_size > available) {
        throw ValidationError("largest training size " + std::to_string(sizes.back()) + " plus test size " +
                              std::to_string(test_size) + " exceeds the " + std::to_string(available) +
                              " labelled molecules");
    }

    LearningCurveResult out;
    out.train_sizes = sizes;
    out.seeds = seeds;
    out.properties = properties;
    out.mae.assign(properties.size(), std::vector<double>(sizes.size()));
    out.mae_trials.assign(properties.size(), std::vector<std::vector<double>>(sizes.size()));
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        const auto eval = evaluate(data, config, targets, properties, {sizes[s], test_size, seeds}, options);
        for (std::size_t p = 0; p < properties.size(); ++p) {
            out.mae[p][s] = eval.properties[p].mean_mae;
            for (const auto& trial : eval.trials) out.mae_trials[p][s].push_back(trial.properties[p].report.mae);
        }
    }
    return out;
}

}  // namespace kspec::experiments
