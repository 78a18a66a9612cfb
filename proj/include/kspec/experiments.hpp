#pragma once

// Experiment drivers: per-property KRR evaluation over repeated random
// splits, truncated-KRR sweeps with recovery thresholds, learning curves and
// Pearson correlation of spectral metrics with predictive accuracy.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kspec/dataset_io.hpp"
#include "kspec/kernels.hpp"
#include "kspec/parallel.hpp"
#include "kspec/regression.hpp"
#include "kspec/spectral.hpp"

namespace kspec::experiments {

struct EvalOptions {
    std::vector<double> lambda_grid = regression::default_lambda_grid();
    std::size_t folds = 5;
    bool standardize = false;  // fit on z-scored targets, predictions mapped back
    std::size_t jobs = default_jobs();
};

struct PropertyFit {
    std::string property;
    regression::FitReport report;  // lambda from CV, r2/mae on the test set
};

struct SplitEvaluation {
    std::uint64_t seed = 0;
    std::vector<PropertyFit> properties;
    double avg_r2 = 0.0;
};

// Tunes lambda by CV on the training Gram (fold assignment seeded by
// cv_seed), fits, and scores every property on the cross-kernel's test side.
SplitEvaluation evaluate_split(const kernels::KernelMatrix& gram, const kernels::CrossKernel& cross,
                               const io::TargetTable& targets, const std::vector<std::string>& properties,
                               const EvalOptions& options, std::uint64_t cv_seed);

struct SplitPlan {
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::vector<std::uint64_t> seeds;  // one trial per seed
};

struct PropertySummary {
    std::string property;
    double mean_r2 = 0.0;
    double std_r2 = 0.0;  // sample standard deviation over trials
    double mean_mae = 0.0;
    double std_mae = 0.0;
};

struct EvaluationResult {
    std::vector<PropertySummary> properties;
    double avg_r2 = 0.0;  // mean over properties of mean_r2
    double avg_r2_std = 0.0;
    std::vector<SplitEvaluation> trials;
};

// Ids usable for splitting: present in the representation and the targets,
// in representation order.
std::vector<std::string> shared_ids(const kernels::Representation& data, const io::TargetTable& targets);

// One trial per seed; each draws a fresh train/test split with make_split,
// builds the Gram and cross kernels and calls evaluate_split with the same seed.
EvaluationResult evaluate(const kernels::Representation& data, const kernels::KernelConfig& config,
                          const io::TargetTable& targets, const std::vector<std::string>& properties,
                          const SplitPlan& plan, const EvalOptions& options);

// Same over explicit splits; the CV seed of each trial is the split's seed.
EvaluationResult evaluate(const kernels::Representation& data, const kernels::KernelConfig& config,
                          const io::TargetTable& targets, const std::vector<std::string>& properties,
                          const std::vector<io::SplitSpec>& splits, const EvalOptions& options);

double average(std::span<const double> values);
double sample_stddev(std::span<const double> values);

// ---------------------------------------------------------------------------
// Truncated KRR

std::vector<double> default_truncation_levels();

// r = max(1, round(level * n / 100)), capped at n.
std::size_t rank_for_level(double level, std::size_t n);

// Smallest level whose R^2 reaches `target`; failed levels are skipped.
std::optional<double> threshold_level(std::span<const double> levels,
                                      std::span<const std::optional<double>> r2, double target);

struct Thresholds {
    std::optional<double> pct95;
    std::optional<double> pct99;
};

struct PropertyTargets {
    std::string property;
    Eigen::VectorXd train;
    Eigen::VectorXd test;
};

struct PropertySweep {
    std::string property;
    std::vector<std::optional<double>> r2;  // per level; empty = failed
    std::vector<double> lambda;             // per level
    std::optional<double> full_krr_r2;
    double full_krr_lambda = 0.0;
    Thresholds of_max;   // relative to the sweep's best R^2
    Thresholds of_full;  // relative to the untruncated KRR R^2
};

struct TruncationSweepResult {
    bool regularized = true;
    std::vector<double> levels;
    std::vector<std::size_t> ranks;
    std::vector<PropertySweep> properties;
};

struct SweepOptions {
    std::vector<double> levels = default_truncation_levels();
    bool regularized = true;  // false pins lambda = 0
    std::vector<double> lambda_grid = regression::default_lambda_grid();
    std::size_t folds = 5;
    std::uint64_t cv_seed = 0;
    std::size_t jobs = default_jobs();
};

// TKRR at each level: dual coefficients of (K^(r) + lambda I) and
// predictions through the approximated truncated cross kernel. With
// regularization lambda is re-tuned by CV on K^(r) at every level.
TruncationSweepResult truncation_sweep(const kernels::KernelMatrix& gram, const spectral::EigenSystem& eig,
                                       const kernels::CrossKernel& cross,
                                       const std::vector<PropertyTargets>& targets, const SweepOptions& options);

// ---------------------------------------------------------------------------
// Correlation

struct PearsonResult {
    double r = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t m = 0;
};

inline constexpr double kZ95 = 1.96;

// Sample Pearson r with a 95% Fisher-z interval tanh(atanh(r) +- 1.96 / sqrt(m - 3)).
PearsonResult pearson_ci(std::span<const double> xs, std::span<const double> ys);

enum class Metric { NegAlpha, Sse, Id, Sr };
inline constexpr Metric kMetrics[] = {Metric::NegAlpha, Metric::Sse, Metric::Id, Metric::Sr};
std::string_view to_string(Metric m) noexcept;
// -alpha for NegAlpha so that larger always means a richer spectrum.
std::optional<double> metric_value(const spectral::SpectrumMetrics& metrics, Metric m);

struct CorrelationRow {
    std::string representation;
    std::string kernel;
    std::string group;
    spectral::SpectrumMetrics metrics;
    double avg_r2 = 0.0;
};

struct MetricCorrelation {
    Metric metric = Metric::Sse;
    std::optional<PearsonResult> result;
    std::string note;  // why result is empty
};

struct GroupCorrelation {
    std::string group;
    std::size_t rows = 0;
    std::vector<MetricCorrelation> metrics;
};

struct SkippedGroup {
    std::string group;
    std::size_t rows = 0;
    std::string reason;
};

struct CorrelationReport {
    std::vector<GroupCorrelation> groups;
    std::vector<SkippedGroup> skipped;
};

inline constexpr std::size_t kMinCorrelationRows = 4;

// Groups in order of first appearance; groups with fewer than 4 rows are
// skipped with a warning.
CorrelationReport correlate_metrics(const std::vector<CorrelationRow>& rows);

// ---------------------------------------------------------------------------
// Learning curves

struct LearningCurveResult {
    std::vector<std::size_t> train_sizes;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> properties;
    // mae[p][s] is the mean test MAE of property p at train_sizes[s];
    // mae_trials[p][s][t] the value for seeds[t].
    std::vector<std::vector<double>> mae;
    std::vector<std::vector<std::vector<double>>> mae_trials;
};

// evaluate() at every training size with a fixed test size.
LearningCurveResult learning_curve(const kernels::Representation& data, const kernels::KernelConfig& config,
                                   const io::TargetTable& targets, const std::vector<std::string>& properties,
                                   const std::vector<std::size_t>& sizes, std::size_t test_size,
                                   const std::vector<std::uint64_t>& seeds, const EvalOptions& options);

}  // namespace kspec::experiments
