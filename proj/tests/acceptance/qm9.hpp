#pragma once

// Desk-scale QM9 replication on an exported global-feature set.
//
// KSPEC_QM9_DIR must hold features.csv (one row per molecule) and
// targets.csv with columns U0, U, H and G. KSPEC_QM9_SIGMA_L overrides the
// Gaussian length scale (default 100).

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kspec/dataset_io.hpp"
#include "kspec/experiments.hpp"
#include "kspec/kernels.hpp"
#include "kspec/spectral.hpp"

namespace kspec::acceptance {

struct Qm9Outcome {
    bool pass = false;
    std::string detail;
};

inline std::optional<std::filesystem::path> qm9_dir() {
    const char* dir = std::getenv("KSPEC_QM9_DIR");
    if (dir == nullptr || *dir == '\0') return std::nullopt;
    return std::filesystem::path(dir);
}

inline Qm9Outcome run_qm9(const std::filesystem::path& dir) {
    using namespace kspec;
    const auto start = std::chrono::steady_clock::now();
    const kernels::Representation data = io::read_features(dir / "features.csv");
    const auto targets = io::read_targets(dir / "targets.csv");

    kernels::KernelConfig cfg;
    cfg.family = kernels::Family::Gaussian;
    cfg.sigma_l = 100.0;
    if (const char* s = std::getenv("KSPEC_QM9_SIGMA_L")) cfg.sigma_l = std::stod(s);

    const auto ids = experiments::shared_ids(data, targets);
    const auto split = io::make_split(ids, 500, 2000, 0);
    const auto train = kernels::subset(data, io::positions_of(kernels::ids_of(data), split.train_ids));
    const auto test = kernels::subset(data, io::positions_of(kernels::ids_of(data), split.test_ids));
    const auto gram = kernels::gram(train, cfg);
    const auto cross = kernels::cross(train, test, cfg);
    const auto eig = spectral::eigendecompose(gram);

    const std::vector<std::string> props{"H", "U0", "U", "G"};
    std::vector<experiments::PropertyTargets> u0{{"U0", targets.column("U0", split.train_ids),
                                                  targets.column("U0", split.test_ids)}};

    experiments::SweepOptions reg;
    const auto sweep = experiments::truncation_sweep(gram, eig, cross, u0, reg);
    const auto& reg_u0 = sweep.properties[0];
    const bool a = reg_u0.of_max.pct95 && *reg_u0.of_max.pct95 <= 10.0;

    const auto split_eval = experiments::evaluate_split(gram, cross, targets, props, {}, 0);
    double spread = 0.0;
    for (const auto& x : split_eval.properties) {
        for (const auto& y : split_eval.properties) spread = std::max(spread, std::abs(x.report.r2 - y.report.r2));
    }
    const bool b = spread <= 0.02;

    experiments::SweepOptions ridgeless;
    ridgeless.regularized = false;
    const auto bare = experiments::truncation_sweep(gram, eig, cross, u0, ridgeless);
    std::optional<double> best;
    for (const auto& v : bare.properties[0].r2) {
        if (v && (!best || *v > *best)) best = v;
    }
    const bool c = best && reg_u0.full_krr_r2 && std::abs(*best - *reg_u0.full_krr_r2) <= 0.05;

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream detail;
    detail << "(a) U0 pct95=" << (reg_u0.of_max.pct95 ? std::to_string(*reg_u0.of_max.pct95) : "NA")
           << " (b) R2 spread=" << spread << " (c) ridgeless max=" << (best ? std::to_string(*best) : "NA")
           << " vs full=" << (reg_u0.full_krr_r2 ? std::to_string(*reg_u0.full_krr_r2) : "NA") << ", " << seconds
           << " s";
    return {a && b && c && seconds < 600.0, detail.str()};
}

}  // namespace kspec::acceptance
