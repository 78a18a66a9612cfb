// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kspec/cli.hpp"
#include "kspec/experiments.hpp"
#include "kspec/kernels.hpp"
#include "kspec/regression.hpp"
#include "kspec/spectral.hpp"
#include "qm9.hpp"

using namespace kspec;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
}

std::vector<std::string> ids(std::size_t n, const std::string& prefix) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

// ---------------------------------------------------------------------------

Outcome tkrr_equivalence() {
    const auto start = Clock::now();
    std::mt19937_64 rng(101);
    double worst_a = 0.0;
    double worst_b = 0.0;
    double worst_c = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = trial < 10 ? 50 : 200;
        const Eigen::Index m = 30;
        // Gram and cross blocks of one SPD kernel over n + m points.
        const Eigen::MatrixXd a = normal_matrix(n + m, n + m, rng);
        Eigen::MatrixXd full = a * a.transpose() / static_cast<double>(n + m);
        full.diagonal().array() += 0.1;
        const Eigen::MatrixXd k = 0.5 * (full.topLeftCorner(n, n) + full.topLeftCorner(n, n).transpose());
        const Eigen::MatrixXd kx = full.topRightCorner(n, m);
        const Eigen::VectorXd y = normal_matrix(n, 1, rng).col(0);
        const auto eig = spectral::eigendecompose(k);
        const auto nn = static_cast<std::size_t>(n);

        worst_a = std::max(worst_a, rel(spectral::approx_truncated_cross(eig, nn, kx), kx));
        for (const std::size_t r : {std::size_t{1}, nn / 4, nn / 2, nn}) {
            const Eigen::MatrixXd on_train = spectral::approx_truncated_cross(eig, r, k);
            const Eigen::MatrixXd kr = spectral::truncated_gram(eig, r);
            worst_b = std::max(worst_b, rel(on_train, kr));
        }
        for (const double lambda : {0.0, 1e-3, 0.1}) {
            const Eigen::VectorXd krr = regression::predict(regression::solve_dual(k, y, lambda), kx);
            const Eigen::VectorXd alpha = regression::solve_truncated(eig, nn, y, lambda);
            const Eigen::VectorXd tkrr =
                regression::predict(alpha, spectral::approx_truncated_cross(eig, nn, kx));
            worst_c = std::max(worst_c, rel(tkrr, krr));
        }
    }
    const double secs = seconds_since(start);
    std::ostringstream d;
    d << "cross@r=n " << worst_a << ", train@r " << worst_b << ", predictions " << worst_c << ", " << secs << " s";
    return {worst_a <= 1e-10 && worst_b <= 1e-10 && worst_c <= 1e-8 && secs < 10.0, d.str()};
}

Outcome spectral_bounds() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> size(1, 300);
    std::uniform_int_distribution<int> shape(0, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double slack = 1e-12;
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<std::size_t>(size(rng));
        std::vector<double> mu(n);
        const int kind = shape(rng);
        for (std::size_t j = 0; j < n; ++j) {
            const double x = static_cast<double>(j + 1);
            switch (kind) {
                case 0: mu[j] = unit(rng); break;
                case 1: mu[j] = std::pow(x, -(0.3 + 3.0 * unit(rng))); break;
                case 2: mu[j] = std::exp(-0.2 * x); break;
                default: mu[j] = unit(rng) < 0.3 ? 0.0 : unit(rng); break;
            }
        }
        mu[0] = std::max(mu[0], 1e-3);
        const auto m = spectral::spectral_metrics(mu);
        const auto rank = static_cast<double>(std::count_if(mu.begin(), mu.end(), [](double v) { return v > 0.0; }));
        const double nd = static_cast<double>(n);
        const bool ok = 1.0 - slack <= m.sr && m.sr <= m.id + slack && m.id <= rank + slack && rank <= nd &&
                        1.0 - slack <= m.sse && m.sse <= nd + slack;
        if (!ok) ++violations;
    }
    const std::vector<double> flat(40, 0.7);
    const auto f = spectral::spectral_metrics(flat);
    const bool flat_ok = std::abs(f.sr - 40.0) <= slack * 40 && std::abs(f.id - 40.0) <= slack * 40 &&
                         std::abs(f.sse - 40.0) <= slack * 40;
    std::vector<double> spike(40, 0.0);
    spike[0] = 3.0;
    const auto s = spectral::spectral_metrics(spike);
    const bool spike_ok = s.sr == 1.0 && s.id == 1.0 && s.sse == 1.0;
    std::ostringstream d;
    d << violations << " violations in 100 spectra, flat " << (flat_ok ? "exact" : "off") << ", rank-1 "
      << (spike_ok ? "exact" : "off");
    return {violations == 0 && flat_ok && spike_ok, d.str()};
}

Outcome power_law() {
    double worst = 0.0;
    for (const double alpha : {0.5, 0.7, 1.0, 2.0, 4.0}) {
        std::vector<double> mu(5000);
        for (std::size_t j = 0; j < mu.size(); ++j) mu[j] = std::pow(static_cast<double>(j + 1), -alpha);
        worst = std::max(worst, std::abs(spectral::power_law_alpha(mu) - alpha));
    }
    std::ostringstream d;
    d << "max |alpha_hat - alpha| = " << worst;
    return {worst <= 1e-6, d.str()};
}

// Brute-force fingerprint oracle over unpacked bits, written from the
// per-pair definitions with explicit loops.
double oracle_fingerprint(const std::vector<std::uint8_t>& x, const std::vector<std::uint8_t>& y,
                          kernels::Family f, bool classical) {
    using kernels::Family;
    double dot = 0;
    double s1 = 0;
    double s2 = 0;
    double l1 = 0;
    double flipped = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
        s1 += x[i];
        s2 += y[i];
        l1 += x[i] != y[i] ? 1 : 0;
        flipped += (1 - x[i]) * (1 - y[i]);
    }
    const double d = static_cast<double>(x.size());
    const double d0 = flipped;
    auto safe = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
    switch (f) {
        case Family::Tanimoto: return safe(dot, s1 + s2 - dot);
        case Family::Dice: return safe(2.0 * dot, s1 + s2);
        case Family::Otsuka: return classical ? safe(dot, std::sqrt(s1 * s2)) : safe(dot, std::sqrt(s1 + s2));
        case Family::Sogenfrei: return classical ? safe(dot * dot, s1 * s2) : safe(dot * dot, s1 + s2);
        case Family::BraunBlanquet: return safe(dot, std::max(s1, s2));
        case Family::Faith: return (2.0 * dot + d0) / (2.0 * d);
        case Family::Forbes: return safe(d * dot, s1 + s2);
        case Family::InnerProduct: return dot;
        case Family::Intersection: return dot + flipped;
        case Family::MinMax: return safe(s1 + s2 - l1, s1 + s2 + l1);
        case Family::Rand: return (dot + d) / d;
        case Family::RogersTanimoto: return safe(dot + d0, 2.0 * s1 + 2.0 * s2 - 3.0 * dot + d0);
        case Family::RusselRao: return dot / d;
        case Family::SokalSneath: return safe(dot, 2.0 * s1 + 2.0 * s2 - 3.0 * dot);
        default: return std::nan("");
    }
}

double min_eig_ratio(const Eigen::MatrixXd& k) {
    const Eigen::VectorXd mu = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues();
    return mu.minCoeff() / mu.maxCoeff();
}

Outcome kernel_correctness() {
    std::mt19937_64 rng(303);
    std::bernoulli_distribution bit(0.25);
    std::vector<std::vector<std::uint8_t>> rows(50, std::vector<std::uint8_t>(128));
    for (auto& r : rows) {
        for (auto& b : r) b = bit(rng) ? 1 : 0;
    }
    std::fill(rows[7].begin(), rows[7].end(), 0);  // an all-zero vector exercises the 0/0 rule
    const auto data = io::FingerprintDataset::from_rows(ids(50, "fp"), rows);

    int mismatches = 0;
    std::size_t families = 0;
    for (const bool classical : {false, true}) {
        for (const auto f : kernels::kFingerprintFamilies) {
            if (!classical) ++families;
            kernels::KernelConfig cfg;
            cfg.family = f;
            cfg.classical_forms = classical;
            const auto k = kernels::gram(data, cfg, 2);
            for (std::size_t i = 0; i < 50; ++i) {
                for (std::size_t j = 0; j < 50; ++j) {
                    const double want = oracle_fingerprint(rows[i], rows[j], f, classical);
                    if (k.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != want) ++mismatches;
                }
            }
        }
    }

    double worst = 1.0;
    for (const auto f : {kernels::Family::Tanimoto, kernels::Family::MinMax}) {
        kernels::KernelConfig cfg;
        cfg.family = f;
        worst = std::min(worst, min_eig_ratio(kernels::gram(data, cfg, 2).values));
    }
    const kernels::Representation feats = io::FeatureDataset{ids(80, "v"), normal_matrix(80, 6, rng)};
    for (const auto f : {kernels::Family::Gaussian, kernels::Family::Laplacian}) {
        kernels::KernelConfig cfg;
        cfg.family = f;
        cfg.sigma_l = 2.0;
        worst = std::min(worst, min_eig_ratio(kernels::gram(feats, cfg, 2).values));
    }
    std::ostringstream d;
    d << families << " families x 2 forms, " << mismatches << " mismatches; min mu/mu1 = " << worst;
    return {mismatches == 0 && families >= 14 && worst >= -1e-8, d.str()};
}

Outcome krr_oracle() {
    std::mt19937_64 rng(404);
    double worst_dense = 0.0;
    double worst_interp = 0.0;
    for (const Eigen::Index n : {5, 12, 25, 50}) {
        const Eigen::MatrixXd a = normal_matrix(n + 10, n + 10, rng);
        Eigen::MatrixXd full = a * a.transpose() / static_cast<double>(n);
        full.diagonal().array() += 0.05;
        const Eigen::MatrixXd k = full.topLeftCorner(n, n);
        const Eigen::MatrixXd kx = full.topRightCorner(n, 10);
        const Eigen::VectorXd y = normal_matrix(n, 1, rng).col(0);
        for (const double lambda : {1e-4, 1e-2, 1.0}) {
            const Eigen::MatrixXd inverse = (k + lambda * Eigen::MatrixXd::Identity(n, n)).inverse();
            const Eigen::VectorXd want = kx.transpose() * (inverse * y);
            const Eigen::VectorXd got = regression::predict(regression::solve_dual(k, y, lambda), kx);
            worst_dense = std::max(worst_dense, (got - want).cwiseAbs().maxCoeff());
        }
        const auto model = regression::fit({k, {}, ids(static_cast<std::size_t>(n), "t")}, y, 0.0);
        const Eigen::VectorXd fitted = regression::predict(model.alpha, k);
        worst_interp = std::max(worst_interp, (fitted - y).norm() / y.norm());
    }
    std::ostringstream d;
    d << "dense-inverse max diff " << worst_dense << ", ridgeless interpolation rel " << worst_interp;
    return {worst_dense <= 1e-8 && worst_interp <= 1e-8, d.str()};
}

Outcome low_rank_sweep() {
    const auto start = Clock::now();
    std::mt19937_64 rng(505);
    const Eigen::Index n = 500;
    const Eigen::Index m = 200;
    const Eigen::MatrixXd x = normal_matrix(n + m, 10, rng);
    const Eigen::VectorXd w = normal_matrix(10, 1, rng).col(0);
    const Eigen::VectorXd y = x * w;
    const kernels::Representation train = io::FeatureDataset{ids(500, "tr"), x.topRows(n)};
    const kernels::Representation test = io::FeatureDataset{ids(200, "te"), x.bottomRows(m)};
    kernels::KernelConfig cfg;
    cfg.family = kernels::Family::Linear;
    const auto gram = kernels::gram(train, cfg);
    const auto cross = kernels::cross(train, test, cfg);
    const auto eig = spectral::eigendecompose(gram);
    const std::vector<experiments::PropertyTargets> targets{{"y", y.head(n), y.tail(m)}};
    const auto sweep = experiments::truncation_sweep(gram, eig, cross, targets, {});
    const auto& p = sweep.properties[0];
    const double secs = seconds_since(start);
    auto show = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("NA"); };
    std::ostringstream d;
    d << "numerical rank " << spectral::numerical_rank(std::vector<double>(eig.mu.begin(), eig.mu.end()))
      << ", pct95 " << show(p.of_max.pct95) << ", pct99 " << show(p.of_max.pct99) << ", " << secs << " s";
    const bool ok = p.of_max.pct95 == 2.0 && p.of_max.pct99 == 2.0 && secs < 30.0;
    return {ok, d.str()};
}

Outcome qm9() {
    const auto dir = acceptance::qm9_dir();
    if (!dir) return {true, "SKIP no exported QM9 descriptors (set KSPEC_QM9_DIR)"};
    const auto outcome = acceptance::run_qm9(*dir);
    return {outcome.pass, outcome.detail};
}

Outcome pearson() {
    std::mt19937_64 rng(606);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    std::vector<double> coverage;
    for (const double rho : {0.0, 0.5, -0.5}) {
        int covered = 0;
        for (int draw = 0; draw < 1000; ++draw) {
            std::vector<double> xs(13);
            std::vector<double> ys(13);
            for (std::size_t i = 0; i < 13; ++i) {
                const double z1 = normal(rng);
                const double z2 = normal(rng);
                xs[i] = z1;
                ys[i] = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
            }
            const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / 13.0;
            const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / 13.0;
            double sxy = 0;
            double sxx = 0;
            double syy = 0;
            for (std::size_t i = 0; i < 13; ++i) {
                sxy += (xs[i] - mx) * (ys[i] - my);
                sxx += (xs[i] - mx) * (xs[i] - mx);
                syy += (ys[i] - my) * (ys[i] - my);
            }
            const double r = sxy / std::sqrt(sxx * syy);
            const double half = 1.96 / std::sqrt(10.0);
            const double lo = std::tanh(std::atanh(r) - half);
            const double hi = std::tanh(std::atanh(r) + half);
            const auto got = experiments::pearson_ci(xs, ys);
            worst = std::max({worst, std::abs(got.r - r), std::abs(got.ci_low - lo), std::abs(got.ci_high - hi)});
            if (got.ci_low <= rho && rho <= got.ci_high) ++covered;
        }
        coverage.push_back(covered / 1000.0);
    }
    const bool cover_ok =
        std::all_of(coverage.begin(), coverage.end(), [](double c) { return std::abs(c - 0.95) <= 0.03; });
    std::ostringstream d;
    d << "max formula diff " << worst << ", coverage " << coverage[0] << " / " << coverage[1] << " / "
      << coverage[2];
    return {worst <= 1e-9 && cover_ok, d.str()};
}

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "kspec");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const int code = cli::run(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old);
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

Outcome determinism() {
    const fs::path fixtures = KSPEC_FIXTURE_DIR;
    const fs::path base = fs::temp_directory_path() / "kspec_acceptance_determinism";
    fs::remove_all(base);
    const std::vector<std::string> configs{"gaussian.ini", "tanimoto.ini", "local.ini"};
    const std::vector<std::string> commands{"gram", "metrics", "krr", "truncate", "learning-curve"};
    int failures = 0;
    for (const std::string run : {"a", "b"}) {
        const auto out = (base / run).string();
        for (const auto& c : configs) {
            for (const auto& cmd : commands) {
                if (cmd == "learning-curve" && c != "gaussian.ini") continue;
                if (c == "local.ini" && cmd != "gram" && cmd != "metrics") continue;  // no targets
                if (run_cli({cmd, "--config", (fixtures / c).string(), "--out-dir", out, "--jobs", "2"}) != 0) {
                    ++failures;
                }
            }
        }
        std::vector<std::string> args{"correlate", "--out-dir", out};
        for (const auto& e : fs::directory_iterator(base / run / "krr")) args.push_back((e.path() / "report.json").string());
        if (run_cli(args) != 0) ++failures;
    }
    auto a = tree(base / "a");
    auto b = tree(base / "b");
    std::size_t differing = 0;
    for (const auto& [name, content] : a) {
        const auto it = b.find(name);
        if (it == b.end() || it->second != content) ++differing;
    }
    std::ostringstream d;
    d << a.size() << " files compared, " << differing << " differ, " << failures << " failed runs";
    return {failures == 0 && differing == 0 && a.size() == b.size() && !a.empty(), d.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"tkrr_equivalence", tkrr_equivalence},
        {"spectral_metric_bounds", spectral_bounds},
        {"power_law_recovery", power_law},
        {"kernel_correctness", kernel_correctness},
        {"krr_oracle", krr_oracle},
        {"low_rank_truncation", low_rank_sweep},
        {"qm9_desk_scale", qm9},
        {"pearson_ci", pearson},
        {"determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome outcome;
        try {
            outcome = check();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const bool skipped = outcome.detail.rfind("SKIP ", 0) == 0;
        if (skipped) outcome.detail.erase(0, 5);
        std::cout << (skipped ? "SKIP" : outcome.pass ? "PASS" : "FAIL") << ' ' << name << ": " << outcome.detail
                  << std::endl;
        if (!outcome.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
