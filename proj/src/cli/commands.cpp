#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kspec/cli.hpp"
#include "kspec/errors.hpp"
#include "kspec/experiments.hpp"
#include "kspec/regression.hpp"
#include "kspec/spectral.hpp"

namespace kspec::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum class Command { Gram, Krr, Truncate, Metrics, Correlate, LearningCurve };

std::string_view command_name(Command c) {
    switch (c) {
        case Command::Gram: return "gram";
        case Command::Krr: return "krr";
        case Command::Truncate: return "truncate";
        case Command::Metrics: return "metrics";
        case Command::Correlate: return "correlate";
        case Command::LearningCurve: return "learning-curve";
    }
    return "unknown";
}

std::string num(double v) { return io::format_double(v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
std::string join(const std::vector<T>& items) {
    std::ostringstream out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out << ',';
        if constexpr (std::is_floating_point_v<T>) {
            out << num(items[i]);
        } else {
            out << items[i];
        }
    }
    return out.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
    std::cout << "wrote " << path.string() << '\n';
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void require_file(const fs::path& path, const std::string& what) {
    if (path.empty()) throw ValidationError(what + " is not set");
    if (!fs::is_regular_file(path)) throw ValidationError(what + " '" + path.string() + "' does not exist");
}

kernels::Representation load_representation(const RunConfig& c) {
    switch (c.kind) {
        case RepresentationKind::Fingerprint: return io::read_fingerprints(c.representation_path);
        case RepresentationKind::Feature: return io::read_features(c.representation_path);
        case RepresentationKind::Local: return io::read_local_envs(c.representation_path);
    }
    throw ValidationError("unknown representation kind");
}

json metrics_json(const spectral::SpectrumMetrics& m) {
    return {{"alpha", opt_json(m.alpha)}, {"sse", m.sse}, {"id", m.id}, {"sr", m.sr}};
}

spectral::SpectrumMetrics metrics_from_json(const json& j) {
    spectral::SpectrumMetrics m;
    if (!j.at("alpha").is_null()) m.alpha = j.at("alpha").get<double>();
    m.sse = j.at("sse").get<double>();
    m.id = j.at("id").get<double>();
    m.sr = j.at("sr").get<double>();
    return m;
}

json spectrum_json(const spectral::SpectrumReport& r) {
    return {{"n", r.n},
            {"numerical_rank", r.numerical_rank},
            {"min_eigenvalue", r.min_eigenvalue},
            {"full", metrics_json(r.full)},
            {"truncated", r.truncated ? metrics_json(*r.truncated) : json(nullptr)}};
}

std::string spectrum_csv(const spectral::EigenSystem& eig) {
    std::ostringstream out;
    for (Eigen::Index j = 0; j < eig.mu.size(); ++j) out << (j + 1) << ',' << num(eig.mu[j]) << '\n';
    return out.str();
}

class Runner {
public:
    Runner(RunConfig config, std::vector<fs::path> extra_reports)
        : c_(std::move(config)), extra_reports_(std::move(extra_reports)) {}

    void validate(Command cmd) const {
        if (cmd == Command::Correlate) {
            if (reports().empty()) throw ValidationError("correlate needs at least one report path");
            for (const auto& p : reports()) require_file(p, "report");
            if (!c_.grouping_path.empty()) require_file(c_.grouping_path, "correlate.grouping");
            return;
        }
        require_file(c_.representation_path, "representation.path");
        const bool needs_targets = cmd == Command::Krr || cmd == Command::Truncate || cmd == Command::LearningCurve;
        if (needs_targets) {
            require_file(c_.targets_path, "targets.path");
            if (c_.properties.empty()) throw ValidationError("targets.properties is empty");
        }
        if (!c_.split_path.empty()) require_file(c_.split_path, "split.path");
        if ((cmd == Command::Krr || cmd == Command::Truncate) && c_.split_path.empty() && c_.n_test < 2) {
            throw ValidationError("split.n_test must be at least 2");
        }
        if (cmd == Command::LearningCurve) {
            if (c_.sizes.empty()) throw ValidationError("learning_curve.sizes is empty");
            for (std::size_t i = 1; i < c_.sizes.size(); ++i) {
                if (c_.sizes[i] <= c_.sizes[i - 1]) throw ValidationError("learning_curve.sizes must be strictly increasing");
            }
            if (c_.test_size < 2) throw ValidationError("learning_curve.test_size must be at least 2");
        }
    }

    void dry_run(Command cmd) const {
        std::cout << "command: " << command_name(cmd) << '\n';
        if (cmd == Command::Correlate) {
            std::cout << "reports: " << reports().size() << '\n';
            for (const auto& p : reports()) std::cout << "  " << p.string() << '\n';
            std::cout << "grouping: " << (c_.grouping_path.empty() ? "(single group)" : c_.grouping_path.string()) << '\n';
            std::cout << "variant: " << (c_.truncated_variant ? "truncated" : "full") << '\n';
            std::cout << "output: " << (c_.out_dir / c_.experiment).string() << '\n';
            return;
        }
        std::cout << "representation: " << c_.representation_name << " (" << to_string(c_.kind) << ") "
                  << c_.representation_path.string() << '\n';
        std::cout << "kernel: " << c_.kernel.label() << '\n';
        if (!c_.targets_path.empty()) {
            std::cout << "targets: " << c_.targets_path.string() << " [" << join(c_.properties) << "]\n";
        }
        if (!c_.split_path.empty()) {
            std::cout << "split: " << c_.split_path.string() << '\n';
        } else {
            std::cout << "split: n_train=" << c_.n_train << " n_test=" << c_.n_test << " seeds=" << join(c_.seeds)
                      << '\n';
        }
        if (cmd == Command::Krr || cmd == Command::Truncate || cmd == Command::LearningCurve) {
            std::cout << "lambda_grid: " << join(c_.lambda_grid) << '\n';
            std::cout << "folds: " << c_.folds << '\n';
        }
        if (cmd == Command::Truncate) {
            std::cout << "levels: " << join(c_.levels) << '\n';
            std::cout << "regularized: "
                      << (c_.regularization == RegularizationMode::Both ? "both"
                          : c_.regularization == RegularizationMode::Regularized ? "true"
                                                                                  : "false")
                      << '\n';
        }
        if (cmd == Command::LearningCurve) {
            std::cout << "sizes: " << join(c_.sizes) << " test_size=" << c_.test_size << '\n';
        }
        std::cout << "jobs: " << c_.jobs << '\n';
        std::cout << "output: " << c_.run_dir().string() << '\n';
    }

    void execute(Command cmd) {
        switch (cmd) {
            case Command::Gram: return gram();
            case Command::Krr: return krr();
            case Command::Truncate: return truncate();
            case Command::Metrics: return metrics();
            case Command::Correlate: return correlate();
            case Command::LearningCurve: return learning_curve();
        }
    }

private:
    [[nodiscard]] std::vector<fs::path> reports() const {
        auto out = c_.reports;
        out.insert(out.end(), extra_reports_.begin(), extra_reports_.end());
        return out;
    }

    void load(bool with_targets) {
        data_ = load_representation(c_);
        kernels::check_compatible(*data_, c_.kernel);
        if (with_targets || !c_.targets_path.empty()) targets_ = io::read_targets(c_.targets_path);
        if (with_targets) {
            for (const auto& p : c_.properties) {
                if (!targets_->has_property(p)) {
                    throw ValidationError("targets file " + c_.targets_path.string() + " has no property '" + p + "'");
                }
            }
        }
    }

    [[nodiscard]] std::vector<std::string> pool() const {
        return targets_ ? experiments::shared_ids(*data_, *targets_) : kernels::ids_of(*data_);
    }

    // Train/test splits, one per trial.
    [[nodiscard]] std::vector<io::SplitSpec> splits(std::size_t n_test) const {
        if (!c_.split_path.empty()) return {io::read_split(c_.split_path)};
        const auto ids = pool();
        std::size_t n_train = c_.n_train;
        if (n_train == 0) {
            if (n_test >= ids.size()) throw ValidationError("split.n_test leaves no training molecules");
            n_train = ids.size() - n_test;
        }
        std::vector<io::SplitSpec> out;
        for (const auto seed : c_.seeds) out.push_back(io::make_split(ids, n_train, n_test, seed));
        return out;
    }

    [[nodiscard]] kernels::Representation rows(const std::vector<std::string>& ids) const {
        return kernels::subset(*data_, io::positions_of(kernels::ids_of(*data_), ids));
    }

    // Molecules whose Gram matrix is analysed: the first trial's training
    // set when a split is configured, otherwise the whole file.
    [[nodiscard]] kernels::Representation design() const {
        if (c_.split_path.empty() && c_.n_train == 0) return *data_;
        return rows(splits(c_.n_test).front().train_ids);
    }

    [[nodiscard]] experiments::EvalOptions eval_options() const {
        return {c_.lambda_grid, c_.folds, c_.standardize, c_.jobs};
    }

    [[nodiscard]] json header() const {
        return {{"representation", c_.representation_name},
                {"kind", std::string(to_string(c_.kind))},
                {"kernel", c_.kernel.label()},
                {"family", std::string(kernels::to_string(c_.kernel.family))},
                {"sigma_f", c_.kernel.sigma_f},
                {"sigma_l", c_.kernel.sigma_l}};
    }

    void gram() {
        load(false);
        const auto k = kernels::gram(design(), c_.kernel, c_.jobs);
        kernels::check_psd(k);
        const auto eig = spectral::eigendecompose(k);
        const auto dir = c_.run_dir();
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
        kernels::write_gram_cache(dir / "gram.ksgm", k);
        std::cout << "wrote " << (dir / "gram.ksgm").string() << '\n';
        write_file(dir / "spectrum.csv", spectrum_csv(eig));
    }

    void metrics() {
        load(false);
        const auto k = kernels::gram(design(), c_.kernel, c_.jobs);
        const auto eig = spectral::eigendecompose(k);
        const auto report = spectral::spectrum_report(eig);
        const auto dir = c_.run_dir();

        std::ostringstream table;
        table << "variant,alpha,sse,id,sr\n";
        auto row = [&](const char* name, const spectral::SpectrumMetrics& m) {
            table << name << ',' << opt_num(m.alpha) << ',' << num(m.sse) << ',' << num(m.id) << ',' << num(m.sr)
                  << '\n';
        };
        row("full", report.full);
        if (report.truncated) row("truncated", *report.truncated);

        auto j = header();
        j["spectrum"] = spectrum_json(report);
        write_json(dir / "report.json", j);
        write_file(dir / "table.csv", table.str());
        write_file(dir / "spectrum.csv", spectrum_csv(eig));
    }

    void krr() {
        load(true);
        const auto trial_splits = splits(c_.n_test);
        const auto result =
            experiments::evaluate(*data_, c_.kernel, *targets_, c_.properties, trial_splits, eval_options());
        const auto k = kernels::gram(rows(trial_splits.front().train_ids), c_.kernel, c_.jobs);
        const auto spectrum = spectral::spectrum_report(spectral::eigendecompose(k));

        std::ostringstream table;
        table << "property,mean_r2,std_r2,mean_mae,std_mae\n";
        json props = json::array();
        for (std::size_t p = 0; p < result.properties.size(); ++p) {
            const auto& s = result.properties[p];
            table << s.property << ',' << num(s.mean_r2) << ',' << num(s.std_r2) << ',' << num(s.mean_mae) << ','
                  << num(s.std_mae) << '\n';
            json trials = json::array();
            for (const auto& t : result.trials) trials.push_back(t.properties[p].report);
            props.push_back({{"property", s.property},
                             {"mean_r2", s.mean_r2},
                             {"std_r2", s.std_r2},
                             {"mean_mae", s.mean_mae},
                             {"std_mae", s.std_mae},
                             {"trials", std::move(trials)}});
        }
        table << "Avg," << num(result.avg_r2) << ',' << num(result.avg_r2_std) << ",,\n";

        json seeds = json::array();
        for (const auto& s : trial_splits) seeds.push_back(s.seed);
        auto j = header();
        j["n_train"] = trial_splits.front().n_train();
        j["n_test"] = trial_splits.front().n_test();
        j["seeds"] = std::move(seeds);
        j["properties"] = std::move(props);
        j["avg_r2"] = result.avg_r2;
        j["avg_r2_std"] = result.avg_r2_std;
        j["spectrum"] = spectrum_json(spectrum);

        const auto dir = c_.run_dir();
        write_json(dir / "report.json", j);
        write_file(dir / "table.csv", table.str());
    }

    void truncate() {
        load(true);
        const auto split = splits(c_.n_test).front();
        const auto train = rows(split.train_ids);
        const auto test = rows(split.test_ids);
        const auto k = kernels::gram(train, c_.kernel, c_.jobs);
        const auto kx = kernels::cross(train, test, c_.kernel, c_.jobs);
        const auto eig = spectral::eigendecompose(k);

        std::vector<experiments::PropertyTargets> targets;
        for (const auto& p : c_.properties) {
            targets.push_back({p, targets_->column(p, split.train_ids), targets_->column(p, split.test_ids)});
        }

        std::vector<bool> modes;
        if (c_.regularization != RegularizationMode::Ridgeless) modes.push_back(true);
        if (c_.regularization != RegularizationMode::Regularized) modes.push_back(false);

        const auto dir = c_.run_dir();
        std::ostringstream curves;
        curves << "regularized,level,rank,property,r2,lambda\n";
        auto j = header();
        j["n_train"] = split.n_train();
        j["n_test"] = split.n_test();
        j["seed"] = split.seed;
        j["sweeps"] = json::array();
        for (const bool regularized : modes) {
            experiments::SweepOptions options;
            options.levels = c_.levels;
            options.regularized = regularized;
            options.lambda_grid = c_.lambda_grid;
            options.folds = c_.folds;
            options.cv_seed = split.seed;
            options.jobs = c_.jobs;
            const auto sweep = experiments::truncation_sweep(k, eig, kx, targets, options);

            std::ostringstream table;
            table << "representation,kernel,property,pct95,pct99\n";
            json props = json::array();
            for (const auto& p : sweep.properties) {
                table << c_.representation_name << ',' << c_.kernel.label() << ',' << p.property << ','
                      << opt_num(p.of_max.pct95) << ',' << opt_num(p.of_max.pct99) << '\n';
                json r2 = json::array();
                json failed = json::array();
                for (std::size_t i = 0; i < sweep.levels.size(); ++i) {
                    r2.push_back(opt_json(p.r2[i]));
                    if (!p.r2[i]) failed.push_back(sweep.levels[i]);
                    curves << (regularized ? "true" : "false") << ',' << num(sweep.levels[i]) << ','
                           << sweep.ranks[i] << ',' << p.property << ',' << opt_num(p.r2[i]) << ','
                           << num(p.lambda[i]) << '\n';
                }
                props.push_back({{"property", p.property},
                                 {"r2", std::move(r2)},
                                 {"lambda", p.lambda},
                                 {"failed_levels", std::move(failed)},
                                 {"full_krr_r2", opt_json(p.full_krr_r2)},
                                 {"full_krr_lambda", p.full_krr_lambda},
                                 {"pct95", opt_json(p.of_max.pct95)},
                                 {"pct99", opt_json(p.of_max.pct99)},
                                 {"pct95_of_full", opt_json(p.of_full.pct95)},
                                 {"pct99_of_full", opt_json(p.of_full.pct99)}});
            }
            j["sweeps"].push_back({{"regularized", regularized},
                                   {"levels", sweep.levels},
                                   {"ranks", sweep.ranks},
                                   {"properties", std::move(props)}});
            const bool secondary = !regularized && modes.size() == 2;
            write_file(dir / (secondary ? "table_ridgeless.csv" : "table.csv"), table.str());
        }
        write_file(dir / "curves.csv", curves.str());
        write_json(dir / "report.json", j);
    }

    void learning_curve() {
        load(true);
        const auto result = experiments::learning_curve(*data_, c_.kernel, *targets_, c_.properties, c_.sizes,
                                                        c_.test_size, c_.seeds, eval_options());
        std::ostringstream curves;
        curves << "property,train_size,mean_mae";
        for (const auto seed : result.seeds) curves << ",mae_seed" << seed;
        curves << '\n';
        for (std::size_t p = 0; p < result.properties.size(); ++p) {
            for (std::size_t s = 0; s < result.train_sizes.size(); ++s) {
                curves << result.properties[p] << ',' << result.train_sizes[s] << ',' << num(result.mae[p][s]);
                for (double v : result.mae_trials[p][s]) curves << ',' << num(v);
                curves << '\n';
            }
        }
        auto j = header();
        j["train_sizes"] = result.train_sizes;
        j["test_size"] = c_.test_size;
        j["seeds"] = result.seeds;
        j["properties"] = result.properties;
        j["mae"] = result.mae;
        j["mae_trials"] = result.mae_trials;
        const auto dir = c_.run_dir();
        write_file(dir / "curves.csv", curves.str());
        write_json(dir / "report.json", j);
    }

    [[nodiscard]] std::map<std::string, std::string> read_grouping() const {
        std::map<std::string, std::string> groups;
        if (c_.grouping_path.empty()) return groups;
        std::ifstream in(c_.grouping_path);
        if (!in) throw IoError("cannot open " + c_.grouping_path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) {
                throw ParseError(c_.grouping_path.string(), line_no, "expected representation,group");
            }
            const auto rep = line.substr(0, comma);
            const auto group = line.substr(comma + 1);
            if (line_no == 1 && rep == "representation") continue;
            if (!groups.emplace(rep, group).second) {
                throw ParseError(c_.grouping_path.string(), line_no, "duplicate representation '" + rep + "'");
            }
        }
        return groups;
    }

    void correlate() {
        const auto grouping = read_grouping();
        std::vector<experiments::CorrelationRow> rows;
        for (const auto& path : reports()) {
            std::ifstream in(path);
            if (!in) throw IoError("cannot open report " + path.string());
            json j;
            try {
                j = json::parse(in);
                experiments::CorrelationRow row;
                row.representation = j.at("representation").get<std::string>();
                row.kernel = j.at("kernel").get<std::string>();
                row.avg_r2 = j.at("avg_r2").get<double>();
                const auto& spectrum = j.at("spectrum");
                const auto& m = c_.truncated_variant ? spectrum.at("truncated") : spectrum.at("full");
                if (m.is_null()) {
                    throw ValidationError("report " + path.string() + " has no truncated spectral metrics");
                }
                row.metrics = metrics_from_json(m);
                if (grouping.empty()) {
                    row.group = "all";
                } else {
                    const auto it = grouping.find(row.representation);
                    if (it == grouping.end()) {
                        throw ValidationError("representation '" + row.representation + "' of " + path.string() +
                                              " is missing from the grouping file");
                    }
                    row.group = it->second;
                }
                rows.push_back(std::move(row));
            } catch (const json::exception& e) {
                throw ValidationError("report " + path.string() + ": " + e.what());
            }
        }

        const auto report = experiments::correlate_metrics(rows);
        std::ostringstream table;
        table << "group,metric,r_hat,ci_low,ci_high,m\n";
        json groups = json::array();
        for (const auto& g : report.groups) {
            json metrics = json::array();
            for (const auto& mc : g.metrics) {
                const auto name = std::string(experiments::to_string(mc.metric));
                if (mc.result) {
                    const auto& r = *mc.result;
                    table << g.group << ',' << name << ',' << num(r.r) << ',' << num(r.ci_low) << ','
                          << num(r.ci_high) << ',' << r.m << '\n';
                    metrics.push_back({{"metric", name},
                                       {"r_hat", r.r},
                                       {"ci_low", r.ci_low},
                                       {"ci_high", r.ci_high},
                                       {"m", r.m}});
                } else {
                    table << g.group << ',' << name << ",NA,NA,NA,0\n";
                    metrics.push_back({{"metric", name}, {"r_hat", nullptr}, {"note", mc.note}});
                }
            }
            groups.push_back({{"group", g.group}, {"rows", g.rows}, {"metrics", std::move(metrics)}});
        }
        json skipped = json::array();
        for (const auto& s : report.skipped) {
            skipped.push_back({{"group", s.group}, {"rows", s.rows}, {"reason", s.reason}});
        }

        std::ostringstream scatter;
        scatter << "group,representation,kernel,metric,value,avg_r2\n";
        for (const auto& row : rows) {
            for (const auto metric : experiments::kMetrics) {
                scatter << row.group << ',' << row.representation << ',' << row.kernel << ','
                        << experiments::to_string(metric) << ','
                        << opt_num(experiments::metric_value(row.metrics, metric)) << ',' << num(row.avg_r2)
                        << '\n';
            }
        }

        const auto dir = c_.out_dir / c_.experiment;
        write_file(dir / "table.csv", table.str());
        write_file(dir / "scatter.csv", scatter.str());
        write_json(dir / "report.json", {{"variant", c_.truncated_variant ? "truncated" : "full"},
                                         {"groups", std::move(groups)},
                                         {"skipped", std::move(skipped)}});
    }

    RunConfig c_;
    std::vector<fs::path> extra_reports_;
    std::optional<kernels::Representation> data_;
    std::optional<io::TargetTable> targets_;
};

struct Flags {
    std::string config;
    std::string out_dir;
    std::size_t jobs = 0;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    std::vector<std::string> sets;

    std::string regularized;
    std::vector<double> levels;
    std::vector<std::size_t> sizes;
    std::string grouping;
    std::string variant;
    std::vector<std::string> reports;
};

int dispatch(Command cmd, const Flags& flags) {
    std::vector<Override> overrides;
    for (const auto& s : flags.sets) overrides.push_back(parse_override(s));
    if (!flags.regularized.empty()) overrides.push_back({"truncate", "regularized", flags.regularized});
    if (!flags.levels.empty()) overrides.push_back({"truncate", "levels", join(flags.levels)});
    if (!flags.sizes.empty()) overrides.push_back({"learning_curve", "sizes", join(flags.sizes)});
    if (!flags.grouping.empty()) overrides.push_back({"correlate", "grouping", fs::absolute(flags.grouping).string()});
    if (!flags.variant.empty()) overrides.push_back({"correlate", "variant", flags.variant});
    if (flags.seed) overrides.push_back({"split", "seeds", std::to_string(*flags.seed)});

    RunConfig config;
    if (!flags.config.empty()) {
        config = load_config(fs::path(flags.config), overrides);
    } else {
        if (cmd != Command::Correlate) throw ValidationError("--config is required for " + std::string(command_name(cmd)));
        std::istringstream empty;
        config = load_config(empty, fs::path(), overrides);
    }
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    if (config.experiment.empty()) config.experiment = command_name(cmd);
    config.jobs = flags.jobs > 0 ? flags.jobs : default_jobs();

    std::vector<fs::path> reports(flags.reports.begin(), flags.reports.end());
    Runner runner(std::move(config), std::move(reports));
    runner.validate(cmd);
    if (flags.dry_run) {
        runner.dry_run(cmd);
        return 0;
    }
    runner.execute(cmd);
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Kernel spectra, kernel ridge regression and truncation experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags flags;
    app.add_option("--config", flags.config, "Run configuration file");
    app.add_option("--out-dir", flags.out_dir, "Results root directory");
    app.add_option("--jobs", flags.jobs, "Worker threads (default: logical cores)");
    app.add_option("--seed", flags.seed, "Run a single trial with this seed");
    app.add_flag("--dry-run", flags.dry_run, "Validate and print the experiment grid");
    app.add_option("--set", flags.sets, "Override a config key, section.key=value");

    std::map<CLI::App*, Command> commands;
    commands[app.add_subcommand("gram", "Gram matrix cache and eigenvalue spectrum")] = Command::Gram;
    commands[app.add_subcommand("krr", "Per-property KRR over repeated splits")] = Command::Krr;
    auto* truncate = app.add_subcommand("truncate", "Truncated KRR sweep and recovery thresholds");
    truncate->add_option("--regularized", flags.regularized, "true, false or both")
        ->check(CLI::IsMember({"true", "false", "both"}));
    truncate->add_option("--levels", flags.levels, "Truncation levels in percent")->delimiter(',');
    commands[truncate] = Command::Truncate;
    commands[app.add_subcommand("metrics", "Spectral metrics of the Gram matrix")] = Command::Metrics;
    auto* correlate = app.add_subcommand("correlate", "Correlate spectral metrics with KRR accuracy");
    correlate->add_option("reports", flags.reports, "krr report.json files");
    correlate->add_option("--grouping", flags.grouping, "CSV mapping representation to group");
    correlate->add_option("--variant", flags.variant, "truncated or full")
        ->check(CLI::IsMember({"truncated", "full"}));
    commands[correlate] = Command::Correlate;
    auto* curve = app.add_subcommand("learning-curve", "Test MAE against training set size");
    curve->add_option("--sizes", flags.sizes, "Training set sizes")->delimiter(',');
    commands[curve] = Command::LearningCurve;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    Command cmd = Command::Gram;
    for (const auto& [sub, c] : commands) {
        if (sub->parsed()) cmd = c;
    }
    try {
        return dispatch(cmd, flags);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 4;
    }
}

}  // namespace kspec::cli
