#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kspec/cli.hpp"
#include "kspec/errors.hpp"
#include "kspec/experiments.hpp"
#include "kspec/regression.hpp"

namespace kspec::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    [[nodiscard]] std::optional<std::string> get(const std::string& key) const {
        const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    [[nodiscard]] double real(const std::string& key, double fallback) const {
        const auto v = get(key);
        return v ? parse_real(key, *v) : fallback;
    }

    [[nodiscard]] std::size_t count(const std::string& key, std::size_t fallback) const {
        const auto v = get(key);
        return v ? parse_count(key, *v) : fallback;
    }

    [[nodiscard]] bool flag(const std::string& key, bool fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        const auto s = lower(*v);
        if (s == "true" || s == "yes" || s == "1") return true;
        if (s == "false" || s == "no" || s == "0") return false;
        throw ValidationError(key + ": expected true or false, got '" + *v + "'");
    }

    static double parse_real(const std::string& key, const std::string& text) {
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
            throw ValidationError(key + ": '" + text + "' is not a finite number");
        }
        return value;
    }

    static std::uint64_t parse_count(const std::string& key, const std::string& text) {
        std::uint64_t value = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw ValidationError(key + ": '" + text + "' is not a non-negative integer");
        }
        return value;
    }

private:
    const pt::ptree& tree_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    const std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

void check_kind(const RunConfig& c) {
    const auto family = c.kernel.family;
    if (kernels::is_fingerprint_family(family)) {
        if (c.kind != RepresentationKind::Fingerprint) {
            throw ValidationError("kernel '" + std::string(kernels::to_string(family)) +
                                  "' needs a fingerprint representation, got kind '" +
                                  std::string(to_string(c.kind)) + "'");
        }
        return;
    }
    if (c.kind == RepresentationKind::Fingerprint) {
        throw ValidationError("kernel '" + std::string(kernels::to_string(family)) +
                              "' cannot be used with a fingerprint representation");
    }
    if (c.kernel.local != (c.kind == RepresentationKind::Local)) {
        throw ValidationError(c.kernel.local ? "a local kernel needs kind = local"
                                             : "kind = local needs kernel.local = true");
    }
}

}  // namespace

std::filesystem::path RunConfig::run_dir() const {
    return out_dir / experiment / (representation_name + "__" + kernel.label());
}

std::string_view to_string(RepresentationKind kind) noexcept {
    switch (kind) {
        case RepresentationKind::Fingerprint: return "fingerprint";
        case RepresentationKind::Feature: return "feature";
        case RepresentationKind::Local: return "local";
    }
    return "unknown";
}

RepresentationKind kind_from_string(const std::string& text) {
    const auto s = lower(trim(text));
    if (s == "fingerprint") return RepresentationKind::Fingerprint;
    if (s == "feature") return RepresentationKind::Feature;
    if (s == "local") return RepresentationKind::Local;
    throw ValidationError("representation.kind must be fingerprint, feature or local, got '" + text + "'");
}

RegularizationMode mode_from_string(const std::string& text) {
    const auto s = lower(trim(text));
    if (s == "true") return RegularizationMode::Regularized;
    if (s == "false") return RegularizationMode::Ridgeless;
    if (s == "both") return RegularizationMode::Both;
    throw ValidationError("regularized must be true, false or both, got '" + text + "'");
}

Override parse_override(const std::string& text) {
    const auto eq = text.find('=');
    const auto dot = text.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ValidationError("override '" + text + "' is not of the form section.key=value");
    }
    Override o{trim(text.substr(0, dot)), trim(text.substr(dot + 1, eq - dot - 1)), trim(text.substr(eq + 1))};
    if (o.section.empty() || o.key.empty()) throw ValidationError("override '" + text + "' has an empty name");
    return o;
}

RunConfig load_config(std::istream& in, const std::filesystem::path& source, const std::vector<Override>& overrides) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(source.string(), e.line(), e.message());
    }
    for (const auto& o : overrides) tree.put(pt::ptree::path_type(o.section + "." + o.key, '.'), o.value);

    const Reader r(tree);
    const auto base = source.empty() ? std::filesystem::path() : source.parent_path();
    RunConfig c;
    c.source = source;

    if (auto v = r.get("output.experiment")) c.experiment = *v;
    if (auto v = r.get("output.dir")) c.out_dir = resolve(base, *v);

    if (auto v = r.get("representation.kind")) c.kind = kind_from_string(*v);
    if (auto v = r.get("representation.path")) c.representation_path = resolve(base, *v);
    c.representation_name = r.get("representation.name").value_or(
        c.representation_path.empty() ? std::string("data") : c.representation_path.stem().string());

    if (auto v = r.get("kernel.family")) c.kernel.family = kernels::family_from_string(*v);
    c.kernel.sigma_f = r.real("kernel.sigma_f", 1.0);
    c.kernel.sigma_l = r.real("kernel.sigma_l", 1.0);
    c.kernel.local = r.flag("kernel.local", c.kind == RepresentationKind::Local);
    c.kernel.classical_forms = r.flag("kernel.classical_forms", false);
    c.kernel.validate();

    if (auto v = r.get("targets.path")) c.targets_path = resolve(base, *v);
    if (auto v = r.get("targets.properties")) c.properties = split_list(*v);

    c.n_train = r.count("split.n_train", 0);
    c.n_test = r.count("split.n_test", 0);
    if (auto v = r.get("split.path")) c.split_path = resolve(base, *v);
    if (auto v = r.get("split.seeds")) {
        c.seeds.clear();
        for (const auto& s : split_list(*v)) c.seeds.push_back(Reader::parse_count("split.seeds", s));
        if (c.seeds.empty()) throw ValidationError("split.seeds is empty");
    }

    if (auto v = r.get("regression.lambda_grid")) {
        for (const auto& s : split_list(*v)) {
            const double lambda = Reader::parse_real("regression.lambda_grid", s);
            if (lambda < 0.0) throw ValidationError("regression.lambda_grid: negative lambda " + s);
            c.lambda_grid.push_back(lambda);
        }
        if (c.lambda_grid.empty()) throw ValidationError("regression.lambda_grid is empty");
    } else {
        c.lambda_grid = regression::default_lambda_grid();
    }
    c.folds = r.count("regression.folds", 5);
    if (c.folds < 2) throw ValidationError("regression.folds must be at least 2");
    c.standardize = r.flag("regression.standardize", false);

    if (auto v = r.get("truncate.levels")) {
        for (const auto& s : split_list(*v)) c.levels.push_back(Reader::parse_real("truncate.levels", s));
    } else {
        c.levels = experiments::default_truncation_levels();
    }
    for (std::size_t i = 0; i < c.levels.size(); ++i) {
        if (!(c.levels[i] > 0.0 && c.levels[i] <= 100.0)) throw ValidationError("truncate.levels must lie in (0, 100]");
        if (i > 0 && !(c.levels[i] > c.levels[i - 1])) {
            throw ValidationError("truncate.levels must be strictly increasing");
        }
    }
    if (c.levels.empty()) throw ValidationError("truncate.levels is empty");
    if (auto v = r.get("truncate.regularized")) c.regularization = mode_from_string(*v);

    if (auto v = r.get("learning_curve.sizes")) {
        for (const auto& s : split_list(*v)) c.sizes.push_back(Reader::parse_count("learning_curve.sizes", s));
    }
    c.test_size = r.count("learning_curve.test_size", c.n_test);

    if (auto v = r.get("correlate.reports")) {
        for (const auto& s : split_list(*v)) c.reports.push_back(resolve(base, s));
    }
    if (auto v = r.get("correlate.grouping")) c.grouping_path = resolve(base, *v);
    if (auto v = r.get("correlate.variant")) {
        const auto s = lower(*v);
        if (s != "truncated" && s != "full") throw ValidationError("correlate.variant must be truncated or full");
        c.truncated_variant = s == "truncated";
    }

    if (!c.representation_path.empty()) check_kind(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return load_config(in, path, overrides);
}

}  // namespace kspec::cli
