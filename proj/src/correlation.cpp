#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "kspec/errors.hpp"
#include "kspec/experiments.hpp"
#include "kspec/log.hpp"

namespace kspec::experiments {

PearsonResult pearson_ci(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ValidationError("pearson: xs and ys differ in length");
    const std::size_t m = xs.size();
    if (m < 4) throw ValidationError("pearson: need at least 4 paired samples, got " + std::to_string(m));
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(m);
    my /= static_cast<double>(m);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson: input is constant");

    const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double half = kZ95 / std::sqrt(static_cast<double>(m - 3));
    const double z = std::atanh(r);  // +-inf at |r| = 1, so the interval collapses onto r
    PearsonResult out{r, std::tanh(z - half), std::tanh(z + half), m};
    out.ci_low = std::min(out.ci_low, r);
    out.ci_high = std::max(out.ci_high, r);
    return out;
}

std::string_view to_string(Metric m) noexcept {
    switch (m) {
        case Metric::NegAlpha: return "neg_alpha";
        case Metric::Sse: return "sse";
        case Metric::Id: return "id";
        case Metric::Sr: return "sr";
    }
    return "unknown";
}

std::optional<double> metric_value(const spectral::SpectrumMetrics& metrics, Metric m) {
    switch (m) {
        case Metric::NegAlpha:
            if (!metrics.alpha) return std::nullopt;
            return -*metrics.alpha;
        case Metric::Sse: return metrics.sse;
        case Metric::Id: return metrics.id;
        case Metric::Sr: return metrics.sr;
    }
    return std::nullopt;
}

CorrelationReport correlate_metrics(const std::vector<CorrelationRow>& rows) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<const CorrelationRow*>> groups;
    for (const auto& row : rows) {
        auto [it, inserted] = groups.try_emplace(row.group);
        if (inserted) order.push_back(row.group);
        it->second.push_back(&row);
    }

    CorrelationReport report;
    for (const auto& name : order) {
        const auto& members = groups.at(name);
        if (members.size() < kMinCorrelationRows) {
            const std::string reason = "only " + std::to_string(members.size()) + " rows, need " +
                                       std::to_string(kMinCorrelationRows);
            log_warning("correlation group '" + name + "' skipped: " + reason);
            report.skipped.push_back({name, members.size(), reason});
            continue;
        }
        GroupCorrelation group{name, members.size(), {}};
        for (const auto metric : kMetrics) {
            MetricCorrelation mc{metric, std::nullopt, {}};
            std::vector<double> xs;
            std::vector<double> ys;
            for (const auto* row : members) {
                if (const auto v = metric_value(row->metrics, metric)) {
                    xs.push_back(*v);
                    ys.push_back(row->avg_r2);
                }
            }
            try {
                mc.result = pearson_ci(xs, ys);
            } catch (const ValidationError& e) {
                mc.note = e.what();
            }
            group.metrics.push_back(std::move(mc));
        }
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace kspec::experiments
