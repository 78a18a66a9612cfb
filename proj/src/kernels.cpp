#include "kspec/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <sstream>

#include "kspec/errors.hpp"
#include "kspec/log.hpp"

namespace kspec::kernels {

namespace {

struct FamilyName {
    Family family;
    std::string_view name;
};

constexpr FamilyName kNames[] = {
    {Family::Tanimoto, "tanimoto"},
    {Family::Dice, "dice"},
    {Family::Otsuka, "otsuka"},
    {Family::Sogenfrei, "sogenfrei"},
    {Family::BraunBlanquet, "braun-blanquet"},
    {Family::Faith, "faith"},
    {Family::Forbes, "forbes"},
    {Family::InnerProduct, "inner-product"},
    {Family::Intersection, "intersection"},
    {Family::MinMax, "min-max"},
    {Family::Rand, "rand"},
    {Family::RogersTanimoto, "rogers-tanimoto"},
    {Family::RusselRao, "russel-rao"},
    {Family::SokalSneath, "sokal-sneath"},
    {Family::Gaussian, "gaussian"},
    {Family::Laplacian, "laplacian"},
    {Family::Linear, "linear"},
};

std::string normalize_name(std::string_view name) {
    std::string out;
    for (unsigned char c : name) {
        if (c == '-' || c == '_' || c == ' ') continue;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

// Zero denominators only arise for all-zero fingerprint pairs; the
// similarity is defined as 0 there.
double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

BitCounts packed_counts(const io::FingerprintDataset& a, std::size_t i, const io::FingerprintDataset& b,
                        std::size_t j) {
    const auto wa = a.row_words(i);
    const auto wb = b.row_words(j);
    std::size_t common = 0;
    for (std::size_t k = 0; k < wa.size(); ++k) common += static_cast<std::size_t>(std::popcount(wa[k] & wb[k]));
    return {static_cast<double>(common), static_cast<double>(a.popcount(i)),
            static_cast<double>(b.popcount(j)), static_cast<double>(a.bits())};
}

template <typename Row>
double iso_value(const Row& v1, const Row& v2, const KernelConfig& config) {
    switch (config.family) {
        case Family::Gaussian:
            return std::exp(-(v1 - v2).squaredNorm() / (2.0 * config.sigma_l * config.sigma_l));
        case Family::Laplacian:
            return std::exp(-(v1 - v2).template lpNorm<1>() / config.sigma_l);
        case Family::Linear:
            return v1.dot(v2);
        default:
            throw ValidationError("iso kernel requested for fingerprint family " +
                                  std::string(to_string(config.family)));
    }
}

// Fills out(i, j) = pair(i, j) (only j >= i when upper_only); rows are
// distributed over workers, each row is written by exactly one of them.
template <typename Pair>
void fill_rows(Eigen::MatrixXd& out, bool upper_only, std::size_t jobs, const Pair& pair) {
    const auto rows = static_cast<std::size_t>(out.rows());
    const auto cols = static_cast<std::size_t>(out.cols());
    parallel_for(rows, jobs, [&](std::size_t i) {
        for (std::size_t j = upper_only ? i : 0; j < cols; ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pair(i, j);
        }
    });
}

void mirror_upper(Eigen::MatrixXd& k) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
        for (Eigen::Index i = j + 1; i < k.rows(); ++i) k(i, j) = k(j, i);
    }
}

}  // namespace

std::string_view to_string(Family f) noexcept {
    for (const auto& entry : kNames) {
        if (entry.family == f) return entry.name;
    }
    return "unknown";
}

Family family_from_string(std::string_view name) {
    const auto wanted = normalize_name(name);
    for (const auto& entry : kNames) {
        if (normalize_name(entry.name) == wanted) return entry.family;
    }
    throw ValidationError("unknown kernel family '" + std::string(name) + "'");
}

void KernelConfig::validate() const {
    if (!(sigma_f > 0.0) || !std::isfinite(sigma_f)) throw ValidationError("sigma_f must be positive");
    const bool iso_scaled = family == Family::Gaussian || family == Family::Laplacian;
    if (iso_scaled && (!(sigma_l > 0.0) || !std::isfinite(sigma_l))) {
        throw ValidationError("sigma_l must be positive for Gaussian and Laplacian kernels");
    }
    if (local && !iso_scaled) {
        throw ValidationError("local kernels require the Gaussian or Laplacian family");
    }
}

std::uint64_t KernelConfig::digest() const {
    std::ostringstream canonical;
    canonical << to_string(family) << '|' << std::bit_cast<std::uint64_t>(sigma_f) << '|'
              << std::bit_cast<std::uint64_t>(sigma_l) << '|' << local << '|' << classical_forms;
    // FNV-1a
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical.str()) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string KernelConfig::label() const {
    std::string out(to_string(family));
    if (family == Family::Gaussian || family == Family::Laplacian) {
        out += "_sl" + io::format_double(sigma_l);
    }
    if (is_fingerprint_family(family) && sigma_f != 1.0) out += "_sf" + io::format_double(sigma_f);
    if (classical_forms && (family == Family::Otsuka || family == Family::Sogenfrei)) out += "_classical";
    if (local) out += "_local";
    return out;
}

double fingerprint_similarity(const BitCounts& c, const KernelConfig& config) {
    const double a = c.common;
    const double n1 = c.first;
    const double n2 = c.second;
    const double d = c.length;
    const double d0 = c.common_zeros();
    double s = 0.0;
    switch (config.family) {
        case Family::Tanimoto:
            s = ratio(a, n1 + n2 - a);
            break;
        case Family::Dice:
            s = ratio(2.0 * a, n1 + n2);
            break;
        case Family::Otsuka:
            s = config.classical_forms ? ratio(a, std::sqrt(n1 * n2)) : ratio(a, std::sqrt(n1 + n2));
            break;
        case Family::Sogenfrei:
            s = config.classical_forms ? ratio(a * a, n1 * n2) : ratio(a * a, n1 + n2);
            break;
        case Family::BraunBlanquet:
            s = ratio(a, std::max(n1, n2));
            break;
        case Family::Faith:
            s = (2.0 * a + d0) / (2.0 * d);
            break;
        case Family::Forbes:
            s = ratio(d * a, n1 + n2);
            break;
        case Family::InnerProduct:
            s = a;
            break;
        case Family::Intersection:
            // <x1', x2'> of the bit-flipped vectors counts the common zeros.
            s = a + d0;
            break;
        case Family::MinMax: {
            const double hamming = n1 + n2 - 2.0 * a;
            s = ratio(n1 + n2 - hamming, n1 + n2 + hamming);
            break;
        }
        case Family::Rand:
            s = (a + d) / d;
            break;
        case Family::RogersTanimoto:
            s = ratio(a + d0, 2.0 * n1 + 2.0 * n2 - 3.0 * a + d0);
            break;
        case Family::RusselRao:
            s = a / d;
            break;
        case Family::SokalSneath:
            s = ratio(a, 2.0 * n1 + 2.0 * n2 - 3.0 * a);
            break;
        case Family::Gaussian:
        case Family::Laplacian:
        case Family::Linear:
            throw ValidationError(std::string(to_string(config.family)) + " is not a fingerprint kernel");
    }
    return config.sigma_f * config.sigma_f * s;
}

double fingerprint_kernel(std::span<const std::uint8_t> x1, std::span<const std::uint8_t> x2,
                          const KernelConfig& config) {
    if (x1.size() != x2.size()) throw ValidationError("fingerprint length mismatch");
    if (x1.empty()) throw ValidationError("empty fingerprint");
    std::size_t common = 0, first = 0, second = 0;
    for (std::size_t k = 0; k < x1.size(); ++k) {
        if (x1[k] > 1 || x2[k] > 1) throw ValidationError("fingerprint entries must be 0 or 1");
        common += x1[k] & x2[k];
        first += x1[k];
        second += x2[k];
    }
    return fingerprint_similarity({static_cast<double>(common), static_cast<double>(first),
                                   static_cast<double>(second), static_cast<double>(x1.size())},
                                  config);
}

double iso_kernel(std::span<const double> v1, std::span<const double> v2, const KernelConfig& config) {
    if (v1.size() != v2.size()) throw ValidationError("feature length mismatch");
    const Eigen::Map<const Eigen::VectorXd> a(v1.data(), static_cast<Eigen::Index>(v1.size()));
    const Eigen::Map<const Eigen::VectorXd> b(v2.data(), static_cast<Eigen::Index>(v2.size()));
    return iso_value(a, b, config);
}

double local_kernel(const io::AtomEnvironments& mol_i, const io::AtomEnvironments& mol_j,
                    const KernelConfig& config) {
    if (mol_i.descriptors.cols() != mol_j.descriptors.cols()) {
        throw ValidationError("local descriptor length mismatch between molecules");
    }
    double sum = 0.0;
    for (std::size_t a = 0; a < mol_i.atoms(); ++a) {
        const auto va = mol_i.descriptors.row(static_cast<Eigen::Index>(a));
        for (std::size_t b = 0; b < mol_j.atoms(); ++b) {
            if (mol_i.species[a] != mol_j.species[b]) continue;
            sum += iso_value(va, mol_j.descriptors.row(static_cast<Eigen::Index>(b)), config);
        }
    }
    return sum;
}

const std::vector<std::string>& ids_of(const Representation& rep) {
    return std::visit(
        [](const auto& data) -> const std::vector<std::string>& {
            if constexpr (std::is_same_v<std::decay_t<decltype(data)>, io::FingerprintDataset>) {
                return data.ids();
            } else {
                return data.ids;
            }
        },
        rep);
}

Representation subset(const Representation& rep, std::span<const std::size_t> rows) {
    return std::visit([&](const auto& data) -> Representation { return data.subset(rows); }, rep);
}

void check_compatible(const Representation& rep, const KernelConfig& config) {
    config.validate();
    const std::string family(to_string(config.family));
    if (is_fingerprint_family(config.family)) {
        if (!std::holds_alternative<io::FingerprintDataset>(rep)) {
            throw ValidationError(family + " kernel needs a fingerprint dataset");
        }
    } else if (config.local) {
        if (!std::holds_alternative<io::LocalEnvDataset>(rep)) {
            throw ValidationError("local " + family + " kernel needs a local-environment dataset");
        }
    } else if (!std::holds_alternative<io::FeatureDataset>(rep)) {
        throw ValidationError(family + " kernel needs a dense feature dataset");
    }
}

namespace {

// Dispatches pairwise evaluation between two datasets of the same kind.
template <typename Fill>
void with_pair_kernel(const Representation& a, const Representation& b, const KernelConfig& config,
                      const Fill& fill) {
    check_compatible(a, config);
    check_compatible(b, config);
    if (const auto* fa = std::get_if<io::FingerprintDataset>(&a)) {
        const auto& fb = std::get<io::FingerprintDataset>(b);
        if (fa->bits() != fb.bits()) throw ValidationError("fingerprint lengths differ");
        fill([&](std::size_t i, std::size_t j) {
            return fingerprint_similarity(packed_counts(*fa, i, fb, j), config);
        });
    } else if (const auto* xa = std::get_if<io::FeatureDataset>(&a)) {
        const auto& xb = std::get<io::FeatureDataset>(b);
        if (xa->dim() != xb.dim()) throw ValidationError("feature dimensions differ");
        fill([&](std::size_t i, std::size_t j) {
            return iso_value(xa->features.row(static_cast<Eigen::Index>(i)),
                             xb.features.row(static_cast<Eigen::Index>(j)), config);
        });
    } else {
        const auto& la = std::get<io::LocalEnvDataset>(a);
        const auto& lb = std::get<io::LocalEnvDataset>(b);
        if (la.descriptor_dim != lb.descriptor_dim) throw ValidationError("local descriptor lengths differ");
        fill([&](std::size_t i, std::size_t j) {
            return local_kernel(la.molecules[i], lb.molecules[j], config);
        });
    }
}

}  // namespace

KernelMatrix gram(const Representation& data, const KernelConfig& config, std::size_t jobs) {
    const auto n = static_cast<Eigen::Index>(ids_of(data).size());
    KernelMatrix out{Eigen::MatrixXd::Zero(n, n), config, ids_of(data)};
    with_pair_kernel(data, data, config, [&](const auto& pair) {
        fill_rows(out.values, true, jobs, pair);
    });
    mirror_upper(out.values);
    return out;
}

CrossKernel cross(const Representation& train, const Representation& test, const KernelConfig& config,
                  std::size_t jobs) {
    const auto n = static_cast<Eigen::Index>(ids_of(train).size());
    const auto m = static_cast<Eigen::Index>(ids_of(test).size());
    CrossKernel out{Eigen::MatrixXd::Zero(n, m), config, ids_of(train), ids_of(test)};
    with_pair_kernel(train, test, config, [&](const auto& pair) {
        fill_rows(out.values, false, jobs, pair);
    });
    return out;
}

PsdDiagnostics check_psd(const KernelMatrix& k) {
    PsdDiagnostics diag;
    if (k.size() == 0) return diag;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k.values, Eigen::EigenvaluesOnly);
    diag.min_eigenvalue = solver.eigenvalues().minCoeff();
    diag.max_eigenvalue = solver.eigenvalues().maxCoeff();
    diag.psd = diag.min_eigenvalue >= -kPsdTolerance * std::max(diag.max_eigenvalue, 0.0);
    if (!diag.psd) {
        std::ostringstream msg;
        msg << k.config.label() << " Gram matrix is not positive semi-definite (min eigenvalue "
            << diag.min_eigenvalue << ", max " << diag.max_eigenvalue << ")";
        log_warning(msg.str());
    }
    return diag;
}

}  // namespace kspec::kernels
