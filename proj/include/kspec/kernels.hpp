#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "kspec/dataset_io.hpp"
#include "kspec/parallel.hpp"

namespace kspec::kernels {

enum class Family {
    Tanimoto,
    Dice,
    Otsuka,
    Sogenfrei,
    BraunBlanquet,
    Faith,
    Forbes,
    InnerProduct,
    Intersection,
    MinMax,
    Rand,
    RogersTanimoto,
    RusselRao,
    SokalSneath,
    Gaussian,
    Laplacian,
    Linear,
};

inline constexpr Family kFingerprintFamilies[] = {
    Family::Tanimoto,      Family::Dice,         Family::Otsuka,       Family::Sogenfrei,
    Family::BraunBlanquet, Family::Faith,        Family::Forbes,       Family::InnerProduct,
    Family::Intersection,  Family::MinMax,       Family::Rand,         Family::RogersTanimoto,
    Family::RusselRao,     Family::SokalSneath,
};

[[nodiscard]] constexpr bool is_fingerprint_family(Family f) noexcept {
    return f != Family::Gaussian && f != Family::Laplacian && f != Family::Linear;
}

[[nodiscard]] std::string_view to_string(Family f) noexcept;
// Case-insensitive; accepts '-' and '_' separators ("braun-blanquet", "min_max").
[[nodiscard]] Family family_from_string(std::string_view name);

struct KernelConfig {
    Family family = Family::Tanimoto;
    double sigma_f = 1.0;   // amplitude; fingerprint kernels are scaled by sigma_f^2
    double sigma_l = 1.0;   // length scale of Gaussian / Laplacian
    bool local = false;     // species-matched sum over atomic environments
    // Use the textbook Otsuka (a / sqrt(|x1||x2|)) and Sogenfrei
    // (a^2 / (|x1||x2|)) instead of the sum-denominator forms.
    bool classical_forms = false;

    // Throws ValidationError on an inconsistent configuration.
    void validate() const;
    // Stable 64-bit digest of the configuration, stored in Gram cache headers.
    [[nodiscard]] std::uint64_t digest() const;
    // Short label used in result directory names, e.g. "tanimoto" or "gaussian_sl100".
    [[nodiscard]] std::string label() const;
};

struct KernelMatrix {
    Eigen::MatrixXd values;
    KernelConfig config;
    std::vector<std::string> ids;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
};

struct CrossKernel {
    Eigen::MatrixXd values;  // n_train x n_test
    KernelConfig config;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

// Bit statistics from which every fingerprint kernel is computed.
struct BitCounts {
    double common = 0;  // <x1, x2>
    double first = 0;   // |x1|_1
    double second = 0;  // |x2|_1
    double length = 0;  // d

    [[nodiscard]] double common_zeros() const noexcept { return length - first - second + common; }
};

// sigma_f^2 * s(x1, x2) for a fingerprint family.
[[nodiscard]] double fingerprint_similarity(const BitCounts& counts, const KernelConfig& config);
[[nodiscard]] double fingerprint_kernel(std::span<const std::uint8_t> x1,
                                        std::span<const std::uint8_t> x2, const KernelConfig& config);
[[nodiscard]] double iso_kernel(std::span<const double> v1, std::span<const double> v2,
                                const KernelConfig& config);
[[nodiscard]] double local_kernel(const io::AtomEnvironments& mol_i, const io::AtomEnvironments& mol_j,
                                  const KernelConfig& config);

using Representation = std::variant<io::FingerprintDataset, io::FeatureDataset, io::LocalEnvDataset>;

[[nodiscard]] const std::vector<std::string>& ids_of(const Representation& rep);
[[nodiscard]] Representation subset(const Representation& rep, std::span<const std::size_t> rows);
// Throws ValidationError if the representation cannot feed this kernel.
void check_compatible(const Representation& rep, const KernelConfig& config);

// Symmetric Gram matrix; the upper triangle is computed and mirrored.
[[nodiscard]] KernelMatrix gram(const Representation& data, const KernelConfig& config,
                                std::size_t jobs = default_jobs());
[[nodiscard]] CrossKernel cross(const Representation& train, const Representation& test,
                                const KernelConfig& config, std::size_t jobs = default_jobs());

// Relative PSD tolerance for validation warnings.
inline constexpr double kPsdTolerance = 1e-8;

struct PsdDiagnostics {
    double min_eigenvalue = 0;
    double max_eigenvalue = 0;
    bool psd = true;  // min >= -kPsdTolerance * max
};

// Logs a warning for kernels that are not numerically PSD; never rejects.
PsdDiagnostics check_psd(const KernelMatrix& k);

// Gram cache: "KSGM", u32 n, u64 config digest, then the upper triangle
// (row-major, n(n+1)/2 doubles), all little-endian.
void write_gram_cache(const std::filesystem::path& path, const KernelMatrix& k);
// Reads a cache; when `expected_digest` is set a mismatch is a ValidationError.
[[nodiscard]] Eigen::MatrixXd read_gram_cache(const std::filesystem::path& path,
                                              std::optional<std::uint64_t> expected_digest = {});

}  // namespace kspec::kernels
