#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kspec/kernels.hpp"

namespace kspec::cli {

enum class RepresentationKind { Fingerprint, Feature, Local };

enum class RegularizationMode { Regularized, Ridgeless, Both };

// Resolved run configuration. Relative paths in the file are resolved
// against the directory containing it.
struct RunConfig {
    std::filesystem::path source;  // the config file, empty when none

    std::string experiment;  // empty: named after the subcommand
    std::filesystem::path out_dir = "results";
    std::size_t jobs = 1;

    RepresentationKind kind = RepresentationKind::Feature;
    std::filesystem::path representation_path;
    std::string representation_name;

    kernels::KernelConfig kernel;

    std::filesystem::path targets_path;
    std::vector<std::string> properties;

    std::size_t n_train = 0;  // 0: every labelled molecule not in the test set
    std::size_t n_test = 0;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path split_path;  // fixed split file; replaces n_train/n_test/seeds

    std::vector<double> lambda_grid;
    std::size_t folds = 5;
    bool standardize = false;

    std::vector<double> levels;
    RegularizationMode regularization = RegularizationMode::Regularized;

    std::vector<std::size_t> sizes;
    std::size_t test_size = 0;

    std::vector<std::filesystem::path> reports;
    std::filesystem::path grouping_path;
    bool truncated_variant = true;  // correlate truncated (vs full-spectrum) metrics

    // <out_dir>/<experiment>/<representation>__<kernel>
    [[nodiscard]] std::filesystem::path run_dir() const;
};

// `key=value` overrides addressed as "section.key".
struct Override {
    std::string section;
    std::string key;
    std::string value;
};

Override parse_override(const std::string& text);

// Parses the INI-style config and applies overrides on top. Throws
// ParseError / ValidationError on malformed or inconsistent input.
RunConfig load_config(std::istream& in, const std::filesystem::path& source,
                      const std::vector<Override>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});

std::string_view to_string(RepresentationKind kind) noexcept;
RepresentationKind kind_from_string(const std::string& text);
RegularizationMode mode_from_string(const std::string& text);

// Entry point of the `kspec` tool. Exit codes: 0 success, 2 configuration or
// validation error, 3 numerical failure, 4 I/O error.
int run(int argc, char** argv);

}  // namespace kspec::cli
