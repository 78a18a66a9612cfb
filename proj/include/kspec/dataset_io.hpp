#pragma once

// On-disk formats for molecular representations, targets and splits.
//
//   fingerprints  text; `# d=<bits>` header, then `<id> <bitstring>` per line
//   features      CSV `id,f0,...,f{d-1}`
//   local envs    JSON lines `{"id": .., "atoms": [{"Z": .., "v": [..]}, ..]}`
//   targets       CSV `id,<prop1>,<prop2>,...`
//   splits        JSON `{"seed": .., "train": [..], "test": [..]}`
//
// Every reader validates its input fully (finite values, consistent widths,
// unique ids) and throws ParseError naming the offending line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace kspec::io {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Binary fingerprints stored packed, 64 bits per word, bit j of a row at
// word j/64, position j%64.
class FingerprintDataset {
public:
    FingerprintDataset(std::vector<std::string> ids, std::size_t bits,
                       std::vector<std::uint64_t> words);

    // Builds from unpacked 0/1 rows; throws ValidationError on bad input.
    static FingerprintDataset from_rows(std::vector<std::string> ids,
                                        const std::vector<std::vector<std::uint8_t>>& rows);

    [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
    [[nodiscard]] std::size_t bits() const noexcept { return bits_; }
    [[nodiscard]] std::size_t words_per_row() const noexcept { return words_per_row_; }
    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }

    [[nodiscard]] std::span<const std::uint64_t> row_words(std::size_t i) const;
    [[nodiscard]] bool bit(std::size_t i, std::size_t j) const;
    [[nodiscard]] std::vector<std::uint8_t> row(std::size_t i) const;
    [[nodiscard]] std::size_t popcount(std::size_t i) const { return popcounts_[i]; }

    [[nodiscard]] FingerprintDataset subset(std::span<const std::size_t> rows) const;

private:
    std::vector<std::string> ids_;
    std::size_t bits_;
    std::size_t words_per_row_;
    std::vector<std::uint64_t> words_;
    std::vector<std::size_t> popcounts_;
};

struct FeatureDataset {
    std::vector<std::string> ids;
    RowMatrix features;  // n x d

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
    [[nodiscard]] FeatureDataset subset(std::span<const std::size_t> rows) const;
};

// One molecule's atoms: species[a] is the atomic number of atom a and row a
// of `descriptors` its environment vector.
struct AtomEnvironments {
    std::vector<int> species;
    RowMatrix descriptors;

    [[nodiscard]] std::size_t atoms() const noexcept { return species.size(); }
};

struct LocalEnvDataset {
    std::vector<std::string> ids;
    std::vector<AtomEnvironments> molecules;
    std::size_t descriptor_dim = 0;

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    [[nodiscard]] LocalEnvDataset subset(std::span<const std::size_t> rows) const;
};

class TargetTable {
public:
    TargetTable(std::vector<std::string> ids, std::vector<std::string> properties, RowMatrix values);

    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
    [[nodiscard]] const std::vector<std::string>& properties() const noexcept { return properties_; }
    [[nodiscard]] const RowMatrix& values() const noexcept { return values_; }
    [[nodiscard]] bool has_property(const std::string& name) const;

    // Values of `property` ordered like `ids`; throws ValidationError when an
    // id or the property is missing.
    [[nodiscard]] Eigen::VectorXd column(const std::string& property,
                                         std::span<const std::string> ids) const;

private:
    std::vector<std::string> ids_;
    std::vector<std::string> properties_;
    RowMatrix values_;
    std::unordered_map<std::string, std::size_t> row_of_;
};

struct SplitSpec {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t n_train() const noexcept { return train_ids.size(); }
    [[nodiscard]] std::size_t n_test() const noexcept { return test_ids.size(); }
};

// Stream-level parsers; `source` names the input in error messages.
FingerprintDataset parse_fingerprints(std::istream& in, const std::string& source = "<stream>");
FeatureDataset parse_features(std::istream& in, const std::string& source = "<stream>");
LocalEnvDataset parse_local_envs(std::istream& in, const std::string& source = "<stream>");
TargetTable parse_targets(std::istream& in, const std::string& source = "<stream>");
SplitSpec parse_split(std::istream& in, const std::string& source = "<stream>");

FingerprintDataset read_fingerprints(const std::filesystem::path& path);
FeatureDataset read_features(const std::filesystem::path& path);
LocalEnvDataset read_local_envs(const std::filesystem::path& path);
TargetTable read_targets(const std::filesystem::path& path);
SplitSpec read_split(const std::filesystem::path& path);

void write_fingerprints(std::ostream& out, const FingerprintDataset& data);
void write_features(std::ostream& out, const FeatureDataset& data);
void write_local_envs(std::ostream& out, const LocalEnvDataset& data);
void write_targets(std::ostream& out, const TargetTable& table);
void write_split(std::ostream& out, const SplitSpec& split);

// Uniform random disjoint train/test subsets, a pure function of its inputs.
SplitSpec make_split(std::span<const std::string> ids, std::size_t n_train, std::size_t n_test,
                     std::uint64_t seed);

// Row positions of `wanted` inside `ids`; throws ValidationError for unknown ids.
std::vector<std::size_t> positions_of(std::span<const std::string> ids,
                                      std::span<const std::string> wanted);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace kspec::io
