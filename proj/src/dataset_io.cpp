#include "kspec/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include <json.hpp>

#include "kspec/errors.hpp"
#include "kspec/random.hpp"

namespace kspec::io {

namespace {

constexpr std::size_t kWordBits = 64;

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

// Parses a finite double or throws ParseError.
double parse_number(std::string_view text, const std::string& source, std::size_t line) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    if (!text.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || begin == end) {
        throw ParseError(source, line, "invalid number '" + std::string(text) + "'");
    }
    if (!std::isfinite(value)) {
        throw ParseError(source, line, "non-finite value '" + std::string(text) + "'");
    }
    return value;
}

std::ifstream open_for_reading(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

void require_unique(std::unordered_set<std::string>& seen, const std::string& id,
                    const std::string& source, std::size_t line) {
    if (id.empty()) throw ParseError(source, line, "empty molecule id");
    if (!seen.insert(id).second) throw ParseError(source, line, "duplicate id '" + id + "'");
}

template <typename Dataset>
std::vector<std::string> pick_ids(const Dataset& data, std::span<const std::size_t> rows) {
    std::vector<std::string> ids;
    ids.reserve(rows.size());
    for (auto r : rows) ids.push_back(data.ids.at(r));
    return ids;
}

}  // namespace

// ---------------------------------------------------------------------------
// FingerprintDataset

FingerprintDataset::FingerprintDataset(std::vector<std::string> ids, std::size_t bits,
                                       std::vector<std::uint64_t> words)
    : ids_(std::move(ids)),
      bits_(bits),
      words_per_row_((bits + kWordBits - 1) / kWordBits),
      words_(std::move(words)) {
    if (ids_.empty()) throw ValidationError("fingerprint dataset has no rows");
    if (bits_ == 0) throw ValidationError("fingerprint length must be positive");
    if (words_.size() != ids_.size() * words_per_row_) {
        throw ValidationError("fingerprint word buffer does not match n x d");
    }
    const std::size_t tail = bits_ % kWordBits;
    const std::uint64_t tail_mask = tail == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << tail) - 1;
    popcounts_.resize(ids_.size());
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i].empty() || !seen.insert(ids_[i]).second) {
            throw ValidationError("missing or duplicate fingerprint id '" + ids_[i] + "'");
        }
        if ((words_[(i + 1) * words_per_row_ - 1] & ~tail_mask) != 0) {
            throw ValidationError("fingerprint row " + ids_[i] + " has bits beyond d");
        }
        std::size_t count = 0;
        for (auto w : row_words(i)) count += static_cast<std::size_t>(std::popcount(w));
        popcounts_[i] = count;
    }
}

FingerprintDataset FingerprintDataset::from_rows(std::vector<std::string> ids,
                                                 const std::vector<std::vector<std::uint8_t>>& rows) {
    if (rows.empty()) throw ValidationError("fingerprint dataset has no rows");
    if (ids.size() != rows.size()) throw ValidationError("id count does not match row count");
    const std::size_t bits = rows.front().size();
    const std::size_t wpr = (bits + kWordBits - 1) / kWordBits;
    std::vector<std::uint64_t> words(rows.size() * wpr, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != bits) throw ValidationError("inconsistent fingerprint length");
        for (std::size_t j = 0; j < bits; ++j) {
            if (rows[i][j] > 1) throw ValidationError("fingerprint entries must be 0 or 1");
            if (rows[i][j]) words[i * wpr + j / kWordBits] |= std::uint64_t{1} << (j % kWordBits);
        }
    }
    return {std::move(ids), bits, std::move(words)};
}

std::span<const std::uint64_t> FingerprintDataset::row_words(std::size_t i) const {
    return {words_.data() + i * words_per_row_, words_per_row_};
}

bool FingerprintDataset::bit(std::size_t i, std::size_t j) const {
    return (row_words(i)[j / kWordBits] >> (j % kWordBits)) & 1U;
}

std::vector<std::uint8_t> FingerprintDataset::row(std::size_t i) const {
    std::vector<std::uint8_t> out(bits_);
    for (std::size_t j = 0; j < bits_; ++j) out[j] = bit(i, j) ? 1 : 0;
    return out;
}

FingerprintDataset FingerprintDataset::subset(std::span<const std::size_t> rows) const {
    std::vector<std::string> ids;
    std::vector<std::uint64_t> words;
    ids.reserve(rows.size());
    words.reserve(rows.size() * words_per_row_);
    for (auto r : rows) {
        ids.push_back(ids_.at(r));
        auto w = row_words(r);
        words.insert(words.end(), w.begin(), w.end());
    }
    return {std::move(ids), bits_, std::move(words)};
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> rows) const {
    FeatureDataset out;
    out.ids = pick_ids(*this, rows);
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(rows[k]));
    }
    return out;
}

LocalEnvDataset LocalEnvDataset::subset(std::span<const std::size_t> rows) const {
    LocalEnvDataset out;
    out.ids = pick_ids(*this, rows);
    out.descriptor_dim = descriptor_dim;
    out.molecules.reserve(rows.size());
    for (auto r : rows) out.molecules.push_back(molecules.at(r));
    return out;
}

// ---------------------------------------------------------------------------
// TargetTable

TargetTable::TargetTable(std::vector<std::string> ids, std::vector<std::string> properties,
                         RowMatrix values)
    : ids_(std::move(ids)), properties_(std::move(properties)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.rows()) != ids_.size() ||
        static_cast<std::size_t>(values_.cols()) != properties_.size()) {
        throw ValidationError("target table shape does not match ids x properties");
    }
    if (!values_.allFinite()) throw ValidationError("target table contains non-finite values");
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!row_of_.emplace(ids_[i], i).second) {
            throw ValidationError("duplicate target id '" + ids_[i] + "'");
        }
    }
}

bool TargetTable::has_property(const std::string& name) const {
    return std::find(properties_.begin(), properties_.end(), name) != properties_.end();
}

Eigen::VectorXd TargetTable::column(const std::string& property,
                                    std::span<const std::string> ids) const {
    const auto it = std::find(properties_.begin(), properties_.end(), property);
    if (it == properties_.end()) throw ValidationError("unknown property '" + property + "'");
    const auto col = static_cast<Eigen::Index>(it - properties_.begin());
    Eigen::VectorXd out(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto row = row_of_.find(ids[k]);
        if (row == row_of_.end()) throw ValidationError("no target values for id '" + ids[k] + "'");
        out[static_cast<Eigen::Index>(k)] = values_(static_cast<Eigen::Index>(row->second), col);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsers

FingerprintDataset parse_fingerprints(std::istream& in, const std::string& source) {
    std::size_t bits = 0;
    std::vector<std::string> ids;
    std::vector<std::uint64_t> words;
    std::unordered_set<std::string> seen;
    std::size_t wpr = 0;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto body = trim(line.substr(1));
            if (body.starts_with("d=")) {
                if (bits != 0) throw ParseError(source, line_no, "duplicate '# d=' header");
                const auto digits = body.substr(2);
                const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), bits);
                if (ec != std::errc{} || ptr != digits.data() + digits.size() || bits == 0) {
                    throw ParseError(source, line_no, "invalid fingerprint length header");
                }
                wpr = (bits + kWordBits - 1) / kWordBits;
            }
            continue;
        }
        if (bits == 0) throw ParseError(source, line_no, "data before mandatory '# d=<int>' header");
        const auto space = line.find_first_of(" \t");
        if (space == std::string_view::npos) {
            throw ParseError(source, line_no, "expected '<id> <bitstring>'");
        }
        const std::string id(line.substr(0, space));
        const auto bitstring = trim(line.substr(space));
        if (bitstring.find_first_of(" \t") != std::string_view::npos) {
            throw ParseError(source, line_no, "expected '<id> <bitstring>'");
        }
        if (bitstring.size() != bits) {
            throw ParseError(source, line_no,
                             "bitstring length " + std::to_string(bitstring.size()) + " != d=" +
                                 std::to_string(bits));
        }
        require_unique(seen, id, source, line_no);
        const std::size_t base = words.size();
        words.resize(base + wpr, 0);
        for (std::size_t j = 0; j < bits; ++j) {
            const char c = bitstring[j];
            if (c == '1') {
                words[base + j / kWordBits] |= std::uint64_t{1} << (j % kWordBits);
            } else if (c != '0') {
                throw ParseError(source, line_no, std::string("non-binary symbol '") + c + "'");
            }
        }
        ids.push_back(id);
    }
    if (bits == 0) throw ParseError(source, line_no, "missing '# d=<int>' header");
    if (ids.empty()) throw ParseError(source, line_no, "no rows");
    return {std::move(ids), bits, std::move(words)};
}

FeatureDataset parse_features(std::istream& in, const std::string& source) {
    std::string raw;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (width == 0 && std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto header = split_csv(line);
        if (header.front() != "id") throw ParseError(source, line_no, "header must start with 'id'");
        if (header.size() < 2) throw ParseError(source, line_no, "header declares no feature columns");
        width = header.size();
    }
    if (width == 0) throw ParseError(source, line_no, "missing header");

    FeatureDataset data;
    std::vector<double> values;
    std::unordered_set<std::string> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != width) {
            throw ParseError(source, line_no,
                             "expected " + std::to_string(width) + " columns, got " +
                                 std::to_string(fields.size()));
        }
        std::string id(fields.front());
        require_unique(seen, id, source, line_no);
        for (std::size_t k = 1; k < fields.size(); ++k) {
            values.push_back(parse_number(fields[k], source, line_no));
        }
        data.ids.push_back(std::move(id));
    }
    if (data.ids.empty()) throw ParseError(source, line_no, "no rows");
    data.features = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(data.ids.size()),
                                          static_cast<Eigen::Index>(width - 1));
    return data;
}

LocalEnvDataset parse_local_envs(std::istream& in, const std::string& source) {
    using nlohmann::json;
    LocalEnvDataset data;
    std::unordered_set<std::string> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!record.is_object() || !record.contains("id") || !record["id"].is_string()) {
            throw ParseError(source, line_no, "record needs a string 'id'");
        }
        const std::string id = record["id"].get<std::string>();
        const std::string where = "molecule '" + id + "': ";
        require_unique(seen, id, source, line_no);
        if (!record.contains("atoms") || !record["atoms"].is_array() || record["atoms"].empty()) {
            throw ParseError(source, line_no, where + "needs a non-empty 'atoms' array");
        }
        const auto& atoms = record["atoms"];
        AtomEnvironments mol;
        std::vector<double> values;
        for (const auto& atom : atoms) {
            if (!atom.is_object() || !atom.contains("Z")) {
                throw ParseError(source, line_no, where + "atom is missing Z");
            }
            const auto& z = atom["Z"];
            if (!z.is_number_integer() || z.get<long long>() < 1) {
                throw ParseError(source, line_no, where + "invalid atomic number");
            }
            if (!atom.contains("v") || !atom["v"].is_array()) {
                throw ParseError(source, line_no, where + "atom is missing descriptor 'v'");
            }
            const auto& v = atom["v"];
            if (data.descriptor_dim == 0) {
                if (v.empty()) throw ParseError(source, line_no, where + "empty descriptor");
                data.descriptor_dim = v.size();
            } else if (v.size() != data.descriptor_dim) {
                throw ParseError(source, line_no,
                                 where + "descriptor length " + std::to_string(v.size()) +
                                     " != " + std::to_string(data.descriptor_dim));
            }
            for (const auto& x : v) {
                if (!x.is_number()) throw ParseError(source, line_no, where + "descriptor entry is not a number");
                const double value = x.get<double>();
                if (!std::isfinite(value)) throw ParseError(source, line_no, where + "non-finite value");
                values.push_back(value);
            }
            mol.species.push_back(static_cast<int>(z.get<long long>()));
        }
        mol.descriptors = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(mol.species.size()),
                                                static_cast<Eigen::Index>(data.descriptor_dim));
        data.ids.push_back(id);
        data.molecules.push_back(std::move(mol));
    }
    if (data.ids.empty()) throw ParseError(source, line_no, "no rows");
    return data;
}

TargetTable parse_targets(std::istream& in, const std::string& source) {
    std::string raw;
    std::size_t line_no = 0;
    std::vector<std::string> properties;
    bool have_header = false;
    while (!have_header && std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto header = split_csv(line);
        if (header.front() != "id") throw ParseError(source, line_no, "header must start with 'id'");
        if (header.size() < 2) throw ParseError(source, line_no, "header declares no properties");
        for (std::size_t k = 1; k < header.size(); ++k) {
            if (header[k].empty()) throw ParseError(source, line_no, "empty property name");
            properties.emplace_back(header[k]);
        }
        have_header = true;
    }
    if (!have_header) throw ParseError(source, line_no, "missing header");

    std::vector<std::string> ids;
    std::vector<double> values;
    std::unordered_set<std::string> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != properties.size() + 1) {
            throw ParseError(source, line_no, "row does not have a value for every property");
        }
        std::string id(fields.front());
        require_unique(seen, id, source, line_no);
        for (std::size_t k = 1; k < fields.size(); ++k) values.push_back(parse_number(fields[k], source, line_no));
        ids.push_back(std::move(id));
    }
    if (ids.empty()) throw ParseError(source, line_no, "no rows");
    RowMatrix table = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(ids.size()),
                                            static_cast<Eigen::Index>(properties.size()));
    return {std::move(ids), std::move(properties), std::move(table)};
}

SplitSpec parse_split(std::istream& in, const std::string& source) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(source, 1, std::string("invalid JSON: ") + e.what());
    }
    SplitSpec split;
    try {
        split.seed = doc.at("seed").get<std::uint64_t>();
        split.train_ids = doc.at("train").get<std::vector<std::string>>();
        split.test_ids = doc.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(source, 1, std::string("split file: ") + e.what());
    }
    std::unordered_set<std::string> train(split.train_ids.begin(), split.train_ids.end());
    if (train.size() != split.train_ids.size()) throw ParseError(source, 1, "duplicate train id");
    std::unordered_set<std::string> test;
    for (const auto& id : split.test_ids) {
        if (train.contains(id)) throw ParseError(source, 1, "id '" + id + "' is in both train and test");
        if (!test.insert(id).second) throw ParseError(source, 1, "duplicate test id");
    }
    return split;
}

FingerprintDataset read_fingerprints(const std::filesystem::path& path) {
    auto in = open_for_reading(path);
    return parse_fingerprints(in, path.string());
}

FeatureDataset read_features(const std::filesystem::path& path) {
    auto in = open_for_reading(path);
    return parse_features(in, path.string());
}

LocalEnvDataset read_local_envs(const std::filesystem::path& path) {
    auto in = open_for_reading(path);
    return parse_local_envs(in, path.string());
}

TargetTable read_targets(const std::filesystem::path& path) {
    auto in = open_for_reading(path);
    return parse_targets(in, path.string());
}

SplitSpec read_split(const std::filesystem::path& path) {
    auto in = open_for_reading(path);
    return parse_split(in, path.string());
}

// ---------------------------------------------------------------------------
// Writers

std::string format_double(double value) {
    char buffer[32];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

void write_fingerprints(std::ostream& out, const FingerprintDataset& data) {
    out << "# d=" << data.bits() << '\n';
    std::string bits(data.bits(), '0');
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.bits(); ++j) bits[j] = data.bit(i, j) ? '1' : '0';
        out << data.ids()[i] << ' ' << bits << '\n';
    }
}

void write_features(std::ostream& out, const FeatureDataset& data) {
    out << "id";
    for (std::size_t k = 0; k < data.dim(); ++k) out << ",f" << k;
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.ids[i];
        for (Eigen::Index k = 0; k < data.features.cols(); ++k) {
            out << ',' << format_double(data.features(static_cast<Eigen::Index>(i), k));
        }
        out << '\n';
    }
}

void write_local_envs(std::ostream& out, const LocalEnvDataset& data) {
    using nlohmann::json;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& mol = data.molecules[i];
        json atoms = json::array();
        for (std::size_t a = 0; a < mol.atoms(); ++a) {
            const auto row = mol.descriptors.row(static_cast<Eigen::Index>(a));
            atoms.push_back({{"Z", mol.species[a]}, {"v", std::vector<double>(row.begin(), row.end())}});
        }
        out << json{{"id", data.ids[i]}, {"atoms", std::move(atoms)}}.dump() << '\n';
    }
}

void write_targets(std::ostream& out, const TargetTable& table) {
    out << "id";
    for (const auto& p : table.properties()) out << ',' << p;
    out << '\n';
    for (std::size_t i = 0; i < table.ids().size(); ++i) {
        out << table.ids()[i];
        for (Eigen::Index k = 0; k < table.values().cols(); ++k) {
            out << ',' << format_double(table.values()(static_cast<Eigen::Index>(i), k));
        }
        out << '\n';
    }
}

void write_split(std::ostream& out, const SplitSpec& split) {
    nlohmann::json doc{{"seed", split.seed}, {"train", split.train_ids}, {"test", split.test_ids}};
    out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

SplitSpec make_split(std::span<const std::string> ids, std::size_t n_train, std::size_t n_test,
                     std::uint64_t seed) {
    if (n_train + n_test > ids.size()) {
        throw ValidationError("split needs " + std::to_string(n_train + n_test) + " ids but only " +
                              std::to_string(ids.size()) + " are available");
    }
    const auto perm = seeded_permutation(ids.size(), seed);
    SplitSpec split;
    split.seed = seed;
    split.train_ids.reserve(n_train);
    split.test_ids.reserve(n_test);
    for (std::size_t k = 0; k < n_train; ++k) split.train_ids.push_back(ids[perm[k]]);
    for (std::size_t k = n_train; k < n_train + n_test; ++k) split.test_ids.push_back(ids[perm[k]]);
    return split;
}

std::vector<std::size_t> positions_of(std::span<const std::string> ids,
                                      std::span<const std::string> wanted) {
    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
    std::vector<std::size_t> out;
    out.reserve(wanted.size());
    for (const auto& id : wanted) {
        const auto it = index.find(id);
        if (it == index.end()) throw ValidationError("id '" + id + "' is not in the dataset");
        out.push_back(it->second);
    }
    return out;
}

}  // namespace kspec::io
