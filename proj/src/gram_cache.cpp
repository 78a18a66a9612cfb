#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "kspec/errors.hpp"
#include "kspec/kernels.hpp"

namespace kspec::kernels {

namespace {

constexpr std::array<char, 4> kMagic{'K', 'S', 'G', 'M'};

template <typename UInt>
void put_le(std::ostream& out, UInt value) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t k = 0; k < sizeof(UInt); ++k) bytes[k] = static_cast<char>((value >> (8 * k)) & 0xFF);
    out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in) {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw ValidationError("truncated Gram cache");
    UInt value = 0;
    for (std::size_t k = 0; k < sizeof(UInt); ++k) value |= static_cast<UInt>(bytes[k]) << (8 * k);
    return value;
}

}  // namespace

void write_gram_cache(const std::filesystem::path& path, const KernelMatrix& k) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(k.size()));
    put_le<std::uint64_t>(out, k.config.digest());
    for (Eigen::Index i = 0; i < k.values.rows(); ++i) {
        for (Eigen::Index j = i; j < k.values.cols(); ++j) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(k.values(i, j)));
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Eigen::MatrixXd read_gram_cache(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ValidationError(path.string() + " is not a Gram cache");
    const auto n = static_cast<Eigen::Index>(get_le<std::uint32_t>(in));
    const auto digest = get_le<std::uint64_t>(in);
    if (expected_digest && *expected_digest != digest) {
        throw ValidationError(path.string() + " was built with a different kernel configuration");
    }
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            k(i, j) = k(j, i) = std::bit_cast<double>(get_le<std::uint64_t>(in));
        }
    }
    return k;
}

}  // namespace kspec::kernels
