#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "kspec/dataset_io.hpp"
#include "kspec/errors.hpp"
#include "support.hpp"

using namespace kspec;
using namespace kspec::io;

namespace {

template <typename Fn>
std::size_t parse_error_line(Fn&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.line();
    }
    FAIL("expected a ParseError");
    return 0;
}

}  // namespace

TEST_CASE("fingerprints survive a write/parse round trip across word boundaries") {
    const auto rows = testing::random_bits(9, 130, 0.3, 11);
    const auto data = FingerprintDataset::from_rows(testing::make_ids(9), rows);
    CHECK(data.words_per_row() == 3);
    std::stringstream buffer;
    write_fingerprints(buffer, data);
    const auto back = parse_fingerprints(buffer);
    REQUIRE(back.size() == 9);
    CHECK(back.bits() == 130);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(back.row(i) == rows[i]);
        const auto ones = static_cast<std::size_t>(std::count(rows[i].begin(), rows[i].end(), 1));
        CHECK(back.popcount(i) == ones);
    }
}

TEST_CASE("fingerprint parser reports the offending line") {
    SUBCASE("non-binary symbol") {
        std::istringstream in("# d=4\na 0101\nb 01x1\n");
        CHECK(parse_error_line([&] { (void)parse_fingerprints(in); }) == 3);
    }
    SUBCASE("wrong length") {
        std::istringstream in("# d=4\na 01011\n");
        CHECK(parse_error_line([&] { (void)parse_fingerprints(in); }) == 2);
    }
    SUBCASE("duplicate id") {
        std::istringstream in("# d=2\na 01\na 10\n");
        CHECK(parse_error_line([&] { (void)parse_fingerprints(in); }) == 3);
    }
    SUBCASE("missing header") {
        std::istringstream in("a 0101\n");
        CHECK_THROWS_AS((void)parse_fingerprints(in), ParseError);
    }
    SUBCASE("empty file") {
        std::istringstream in("# d=8\n");
        CHECK_THROWS_AS((void)parse_fingerprints(in), ParseError);
    }
}

TEST_CASE("features round trip and reject malformed rows") {
    const auto data = testing::random_features(6, 3, 5);
    std::stringstream buffer;
    write_features(buffer, data);
    const auto back = parse_features(buffer);
    CHECK(back.ids == data.ids);
    CHECK(back.features == data.features);

    std::istringstream nan_row("id,f0,f1\na,1,nan\n");
    CHECK(parse_error_line([&] { (void)parse_features(nan_row); }) == 2);
    std::istringstream short_row("id,f0,f1\na,1,2\nb,1\n");
    CHECK(parse_error_line([&] { (void)parse_features(short_row); }) == 3);
    std::istringstream bad_header("name,f0\na,1\n");
    CHECK_THROWS_AS((void)parse_features(bad_header), ParseError);
}

TEST_CASE("local environments parse species and descriptors") {
    std::istringstream in(
        R"({"id": "w", "atoms": [{"Z": 8, "v": [0.5, 1.0]}, {"Z": 1, "v": [0.1, 0.2]}, {"Z": 1, "v": [0.1, 0.3]}]})"
        "\n"
        R"({"id": "h2", "atoms": [{"Z": 1, "v": [0.0, 0.0]}, {"Z": 1, "v": [1.0, 0.0]}]})"
        "\n");
    const auto data = parse_local_envs(in);
    REQUIRE(data.size() == 2);
    CHECK(data.descriptor_dim == 2);
    CHECK(data.molecules[0].species == std::vector<int>{8, 1, 1});
    CHECK(data.molecules[0].descriptors(2, 1) == doctest::Approx(0.3));

    std::stringstream buffer;
    write_local_envs(buffer, data);
    const auto back = parse_local_envs(buffer);
    CHECK(back.molecules[1].descriptors == data.molecules[1].descriptors);
    CHECK(back.molecules[0].species == data.molecules[0].species);
}

TEST_CASE("local environment validation") {
    std::istringstream bad_z(R"({"id": "a", "atoms": [{"Z": 0, "v": [1]}]})");
    CHECK_THROWS_WITH_AS((void)parse_local_envs(bad_z), doctest::Contains("invalid atomic number"), ParseError);
    std::istringstream no_z(R"({"id": "a", "atoms": [{"v": [1]}]})");
    CHECK_THROWS_WITH_AS((void)parse_local_envs(no_z), doctest::Contains("missing Z"), ParseError);
    std::istringstream ragged(
        "{\"id\": \"a\", \"atoms\": [{\"Z\": 1, \"v\": [1, 2]}]}\n{\"id\": \"b\", \"atoms\": [{\"Z\": 1, \"v\": [1]}]}\n");
    CHECK(parse_error_line([&] { (void)parse_local_envs(ragged); }) == 2);
}

TEST_CASE("target columns follow the requested id order") {
    std::istringstream in("id,U0,gap\na,1.5,0.1\nb,2.5,0.2\nc,3.5,0.3\n");
    const auto table = parse_targets(in);
    CHECK(table.has_property("gap"));
    CHECK_FALSE(table.has_property("H"));
    const std::vector<std::string> order{"c", "a"};
    const auto u0 = table.column("U0", order);
    CHECK(u0[0] == 3.5);
    CHECK(u0[1] == 1.5);
    CHECK_THROWS_AS((void)table.column("H", order), ValidationError);
    const std::vector<std::string> unknown{"z"};
    CHECK_THROWS_AS((void)table.column("U0", unknown), ValidationError);
}

TEST_CASE("make_split is a disjoint, seeded draw") {
    const auto ids = testing::make_ids(40);
    const auto a = make_split(ids, 25, 10, 3);
    const auto b = make_split(ids, 25, 10, 3);
    const auto c = make_split(ids, 25, 10, 4);
    CHECK(a.train_ids == b.train_ids);
    CHECK(a.test_ids == b.test_ids);
    CHECK(a.train_ids != c.train_ids);
    std::set<std::string> seen(a.train_ids.begin(), a.train_ids.end());
    seen.insert(a.test_ids.begin(), a.test_ids.end());
    CHECK(seen.size() == 35);
    CHECK_THROWS_AS((void)make_split(ids, 35, 10, 0), ValidationError);
}

TEST_CASE("split files round trip and reject overlap") {
    const auto split = make_split(testing::make_ids(12), 6, 4, 9);
    std::stringstream buffer;
    write_split(buffer, split);
    const auto back = parse_split(buffer);
    CHECK(back.train_ids == split.train_ids);
    CHECK(back.test_ids == split.test_ids);
    CHECK(back.seed == 9);

    std::istringstream overlap(R"({"seed": 1, "train": ["a", "b"], "test": ["b"]})");
    CHECK_THROWS_AS((void)parse_split(overlap), ParseError);
}

TEST_CASE("format_double is the shortest exact representation") {
    for (const double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456.789}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("readers raise IoError for missing files") {
    CHECK_THROWS_AS((void)read_features("/nonexistent/features.csv"), IoError);
    CHECK_THROWS_AS((void)read_targets("/nonexistent/targets.csv"), IoError);
}

TEST_CASE("bundled fixtures pass validation") {
    const std::filesystem::path dir = KSPEC_FIXTURE_DIR;
    CHECK(read_features(dir / "features.csv").size() == 80);
    CHECK(read_fingerprints(dir / "fingerprints.txt").bits() == 64);
    CHECK(read_local_envs(dir / "local_envs.jsonl").size() == 12);
    CHECK(read_targets(dir / "targets.csv").properties().size() == 3);
}
