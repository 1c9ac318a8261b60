#include "doctest.h"

#include <stdexcept>

#include "morekit/toml.hpp"

using namespace morekit;

TEST_CASE("toml: sections, types, comments, escapes") {
    const auto t = toml::parse_string(
        "# run config\n"
        "[data]\n"
        "matrix = \"counts.mtx\"  # trailing comment\n"
        "transpose = true\n"
        "\n"
        "[train]\n"
        "epochs = 30\n"
        "learning_rate = 1e-3\n"
        "note = \"a\\tb\"\n");
    CHECK(t.get_string("data", "matrix", "") == "counts.mtx");
    CHECK(t.get_bool("data", "transpose", false));
    CHECK(t.get_int("train", "epochs", 0) == 30);
    CHECK(t.get_double("train", "learning_rate", 0.0) == doctest::Approx(1e-3));
    CHECK(t.get_string("train", "note", "") == "a\tb");
    CHECK(t.get_double("train", "epochs", 0.0) == doctest::Approx(30.0));  // int coerces to double
    CHECK(t.get_int("train", "missing", 7) == 7);
    CHECK(t.has("data", "matrix"));
    CHECK_FALSE(t.has("data", "nope"));
}

TEST_CASE("toml: malformed inputs are rejected with line context") {
    CHECK_THROWS_WITH_AS(toml::parse_string("[data\nx = 1\n"), doctest::Contains(":1"), std::runtime_error);
    CHECK_THROWS_AS(toml::parse_string("key_outside = 1\n"), std::runtime_error);
    CHECK_THROWS_AS(toml::parse_string("[s]\nnovalue\n"), std::runtime_error);
    CHECK_THROWS_AS(toml::parse_string("[s]\nx = \"unterminated\n"), std::runtime_error);
    CHECK_THROWS_AS(toml::parse_string("[s]\nx = 1\nx = 2\n"), std::runtime_error);
    CHECK_THROWS_AS(toml::parse_string("[s]\nx = zzz\n"), std::runtime_error);
}

TEST_CASE("toml: type mismatches throw") {
    const auto t = toml::parse_string("[s]\nflag = true\nnum = 1.5\n");
    CHECK_THROWS_AS(t.get_int("s", "num", 0), std::runtime_error);
    CHECK_THROWS_AS(t.get_string("s", "num", ""), std::runtime_error);
}
