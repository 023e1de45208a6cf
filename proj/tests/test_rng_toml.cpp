// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bff/rng.hpp"
#include "bff/toml.hpp"

using namespace bff;

TEST_SUITE_BEGIN("rng");

TEST_CASE("identical seeds replay the same sequence") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 1000; ++i)
        REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("child streams ignore parent consumption") {
    Rng fresh(99);
    Rng used(99);
    for (int i = 0; i < 57; ++i)
        used.next_u64();
    Rng c1 = fresh.stream(7);
    Rng c2 = used.stream(7);
    for (int i = 0; i < 100; ++i)
        REQUIRE(c1.next_u64() == c2.next_u64());

    // and named streams match their hashed index
    Rng n1 = fresh.stream("tracks");
    Rng n2 = fresh.stream(fnv1a64("tracks"));
    CHECK(n1.next_u64() == n2.next_u64());
}

TEST_CASE("sibling streams differ") {
    Rng root(5);
    CHECK(root.stream(0).next_u64() != root.stream(1).next_u64());
    CHECK(root.stream(0).next_u64() != root.next_u64());
}

TEST_CASE("fnv1a64 known vectors") {
    CHECK(fnv1a64("") == 0xCBF29CE484222325ull);
    CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8Cull);
}

TEST_CASE("uniform01 range and mean") {
    Rng r(42);
    const int n = 200000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    // sd of the mean = 1/sqrt(12 n) ~ 6.5e-4; allow 6 sigma
    CHECK(std::fabs(sum / n - 0.5) < 4e-3);
}

TEST_CASE("uniform_index stays in range and is roughly flat") {
    Rng r(7);
    const std::uint64_t n = 7;
    std::vector<int> hist(n, 0);
    for (int i = 0; i < 70000; ++i) {
        const std::uint64_t k = r.uniform_index(n);
        REQUIRE(k < n);
        hist[k]++;
    }
    for (int c : hist)
        CHECK(std::fabs(c - 10000.0) < 600.0);  // ~6 sigma
}

TEST_CASE("normal moments") {
    Rng r(11);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s1 += x;
        s2 += x * x;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.03);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("toml");

TEST_CASE("scalars, arrays and nested tables parse") {
    const char* text = R"(# comment
title = "demo"
count = 1_000
ratio = 2.5e-3
flag = true
mix = [1, 2, 3]

[outer.inner]
x = -4
name = "deep \"quoted\""

[[run]]
id = 0
[[run]]
id = 1
)";
    toml::Table t = toml::parse(text);
    CHECK(t.at("title").as_string() == "demo");
    CHECK(t.at("count").as_int() == 1000);
    CHECK(t.at("ratio").as_double() == doctest::Approx(2.5e-3));
    CHECK(t.at("flag").as_bool() == true);
    REQUIRE(t.at("mix").as_array().size() == 3);
    CHECK(t.at("mix").as_array()[2].as_int() == 3);
    const toml::Table& inner = t.at("outer").as_table().at("inner").as_table();
    CHECK(inner.at("x").as_int() == -4);
    CHECK(inner.at("name").as_string() == "deep \"quoted\"");
    const toml::Array& runs = t.at("run").as_array();
    REQUIRE(runs.size() == 2);
    CHECK(runs[1].as_table().at("id").as_int() == 1);
}

TEST_CASE("write then parse preserves values and order") {
    toml::Table t;
    t.insert("b_first", 1);
    t.insert("a_second", std::string("x"));
    toml::Table sub;
    sub.insert("v", 0.1);
    t.insert("sub", std::move(sub));

    const std::string text = toml::write(t);
    CHECK(text.find("b_first") < text.find("a_second"));
    toml::Table back = toml::parse(text);
    CHECK(back.at("b_first").as_int() == 1);
    CHECK(back.at("a_second").as_string() == "x");
    CHECK(back.at("sub").as_table().at("v").as_double() == 0.1);
}

TEST_CASE("float formatting round-trips bit-exactly") {
    // hand-picked awkward cases
    for (double v : {0.1, 1.0 / 3.0, 1e300, 5e-324, 1.4260213458870124e12, -0.0,
                     123456789.123456789, 2.2250738585072014e-308}) {
        const std::string s = toml::format_double(v);
        const double back = toml::parse_double(s);
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    // and a pile of random magnitudes
    Rng r(3);
    for (int i = 0; i < 20000; ++i) {
        const double v =
            r.uniform(-1.0, 1.0) * std::pow(10.0, r.uniform(-300.0, 300.0));
        const double back = toml::parse_double(toml::format_double(v));
        REQUIRE(back == v);
    }
}

TEST_CASE("floats written as TOML stay floats") {
    toml::Table t;
    t.insert("whole", 3.0);
    toml::Table back = toml::parse(toml::write(t));
    CHECK(back.at("whole").is_double());
    CHECK(back.at("whole").as_double() == 3.0);
}

TEST_CASE("file round-trip") {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "bff_toml_rt.toml";
    toml::Table t;
    t.insert("seed", std::int64_t{987654321});
    toml::Table meta;
    meta.insert("version", 1);
    t.insert("meta", std::move(meta));
    toml::write_file(p, t);
    toml::Table back = toml::parse_file(p);
    CHECK(back.at("seed").as_int() == 987654321);
    CHECK(back.at("meta").as_table().at("version").as_int() == 1);
    fs::remove(p);
}

TEST_CASE("malformed input is rejected") {
    CHECK_THROWS_AS((void)toml::parse("key = "), toml::Error);
    CHECK_THROWS_AS((void)toml::parse("= 3"), toml::Error);
    CHECK_THROWS_AS((void)toml::parse("[unclosed\nx = 1"), toml::Error);
    CHECK_THROWS_AS((void)toml::parse("s = \"no end"), toml::Error);
    CHECK_THROWS_AS((void)toml::parse("a = 1\na = 2"), toml::Error);
}

TEST_CASE("typed lookups carry context") {
    toml::Table t = toml::parse("x = 1\ns = \"v\"");
    CHECK(toml::require_int(t, "x") == 1);
    CHECK(toml::get_double(t, "missing", 2.5) == 2.5);
    CHECK_THROWS_AS((void)toml::require_double(t, "s"), toml::Error);
    CHECK_THROWS_AS((void)toml::require_table(t, "x"), toml::Error);
    CHECK(toml::require_double(t, "x") == 1.0);  // ints promote
}

TEST_SUITE_END();
