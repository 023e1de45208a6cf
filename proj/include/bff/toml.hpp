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

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Minimal TOML reader/writer covering the subset this project emits:
// bare/quoted keys, [table] and [[array-of-table]] headers, strings,
// integers, floats, booleans and (possibly multi-line) arrays.
// Floats are formatted with shortest round-trip notation so files re-read
// bit-exactly.
namespace bff::toml {

class Value;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Insertion-ordered string → Value map. Copies are deep.
class Table {
public:
    Table() = default;
    Table(const Table& o);
    Table& operator=(const Table& o);
    Table(Table&&) = default;
    Table& operator=(Table&&) = default;

    Value& insert(std::string key, Value v);
    Value& get_or_insert(std::string_view key);

    const Value* find(std::string_view key) const;
    Value* find(std::string_view key);
    const Value& at(std::string_view key) const;
    bool contains(std::string_view key) const { return find(key) != nullptr; }

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Value>>> items_;
};

using Array = std::vector<Value>;

class Value {
public:
    Value() : v_(std::int64_t{0}) {}
    Value(std::int64_t i) : v_(i) {}
    Value(int i) : v_(static_cast<std::int64_t>(i)) {}
    Value(std::uint64_t i) : v_(static_cast<std::int64_t>(i)) {}
    Value(double d) : v_(d) {}
    Value(bool b) : v_(b) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(const char* s) : v_(std::string(s)) {}
    Value(Array a) : v_(std::move(a)) {}
    Value(Table t) : v_(std::move(t)) {}

    bool is_int() const { return std::holds_alternative<std::int64_t>(v_); }
    bool is_double() const { return std::holds_alternative<double>(v_); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }
    bool is_string() const { return std::holds_alternative<std::string>(v_); }
    bool is_array() const { return std::holds_alternative<Array>(v_); }
    bool is_table() const { return std::holds_alternative<Table>(v_); }

    std::int64_t as_int() const;
    double as_double() const;  // accepts integer values too
    bool as_bool() const;
    const std::string& as_string() const;
    const Array& as_array() const;
    Array& as_array();
    const Table& as_table() const;
    Table& as_table();

private:
    std::variant<std::int64_t, double, bool, std::string, Array, Table> v_;
};

Table parse(std::string_view text);
Table parse_file(const std::filesystem::path& path);

std::string write(const Table& root);
void write_file(const std::filesystem::path& path, const Table& root);

/// Shortest decimal representation that round-trips the exact double.
std::string format_double(double v);
double parse_double(std::string_view s);

// Small typed lookups with context in error messages.
const Table& require_table(const Table& t, std::string_view key);
double require_double(const Table& t, std::string_view key);
std::int64_t require_int(const Table& t, std::string_view key);
std::string require_string(const Table& t, std::string_view key);
double get_double(const Table& t, std::string_view key, double fallback);
std::int64_t get_int(const Table& t, std::string_view key, std::int64_t fallback);
bool get_bool(const Table& t, std::string_view key, bool fallback);
std::string get_string(const Table& t, std::string_view key, std::string fallback);

}  // namespace bff::toml
