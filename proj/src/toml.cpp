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

#include "bff/toml.hpp"

#include <charconv>
#include <cctype>
#include <fstream>
#include <sstream>

namespace bff::toml {

Table::Table(const Table& o) { *this = o; }

Table& Table::operator=(const Table& o) {
    if (this != &o) {
        items_.clear();
        items_.reserve(o.items_.size());
        for (const auto& [k, v] : o.items_)
            items_.emplace_back(k, std::make_unique<Value>(*v));
    }
    return *this;
}

Value& Table::insert(std::string key, Value v) {
    if (Value* existing = find(key)) {
        *existing = std::move(v);
        return *existing;
    }
    items_.emplace_back(std::move(key), std::make_unique<Value>(std::move(v)));
    return *items_.back().second;
}

Value& Table::get_or_insert(std::string_view key) {
    if (Value* existing = find(key))
        return *existing;
    items_.emplace_back(std::string(key), std::make_unique<Value>(Table{}));
    return *items_.back().second;
}

const Value* Table::find(std::string_view key) const {
    for (const auto& [k, v] : items_)
        if (k == key)
            return v.get();
    return nullptr;
}

Value* Table::find(std::string_view key) {
    for (auto& [k, v] : items_)
        if (k == key)
            return v.get();
    return nullptr;
}

const Value& Table::at(std::string_view key) const {
    if (const Value* v = find(key))
        return *v;
    throw Error("missing key '" + std::string(key) + "'");
}

std::int64_t Value::as_int() const {
    if (!is_int())
        throw Error("value is not an integer");
    return std::get<std::int64_t>(v_);
}

double Value::as_double() const {
    if (is_int())
        return static_cast<double>(std::get<std::int64_t>(v_));
    if (!is_double())
        throw Error("value is not a number");
    return std::get<double>(v_);
}

bool Value::as_bool() const {
    if (!is_bool())
        throw Error("value is not a boolean");
    return std::get<bool>(v_);
}

const std::string& Value::as_string() const {
    if (!is_string())
        throw Error("value is not a string");
    return std::get<std::string>(v_);
}

const Array& Value::as_array() const {
    if (!is_array())
        throw Error("value is not an array");
    return std::get<Array>(v_);
}

Array& Value::as_array() {
    if (!is_array())
        throw Error("value is not an array");
    return std::get<Array>(v_);
}

const Table& Value::as_table() const {
    if (!is_table())
        throw Error("value is not a table");
    return std::get<Table>(v_);
}

Table& Value::as_table() {
    if (!is_table())
        throw Error("value is not a table");
    return std::get<Table>(v_);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, res.ptr);
    // TOML floats need a '.' or exponent to stay floats on re-read.
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error("bad float literal '" + std::string(s) + "'");
    return v;
}

namespace {

struct Parser {
    std::string_view text;
    std::size_t pos = 0;
    int line = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error("toml parse error at line " + std::to_string(line) + ": " + msg);
    }

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }

    char take() {
        char c = text[pos++];
        if (c == '\n')
            ++line;
        return c;
    }

    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t'))
            ++pos;
    }

    void skip_ws_comment_newlines() {
        while (!eof()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r') {
                ++pos;
            } else if (c == '\n') {
                take();
            } else if (c == '#') {
                while (!eof() && peek() != '\n')
                    ++pos;
            } else {
                break;
            }
        }
    }

    void expect_line_end() {
        skip_ws();
        if (!eof() && peek() == '#')
            while (!eof() && peek() != '\n')
                ++pos;
        if (!eof() && peek() == '\r')
            ++pos;
        if (eof())
            return;
        if (peek() != '\n')
            fail("expected end of line");
        take();
    }

    static bool is_bare_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    }

    std::string parse_key() {
        skip_ws();
        if (eof())
            fail("expected key");
        if (peek() == '"')
            return parse_basic_string();
        std::string key;
        while (!eof() && is_bare_char(peek()))
            key += take();
        if (key.empty())
            fail("expected key");
        return key;
    }

    std::vector<std::string> parse_key_path() {
        std::vector<std::string> path;
        path.push_back(parse_key());
        skip_ws();
        while (!eof() && peek() == '.') {
            take();
            path.push_back(parse_key());
            skip_ws();
        }
        return path;
    }

    std::string parse_basic_string() {
        if (take() != '"')
            fail("expected '\"'");
        std::string out;
        while (true) {
            if (eof())
                fail("unterminated string");
            char c = take();
            if (c == '"')
                break;
            if (c == '\n')
                fail("newline in string");
            if (c == '\\') {
                if (eof())
                    fail("unterminated escape");
                char e = take();
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case 'r': out += '\r'; break;
                    case 'f': out += '\f'; break;
                    case 'b': out += '\b'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: fail("unsupported escape");
                }
            } else {
                out += c;
            }
        }
        return out;
    }

    Value parse_number() {
        std::size_t start = pos;
        bool is_float = false;
        if (!eof() && (peek() == '+' || peek() == '-'))
            ++pos;
        while (!eof()) {
            char c = peek();
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
                ++pos;
            } else if (c == '.' || c == 'e' || c == 'E') {
                is_float = true;
                ++pos;
                if (!eof() && (peek() == '+' || peek() == '-'))
                    ++pos;
            } else {
                break;
            }
        }
        std::string lit(text.substr(start, pos - start));
        std::erase(lit, '_');
        if (lit.empty())
            fail("expected number");
        if (is_float)
            return Value(parse_double(lit));
        std::int64_t v = 0;
        auto res = std::from_chars(lit.data(), lit.data() + lit.size(), v);
        if (res.ec != std::errc{} || res.ptr != lit.data() + lit.size())
            fail("bad integer literal '" + lit + "'");
        return Value(v);
    }

    Value parse_value() {
        skip_ws();
        if (eof())
            fail("expected value");
        char c = peek();
        if (c == '"')
            return Value(parse_basic_string());
        if (c == '[') {
            take();
            Array arr;
            skip_ws_comment_newlines();
            while (!eof() && peek() != ']') {
                arr.push_back(parse_value());
                skip_ws_comment_newlines();
                if (!eof() && peek() == ',') {
                    take();
                    skip_ws_comment_newlines();
                }
            }
            if (eof())
                fail("unterminated array");
            take();  // ']'
            return Value(std::move(arr));
        }
        if (text.compare(pos, 4, "true") == 0 &&
            (pos + 4 >= text.size() || !is_bare_char(text[pos + 4]))) {
            pos += 4;
            return Value(true);
        }
        if (text.compare(pos, 5, "false") == 0 &&
            (pos + 5 >= text.size() || !is_bare_char(text[pos + 5]))) {
            pos += 5;
            return Value(false);
        }
        if (c == '+' || c == '-' || std::isdigit(static_cast<unsigned char>(c)))
            return parse_number();
        fail("unsupported value syntax");
    }

    Table& descend(Table& root, const std::vector<std::string>& path,
                   std::size_t depth) {
        Table* t = &root;
        for (std::size_t i = 0; i < depth; ++i) {
            Value& v = t->get_or_insert(path[i]);
            if (v.is_array()) {
                Array& arr = v.as_array();
                if (arr.empty() || !arr.back().is_table())
                    fail("key '" + path[i] + "' is not a table");
                t = &arr.back().as_table();
            } else {
                t = &v.as_table();
            }
        }
        return *t;
    }

    Table run() {
        Table root;
        Table* current = &root;
        while (true) {
            skip_ws_comment_newlines();
            if (eof())
                break;
            if (peek() == '[') {
                take();
                bool array_of_tables = !eof() && peek() == '[';
                if (array_of_tables)
                    take();
                auto path = parse_key_path();
                skip_ws();
                if (eof() || take() != ']')
                    fail("expected ']'");
                if (array_of_tables && (eof() || take() != ']'))
                    fail("expected ']]'");
                expect_line_end();

                Table& parent = descend(root, path, path.size() - 1);
                const std::string& leaf = path.back();
                if (array_of_tables) {
                    Value* v = parent.find(leaf);
                    if (v == nullptr)
                        v = &parent.insert(leaf, Value(Array{}));
                    v->as_array().emplace_back(Table{});
                    current = &v->as_array().back().as_table();
                } else {
                    Value& v = parent.get_or_insert(leaf);
                    current = &v.as_table();
                }
            } else {
                auto path = parse_key_path();
                skip_ws();
                if (eof() || take() != '=')
                    fail("expected '='");
                Value v = parse_value();
                expect_line_end();
                Table& parent = descend(*current, path, path.size() - 1);
                if (parent.contains(path.back()))
                    fail("duplicate key '" + path.back() + "'");
                parent.insert(path.back(), std::move(v));
            }
        }
        return root;
    }
};

void write_escaped(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    out += '"';
}

void write_scalar(std::string& out, const Value& v) {
    if (v.is_int()) {
        out += std::to_string(v.as_int());
    } else if (v.is_double()) {
        out += format_double(v.as_double());
    } else if (v.is_bool()) {
        out += v.as_bool() ? "true" : "false";
    } else if (v.is_string()) {
        write_escaped(out, v.as_string());
    } else if (v.is_array()) {
        out += '[';
        const Array& arr = v.as_array();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (i)
                out += ", ";
            write_scalar(out, arr[i]);
        }
        out += ']';
    } else {
        throw Error("inline tables are not emitted");
    }
}

bool is_table_array(const Value& v) {
    if (!v.is_array() || v.as_array().empty())
        return false;
    for (const Value& e : v.as_array())
        if (!e.is_table())
            return false;
    return true;
}

void write_table(std::string& out, const Table& t, const std::string& prefix) {
    // Scalars first, then sub-tables, so each [section] owns its lines.
    for (const auto& [k, v] : t) {
        if (v->is_table() || is_table_array(*v))
            continue;
        out += k;
        out += " = ";
        write_scalar(out, *v);
        out += '\n';
    }
    for (const auto& [k, v] : t) {
        std::string path = prefix.empty() ? k : prefix + "." + k;
        if (v->is_table()) {
            out += "\n[" + path + "]\n";
            write_table(out, v->as_table(), path);
        } else if (is_table_array(*v)) {
            for (const Value& e : v->as_array()) {
                out += "\n[[" + path + "]]\n";
                write_table(out, e.as_table(), path);
            }
        }
    }
}

}  // namespace

Table parse(std::string_view text) {
    Parser p{text};
    return p.run();
}

Table parse_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string write(const Table& root) {
    std::string out;
    write_table(out, root, "");
    return out;
}

void write_file(const std::filesystem::path& path, const Table& root) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    out << write(root);
}

const Table& require_table(const Table& t, std::string_view key) {
    const Value* v = t.find(key);
    if (v == nullptr || !v->is_table())
        throw Error("missing table '" + std::string(key) + "'");
    return v->as_table();
}

double require_double(const Table& t, std::string_view key) {
    return t.at(key).as_double();
}

std::int64_t require_int(const Table& t, std::string_view key) {
    return t.at(key).as_int();
}

std::string require_string(const Table& t, std::string_view key) {
    return t.at(key).as_string();
}

double get_double(const Table& t, std::string_view key, double fallback) {
    const Value* v = t.find(key);
    return v != nullptr ? v->as_double() : fallback;
}

std::int64_t get_int(const Table& t, std::string_view key, std::int64_t fallback) {
    const Value* v = t.find(key);
    return v != nullptr ? v->as_int() : fallback;
}

bool get_bool(const Table& t, std::string_view key, bool fallback) {
    const Value* v = t.find(key);
    return v != nullptr ? v->as_bool() : fallback;
}

std::string get_string(const Table& t, std::string_view key, std::string fallback) {
    const Value* v = t.find(key);
    return v != nullptr ? v->as_string() : fallback;
}

}  // namespace bff::toml
