#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace eoslab {

/// Shortest decimal string that parses back to exactly `v`.
[[nodiscard]] inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

/// Minimal CSV writer for numeric tables.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::span<const std::string> header) : out_(out), cols_(header.size()) {
        write_fields(header);
    }
    CsvWriter(std::ostream& out, std::initializer_list<std::string> header)
        : CsvWriter(out, std::vector<std::string>(header)) {}

    void row(std::span<const double> values) {
        std::vector<std::string> fields;
        fields.reserve(values.size());
        for (double v : values) fields.push_back(format_double(v));
        write_fields(fields);
    }
    void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

    /// Mixed row of preformatted fields.
    void fields(std::span<const std::string> f) { write_fields(f); }

    [[nodiscard]] std::size_t columns() const noexcept { return cols_; }

private:
    void write_fields(std::span<const std::string> f) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (i) out_ << ',';
            out_ << f[i];
        }
        out_ << '\n';
    }

    std::ostream& out_;
    std::size_t cols_;
};

[[nodiscard]] inline std::string format_int(std::int64_t v) { return std::to_string(v); }

}  // namespace eoslab
