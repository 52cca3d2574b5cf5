#pragma once

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

namespace swing {

/// Shortest decimal text that parses back to the same double.
inline std::string round_trip(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

class CsvRow {
public:
    explicit CsvRow(std::ostream& os) : os_(os) {}
    ~CsvRow() { os_ << '\n'; }
    CsvRow(const CsvRow&) = delete;
    CsvRow& operator=(const CsvRow&) = delete;

    CsvRow& operator<<(double v) { return put(round_trip(v)); }
    CsvRow& operator<<(std::string_view s) { return put(s); }
    CsvRow& operator<<(const char* s) { return put(s); }
    CsvRow& operator<<(std::uint64_t v) { return put(std::to_string(v)); }
    CsvRow& operator<<(int v) { return put(std::to_string(v)); }

private:
    CsvRow& put(std::string_view s) {
        if (!first_) os_ << ',';
        first_ = false;
        os_ << s;
        return *this;
    }
    std::ostream& os_;
    bool first_ = true;
};

} // namespace swing
