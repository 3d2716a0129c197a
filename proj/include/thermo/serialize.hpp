#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <stdexcept>
#include <string>
#include <string_view>

namespace thermo {

// Shortest decimal string that parses back to the identical double.
// -0.0 keeps an explicit fraction so JSON parsers take the float path and
// preserve the sign bit.
inline std::string format_double(double v) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument("format_double: non-finite value");
    }
    if (v == 0.0) {
        return std::signbit(v) ? "-0.0" : "0";
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("parse_double: invalid number '" + std::string(s) + "'");
    }
    return v;
}

// Current time as ISO-8601 UTC, e.g. "2026-08-08T12:34:56Z".
inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

} // namespace thermo
