#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <vector>

namespace qfl {

/// Round-trip-exact decimal rendering (config echoes must re-parse to the
/// same bits).
inline std::string format_exact(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// The shortest decimal form that parses back to exactly the same double:
/// round-trip-exact like format_exact, but as readable as what was typed.
inline std::string format_shortest(double x) {
    char buf[32];
    const std::to_chars_result res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// Compact rendering for CSV data cells; deterministic for fixed input.
inline std::string format_value(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

/// One CSV record: comma separation, LF ending appended by the caller.
inline std::string csv_join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    return line;
}

} // namespace qfl
