#include "dfilter/series.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "dfilter/errors.hpp"

namespace dfilter {

namespace {

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace

SeriesFile parse_series(std::istream& in, const SeriesFormat& fmt, const std::string& source) {
    SeriesFile out;
    out.source = source;
    std::string line;
    std::size_t lineno = 0;
    bool header_pending = fmt.header;
    while (std::getline(in, line)) {
        ++lineno;
        std::string field = trim(line);
        if (field.empty()) continue;
        if (header_pending) {
            out.header = field;
            header_pending = false;
            continue;
        }
        // A trailing comma from single-column CSV exports is tolerated.
        if (field.back() == ',') field = trim(field.substr(0, field.size() - 1));
        if (field.find(',') != std::string::npos) {
            throw ParseError(lineno, "expected a single column, got '" + field + "'");
        }
        const char* first = field.data();
        const char* last = first + field.size();
        if (*first == '+') ++first;
        double v = 0.0;
        const auto res = std::from_chars(first, last, v);
        if (res.ec == std::errc::result_out_of_range) throw NonFiniteValue(lineno);
        if (res.ec != std::errc() || res.ptr != last) {
            throw ParseError(lineno, "not a number: '" + field + "'");
        }
        if (!std::isfinite(v)) throw NonFiniteValue(lineno);
        out.values.push_back(v);
    }
    if (out.values.size() < 2) {
        throw ParseError(lineno, "a series needs at least two observations, found " +
                                     std::to_string(out.values.size()));
    }
    return out;
}

SeriesFile load_series(const std::string& path, const SeriesFormat& fmt) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open series file '" + path + "'");
    return parse_series(in, fmt, path);
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_series(std::ostream& out, const std::vector<double>& values) {
    for (double v : values) out << format_number(v) << '\n';
}

}  // namespace dfilter
