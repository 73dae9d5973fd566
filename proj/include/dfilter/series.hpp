#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfilter {

struct SeriesFile {
    std::vector<double> values;
    std::string header;  // empty when the file had none
    std::string source;
};

struct SeriesFormat {
    bool header = false;  // skip the first non-blank line
};

/// One value per line (or a single CSV column). Blank lines are ignored and
/// decimal points are parsed independently of the locale.
/// Throws ParseError / NonFiniteValue with the 1-based line number, and
/// ParseError if fewer than two observations are present.
SeriesFile parse_series(std::istream& in, const SeriesFormat& fmt = {}, const std::string& source = "<stream>");

SeriesFile load_series(const std::string& path, const SeriesFormat& fmt = {});

/// Writes one value per line with 17 significant digits.
void write_series(std::ostream& out, const std::vector<double>& values);

/// "%.17g" formatting shared by every textual output.
std::string format_number(double v);

}  // namespace dfilter
