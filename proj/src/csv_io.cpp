#include "nefshrink/csv_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

namespace nefshrink {

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_number(std::string_view field, std::size_t line) {
    const std::string token(trim(field));
    if (token.empty()) throw std::invalid_argument(fmt::format("line {}: empty field", line));
    char* end = nullptr;
    errno = 0;
    const double value = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || errno == ERANGE)
        throw std::invalid_argument(fmt::format("line {}: cannot parse '{}'", line, token));
    return value;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Matrix parse_matrix(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::string_view rest = line;
        while (true) {
            const auto comma = rest.find(',');
            row.push_back(parse_number(rest.substr(0, comma), line_no));
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::invalid_argument(fmt::format("line {}: expected {} columns, got {}", line_no,
                                                    rows.front().size(), row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("matrix file is empty");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return m;
}

Matrix read_matrix(const std::filesystem::path& path) { return parse_matrix(slurp(path)); }

IntMatrix read_int_matrix(const std::filesystem::path& path) {
    const Matrix m = read_matrix(path);
    IntMatrix out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            if (v != std::floor(v) || std::abs(v) > 1e9)
                throw std::invalid_argument(
                    fmt::format("'{}': entry ({},{}) = {} is not an integer", path.string(), i, j, v));
            out(i, j) = static_cast<int>(v);
        }
    return out;
}

void write_matrix(std::ostream& os, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0) os << ',';
            os << format_double(m(i, j));
        }
        os << '\n';
    }
}

}  // namespace nefshrink
