#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "nefshrink/types.hpp"

namespace nefshrink {

// 17 significant digits: doubles round-trip exactly.
std::string format_double(double x);

// Comma-separated numeric matrix, row-major, no header. Blank lines are
// skipped; ragged rows are an error.
Matrix parse_matrix(std::string_view text);
Matrix read_matrix(const std::filesystem::path& path);
IntMatrix read_int_matrix(const std::filesystem::path& path);
void write_matrix(std::ostream& os, const Matrix& m);

}  // namespace nefshrink
