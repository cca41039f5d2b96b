#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace zeroem::csv {

using Row = std::vector<std::string>;

/// Parses RFC 4180 text: comma separated, double-quote quoting with "" escapes,
/// CRLF or LF line endings, line breaks allowed inside quoted fields.
/// A trailing line break does not produce an empty row.
/// Throws std::runtime_error on an unterminated quoted field.
std::vector<Row> parse(std::string_view text);

/// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape_field(std::string_view field);

std::string format_row(const Row& row);

}  // namespace zeroem::csv
