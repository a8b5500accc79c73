#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace cxr::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields may contain separators, quotes ("") and
// newlines. Accepts LF or CRLF line endings. Blank lines are skipped.
std::vector<Row> read(std::istream& in);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace cxr::csv
