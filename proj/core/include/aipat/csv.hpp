#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace aipat::csv {

// RFC 4180 dialect: UTF-8, comma separator, CRLF record terminator, fields
// quoted only when they contain a comma, quote, CR or LF.

std::string escape_field(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);

struct Record {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

/// Accepts CRLF or LF terminators; a trailing empty line is ignored.
/// Throws ErrorKind::structural on an unterminated quoted field.
std::vector<Record> parse(std::string_view text);

/// Incremental writer producing a single string.
class Writer {
 public:
  void row(const std::vector<std::string>& fields) { out_ += format_row(fields); }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

}  // namespace aipat::csv
