#include "aipat/csv.hpp"

#include "aipat/error.hpp"

namespace aipat::csv {

std::string escape_field(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i != 0) out += ',';
    out += escape_field(fields[i]);
  }
  out += "\r\n";
  return out;
}

std::vector<Record> parse(std::string_view text) {
  std::vector<Record> records;
  Record current;
  std::string field;
  std::size_t line = 1;
  current.line = 1;
  bool in_quotes = false;
  bool field_started = false;  // distinguishes "" (empty line) from a record

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    if (field_started || !current.fields.empty() || !field.empty()) {
      end_field();
      records.push_back(std::move(current));
    }
    current = Record{};
    current.line = line;
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        field_started = true;
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        field += c;
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field_started = true;
        field += c;
    }
  }
  if (in_quotes) fail(ErrorKind::structural, "unterminated quoted field starting on line " + std::to_string(current.line));
  end_record();
  return records;
}

}  // namespace aipat::csv
