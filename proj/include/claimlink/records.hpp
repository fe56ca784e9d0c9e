#pragma once

// Line-oriented record sources: JSON-lines and a CSV adapter with the same
// column names. Every record carries the line it started on so ingestion
// errors can point at it.

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "text.hpp"

namespace claimlink {

using json = nlohmann::json;

struct Record {
  std::size_t line = 0;
  json fields;
};

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::vector<Record> parse_jsonl(std::istream& in, const std::string& source) {
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(source + ":" + std::to_string(lineno) +
                        ": malformed JSON record: " + e.what());
    }
    if (!j.is_object()) {
      throw FormatError(source + ":" + std::to_string(lineno) +
                        ": record is not a JSON object");
    }
    out.push_back({lineno, std::move(j)});
  }
  return out;
}

namespace detail {

// One CSV row; handles quoted fields with doubled quotes and embedded
// newlines. Returns false at end of input.
inline bool read_csv_row(std::istream& in, std::vector<std::string>& row,
                         std::size_t& lineno, const std::string& source) {
  row.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  const std::size_t start_line = lineno + 1;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++lineno;
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      ++lineno;
      if (!field.empty() && field.back() == '\r') field.pop_back();
      row.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) {
    throw FormatError(source + ":" + std::to_string(start_line) +
                      ": unterminated quoted CSV field");
  }
  if (!any) return false;
  ++lineno;
  if (!field.empty() && field.back() == '\r') field.pop_back();
  row.push_back(std::move(field));
  return true;
}

}  // namespace detail

inline std::vector<Record> parse_csv(std::istream& in, const std::string& source) {
  std::vector<Record> out;
  std::vector<std::string> header;
  std::vector<std::string> row;
  std::size_t lineno = 0;
  if (!detail::read_csv_row(in, header, lineno, source)) return out;
  for (auto& h : header) h = std::string(trim(h));
  while (true) {
    const std::size_t row_line = lineno + 1;
    if (!detail::read_csv_row(in, row, lineno, source)) break;
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() != header.size()) {
      throw FormatError(source + ":" + std::to_string(row_line) + ": expected " +
                        std::to_string(header.size()) + " CSV columns, found " +
                        std::to_string(row.size()));
    }
    json j = json::object();
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!row[i].empty()) j[header[i]] = row[i];
    }
    out.push_back({row_line, std::move(j)});
  }
  return out;
}

// Picks the adapter by extension: .csv is CSV, everything else JSON-lines.
inline std::vector<Record> read_records(const std::filesystem::path& path) {
  auto in = open_input(path);
  if (to_lower_ascii(path.extension().string()) == ".csv") {
    return parse_csv(in, path.string());
  }
  return parse_jsonl(in, path.string());
}

// Id-like fields may arrive as numbers in real dumps.
inline std::string field_as_id(const Record& r, const char* key,
                               const std::string& source) {
  auto it = r.fields.find(key);
  if (it == r.fields.end() || it->is_null()) {
    throw FormatError(source + ":" + std::to_string(r.line) +
                      ": missing field '" + key + "'");
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw FormatError(source + ":" + std::to_string(r.line) + ": field '" + key +
                    "' must be a string or integer");
}

inline std::string field_as_text(const Record& r, const char* key,
                                 const std::string& source) {
  auto it = r.fields.find(key);
  if (it == r.fields.end() || !it->is_string()) {
    throw FormatError(source + ":" + std::to_string(r.line) +
                      ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& rows) {
  auto out = open_output(path);
  for (const auto& row : rows) out << row.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  auto out = open_output(path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace claimlink
