#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "panelvar/common.hpp"

namespace panelvar {

// Minimal RFC-4180-ish CSV reader: comma separated, optional double-quoted
// fields (embedded commas/quotes), header row required. Tracks line numbers
// for error messages.
class CsvReader {
 public:
  explicit CsvReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open CSV file: " + path);
    if (!next_record(header_))
      throw DataError(path + ": empty file (missing header)");
    for (std::size_t i = 0; i < header_.size(); ++i) col_[header_[i]] = i;
  }

  // Column index by header name; throws if absent.
  std::size_t col(const std::string& name) const {
    auto it = col_.find(name);
    if (it == col_.end())
      throw DataError(path_ + ": missing column '" + name + "'");
    return it->second;
  }

  bool has_col(const std::string& name) const { return col_.count(name) > 0; }

  // Reads the next data row; returns false at EOF. Rows must have the same
  // field count as the header.
  bool next(std::vector<std::string>& fields) {
    if (!next_record(fields)) return false;
    if (fields.size() != header_.size()) {
      std::ostringstream os;
      os << path_ << ":" << line_ << ": expected " << header_.size()
         << " fields, got " << fields.size();
      throw DataError(os.str());
    }
    return true;
  }

  long line() const { return line_; }
  const std::string& path() const { return path_; }
  const std::vector<std::string>& header() const { return header_; }

  double to_double(const std::string& s, const char* what) const {
    double v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      std::ostringstream os;
      os << path_ << ":" << line_ << ": bad " << what << " value '" << s << "'";
      throw DataError(os.str());
    }
    return v;
  }

 private:
  bool next_record(std::vector<std::string>& fields) {
    std::string raw;
    if (!std::getline(in_, raw)) return false;
    ++line_;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    fields.clear();
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      char ch = raw[i];
      if (quoted) {
        if (ch == '"') {
          if (i + 1 < raw.size() && raw[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field += ch;
        }
      } else if (ch == '"' && field.empty()) {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else {
        field += ch;
      }
    }
    if (quoted)
      throw DataError(path_ + ":" + std::to_string(line_) +
                      ": unterminated quoted field");
    fields.push_back(std::move(field));
    return true;
  }

  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> col_;
  long line_ = 0;
};

// Full-precision decimal serialization (17 significant digits) so numeric
// outputs diff exactly across runs.
inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw DataError("cannot open for writing: " + path);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_quote(fields[i]);
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace panelvar
