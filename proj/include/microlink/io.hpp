// Apache License, Version 2.0, refer to LICENSE.txt
//
// On-disk formats (see docs/format.md): profiles.csv, truth.csv,
// network.csv and the chain outputs linkage.csv / traces.csv.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "microlink/errors.hpp"
#include "microlink/linkage.hpp"
#include "microlink/model.hpp"
#include "microlink/sampler.hpp"
#include "microlink/synth.hpp"

namespace microlink {

namespace csv {

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    if (c < 0x80) extra = 0;
    else if ((c >> 5) == 0x6) extra = 1;
    else if ((c >> 4) == 0xe) extra = 2;
    else if ((c >> 3) == 0x1e) extra = 3;
    else return false;
    if (extra > 0 && i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    i += extra + 1;
  }
  return true;
}

// Splits one line into fields; double quotes may wrap a field and "" is an
// escaped quote. Embedded newlines are not supported.
inline std::vector<std::string> split(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      if (!cur.empty()) throw DataError("stray quote inside unquoted field", line_no, out.size() + 1);
      quoted = was_quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw DataError("text after closing quote", line_no, out.size() + 1);
      cur += ch;
    }
  }
  if (quoted) throw DataError("unterminated quote", line_no, out.size() + 1);
  out.push_back(std::move(cur));
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

// Reads a CSV file. Blank lines are skipped; every row must have as many
// fields as the first line.
inline Table read(const std::filesystem::path& path, bool has_header = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!valid_utf8(line)) throw DataError(path.string() + ": invalid UTF-8", line_no);
    auto fields = split(line, line_no);
    if (width == 0) {
      width = fields.size();
      if (has_header) {
        t.header = std::move(fields);
        continue;
      }
    }
    if (fields.size() != width)
      throw DataError(path.string() + ": expected " + std::to_string(width) + " fields, found " +
                          std::to_string(fields.size()),
                      line_no);
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (width == 0) throw DataError(path.string() + ": empty file");
  return t;
}

inline bool parse_long(std::string_view s, long& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Numbers sort numerically, everything else lexicographically after them.
inline bool value_less(const std::string& a, const std::string& b) {
  double x, y;
  const bool na = parse_double(a, x);
  const bool nb = parse_double(b, y);
  if (na && nb) return x < y || (x == y && a < b);
  if (na != nb) return na;
  return a < b;
}

}  // namespace csv

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Loads categorical columns. `fields` selects columns by header name (empty
// = all columns, in file order). Codes follow the sorted distinct values.
inline Dataset load_profiles(const std::filesystem::path& path, const std::vector<std::string>& fields = {}) {
  const csv::Table t = csv::read(path);
  if (t.rows.empty()) throw DataError(path.string() + ": no records");
  std::vector<std::size_t> cols;
  if (fields.empty()) {
    for (std::size_t c = 0; c < t.header.size(); ++c) cols.push_back(c);
  } else {
    for (const auto& f : fields) {
      const auto it = std::find(t.header.begin(), t.header.end(), f);
      if (it == t.header.end()) throw DataError(path.string() + ": missing column '" + f + "'", 1);
      cols.push_back(static_cast<std::size_t>(it - t.header.begin()));
    }
  }
  Dataset ds;
  const std::size_t n = t.rows.size();
  const std::size_t l_count = cols.size();
  std::vector<int> codes(n * l_count);
  std::vector<int> domains;
  for (std::size_t l = 0; l < l_count; ++l) {
    const std::size_t c = cols[l];
    ds.field_names.push_back(t.header[c]);
    std::vector<std::string> values;
    for (const auto& row : t.rows) {
      if (row[c].empty())
        throw DataError(path.string() + ": empty value in column '" + t.header[c] + "'",
                        t.line_numbers[static_cast<std::size_t>(&row - t.rows.data())], c + 1);
      values.push_back(row[c]);
    }
    std::sort(values.begin(), values.end(), csv::value_less);
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() < 2)
      throw DataError(path.string() + ": column '" + t.header[c] +
                          "' has fewer than two distinct values; a categorical field needs M >= 2",
                      0, c + 1);
    std::map<std::string, int> code_of;
    for (std::size_t k = 0; k < values.size(); ++k) code_of[values[k]] = static_cast<int>(k);
    for (std::size_t i = 0; i < n; ++i) codes[i * l_count + l] = code_of.at(t.rows[i][c]);
    domains.push_back(static_cast<int>(values.size()));
    ds.codebooks.push_back(std::move(values));
  }
  ds.table = RecordTable(n, std::move(domains), std::move(codes));
  return ds;
}

// One identity per record, optional header. Identities are integers.
inline LinkageState load_truth(const std::filesystem::path& path, std::size_t records) {
  csv::Table t = csv::read(path, false);
  long dummy;
  std::size_t start = 0;
  if (!t.rows.empty() && !csv::parse_long(t.rows[0][0], dummy)) start = 1;  // header
  if (!t.rows.empty() && t.rows[0].size() != 1)
    throw DataError(path.string() + ": truth file must have exactly one column", 1);
  std::vector<long> ids;
  for (std::size_t k = start; k < t.rows.size(); ++k) {
    long v;
    if (!csv::parse_long(t.rows[k][0], v))
      throw DataError(path.string() + ": identity is not an integer", t.line_numbers[k], 1);
    ids.push_back(v);
  }
  if (ids.size() != records)
    throw DataError(path.string() + ": " + std::to_string(ids.size()) + " identities for " +
                    std::to_string(records) + " records");
  return LinkageState::from_labels(std::span<const long>(ids));
}

// Edge list "i,j" (0-based, i < j) with an optional header.
inline Network load_network(const std::filesystem::path& path, std::size_t nodes) {
  std::ifstream probe(path);
  if (!probe) throw DataError("cannot open " + path.string());
  std::string first_line;
  std::getline(probe, first_line);
  probe.close();
  std::vector<std::pair<int, int>> edges;
  if (first_line.find_first_not_of(" \t\r") == std::string::npos) return Network(nodes, {});
  const csv::Table t = csv::read(path, false);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    if (row.size() != 2) throw DataError(path.string() + ": expected two columns", t.line_numbers[k]);
    long a, b;
    const bool ok_a = csv::parse_long(row[0], a);
    const bool ok_b = csv::parse_long(row[1], b);
    if (!ok_a || !ok_b) {
      if (k == 0) continue;  // header
      throw DataError(path.string() + ": node index is not an integer", t.line_numbers[k], ok_a ? 2 : 1);
    }
    if (a >= b) throw DataError(path.string() + ": edges must satisfy i < j", t.line_numbers[k]);
    if (a < 0 || static_cast<std::size_t>(b) >= nodes)
      throw DataError(path.string() + ": node index out of range", t.line_numbers[k]);
    edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
  }
  try {
    return Network(nodes, std::move(edges));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline void save_profiles(const std::filesystem::path& path, const Dataset& ds) {
  std::ostringstream os;
  for (std::size_t l = 0; l < ds.field_names.size(); ++l)
    os << (l ? "," : "") << csv::quote(ds.field_names[l]);
  os << '\n';
  for (std::size_t i = 0; i < ds.table.records(); ++i) {
    for (std::size_t l = 0; l < ds.table.fields(); ++l) {
      const int code = ds.table.at(i, l);
      const std::string label = l < ds.codebooks.size() ? ds.codebooks[l][static_cast<std::size_t>(code)]
                                                         : std::to_string(code);
      os << (l ? "," : "") << csv::quote(label);
    }
    os << '\n';
  }
  write_text(path, os.str());
}

inline void save_truth(const std::filesystem::path& path, const LinkageState& truth) {
  std::ostringstream os;
  os << "entity_id\n";
  for (int v : truth.one_based()) os << v << '\n';
  write_text(path, os.str());
}

inline void save_network(const std::filesystem::path& path, const Network& net) {
  std::ostringstream os;
  os << "i,j\n";
  for (const auto& e : net.edges()) os << e.i << ',' << e.j << '\n';
  write_text(path, os.str());
}

// profiles.csv, truth.csv (if any), network.csv (if any).
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  save_profiles(dir / "profiles.csv", ds);
  if (ds.truth) save_truth(dir / "truth.csv", *ds.truth);
  if (ds.net) save_network(dir / "network.csv", *ds.net);
}

// Loads a bundle; network.csv and truth.csv are optional.
inline Dataset load_dataset(const std::filesystem::path& dir, const std::vector<std::string>& fields = {}) {
  Dataset ds = load_profiles(dir / "profiles.csv", fields);
  if (std::filesystem::exists(dir / "network.csv")) ds.net = load_network(dir / "network.csv", ds.table.records());
  if (std::filesystem::exists(dir / "truth.csv")) ds.truth = load_truth(dir / "truth.csv", ds.table.records());
  return ds;
}

// linkage.csv: one row per kept sample, 1-based labels, no header.
inline void save_linkage_samples(const std::filesystem::path& path, const std::vector<std::vector<int>>& samples) {
  std::ostringstream os;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i] + 1;
    os << '\n';
  }
  write_text(path, os.str());
}

inline std::vector<std::vector<int>> load_linkage_samples(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path, false);
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    std::vector<int> row;
    for (std::size_t c = 0; c < t.rows[k].size(); ++c) {
      long v;
      if (!csv::parse_long(t.rows[k][c], v) || v < 1)
        throw DataError(path.string() + ": labels must be positive integers", t.line_numbers[k], c + 1);
      row.push_back(static_cast<int>(v - 1));
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline void save_traces(const std::filesystem::path& path, const ChainOutput& out) {
  std::ostringstream os;
  for (std::size_t k = 0; k < out.trace_names.size(); ++k) os << (k ? "," : "") << out.trace_names[k];
  os << '\n';
  for (const auto& row : out.traces) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << format_double(row[k]);
    os << '\n';
  }
  write_text(path, os.str());
}

struct TraceTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError("trace column '" + name + "' not found");
    const auto c = static_cast<std::size_t>(it - names.begin());
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline TraceTable load_traces(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  TraceTable out;
  out.names = t.header;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    std::vector<double> row;
    for (std::size_t c = 0; c < t.rows[k].size(); ++c) {
      double v;
      if (t.rows[k][c] == "NaN") v = std::nan("");
      else if (!csv::parse_double(t.rows[k][c], v))
        throw DataError(path.string() + ": not a number", t.line_numbers[k], c + 1);
      row.push_back(v);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace microlink
