#pragma once

// Price series from CSV, log-returns and windowing.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "heavytail/errors.hpp"

namespace heavytail {

enum class Frequency { Daily, Hourly };

inline std::string_view frequency_name(Frequency f) { return f == Frequency::Daily ? "daily" : "hourly"; }

inline Frequency parse_frequency(std::string_view s) {
  if (s == "daily") return Frequency::Daily;
  if (s == "hourly") return Frequency::Hourly;
  throw DomainError("unknown frequency '" + std::string(s) + "' (expected daily or hourly)");
}

/// Instant in UTC with millisecond resolution. `date_only` remembers that the
/// source had no time of day, so the canonical form round-trips.
struct Timestamp {
  std::int64_t millis = 0;
  bool date_only = false;

  friend bool operator==(const Timestamp& a, const Timestamp& b) { return a.millis == b.millis; }
  friend auto operator<=>(const Timestamp& a, const Timestamp& b) { return a.millis <=> b.millis; }
};

namespace detail {

// days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm)
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

inline bool read_digits(std::string_view s, std::size_t& pos, int count, int& out) {
  if (pos + static_cast<std::size_t>(count) > s.size()) return false;
  int v = 0;
  for (int i = 0; i < count; ++i) {
    const char c = s[pos + static_cast<std::size_t>(i)];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += static_cast<std::size_t>(count);
  out = v;
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Parses YYYY-MM-DD or YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|+HH:MM|-HH:MM].
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  const auto s = detail::trim(text);
  std::size_t pos = 0;
  int y = 0;
  int mo = 0;
  int d = 0;
  if (!detail::read_digits(s, pos, 4, y) || pos >= s.size() || s[pos++] != '-' ||
      !detail::read_digits(s, pos, 2, mo) || pos >= s.size() || s[pos++] != '-' ||
      !detail::read_digits(s, pos, 2, d)) {
    return std::nullopt;
  }
  static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (mo < 1 || mo > 12 || d < 1 || d > kDays[mo - 1]) return std::nullopt;
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  if (mo == 2 && d == 29 && !leap) return std::nullopt;
  Timestamp ts;
  const std::int64_t day_ms = detail::days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400000;
  if (pos == s.size()) {
    ts.millis = day_ms;
    ts.date_only = true;
    return ts;
  }
  if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
  ++pos;
  int hh = 0;
  int mm = 0;
  int ss = 0;
  int ms = 0;
  if (!detail::read_digits(s, pos, 2, hh) || pos >= s.size() || s[pos++] != ':' || !detail::read_digits(s, pos, 2, mm)) {
    return std::nullopt;
  }
  if (pos < s.size() && s[pos] == ':') {
    ++pos;
    if (!detail::read_digits(s, pos, 2, ss)) return std::nullopt;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      int digits = 0;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
        if (digits < 3) ms = ms * 10 + (s[pos] - '0');
        ++digits;
        ++pos;
      }
      if (digits == 0) return std::nullopt;
      for (int k = digits; k < 3; ++k) ms *= 10;
    }
  }
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  std::int64_t offset_min = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '-' ? -1 : 1;
      ++pos;
      int oh = 0;
      int om = 0;
      if (!detail::read_digits(s, pos, 2, oh)) return std::nullopt;
      if (pos < s.size() && s[pos] == ':') ++pos;
      if (!detail::read_digits(s, pos, 2, om)) return std::nullopt;
      offset_min = sign * (oh * 60 + om);
    } else {
      return std::nullopt;
    }
  }
  if (pos != s.size()) return std::nullopt;
  ts.millis = day_ms + ((hh * 60 + mm - offset_min) * 60 + ss) * 1000 + ms;
  return ts;
}

/// Canonical ISO-8601 form: YYYY-MM-DD for dates, else YYYY-MM-DDTHH:MM:SS[.mmm]Z.
inline std::string format_timestamp(const Timestamp& ts) {
  std::int64_t days = ts.millis / 86400000;
  std::int64_t rem = ts.millis % 86400000;
  if (rem < 0) {
    rem += 86400000;
    --days;
  }
  std::int64_t y = 0;
  unsigned m = 0;
  unsigned d = 0;
  detail::civil_from_days(days, y, m, d);
  char buf[64];
  if (ts.date_only && rem == 0) {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
    return buf;
  }
  const auto secs = rem / 1000;
  const auto ms = rem % 1000;
  if (ms == 0) {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                  static_cast<long long>(secs % 60));
  } else {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                  static_cast<long long>(secs % 60), static_cast<long long>(ms));
  }
  return buf;
}

inline Timestamp require_timestamp(std::string_view text) {
  auto ts = parse_timestamp(text);
  if (!ts) throw DomainError("invalid ISO-8601 timestamp '" + std::string(text) + "'");
  return *ts;
}

struct Observation {
  Timestamp timestamp;
  double price = 0.0;
};

struct PriceSeries {
  std::string label;
  Frequency frequency = Frequency::Daily;
  std::vector<Observation> observations;

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }
};

struct ReturnSeries {
  std::string label;
  Frequency frequency = Frequency::Daily;
  std::vector<double> returns;
  std::optional<Timestamp> first;  // window of the underlying prices
  std::optional<Timestamp> last;

  std::size_t size() const { return returns.size(); }
};

struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string price_column = "price";
};

/// Parses "timestamp=<col>,price=<col>" or "<ts col>,<price col>".
inline CsvSchema parse_schema(std::string_view text) {
  CsvSchema schema;
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 2) throw DomainError("schema must name two columns: timestamp=<col>,price=<col>");
  bool positional = true;
  for (const auto& p : parts) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) continue;
    positional = false;
    const auto key = std::string(detail::trim(std::string_view(p).substr(0, eq)));
    const auto val = std::string(detail::trim(std::string_view(p).substr(eq + 1)));
    if (key == "timestamp") {
      schema.timestamp_column = val;
    } else if (key == "price") {
      schema.price_column = val;
    } else {
      throw DomainError("unknown schema key '" + key + "'");
    }
  }
  if (positional) {
    schema.timestamp_column = std::string(detail::trim(parts[0]));
    schema.price_column = std::string(detail::trim(parts[1]));
  }
  return schema;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line on which the record starts
};

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF, embedded newlines.
inline std::vector<CsvRecord> parse_csv(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<CsvRecord> records;
  CsvRecord rec;
  std::string field;
  std::size_t line = 1;
  rec.line = 1;
  bool in_quotes = false;
  bool quoted_field = false;
  bool any = false;
  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    quoted_field = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) records.push_back(std::move(rec));
    rec = CsvRecord{};
    rec.line = line;
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || quoted_field) {
        throw DataError("line " + std::to_string(line) + ": stray quote inside unquoted field");
      }
      in_quotes = true;
      quoted_field = true;
      any = true;
    } else if (c == ',') {
      end_field();
      any = true;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      if (quoted_field) throw DataError("line " + std::to_string(line) + ": text after closing quote");
      field.push_back(c);
      any = true;
    }
  }
  if (in_quotes) throw DataError("line " + std::to_string(rec.line) + ": unterminated quoted field");
  if (any || !field.empty()) end_record();
  return records;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::size_t column_index(const CsvRecord& header, const std::string& name) {
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    if (trim(header.fields[i]) == name) return i;
  }
  throw DataError("line " + std::to_string(header.line) + ": header has no column '" + name + "'");
}

}  // namespace detail

/// Parses price CSV text. Rows may come in any order; the result is sorted.
inline PriceSeries parse_price_csv(std::string_view text, const CsvSchema& schema = {}, std::string label = "series",
                                   Frequency frequency = Frequency::Daily) {
  const auto records = parse_csv(text);
  if (records.empty()) throw DataError("line 1: missing header row");
  const auto& header = records.front();
  const auto ti = detail::column_index(header, schema.timestamp_column);
  const auto pi = detail::column_index(header, schema.price_column);
  PriceSeries series{std::move(label), frequency, {}};
  std::vector<std::size_t> lines;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = "line " + std::to_string(rec.line) + ": ";
    if (rec.fields.size() != header.fields.size()) {
      throw DataError(where + "expected " + std::to_string(header.fields.size()) + " fields, found " +
                      std::to_string(rec.fields.size()));
    }
    const auto ts = parse_timestamp(rec.fields[ti]);
    if (!ts) throw DataError(where + "invalid timestamp '" + rec.fields[ti] + "'");
    const auto price = detail::parse_number(rec.fields[pi]);
    if (!price) throw DataError(where + "invalid price '" + rec.fields[pi] + "'");
    if (!(*price > 0.0)) throw DataError(where + "non-positive price " + rec.fields[pi]);
    series.observations.push_back({*ts, *price});
    lines.push_back(rec.line);
  }
  std::vector<std::size_t> order(series.observations.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return series.observations[a].timestamp < series.observations[b].timestamp;
  });
  std::vector<Observation> sorted;
  sorted.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && series.observations[order[k]].timestamp == series.observations[order[k - 1]].timestamp) {
      throw DataError("line " + std::to_string(lines[order[k]]) + ": duplicate timestamp " +
                      format_timestamp(series.observations[order[k]].timestamp) + " (first seen on line " +
                      std::to_string(lines[order[k - 1]]) + ")");
    }
    sorted.push_back(series.observations[order[k]]);
  }
  series.observations = std::move(sorted);
  return series;
}

/// Loads a price CSV. The label defaults to the file name without extension.
inline PriceSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                            Frequency frequency = Frequency::Daily, std::optional<std::string> label = std::nullopt) {
  const auto text = read_file(path);
  try {
    return parse_price_csv(text, schema, label.value_or(path.stem().string()), frequency);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Canonical CSV: header "timestamp,price", canonical timestamps, prices with 17 significant digits.
inline void write_csv(const PriceSeries& series, std::ostream& out) {
  out << "timestamp,price\n";
  char buf[40];
  for (const auto& o : series.observations) {
    std::snprintf(buf, sizeof buf, "%.17g", o.price);
    out << format_timestamp(o.timestamp) << ',' << buf << '\n';
  }
}

/// Observations with from <= t <= to.
inline PriceSeries window(const PriceSeries& series, const Timestamp& from, const Timestamp& to) {
  detail::require_domain(from < to, "window: need from < to");
  PriceSeries out{series.label, series.frequency, {}};
  for (const auto& o : series.observations) {
    if (o.timestamp >= from && o.timestamp <= to) out.observations.push_back(o);
  }
  return out;
}

struct LogReturnOptions {
  bool drop_zeros = true;
  bool intraday_only = false;  // drop returns spanning more than twice the modal spacing
};

inline ReturnSeries log_returns(const PriceSeries& prices, const LogReturnOptions& opt = {}) {
  if (prices.size() < 2) {
    throw DataError("series '" + prices.label + "' has " + std::to_string(prices.size()) +
                    " observations; at least 2 are needed for returns");
  }
  for (const auto& o : prices.observations) {
    if (!(o.price > 0.0) || !std::isfinite(o.price)) {
      throw DataError("series '" + prices.label + "': non-positive price at " + format_timestamp(o.timestamp));
    }
  }
  std::int64_t modal = 0;
  if (opt.intraday_only) {
    std::map<std::int64_t, int> counts;
    for (std::size_t i = 1; i < prices.size(); ++i) {
      ++counts[prices.observations[i].timestamp.millis - prices.observations[i - 1].timestamp.millis];
    }
    int best = 0;
    for (const auto& [gap, c] : counts) {
      if (c > best) {
        best = c;
        modal = gap;
      }
    }
  }
  ReturnSeries r{prices.label, prices.frequency, {}, prices.observations.front().timestamp,
                 prices.observations.back().timestamp};
  for (std::size_t i = 1; i < prices.size(); ++i) {
    const auto& a = prices.observations[i - 1];
    const auto& b = prices.observations[i];
    if (opt.intraday_only && b.timestamp.millis - a.timestamp.millis > 2 * modal) continue;
    const double x = std::log(b.price / a.price);
    if (opt.drop_zeros && x == 0.0) continue;
    r.returns.push_back(x);
  }
  return r;
}

/// Loads a single-column return file (header "return" by default).
inline ReturnSeries load_returns_csv(const std::filesystem::path& path, const std::string& column = "return",
                                     Frequency frequency = Frequency::Daily) {
  const auto text = read_file(path);
  const auto records = parse_csv(text);
  if (records.empty()) throw DataError(path.string() + ": line 1: missing header row");
  const auto ci = detail::column_index(records.front(), column);
  ReturnSeries r{path.stem().string(), frequency, {}, std::nullopt, std::nullopt};
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& rec = records[k];
    if (rec.fields.size() != records.front().fields.size()) {
      throw DataError(path.string() + ": line " + std::to_string(rec.line) + ": wrong number of fields");
    }
    const auto v = detail::parse_number(rec.fields[ci]);
    if (!v) throw DataError(path.string() + ": line " + std::to_string(rec.line) + ": invalid return '" + rec.fields[ci] + "'");
    r.returns.push_back(*v);
  }
  return r;
}

}  // namespace heavytail
