#pragma once

#include <cstdint>
#include <string>

#include "panelvar/common.hpp"

namespace panelvar {

// Calendar dates are held as days since 1970-01-01; weeks as ISO-week
// indices (Monday-based), with week 0 containing 1969-12-29..1970-01-04.

struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;
};

// Days since civil epoch 1970-01-01 (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
              static_cast<int>(d)};
}

// 0 = Monday .. 6 = Sunday.
inline int weekday(std::int64_t serial_day) {
  std::int64_t w = (serial_day + 3) % 7;
  return static_cast<int>(w < 0 ? w + 7 : w);
}

// ISO week index: floor division so the Monday-aligned week containing the
// day maps to a unique integer. Week 0 starts 1969-12-29.
inline std::int64_t week_index(std::int64_t serial_day) {
  std::int64_t n = serial_day + 3;
  return n >= 0 ? n / 7 : (n - 6) / 7;
}

inline std::int64_t week_monday_serial(std::int64_t week) {
  return week * 7 - 3;
}

inline std::int64_t parse_date_serial(const std::string& s) {
  int y, m, d;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3 ||
      s[4] != '-' || s[7] != '-')
    throw DataError("malformed date '" + s + "' (expected YYYY-MM-DD)");
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError("date out of range: '" + s + "'");
  return days_from_civil(y, m, d);
}

// "YYYY-Www" -> ISO week index. ISO week 1 of a year is the week
// containing January 4.
inline std::int64_t parse_iso_week(const std::string& s) {
  int y, w;
  if (s.size() != 8 || std::sscanf(s.c_str(), "%4d-W%2d", &y, &w) != 2)
    throw DataError("malformed ISO week '" + s + "' (expected YYYY-Www)");
  if (w < 1 || w > 53) throw DataError("ISO week out of range: '" + s + "'");
  std::int64_t jan4 = days_from_civil(y, 1, 4);
  std::int64_t monday1 = jan4 - weekday(jan4);
  return week_index(monday1) + (w - 1);
}

inline std::string format_date(std::int64_t serial_day) {
  Date d = civil_from_days(serial_day);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

inline std::string format_iso_week(std::int64_t week) {
  std::int64_t monday = week_monday_serial(week);
  // Year of the ISO week = calendar year of its Thursday.
  Date thu = civil_from_days(monday + 3);
  std::int64_t jan4 = days_from_civil(thu.year, 1, 4);
  std::int64_t monday1 = jan4 - weekday(jan4);
  int w = static_cast<int>(week - week_index(monday1)) + 1;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-W%02d", thu.year, w);
  return buf;
}

}  // namespace panelvar
