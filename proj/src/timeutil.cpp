#include "mrt/timeutil.hpp"

#include <cstdio>
#include <ctime>

#include "mrt/errors.hpp"

namespace mrt {

Instant parse_iso8601(std::string_view text) {
    std::string s(text);
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
    std::tm tm{};
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    char sep = 'T';
    int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &year, &month, &day, &sep, &hour, &minute, &second);
    const bool date_only = n == 3 && s.size() == 10;
    const bool ok = date_only || ((n == 6 || n == 7) && (sep == 'T' || sep == ' '));
    if (!ok || month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        throw SchemaError("malformed ISO-8601 timestamp '" + s + "'");
    }
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = minute;
    tm.tm_sec = second;
    return static_cast<Instant>(timegm(&tm));
}

std::string format_iso8601(Instant t) {
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace mrt
