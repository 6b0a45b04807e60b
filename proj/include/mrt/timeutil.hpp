#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mrt {

// Seconds since the Unix epoch, UTC.
using Instant = std::int64_t;

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM", "YYYY-MM-DDTHH:MM:SS" with an
// optional trailing 'Z' (a space may replace 'T').
Instant parse_iso8601(std::string_view text);
std::string format_iso8601(Instant t);

}  // namespace mrt
