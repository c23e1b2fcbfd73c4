#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace pibase {

using TimePoint = std::chrono::system_clock::time_point;
using WallClock = std::function<TimePoint()>;

inline TimePoint system_now() { return std::chrono::system_clock::now(); }

/// "YYYY-MM-DDTHH:MM:SS.mmmZ" (UTC). Fixed width, so strings sort by time.
std::string format_iso(TimePoint t);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS[.fff]]" with a trailing "Z",
/// "+HH:MM"/"-HH:MM", or no zone (taken as UTC). Throws ArgumentError.
TimePoint parse_iso(std::string_view text);

/// "YYYY-MM-DD" and "HH:MM:SS" in UTC.
std::string format_date(TimePoint t);
std::string format_time(TimePoint t);

}  // namespace pibase
