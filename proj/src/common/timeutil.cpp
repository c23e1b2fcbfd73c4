#include <cctype>
#include <cstdio>
#include <ctime>

#include "pibase/errors.hpp"
#include "pibase/timeutil.hpp"

namespace pibase {

namespace {

std::tm utc_parts(TimePoint t, int& millis) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    auto secs = static_cast<std::time_t>(ms / 1000);
    millis = static_cast<int>(ms % 1000);
    if (millis < 0) {
        millis += 1000;
        --secs;
    }
    std::tm tm{};
    gmtime_r(&secs, &tm);
    return tm;
}

int digits(std::string_view s, std::size_t& pos, int n) {
    if (pos + n > s.size()) throw ArgumentError("truncated timestamp");
    int v = 0;
    for (int i = 0; i < n; ++i, ++pos) {
        if (!std::isdigit(static_cast<unsigned char>(s[pos]))) throw ArgumentError("bad digit in timestamp");
        v = v * 10 + (s[pos] - '0');
    }
    return v;
}

void expect(std::string_view s, std::size_t& pos, char c) {
    if (pos >= s.size() || s[pos] != c) throw ArgumentError(std::string("expected '") + c + "' in timestamp");
    ++pos;
}

// Days from 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(int y, int m, int d) {
    y -= m <= 2 ? 1 : 0;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097L + static_cast<long>(doe) - 719468;
}

int days_in_month(int y, int m) {
    static const int table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return m == 2 && leap ? 29 : table[m - 1];
}

}  // namespace

std::string format_iso(TimePoint t) {
    int ms = 0;
    const auto tm = utc_parts(t, ms);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
    return buf;
}

std::string format_date(TimePoint t) {
    int ms = 0;
    const auto tm = utc_parts(t, ms);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
    return buf;
}

std::string format_time(TimePoint t) {
    int ms = 0;
    const auto tm = utc_parts(t, ms);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

TimePoint parse_iso(std::string_view s) {
    std::size_t pos = 0;
    const int year = digits(s, pos, 4);
    expect(s, pos, '-');
    const int month = digits(s, pos, 2);
    expect(s, pos, '-');
    const int day = digits(s, pos, 2);
    if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) {
        throw ArgumentError("date out of range: " + std::string(s));
    }
    int hour = 0, minute = 0, second = 0;
    long millis = 0;
    int offset_min = 0;
    if (pos < s.size()) {
        if (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' ') throw ArgumentError("bad timestamp: " + std::string(s));
        ++pos;
        hour = digits(s, pos, 2);
        expect(s, pos, ':');
        minute = digits(s, pos, 2);
        if (pos < s.size() && s[pos] == ':') {
            ++pos;
            second = digits(s, pos, 2);
            if (pos < s.size() && s[pos] == '.') {
                ++pos;
                int scale = 100;
                const std::size_t start = pos;
                while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
                    millis += (s[pos] - '0') * scale;
                    scale /= 10;
                    ++pos;
                }
                if (pos == start) throw ArgumentError("empty fraction in timestamp");
            }
        }
        if (hour > 23 || minute > 59 || second > 60) throw ArgumentError("time out of range: " + std::string(s));
        if (pos < s.size()) {
            if (s[pos] == 'Z' || s[pos] == 'z') {
                ++pos;
            } else if (s[pos] == '+' || s[pos] == '-') {
                const int sign = s[pos] == '-' ? -1 : 1;
                ++pos;
                const int oh = digits(s, pos, 2);
                expect(s, pos, ':');
                const int om = digits(s, pos, 2);
                offset_min = sign * (oh * 60 + om);
            }
        }
    }
    if (pos != s.size()) throw ArgumentError("trailing characters in timestamp: " + std::string(s));
    const long long secs = days_from_civil(year, month, day) * 86400LL + hour * 3600LL + minute * 60LL + second -
                           offset_min * 60LL;
    return TimePoint(std::chrono::milliseconds(secs * 1000 + millis));
}

}  // namespace pibase
