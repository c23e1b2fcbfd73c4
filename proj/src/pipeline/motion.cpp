#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "pibase/pipeline.hpp"

namespace pibase::pipeline {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool valid_source(std::string_view s) {
    if (s.empty() || s.size() > 64) return false;
    for (unsigned char c : s) {
        if (!(std::isalnum(c) || c == '_' || c == '-' || c == '.')) return false;
    }
    return s != "." && s != "..";
}

}  // namespace

std::vector<MotionEvent> parse_motion_file(std::string_view text) {
    std::vector<MotionEvent> out;
    std::map<std::string, TimePoint> last;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto space = line.find_first_of(" \t");
        MotionEvent e;
        try {
            e.timestamp = parse_iso(line.substr(0, space));
        } catch (const ArgumentError& err) {
            throw FormatError("motion file line " + std::to_string(line_no) + ": " + err.what());
        }
        if (space != std::string_view::npos) {
            const auto source = trim(line.substr(space));
            if (!valid_source(source)) {
                throw FormatError("motion file line " + std::to_string(line_no) + ": bad source id");
            }
            e.source_id = std::string(source);
        }
        if (const auto it = last.find(e.source_id); it != last.end() && e.timestamp < it->second) {
            throw FormatError("motion file line " + std::to_string(line_no) + ": timestamp goes backwards for " +
                              e.source_id);
        }
        last[e.source_id] = e.timestamp;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<MotionEvent> read_motion_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open motion file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_motion_file(buf.str());
}

std::string event_key(const MotionEvent& e) { return e.source_id + "@" + format_iso(e.timestamp); }

}  // namespace pibase::pipeline
