#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pibase/log.hpp"

namespace pibase {

spdlog::logger& log() {
    static const auto logger = [] {
        auto l = spdlog::get("pibase");
        return l ? l : spdlog::stderr_color_mt("pibase");
    }();
    return *logger;
}

}  // namespace pibase
