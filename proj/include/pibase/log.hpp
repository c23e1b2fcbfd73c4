#pragma once

#include <spdlog/logger.h>

namespace pibase {

/// Library-wide logger; always writes to stderr so stdout stays JSON lines.
spdlog::logger& log();

}  // namespace pibase
