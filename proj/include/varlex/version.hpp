#pragma once

#define VARLEX_VERSION_MAJOR 0
#define VARLEX_VERSION_MINOR 1
#define VARLEX_VERSION_PATCH 0

namespace varlex {

inline constexpr const char *version_string = "0.1.0";

} // namespace varlex
