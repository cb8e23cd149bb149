#pragma once

#define GRIDINFER_VERSION "0.1.0"

namespace gridinfer {
inline const char* version() { return GRIDINFER_VERSION; }
}  // namespace gridinfer
