#pragma once

namespace ctxsent {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ctxsent
