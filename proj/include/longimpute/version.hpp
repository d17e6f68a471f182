#pragma once

namespace longimpute {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace longimpute
