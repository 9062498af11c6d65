#pragma once

namespace expinf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace expinf
