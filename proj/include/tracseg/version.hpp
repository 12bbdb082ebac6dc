#pragma once

namespace tracseg {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace tracseg
