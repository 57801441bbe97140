#pragma once

namespace aff {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aff
