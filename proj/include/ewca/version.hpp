#pragma once

namespace ewca {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ewca
