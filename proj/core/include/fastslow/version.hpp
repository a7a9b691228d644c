#pragma once

namespace fastslow {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fastslow
