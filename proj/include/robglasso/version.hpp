#pragma once

namespace robglasso {
inline constexpr const char* kVersion = "0.1.0";
}
