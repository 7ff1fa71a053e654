#pragma once

namespace covscan {
inline constexpr const char* kVersion = "0.1.0";
}
