#pragma once

namespace readmit {
inline constexpr const char* kVersion = "0.1.0";
}
