#pragma once

#include <cstdint>

namespace raune {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Bump when the tensor-container layout changes; readers require an exact match.
inline constexpr uint32_t kContainerFormatVersion = 1;

}  // namespace raune
