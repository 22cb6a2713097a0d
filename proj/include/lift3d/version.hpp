#pragma once

namespace lift3d {

inline constexpr const char *kVersion = "0.1.0";

}  // namespace lift3d
