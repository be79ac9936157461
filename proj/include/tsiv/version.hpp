#pragma once

namespace tsiv {

inline constexpr const char* kVersion = "0.1.0";

/// RNG family recorded in output metadata: per-stream seeds are derived with
/// splitmix64, streams are xoshiro256++, normals come from Box-Muller.
inline constexpr const char* kRngFamily = "xoshiro256++/splitmix64/box-muller";

}  // namespace tsiv
