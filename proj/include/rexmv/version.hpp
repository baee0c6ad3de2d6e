#pragma once

namespace rexmv {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rexmv
