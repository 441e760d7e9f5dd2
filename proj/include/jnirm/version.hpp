#pragma once

namespace jnirm {

inline constexpr const char* version() { return "0.1.0"; }

}  // namespace jnirm
