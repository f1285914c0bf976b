#pragma once

namespace mnar {

inline constexpr const char* version() { return "0.1.0"; }

}  // namespace mnar
