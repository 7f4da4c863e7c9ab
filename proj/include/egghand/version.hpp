#pragma once

namespace egghand {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace egghand
