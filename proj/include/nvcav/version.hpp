#pragma once

namespace nvcav {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace nvcav
