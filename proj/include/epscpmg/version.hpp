#pragma once

namespace epscpmg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace epscpmg
