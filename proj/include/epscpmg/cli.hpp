#pragma once

#include <string>
#include <vector>

namespace epscpmg::cli {

// Exit codes: 0 success, 2 config/schema error, 3 numerical failure,
// 4 fit non-convergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitFit = 4;

int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace epscpmg::cli
