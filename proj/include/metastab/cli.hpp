#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace metastab::cli {

inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;
inline constexpr int kInequalityFailed = 2;

// Runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace metastab::cli
