// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace blindsight::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
/// Bad flags, unreadable or invalid inputs, refused overwrites.
inline constexpr int kExitInput = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience for tests: `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blindsight::cli
