#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace resgd::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitMaxIters = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitCheckFailed = 4;

struct Options {
    std::string mode;  // solve | unrolled-infer | grad-check | cert-check | bench
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

/// Runs one command. Progress goes to `out` unless quiet, errors to `err`.
int run_command(const Options& opts, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to run_command.
int main_entry(int argc, char** argv);

}  // namespace resgd::cli
