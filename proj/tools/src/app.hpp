#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"

namespace paintbrush::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPhysics = 3;

struct Invocation {
    std::string command;
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> plan;
    std::optional<std::filesystem::path> out;
    int jobs = 0;  ///< 0: logical cores
    std::vector<std::string> formats;
};

/// Runs one subcommand; progress and errors go to `log`. Returns the exit status.
int run(const Invocation& inv, std::ostream& log);

/// Command-line entry point.
int main(int argc, char** argv);

}  // namespace paintbrush::cli
