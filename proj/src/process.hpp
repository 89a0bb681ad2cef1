#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace a2r2::detail {

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    bool spawn_failed = false;
};

// Runs argv[0] (PATH-resolved) in cwd with stdout and stderr appended to log_path.
// The child gets its own process group, which is killed on timeout.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          double timeout_s, const std::filesystem::path& log_path);

// Absolute path of an executable, searching PATH when name has no slash.
std::optional<std::filesystem::path> which(const std::string& name);

}  // namespace a2r2::detail
