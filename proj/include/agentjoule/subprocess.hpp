#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace agentjoule {

struct ProcessResult {
  int exit_code = 0;  // 128 + signal when killed by a signal
  std::string output;  // stdout and stderr interleaved
  bool timed_out = false;
};

// Runs argv[0] with the given arguments; the whole process group is killed on
// timeout. Throws Error when the process cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout, const std::string& stdin_data = {});

// /bin/sh -c command.
ProcessResult run_shell(const std::string& command, const std::filesystem::path& cwd,
                        std::chrono::milliseconds timeout);

}  // namespace agentjoule
