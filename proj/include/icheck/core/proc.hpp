// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace icheck {

// Minimal child-process handle. Stdout/stderr are appended to log_path when
// given. Not copyable; the destructor does not reap (call kill/wait).
class ChildProc {
  public:
    ChildProc() = default;

    static ChildProc spawn(const std::vector<std::string> &argv,
                           const std::string &log_path = "",
                           const std::vector<std::pair<std::string, std::string>>
                               &extra_env = {});

    bool valid() const { return pid_ > 0; }
    int pid() const { return pid_; }

    // Non-blocking liveness poll; updates exit status when it exited.
    bool alive();
    // Blocking wait; returns exit code (or 128+signal).
    int wait();
    std::optional<int> exit_code() const { return exit_code_; }
    void kill(int sig);

  private:
    int pid_ = -1;
    bool reaped_ = false;
    std::optional<int> exit_code_;
};

// Directory of the running executable, for locating sibling binaries.
std::string self_exe_dir();

} // namespace icheck
