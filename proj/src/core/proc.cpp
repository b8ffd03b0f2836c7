// SPDX-License-Identifier: Apache-2.0
#include "icheck/core/proc.hpp"

#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>

#include "icheck/core/errors.hpp"

namespace icheck {

ChildProc ChildProc::spawn(
    const std::vector<std::string> &argv, const std::string &log_path,
    const std::vector<std::pair<std::string, std::string>> &extra_env) {
    std::vector<char *> cargv;
    for (const auto &a : argv)
        cargv.push_back(const_cast<char *>(a.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0)
        throw NetError("fork failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
        if (!log_path.empty()) {
            const int fd = ::open(log_path.c_str(),
                                  O_WRONLY | O_CREAT | O_APPEND, 0644);
            if (fd >= 0) {
                ::dup2(fd, 1);
                ::dup2(fd, 2);
                ::close(fd);
            }
        }
        for (const auto &[k, v] : extra_env)
            ::setenv(k.c_str(), v.c_str(), 1);
        ::execv(cargv[0], cargv.data());
        ::fprintf(stderr, "exec %s failed: %s\n", cargv[0], std::strerror(errno));
        ::_exit(127);
    }
    ChildProc p;
    p.pid_ = pid;
    return p;
}

bool ChildProc::alive() {
    if (pid_ <= 0 || reaped_)
        return false;
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == 0)
        return true;
    reaped_ = true;
    if (r == pid_)
        exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status)
                                       : 128 + WTERMSIG(status);
    return false;
}

int ChildProc::wait() {
    if (pid_ <= 0)
        return -1;
    if (reaped_)
        return exit_code_.value_or(-1);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    reaped_ = true;
    exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return *exit_code_;
}

void ChildProc::kill(int sig) {
    if (pid_ > 0 && !reaped_)
        ::kill(pid_, sig);
}

std::string self_exe_dir() {
    std::error_code ec;
    auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (ec)
        return ".";
    return p.parent_path().string();
}

} // namespace icheck
