// SPDX-License-Identifier: Apache-2.0
#include "icheck/core/log.hpp"

#include <cstdio>
#include <mutex>

namespace icheck::log {

namespace {
std::mutex mu;
std::function<void(const std::string &)> g_sink;
std::string g_context;
} // namespace

void event(std::string_view name, const Fields &fields) {
    std::string line = "event=";
    line.append(name);
    {
        std::lock_guard lk(mu);
        if (!g_context.empty()) {
            line += ' ';
            line += g_context;
        }
    }
    for (const auto &[k, v] : fields) {
        line += ' ';
        line += k;
        line += '=';
        line += v;
    }
    std::lock_guard lk(mu);
    if (g_sink) {
        g_sink(line);
    } else {
        line += '\n';
        std::fwrite(line.data(), 1, line.size(), stderr);
        std::fflush(stderr);
    }
}

void set_sink(std::function<void(const std::string &)> sink) {
    std::lock_guard lk(mu);
    g_sink = std::move(sink);
}

void set_context(std::string context) {
    std::lock_guard lk(mu);
    g_context = std::move(context);
}

} // namespace icheck::log
