// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace icheck::log {

using Fields = std::vector<std::pair<std::string, std::string>>;

// One `event=<name> k=v ...` line per state transition.
void event(std::string_view name, const Fields &fields = {});

// Redirect output (default: stderr). Pass nullptr to restore the default.
void set_sink(std::function<void(const std::string &)> sink);

// Prefix added to every line, e.g. "comp=agent id=3".
void set_context(std::string context);

template <typename T> std::string str(const T &v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace icheck::log
