// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace icheck {

// Malformed or unexpected wire data; `field` names the offending part.
class ProtocolError : public std::runtime_error {
  public:
    ProtocolError(std::string field, const std::string &detail)
        : std::runtime_error(field + ": " + detail), field_(std::move(field)) {}

    const std::string &field() const { return field_; }

  private:
    std::string field_;
};

// Internal consistency violation (buffer length mismatch, bad accounting).
class CorruptStateError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NetError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace icheck
