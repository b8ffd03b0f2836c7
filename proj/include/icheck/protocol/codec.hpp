// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "icheck/protocol/messages.hpp"

namespace icheck::proto {

// Preferred chunk size for streamed region data; well under the frame cap.
inline constexpr std::size_t kChunkBytes = 4u << 20;

// Serializes a message into one or more frames. Data-carrying messages whose
// blob would overflow the frame cap are split into offset-advancing pieces;
// any other oversize message is an encoding error.
Blob encode(const Message &msg);

// Incremental frame decoder; single owner per connection.
class Decoder {
  public:
    void feed(std::span<const std::byte> bytes);
    void feed(const Blob &bytes) { feed(std::span<const std::byte>(bytes)); }

    // Returns the next complete message, or nullopt when more bytes are
    // needed. Throws ProtocolError on malformed input.
    std::optional<Message> poll();

    std::size_t buffered() const { return buf_.size() - pos_; }

  private:
    Blob buf_;
    std::size_t pos_ = 0;
};

} // namespace icheck::proto
