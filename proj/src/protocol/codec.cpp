// SPDX-License-Identifier: Apache-2.0
#include "icheck/protocol/codec.hpp"

#include <algorithm>
#include <cstring>

namespace icheck::proto {

namespace {

struct NullVisitor {
    template <class T> void operator()(T &) {}
};

template <class T>
concept WireStruct = requires(T &t) { T::visit(t, NullVisitor{}); };

struct FieldWriter {
    ByteWriter &w;
    void operator()(std::uint8_t v) { w.u8(v); }
    void operator()(std::uint16_t v) { w.u16(v); }
    void operator()(std::uint32_t v) { w.u32(v); }
    void operator()(std::uint64_t v) { w.u64(v); }
    void operator()(double v) { w.f64(v); }
    void operator()(const std::string &s) { w.str(s); }
    void operator()(const Blob &b) { w.blob(b); }
    template <WireStruct T> void operator()(const T &t) { T::visit(t, *this); }
    template <class T> void operator()(const std::vector<T> &xs) {
        if (xs.size() > 0xFFFF)
            throw ProtocolError("list", "field exceeds 65535 entries");
        w.u16(static_cast<std::uint16_t>(xs.size()));
        for (const auto &x : xs)
            (*this)(x);
    }
};

struct FieldReader {
    ByteReader &r;
    void operator()(std::uint8_t &v) { v = r.u8(); }
    void operator()(std::uint16_t &v) { v = r.u16(); }
    void operator()(std::uint32_t &v) { v = r.u32(); }
    void operator()(std::uint64_t &v) { v = r.u64(); }
    void operator()(double &v) { v = r.f64(); }
    void operator()(std::string &s) { s = r.str(); }
    void operator()(Blob &b) { b = r.blob(); }
    template <WireStruct T> void operator()(T &t) { T::visit(t, *this); }
    template <class T> void operator()(std::vector<T> &xs) {
        xs.resize(r.u16());
        for (auto &x : xs)
            (*this)(x);
    }
};

template <class T> Blob encode_body(const T &msg) {
    ByteWriter w;
    FieldWriter fw{w};
    T::visit(msg, fw);
    return w.take();
}

void append_frame(Blob &out, std::uint8_t msg_type, const Blob &body) {
    const auto len = static_cast<std::uint32_t>(body.size());
    const std::byte header[kFrameHeaderLen] = {
        std::byte{'I'}, std::byte{'C'}, std::byte{'H'}, std::byte{'K'},
        std::byte{kWireVersion}, std::byte{msg_type},
        static_cast<std::byte>(len >> 24), static_cast<std::byte>(len >> 16),
        static_cast<std::byte>(len >> 8), static_cast<std::byte>(len)};
    out.reserve(out.size() + kFrameHeaderLen + body.size());
    out.insert(out.end(), header, header + kFrameHeaderLen);
    out.insert(out.end(), body.begin(), body.end());
}

template <class T> constexpr bool is_chunkable() {
    return std::is_same_v<T, CommitData> || std::is_same_v<T, RestoreData> ||
           std::is_same_v<T, RedistData> || std::is_same_v<T, PeerData>;
}

template <class T> Blob encode_msg(const T &msg) {
    Blob body = encode_body(msg);
    Blob out;
    if (body.size() <= kMaxFramePayload) {
        append_frame(out, T::kType, body);
        return out;
    }
    if constexpr (is_chunkable<T>()) {
        const std::size_t overhead = body.size() - msg.blob.size();
        if (overhead >= kMaxFramePayload)
            throw ProtocolError("payload_len", "message header exceeds frame cap");
        const std::size_t max_piece = kMaxFramePayload - overhead;
        std::size_t at = 0;
        while (at < msg.blob.size()) {
            const std::size_t n = std::min(max_piece, msg.blob.size() - at);
            T piece = msg;
            piece.offset = msg.offset + at;
            piece.blob.assign(msg.blob.begin() + at, msg.blob.begin() + at + n);
            if constexpr (!std::is_same_v<T, CommitData>)
                piece.last = (at + n == msg.blob.size()) ? msg.last : 0;
            append_frame(out, T::kType, encode_body(piece));
            at += n;
        }
        return out;
    } else {
        throw ProtocolError("payload_len", "message exceeds 64 MiB frame cap");
    }
}

template <std::size_t I = 0>
Message decode_body(std::uint8_t msg_type, ByteReader &r) {
    if constexpr (I < std::variant_size_v<Message>) {
        using T = std::variant_alternative_t<I, Message>;
        if (T::kType == msg_type) {
            T t{};
            FieldReader fr{r};
            T::visit(t, fr);
            return t;
        }
        return decode_body<I + 1>(msg_type, r);
    } else {
        throw ProtocolError("msg_type",
                            "unknown msg_type " + std::to_string(msg_type));
    }
}

template <std::size_t I = 0> const char *name_of(const Message &m) {
    if constexpr (I < std::variant_size_v<Message>) {
        using T = std::variant_alternative_t<I, Message>;
        if (std::holds_alternative<T>(m)) {
            // Readable names for logs; indexes match the variant order.
            static constexpr const char *kNames[] = {
                "REGISTER", "REGISTER_ACK", "PROBE_AGENTS", "PROBE_AGENTS_ACK",
                "RESTART_QUERY", "RESTART_INFO", "DEREGISTER", "CONNECT",
                "MEM_REGISTER", "COMMIT_BEGIN", "COMMIT_DATA", "COMMIT_END",
                "COMMIT_ACK", "RESTORE_REQ", "RESTORE_DATA", "REDIST_REQ",
                "REDIST_DATA", "SNAPSHOT_PUSH", "LAUNCH_AGENTS", "AGENT_READY",
                "STATS_REPORT", "FLUSH_ORDER", "MIGRATE_ORDER", "SHUTDOWN",
                "NODE_REQUEST", "NODE_GRANT", "NODE_RECLAIM", "MIGRATE_HINT",
                "APP_ADAPT_NOTICE", "MIGRATE_STREAM", "PEER_FETCH", "PEER_DATA",
                "ACK", "COMMIT_REPORT", "FLUSH_ACK", "MIGRATE_ACK", "AGENT_STATS",
                "ADAPT_PREP", "GC_ORDER", "REGION_DECL", "ERROR"};
            return kNames[I];
        }
        return name_of<I + 1>(m);
    }
    return "?";
}

} // namespace

Blob encode(const Message &msg) {
    return std::visit([](const auto &m) { return encode_msg(m); }, msg);
}

const char *message_name(const Message &m) { return name_of(m); }

void Decoder::feed(std::span<const std::byte> bytes) {
    // Compact once the consumed prefix dominates.
    if (pos_ > 0 && pos_ > buf_.size() / 2) {
        buf_.erase(buf_.begin(), buf_.begin() + pos_);
        pos_ = 0;
    }
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> Decoder::poll() {
    const std::size_t avail = buf_.size() - pos_;
    if (avail < kFrameHeaderLen)
        return std::nullopt;
    const std::byte *p = buf_.data() + pos_;
    if (std::memcmp(p, kMagic, 4) != 0)
        throw ProtocolError("magic", "bad magic");
    const auto version = static_cast<std::uint8_t>(p[4]);
    if (version != kWireVersion)
        throw ProtocolError("version",
                            "unknown version " + std::to_string(version));
    const auto msg_type = static_cast<std::uint8_t>(p[5]);
    std::uint32_t payload_len = 0;
    for (int i = 0; i < 4; ++i)
        payload_len = payload_len << 8 | static_cast<std::uint8_t>(p[6 + i]);
    if (payload_len > kMaxFramePayload)
        throw ProtocolError("payload_len", "frame exceeds 64 MiB cap");
    if (avail < kFrameHeaderLen + payload_len)
        return std::nullopt; // need more bytes
    ByteReader r(std::span<const std::byte>(p + kFrameHeaderLen, payload_len));
    Message msg = decode_body(msg_type, r);
    if (!r.done())
        throw ProtocolError("payload", "payload length mismatch");
    pos_ += kFrameHeaderLen + payload_len;
    return msg;
}

const char *to_string(Status s) {
    switch (s) {
    case Status::Ok: return "ok";
    case Status::Integrity: return "integrity";
    case Status::Unregistered: return "unregistered";
    case Status::Capacity: return "capacity";
    case Status::Missing: return "missing";
    case Status::Storage: return "storage";
    case Status::NoSource: return "no source";
    case Status::Layout: return "layout";
    case Status::UnknownApp: return "unknown app";
    case Status::NotOwned: return "not owned";
    case Status::Rejected: return "rejected";
    case Status::Internal: return "internal";
    case Status::Timeout: return "timeout";
    }
    return "?";
}

} // namespace icheck::proto
