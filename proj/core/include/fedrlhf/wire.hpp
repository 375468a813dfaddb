#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "fedrlhf/errors.hpp"
#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/parameter_vector.hpp"

namespace fedrlhf {

/**
 * Length-prefixed binary framing for the federation transport. Every frame is
 *
 *   magic "FRLH" (4 bytes) | version u8 (= 1) | msg_type u8 | payload_len u32 LE
 *
 * followed by payload_len payload bytes. All integers little-endian; doubles
 * are IEEE-754 bit patterns as u64 LE. Message payloads:
 *
 *   0x01 RoundBroadcast  round u32 | dim u32 | params dim x f64
 *   0x02 ClientUpdate    client_id u32 | round u32 | n_samples u64 | dim u32 | delta dim x f64
 *   0x03 Hello           client_id u32
 *   0x04 Shutdown        (empty)
 */
enum class MsgType : std::uint8_t {
    round_broadcast = 0x01,
    client_update = 0x02,
    hello = 0x03,
    shutdown = 0x04,
};

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 10;
inline constexpr std::uint32_t kMaxPayloadLen = 64u * 1024u * 1024u;

enum class WireErrorCode {
    bad_magic,
    bad_version,
    unknown_type,
    truncated,
    length_overflow,
    malformed,
};

class WireError : public ProtocolError {
public:
    WireError(WireErrorCode code, const std::string& what) : ProtocolError(what), code(code) {}
    WireErrorCode code;
};

struct FrameHeader {
    MsgType msg_type;
    std::uint32_t payload_len;
};

struct RoundBroadcast {
    std::uint32_t round;
    ParameterVector params;

    bool operator==(const RoundBroadcast& o) const {
        return round == o.round && params == o.params;
    }
};

struct Hello {
    std::uint32_t client_id;
    bool operator==(const Hello& o) const { return client_id == o.client_id; }
};

struct Shutdown {
    bool operator==(const Shutdown&) const { return true; }
};

using WireMessage = std::variant<RoundBroadcast, ClientUpdate, Hello, Shutdown>;

bool wire_messages_equal(const WireMessage& a, const WireMessage& b);

std::vector<std::uint8_t> encode_frame(const WireMessage& msg);

/// Validates the 10-byte header; the caller then reads payload_len more bytes.
FrameHeader decode_header(std::span<const std::uint8_t> header);

/// Decodes the payload of a frame whose header was already validated.
WireMessage decode_payload(MsgType type, std::span<const std::uint8_t> payload);

/// Convenience: decodes one complete frame (header + payload, no trailing bytes).
WireMessage decode_frame(std::span<const std::uint8_t> frame);

}  // namespace fedrlhf
