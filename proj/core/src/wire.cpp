#include "fedrlhf/wire.hpp"

#include <cstring>

namespace fedrlhf {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'R', 'L', 'H'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(out, bits);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }

    void expect_done() {
        if (pos_ != data_.size()) {
            throw WireError(WireErrorCode::malformed, "wire: trailing bytes in payload");
        }
    }

private:
    void need(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw WireError(WireErrorCode::truncated, "wire: truncated payload");
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::size_t payload_size(const WireMessage& msg) {
    struct Visitor {
        std::size_t operator()(const RoundBroadcast& m) const { return 8 + 8 * m.params.dim(); }
        std::size_t operator()(const ClientUpdate& m) const { return 20 + 8 * m.delta.dim(); }
        std::size_t operator()(const Hello&) const { return 4; }
        std::size_t operator()(const Shutdown&) const { return 0; }
    };
    return std::visit(Visitor{}, msg);
}

MsgType type_of(const WireMessage& msg) {
    struct Visitor {
        MsgType operator()(const RoundBroadcast&) const { return MsgType::round_broadcast; }
        MsgType operator()(const ClientUpdate&) const { return MsgType::client_update; }
        MsgType operator()(const Hello&) const { return MsgType::hello; }
        MsgType operator()(const Shutdown&) const { return MsgType::shutdown; }
    };
    return std::visit(Visitor{}, msg);
}

}  // namespace

bool wire_messages_equal(const WireMessage& a, const WireMessage& b) {
    if (a.index() != b.index()) return false;
    if (const auto* ra = std::get_if<RoundBroadcast>(&a)) {
        return *ra == std::get<RoundBroadcast>(b);
    }
    if (const auto* ua = std::get_if<ClientUpdate>(&a)) {
        const auto& ub = std::get<ClientUpdate>(b);
        return ua->client_id == ub.client_id && ua->round == ub.round &&
               ua->n_samples == ub.n_samples && ua->delta == ub.delta;
    }
    if (const auto* ha = std::get_if<Hello>(&a)) return *ha == std::get<Hello>(b);
    return true;  // Shutdown
}

std::vector<std::uint8_t> encode_frame(const WireMessage& msg) {
    const std::size_t len = payload_size(msg);
    if (len > kMaxPayloadLen) {
        throw WireError(WireErrorCode::length_overflow, "wire: payload exceeds maximum length");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderSize + len);
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kWireVersion);
    out.push_back(static_cast<std::uint8_t>(type_of(msg)));
    put_u32(out, static_cast<std::uint32_t>(len));

    if (const auto* m = std::get_if<RoundBroadcast>(&msg)) {
        put_u32(out, m->round);
        put_u32(out, static_cast<std::uint32_t>(m->params.dim()));
        for (std::size_t i = 0; i < m->params.dim(); ++i) put_f64(out, m->params[i]);
    } else if (const auto* u = std::get_if<ClientUpdate>(&msg)) {
        put_u32(out, static_cast<std::uint32_t>(u->client_id));
        put_u32(out, static_cast<std::uint32_t>(u->round));
        put_u64(out, static_cast<std::uint64_t>(u->n_samples));
        put_u32(out, static_cast<std::uint32_t>(u->delta.dim()));
        for (std::size_t i = 0; i < u->delta.dim(); ++i) put_f64(out, u->delta[i]);
    } else if (const auto* h = std::get_if<Hello>(&msg)) {
        put_u32(out, h->client_id);
    }
    return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> header) {
    if (header.size() < kFrameHeaderSize) {
        throw WireError(WireErrorCode::truncated, "wire: short frame header");
    }
    if (std::memcmp(header.data(), kMagic, 4) != 0) {
        throw WireError(WireErrorCode::bad_magic, "wire: bad magic");
    }
    if (header[4] != kWireVersion) {
        throw WireError(WireErrorCode::bad_version,
                        "wire: unsupported version " + std::to_string(header[4]));
    }
    const std::uint8_t raw_type = header[5];
    if (raw_type < 0x01 || raw_type > 0x04) {
        throw WireError(WireErrorCode::unknown_type,
                        "wire: unknown message type " + std::to_string(raw_type));
    }
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(header[6 + i]) << (8 * i);
    if (len > kMaxPayloadLen) {
        throw WireError(WireErrorCode::length_overflow, "wire: payload length overflow");
    }
    return FrameHeader{static_cast<MsgType>(raw_type), len};
}

WireMessage decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
    Reader r(payload);
    switch (type) {
        case MsgType::round_broadcast: {
            RoundBroadcast m;
            m.round = r.u32();
            const std::uint32_t dim = r.u32();
            if (payload.size() != 8 + 8ull * dim) {
                throw WireError(WireErrorCode::malformed,
                                "wire: RoundBroadcast length does not match dim");
            }
            std::vector<double> v(dim);
            for (std::uint32_t i = 0; i < dim; ++i) v[i] = r.f64();
            m.params = ParameterVector(std::move(v));
            r.expect_done();
            return m;
        }
        case MsgType::client_update: {
            ClientUpdate u;
            u.client_id = static_cast<int>(r.u32());
            u.round = static_cast<int>(r.u32());
            u.n_samples = static_cast<std::int64_t>(r.u64());
            const std::uint32_t dim = r.u32();
            if (payload.size() != 20 + 8ull * dim) {
                throw WireError(WireErrorCode::malformed,
                                "wire: ClientUpdate length does not match dim");
            }
            std::vector<double> v(dim);
            for (std::uint32_t i = 0; i < dim; ++i) v[i] = r.f64();
            u.delta = ParameterVector(std::move(v));
            r.expect_done();
            return u;
        }
        case MsgType::hello: {
            Hello h{r.u32()};
            r.expect_done();
            return h;
        }
        case MsgType::shutdown: {
            r.expect_done();
            return Shutdown{};
        }
    }
    throw WireError(WireErrorCode::unknown_type, "wire: unknown message type");
}

WireMessage decode_frame(std::span<const std::uint8_t> frame) {
    const FrameHeader header = decode_header(frame);
    if (frame.size() != kFrameHeaderSize + header.payload_len) {
        throw WireError(WireErrorCode::truncated, "wire: frame size does not match payload_len");
    }
    return decode_payload(header.msg_type, frame.subspan(kFrameHeaderSize));
}

}  // namespace fedrlhf
