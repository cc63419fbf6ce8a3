#include "mvd/wire.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace mvd {

namespace {

void push_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
void push_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
uint16_t peel_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t peel_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

WireFrame WireFrame::from_tensor(const Tensor& t) {
    WireFrame f;
    f.kind = FrameKind::tensor;
    for (long d : t.shape()) f.dims.push_back(static_cast<uint32_t>(d));
    f.values = t.values();
    return f;
}

WireFrame WireFrame::label_frame(uint16_t cls) {
    WireFrame f;
    f.kind = FrameKind::label;
    f.label = cls;
    return f;
}

WireFrame WireFrame::error_frame(const std::string& code, const std::string& detail) {
    WireFrame f;
    f.kind = FrameKind::error;
    f.message = detail.empty() ? code : code + ": " + detail;
    return f;
}

Tensor WireFrame::to_tensor() const {
    if (kind != FrameKind::tensor) throw InvalidArgument("frame is not a tensor");
    std::vector<long> shape;
    for (uint32_t d : dims) shape.push_back(static_cast<long>(d));
    return Tensor(shape, values);
}

std::string WireFrame::error_code() const {
    const auto colon = message.find(':');
    return colon == std::string::npos ? message : message.substr(0, colon);
}

bool WireFrame::operator==(const WireFrame& o) const {
    if (version != o.version || kind != o.kind || dims != o.dims) return false;
    switch (kind) {
        case FrameKind::tensor:
            if (values.size() != o.values.size()) return false;
            return std::memcmp(values.data(), o.values.data(), sizeof(float) * values.size()) == 0;
        case FrameKind::label: return label == o.label;
        case FrameKind::error: return message == o.message;
    }
    return false;
}

std::vector<uint8_t> encode_frame(const WireFrame& f) {
    std::vector<uint8_t> body;
    body.reserve(12 + 4 * f.dims.size() + 4 * f.values.size() + f.message.size());
    body.push_back('M');
    body.push_back('V');
    body.push_back('D');
    body.push_back('W');
    push_u16(body, f.version);
    body.push_back(static_cast<uint8_t>(f.kind));
    body.push_back(static_cast<uint8_t>(f.dims.size()));
    for (uint32_t d : f.dims) push_u32(body, d);
    switch (f.kind) {
        case FrameKind::tensor: {
            const size_t at = body.size();
            body.resize(at + 4 * f.values.size());
            static_assert(sizeof(float) == 4);
            std::memcpy(body.data() + at, f.values.data(), 4 * f.values.size());
            break;
        }
        case FrameKind::label: push_u16(body, f.label); break;
        case FrameKind::error: body.insert(body.end(), f.message.begin(), f.message.end()); break;
    }
    std::vector<uint8_t> out;
    out.reserve(4 + body.size());
    push_u32(out, static_cast<uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

WireFrame decode_frame(const uint8_t* data, size_t len) {
    if (len < 8) throw Error("BAD_FRAME: truncated header");
    if (std::memcmp(data, "MVDW", 4) != 0) throw Error("BAD_MAGIC: frame does not start with MVDW");
    WireFrame f;
    f.version = peel_u16(data + 4);
    if (f.version != 1) throw Error("BAD_VERSION: unsupported frame version " + std::to_string(f.version));
    const uint8_t kind = data[6];
    if (kind < 1 || kind > 3) throw Error("BAD_KIND: unknown frame kind " + std::to_string(kind));
    f.kind = static_cast<FrameKind>(kind);
    const uint8_t rank = data[7];
    size_t at = 8;
    if (len < at + 4ull * rank) throw Error("BAD_FRAME: truncated dims");
    uint64_t count = 1;
    for (uint8_t i = 0; i < rank; ++i) {
        f.dims.push_back(peel_u32(data + at));
        count *= f.dims.back();
        at += 4;
    }
    switch (f.kind) {
        case FrameKind::tensor: {
            if (rank == 0) count = 0;
            if (len - at != 4 * count)
                throw Error("BAD_PAYLOAD: tensor payload is " + std::to_string(len - at) + " bytes, dims need " +
                            std::to_string(4 * count));
            f.values.resize(count);
            std::memcpy(f.values.data(), data + at, 4 * count);
            break;
        }
        case FrameKind::label:
            if (len - at != 2) throw Error("BAD_PAYLOAD: label payload must be 2 bytes");
            f.label = peel_u16(data + at);
            break;
        case FrameKind::error: f.message.assign(reinterpret_cast<const char*>(data + at), len - at); break;
    }
    return f;
}

namespace {

bool read_exact(int fd, uint8_t* buf, size_t n) {
    size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r == 0) return false;  // EOF
        if (r < 0) throw IoError("socket read failed");
        got += static_cast<size_t>(r);
    }
    return true;
}

}  // namespace

void write_frame(int fd, const WireFrame& f) {
    const auto bytes = encode_frame(f);
    size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (r <= 0) throw IoError("socket write failed");
        sent += static_cast<size_t>(r);
    }
}

std::optional<WireFrame> read_frame(int fd) {
    uint8_t len_buf[4];
    if (!read_exact(fd, len_buf, 4)) return std::nullopt;
    const uint32_t len = peel_u32(len_buf);
    if (len > (64u << 20)) throw Error("BAD_FRAME: implausible frame length");
    std::vector<uint8_t> body(len);
    if (!read_exact(fd, body.data(), len)) return std::nullopt;
    return decode_frame(body.data(), body.size());
}

}  // namespace mvd
