#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvd/tensor.hpp"

namespace mvd {

/// Length-prefixed binary frames: a u32 little-endian byte count, then
/// magic "MVDW", version u16, kind u8, rank u8, rank x u32 dims and the
/// payload. TENSOR payloads are f32 little-endian (4 * prod(dims) bytes),
/// LABEL payloads a u16 class index, ERROR payloads a UTF-8 "CODE: detail"
/// message. All integers little-endian.
enum class FrameKind : uint8_t { tensor = 1, label = 2, error = 3 };

struct WireFrame {
    uint16_t version = 1;
    FrameKind kind = FrameKind::tensor;
    std::vector<uint32_t> dims;
    std::vector<float> values;
    uint16_t label = 0;
    std::string message;

    static WireFrame from_tensor(const Tensor& t);
    static WireFrame label_frame(uint16_t cls);
    static WireFrame error_frame(const std::string& code, const std::string& detail);

    Tensor to_tensor() const;
    std::string error_code() const;  // leading CODE of an error message

    bool operator==(const WireFrame& o) const;
};

std::vector<uint8_t> encode_frame(const WireFrame& f);
/// Body only (no length prefix). Throws Error with a BAD_* code on malformed input.
WireFrame decode_frame(const uint8_t* data, size_t len);

// Blocking socket helpers. read_frame returns nullopt on clean EOF.
void write_frame(int fd, const WireFrame& f);
std::optional<WireFrame> read_frame(int fd);

}  // namespace mvd
