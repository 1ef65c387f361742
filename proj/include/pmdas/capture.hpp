#pragma once

// Binary IQ capture files.
//
// Layout (little-endian):
//   magic "DASIQv01" (8 bytes), u32 version = 1, f64 sample_rate_hz,
//   f64 symbol_rate_baud, u32 frame_len_samples, u32 num_frames,
//   u32 code_K, u32 reserved = 0
// followed by frames in order, each sample as four float32: xI, xQ, yI, yQ.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>

#include "pmdas/channel.hpp"

namespace pmdas::io {

inline constexpr std::size_t kCaptureHeaderBytes = 8 + 4 + 8 + 8 + 4 + 4 + 4 + 4;
inline constexpr uint32_t kCaptureVersion = 1;

void write_capture(const std::filesystem::path& path, const channel::IQCapture& capture);
channel::IQCapture read_capture(const std::filesystem::path& path);

/// Appends frames to a capture file; the header is written up front.
class CaptureWriter {
public:
    CaptureWriter(const std::filesystem::path& path, const channel::CaptureHeader& header);
    void write_frame(std::span<const cd> x, std::span<const cd> y);
    /// Throws IoError if fewer frames than announced were written.
    void close();

private:
    std::ofstream out_;
    channel::CaptureHeader header_;
    std::size_t written_ = 0;
    std::filesystem::path path_;
};

/// Random-access frame reader; validates header and file size on open.
class CaptureReader {
public:
    explicit CaptureReader(const std::filesystem::path& path);
    const channel::CaptureHeader& header() const { return header_; }
    void read_frame(std::size_t f, std::span<cd> x, std::span<cd> y);

private:
    std::ifstream in_;
    channel::CaptureHeader header_;
};

}  // namespace pmdas::io
