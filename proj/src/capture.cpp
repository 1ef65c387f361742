#include "pmdas/capture.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <vector>

namespace pmdas::io {

static_assert(std::endian::native == std::endian::little, "capture I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'D', 'A', 'S', 'I', 'Q', 'v', '0', '1'};

template <typename T>
void put(std::vector<char>& buf, T v)
{
    const auto* p = reinterpret_cast<const char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(const char*& p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

std::vector<char> encode_header(const channel::CaptureHeader& h)
{
    std::vector<char> buf(kMagic.begin(), kMagic.end());
    put<uint32_t>(buf, kCaptureVersion);
    put<double>(buf, h.sample_rate);
    put<double>(buf, h.symbol_rate);
    put<uint32_t>(buf, h.frame_len);
    put<uint32_t>(buf, h.num_frames);
    put<uint32_t>(buf, h.code_K);
    put<uint32_t>(buf, 0);
    return buf;
}

std::size_t payload_bytes(const channel::CaptureHeader& h)
{
    return std::size_t(h.frame_len) * h.num_frames * 4 * sizeof(float);
}

void encode_frame(std::vector<float>& buf, std::span<const cd> x, std::span<const cd> y)
{
    buf.resize(4 * x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        buf[4 * i + 0] = float(x[i].real());
        buf[4 * i + 1] = float(x[i].imag());
        buf[4 * i + 2] = float(y[i].real());
        buf[4 * i + 3] = float(y[i].imag());
    }
}

channel::CaptureHeader decode_header(std::istream& in, const std::filesystem::path& path)
{
    std::array<char, kCaptureHeaderBytes> raw{};
    if (!in.read(raw.data(), raw.size())) {
        throw IoError(path.string() + ": file too short for a capture header");
    }
    if (std::memcmp(raw.data(), kMagic.data(), 5) != 0) {
        throw IoError(path.string() + ": bad magic, not a DASIQ capture");
    }
    if (std::memcmp(raw.data(), kMagic.data(), kMagic.size()) != 0) {
        throw IoError(path.string() + ": unsupported capture version tag '" + std::string(raw.data(), 8) + "'");
    }
    const char* p = raw.data() + 8;
    const auto version = get<uint32_t>(p);
    if (version != kCaptureVersion) {
        throw IoError(path.string() + ": unsupported capture version " + std::to_string(version));
    }
    channel::CaptureHeader h;
    h.sample_rate = get<double>(p);
    h.symbol_rate = get<double>(p);
    h.frame_len = get<uint32_t>(p);
    h.num_frames = get<uint32_t>(p);
    h.code_K = get<uint32_t>(p);
    if (get<uint32_t>(p) != 0) throw IoError(path.string() + ": reserved header field is not zero");
    return h;
}

}  // namespace

CaptureWriter::CaptureWriter(const std::filesystem::path& path, const channel::CaptureHeader& header)
    : out_(path, std::ios::binary | std::ios::trunc), header_(header), path_(path)
{
    if (!out_) throw IoError(path.string() + ": cannot open for writing");
    const auto raw = encode_header(header);
    out_.write(raw.data(), std::streamsize(raw.size()));
    if (!out_) throw IoError(path.string() + ": write failed");
}

void CaptureWriter::write_frame(std::span<const cd> x, std::span<const cd> y)
{
    if (x.size() != header_.frame_len || y.size() != header_.frame_len) {
        throw IoError(path_.string() + ": frame size does not match header");
    }
    if (written_ >= header_.num_frames) throw IoError(path_.string() + ": more frames than announced");
    std::vector<float> buf;
    encode_frame(buf, x, y);
    out_.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
    if (!out_) throw IoError(path_.string() + ": write failed");
    ++written_;
}

void CaptureWriter::close()
{
    if (written_ != header_.num_frames) {
        throw IoError(path_.string() + ": wrote " + std::to_string(written_) + " of " +
                      std::to_string(header_.num_frames) + " frames");
    }
    out_.close();
    if (!out_) throw IoError(path_.string() + ": close failed");
}

CaptureReader::CaptureReader(const std::filesystem::path& path) : in_(path, std::ios::binary)
{
    if (!in_) throw IoError(path.string() + ": cannot open for reading");
    header_ = decode_header(in_, path);
    std::error_code ec;
    const auto actual = std::filesystem::file_size(path, ec);
    if (ec) throw IoError(path.string() + ": cannot stat: " + ec.message());
    const std::size_t expected = kCaptureHeaderBytes + payload_bytes(header_);
    if (actual != expected) {
        throw IoError(path.string() + ": size mismatch, expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(actual));
    }
}

void CaptureReader::read_frame(std::size_t f, std::span<cd> x, std::span<cd> y)
{
    const std::size_t n = header_.frame_len;
    if (f >= header_.num_frames) throw IoError("capture: frame index out of range");
    if (x.size() != n || y.size() != n) throw IoError("capture: output span size mismatch");
    std::vector<float> buf(4 * n);
    in_.seekg(std::streamoff(kCaptureHeaderBytes + f * n * 4 * sizeof(float)));
    if (!in_.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)))) {
        throw IoError("capture: short read in frame " + std::to_string(f));
    }
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = cd(buf[4 * i], buf[4 * i + 1]);
        y[i] = cd(buf[4 * i + 2], buf[4 * i + 3]);
    }
}

void write_capture(const std::filesystem::path& path, const channel::IQCapture& capture)
{
    capture.validate();
    CaptureWriter w(path, capture.header);
    for (std::size_t f = 0; f < capture.header.num_frames; ++f) w.write_frame(capture.frame_x(f), capture.frame_y(f));
    w.close();
}

channel::IQCapture read_capture(const std::filesystem::path& path)
{
    CaptureReader r(path);
    channel::IQCapture cap;
    cap.header = r.header();
    const std::size_t n = cap.header.frame_len;
    cap.x.resize(n * cap.header.num_frames);
    cap.y.resize(n * cap.header.num_frames);
    for (std::size_t f = 0; f < cap.header.num_frames; ++f) {
        r.read_frame(f, std::span(cap.x).subspan(f * n, n), std::span(cap.y).subspan(f * n, n));
    }
    cap.validate();
    return cap;
}

}  // namespace pmdas::io
