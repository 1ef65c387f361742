#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "pmdas/capture.hpp"
#include "pmdas/csv.hpp"

using namespace pmdas;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("pmdas_test_" + name + "_" + std::to_string(::getpid())))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// K = 0 at two samples per symbol: 16-sample frames.
channel::IQCapture small_capture(uint32_t frames, uint32_t seed = 7)
{
    channel::IQCapture c;
    c.header = {250e6, 125e6, 16, frames, 0};
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    const std::size_t n = std::size_t(c.header.frame_len) * frames;
    for (std::size_t i = 0; i < n; ++i) {
        // float-representable so the float32 payload round-trips exactly
        c.x.emplace_back(double(u(rng)), double(u(rng)));
        c.y.emplace_back(double(u(rng)), double(u(rng)));
    }
    return c;
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string error_of(const fs::path& p)
{
    try {
        io::read_capture(p);
    } catch (const IoError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("capture round trip is bit-identical")
{
    TempDir dir("roundtrip");
    const auto cap = small_capture(5);
    const auto path = dir.path / "a.dasiq";
    io::write_capture(path, cap);
    CHECK(fs::file_size(path) == io::kCaptureHeaderBytes + 5 * 16 * 4 * sizeof(float));

    const auto back = io::read_capture(path);
    CHECK(back.header == cap.header);
    REQUIRE(back.x.size() == cap.x.size());
    CHECK(std::memcmp(back.x.data(), cap.x.data(), cap.x.size() * sizeof(cd)) == 0);
    CHECK(std::memcmp(back.y.data(), cap.y.data(), cap.y.size() * sizeof(cd)) == 0);

    const auto again = dir.path / "b.dasiq";
    io::write_capture(again, back);
    CHECK(read_bytes(path) == read_bytes(again));
    CHECK(read_bytes(path).substr(0, 8) == "DASIQv01");
}

TEST_CASE("reader random access matches the in-memory frames")
{
    TempDir dir("reader");
    const auto cap = small_capture(4, 11);
    const auto path = dir.path / "c.dasiq";
    io::write_capture(path, cap);
    io::CaptureReader r(path);
    CHECK(r.header() == cap.header);
    std::vector<cd> x(16), y(16);
    for (std::size_t f : {3u, 0u, 2u}) {
        r.read_frame(f, x, y);
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(x[i] == cap.frame_x(f)[i]);
            CHECK(y[i] == cap.frame_y(f)[i]);
        }
    }
    CHECK_THROWS_AS(r.read_frame(4, x, y), IoError);
    std::vector<cd> shortbuf(15);
    CHECK_THROWS_AS(r.read_frame(0, shortbuf, y), IoError);
}

TEST_CASE("version tag DASIQv00 is rejected as a version error")
{
    TempDir dir("version");
    const auto path = dir.path / "v.dasiq";
    io::write_capture(path, small_capture(2));
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(7);
        f.put('0');
    }
    const auto msg = error_of(path);
    CHECK(msg.find("version") != std::string::npos);
    CHECK(msg.find("DASIQv00") != std::string::npos);
}

TEST_CASE("foreign files and bad header fields are rejected")
{
    TempDir dir("magic");
    const auto path = dir.path / "m.dasiq";
    io::write_text(path, "RIFF....WAVEfmt this is not a capture at all, but long enough for a header");
    CHECK(error_of(path).find("bad magic") != std::string::npos);

    io::write_text(path, "DASIQ");
    CHECK(error_of(path).find("too short") != std::string::npos);

    io::write_capture(path, small_capture(2));
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(8);
        const uint32_t v = 2;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    CHECK(error_of(path).find("version 2") != std::string::npos);

    CHECK_THROWS_AS(io::read_capture(dir.path / "missing.dasiq"), IoError);
}

TEST_CASE("truncation by one frame reports expected and actual sizes")
{
    TempDir dir("trunc");
    const auto path = dir.path / "t.dasiq";
    io::write_capture(path, small_capture(3));
    const auto full = fs::file_size(path);
    const auto frame_bytes = 16 * 4 * sizeof(float);
    fs::resize_file(path, full - frame_bytes);
    const auto msg = error_of(path);
    CHECK(msg.find("expected " + std::to_string(full) + " bytes") != std::string::npos);
    CHECK(msg.find("found " + std::to_string(full - frame_bytes)) != std::string::npos);
}

TEST_CASE("writer enforces the announced frame count and size")
{
    TempDir dir("writer");
    const auto cap = small_capture(2);
    {
        io::CaptureWriter w(dir.path / "w.dasiq", cap.header);
        w.write_frame(cap.frame_x(0), cap.frame_y(0));
        CHECK_THROWS_AS(w.close(), IoError);
    }
    {
        io::CaptureWriter w(dir.path / "w.dasiq", cap.header);
        CHECK_THROWS_AS(w.write_frame(cap.frame_x(0).first(8), cap.frame_y(0).first(8)), IoError);
        w.write_frame(cap.frame_x(0), cap.frame_y(0));
        w.write_frame(cap.frame_x(1), cap.frame_y(1));
        CHECK_THROWS_AS(w.write_frame(cap.frame_x(1), cap.frame_y(1)), IoError);
        CHECK_NOTHROW(w.close());
    }
    CHECK_THROWS_AS(io::CaptureWriter(dir.path / "no" / "such" / "dir.dasiq", cap.header), IoError);
}

TEST_CASE("captures with inconsistent headers are not written")
{
    TempDir dir("inconsistent");
    auto cap = small_capture(2);
    cap.header.frame_len = 32;
    CHECK_THROWS(io::write_capture(dir.path / "i.dasiq", cap));
    cap = small_capture(2);
    cap.header.sample_rate = 300e6;
    CHECK_THROWS(io::write_capture(dir.path / "i.dasiq", cap));
}

TEST_CASE("differential phase CSV and sidecar round trip")
{
    TempDir dir("diff");
    dsp::DiffPhaseMap d;
    d.num_frames = 3;
    d.num_segments = 2;
    d.values = {0.1, -0.2, 1.0 / 3.0, 2e-17, -3.14159, 6.02214076e23};
    d.positions = {5.5, 15.5};
    d.start_taps = {0, 12};
    d.end_taps = {12, 24};
    d.bridged = {0, 1};
    d.gauge = 10.0;
    d.reference_tap = 1;
    d.frame_period = 1.048576e-3;
    io::write_diff_phase(dir.path, d);
    const auto back = io::read_diff_phase(dir.path);
    CHECK(back.values == d.values);
    CHECK(back.positions == d.positions);
    CHECK(back.start_taps == d.start_taps);
    CHECK(back.end_taps == d.end_taps);
    CHECK(back.bridged == d.bridged);
    CHECK(back.gauge == d.gauge);
    CHECK(back.reference_tap == d.reference_tap);
    CHECK(back.frame_period == d.frame_period);

    io::write_text(dir.path / "diff_phase.csv", "frame,segment,value\n0,5,1.0\n");
    CHECK_THROWS_AS(io::read_diff_phase(dir.path), IoError);
}
