#pragma once

// Rayleigh backscatter synthesis for a dual-polarization probed fiber.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pmdas/codes.hpp"
#include "pmdas/common.hpp"
#include "pmdas/fft.hpp"

namespace pmdas::channel {

inline constexpr double kDefaultWavelength = 1536.6e-9;
inline constexpr double kDefaultPhotoelastic = 0.78;
inline constexpr double kDefaultLossDbPerKm = 0.2;

struct Span {
    double length = 0;                        // m
    double loss_db_per_km = kDefaultLossDbPerKm;  // one-way
};

struct Connector {
    double position = 0;  // m
    double loss_db = 0;   // one-way
};

struct FiberSpec {
    std::vector<Span> spans;
    std::vector<Connector> connectors;
    double refractive_index = codes::kDefaultRefractiveIndex;
    double wavelength = kDefaultWavelength;
    double photoelastic = kDefaultPhotoelastic;
    double rayleigh_level_db = 0;         // mean |g|^2 per tap at z = 0
    double birefringence_strength = 0.05; // rad, std of per-tap rotation angle
    uint64_t rng_seed = 1;

    double length() const;
    /// Throws ConfigError naming the failing field.
    void validate() const;
    /// One-way loss in dB accumulated from launch to z (spans and connectors).
    double one_way_loss_db(double z) const;
};

struct Tap {
    std::size_t index = 0;  // round-trip delay in symbols
    double z = 0;           // m
    double delay = 0;       // s, 2 z / c_f
    cd reflectivity;        // g_i
    Jones forward;          // F_i, cumulative launch-to-tap Jones matrix (SU(2))

    /// g_i F_i^T F_i
    Jones round_trip() const { return reflectivity * (forward.transpose() * forward); }
};

struct FiberRealization {
    std::vector<Tap> taps;  // taps[k].index == k + 1
    double tap_pitch = 0;   // m, equals the probe's spatial resolution
    double symbol_rate = 0;
    double length = 0;
    double refractive_index = codes::kDefaultRefractiveIndex;
    double wavelength = kDefaultWavelength;
    double photoelastic = kDefaultPhotoelastic;

    /// Largest tap delay in symbols (0 for an empty fiber).
    std::size_t max_delay() const { return taps.empty() ? 0 : taps.back().index; }
};

/// One tap per spatial-resolution cell (pitch c_f / (2 symbol_rate)),
/// M = floor(L / pitch). Deterministic in spec.rng_seed.
FiberRealization synthesize_fiber(const FiberSpec& spec, double symbol_rate);

struct PerturbationEvent {
    double position = 0;          // m
    double stretched_length = 0;  // m of fiber on the actuator (metadata)
    double amplitude_pp = 0;      // m, peak-to-peak elongation
    double frequency = 0;         // Hz
    double phase = 0;             // rad

    /// Elongation at time t: (amplitude_pp / 2) sin(2 pi f t + phase).
    double elongation(double t) const;
};

/// Round-trip photo-elastic phase for an elongation: 4 pi n xi dL / lambda.
double photoelastic_phase(double elongation, double refractive_index, double photoelastic, double wavelength);

/// H_i(t) for every tap: g_i F_i^T F_i exp(j sum_e phase_e(t) [z_i > z_e]).
std::vector<Jones> ground_truth_response(const FiberRealization& fiber, std::span<const PerturbationEvent> events,
                                         double t);

struct NoiseSpec {
    double laser_linewidth = 0;          // Hz
    std::optional<double> awgn_snr_db;   // nullopt = noiseless
    std::optional<int> adc_bits;         // nullopt = no quantization
    uint64_t rng_seed = 2;

    void validate() const;
};

/// Wiener phase with increment variance 2 pi linewidth / sample_rate; starts at 0.
std::vector<double> laser_phase_walk(double linewidth, std::size_t n_samples, double sample_rate, uint64_t seed);

struct CaptureHeader {
    double sample_rate = 0;
    double symbol_rate = 0;
    uint32_t frame_len = 0;
    uint32_t num_frames = 0;
    uint32_t code_K = 0;

    friend bool operator==(const CaptureHeader&, const CaptureHeader&) = default;
};

/// Frames preceding steady-state probing; receivers discard them.
inline constexpr std::size_t kTransientFrames = 1;

/// Dual-polarization complex baseband record, frame-major.
struct IQCapture {
    CaptureHeader header;
    std::vector<cd> x;
    std::vector<cd> y;

    std::span<const cd> frame_x(std::size_t f) const { return std::span(x).subspan(f * header.frame_len, header.frame_len); }
    std::span<const cd> frame_y(std::size_t f) const { return std::span(y).subspan(f * header.frame_len, header.frame_len); }
    /// Throws Error if header and payload disagree.
    void validate() const;
};

struct BackscatterOptions {
    /// Sample the channel once per frame; false evaluates event phases per sample.
    bool quasi_static = true;
    /// Test hook: synthesize even when T_code <= 4 T_ir.
    bool allow_timing_violation = false;
    unsigned threads = 0;  // 0 = hardware concurrency
};

/// Frame-by-frame backscatter synthesis under continuous periodic probing.
/// frame() is const and thread-safe; each frame's randomness comes from a
/// substream keyed by the frame index, so output never depends on scheduling.
class BackscatterSimulator {
public:
    BackscatterSimulator(const codes::ProbeFrame& frame, const FiberRealization& fiber,
                         std::vector<PerturbationEvent> events, NoiseSpec noise, double duration,
                         BackscatterOptions options = {});

    std::size_t num_frames() const { return num_frames_; }
    std::size_t frame_length() const { return frame_len_; }
    CaptureHeader header() const;
    const std::vector<std::string>& warnings() const { return warnings_; }
    /// Per-sample complex AWGN variance (0 when noiseless).
    double noise_variance() const { return noise_var_; }

    void frame(std::size_t f, std::span<cd> x, std::span<cd> y) const;
    IQCapture run() const;

private:
    void build_region_spectra(const FiberRealization& fiber);
    std::vector<double> frame_walk(std::size_t f) const;
    double region_phase(std::size_t region, double t) const;

    codes::ProbeFrame probe_;
    std::vector<PerturbationEvent> events_;  // sorted by position
    NoiseSpec noise_;
    BackscatterOptions options_;
    double phase_per_meter_ = 0;  // 4 pi n xi / lambda
    std::size_t frame_len_ = 0;
    std::size_t fft_len_ = 0;
    std::size_t num_frames_ = 0;
    double noise_var_ = 0;
    double adc_full_scale_ = 0;
    std::vector<double> frame_start_phase_;
    // [region][element xx,xy,yx,yy][bin]
    std::vector<std::array<std::vector<cd>, 4>> region_spectra_;
    std::array<std::vector<cd>, 2> steady_input_spectrum_;
    std::array<std::vector<cd>, 2> first_input_spectrum_;
    std::vector<std::string> warnings_;
    std::shared_ptr<const Fft> fft_;
};

/// Convenience wrapper: simulate all frames into memory.
IQCapture backscatter(const codes::ProbeFrame& frame, const FiberRealization& fiber,
                      std::span<const PerturbationEvent> events, const NoiseSpec& noise, double duration,
                      BackscatterOptions options = {});

/// Deterministic generator for (seed, stream tag, index).
std::mt19937_64 substream(uint64_t seed, uint64_t tag, uint64_t index);

}  // namespace pmdas::channel
