#pragma once

// Receiver DSP: MIMO correlation into per-tap Jones matrices, phase
// extraction, differential phase and the backscatter intensity trace.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pmdas/channel.hpp"
#include "pmdas/codes.hpp"
#include "pmdas/fft.hpp"

namespace pmdas::dsp {

/// Largest reference length served by the brute-force correlator (2N for N = 4096).
inline constexpr std::size_t kDirectCorrelatorMaxLength = 8192;

/// c(tau) = sum_n r[(n + tau) mod L] ref[n] for tau in [0, lags). O(L * lags).
std::vector<cd> circular_correlate_direct(std::span<const cd> r, std::span<const double> ref, std::size_t lags);

/// Same correlation through the frequency domain, all L lags at once.
class CircularCorrelator {
public:
    explicit CircularCorrelator(std::span<const double> ref);
    std::size_t size() const { return ref_spectrum_.size(); }
    /// Forward transform of a received block (reusable across references).
    void transform(std::span<const cd> r, std::span<cd> spectrum) const;
    /// All lags of the correlation for a block already transformed with transform().
    void correlate_spectrum(std::span<const cd> r_spectrum, std::span<cd> out) const;
    void correlate(std::span<const cd> r, std::span<cd> out) const;

private:
    std::shared_ptr<const Fft> fft_;
    std::vector<cd> ref_spectrum_;  // conj(FFT(ref)) / L
};

struct JonesMap {
    std::size_t num_frames = 0;
    std::vector<std::size_t> taps;  // tap index = round-trip delay in symbols
    std::vector<Jones> values;      // frame-major, num_frames * taps.size()
    double frame_period = 0;        // s
    double tap_pitch = 0;           // m
    std::size_t first_frame = channel::kTransientFrames;  // capture frame of row 0

    const Jones& at(std::size_t frame, std::size_t k) const { return values[frame * taps.size() + k]; }
    Jones& at(std::size_t frame, std::size_t k) { return values[frame * taps.size() + k]; }
};

/// Per-frame 2x2 estimator. For receive polarization p and transmit
/// polarization q, H_pq(tau) = [corr_slot1(r_p, pair_q.a) + corr_slot2(r_p, pair_q.b)] / 2N,
/// which is the circular correlation of r_p with the frame stream of q.
class JonesEstimator {
public:
    JonesEstimator(const codes::OrthogonalCodeSet& set, std::size_t samples_per_symbol = 1, bool direct = false);

    std::size_t frame_symbols() const { return frame_symbols_; }
    std::size_t samples_per_symbol() const { return sps_; }
    /// Taps [0, N/2] are free of inter-code interference.
    std::size_t max_unambiguous_tap() const { return frame_symbols_ / 4; }

    void estimate(std::span<const cd> x, std::span<const cd> y, std::span<const std::size_t> taps,
                  std::span<Jones> out) const;

private:
    std::size_t frame_symbols_ = 0;
    std::size_t sps_ = 1;
    bool direct_ = false;
    std::vector<double> stream_x_, stream_y_;
    std::unique_ptr<CircularCorrelator> corr_x_, corr_y_;
};

struct EstimateOptions {
    std::optional<std::size_t> max_tap;  // default: N/2
    std::vector<std::size_t> taps;       // explicit subset; empty = 0..max_tap
    double refractive_index = codes::kDefaultRefractiveIndex;
    bool direct = false;                 // brute-force correlator (oracle path)
    unsigned threads = 0;
};

/// Drops the transient frame(s) and estimates every remaining frame.
JonesMap estimate_jones_map(const channel::IQCapture& capture, const codes::OrthogonalCodeSet& set,
                            const EstimateOptions& options = {});

struct PhaseMap {
    std::size_t num_frames = 0;
    std::vector<std::size_t> taps;
    std::vector<double> values;   // rad in (-pi/2, pi/2]; NaN where invalid
    std::vector<uint8_t> valid;   // 0 = polarization-independent fade
    double frame_period = 0;
    double tap_pitch = 0;

    double at(std::size_t frame, std::size_t k) const { return values[frame * taps.size() + k]; }
    bool is_valid(std::size_t frame, std::size_t k) const { return valid[frame * taps.size() + k] != 0; }
};

/// |det| below this fraction of the frame median marks a fade.
inline constexpr double kFadeThreshold = 1e-6;

/// phi = 0.5 arg(det H), principal value.
PhaseMap extract_phase_map(const JonesMap& jm);

struct DiffPhaseMap {
    std::size_t num_frames = 0;
    std::size_t num_segments = 0;
    std::vector<double> values;     // frame-major, time-unwrapped rad
    std::vector<double> positions;  // m, segment centers
    std::vector<std::size_t> start_taps, end_taps;  // nominal boundary taps per segment
    std::vector<std::size_t> bridged;  // per segment: frames where a fade was bridged
    double gauge = 0;               // m
    std::size_t reference_tap = 0;
    double frame_period = 0;

    double at(std::size_t frame, std::size_t s) const { return values[frame * num_segments + s]; }
    std::vector<double> series(std::size_t s) const;
    /// Segment whose span contains position z (clamped to the ends).
    std::size_t segment_at(double z) const;
};

/// Differences phases at gauge spacing from the first valid tap and unwraps
/// each segment in time with pi-multiple corrections.
DiffPhaseMap differential_phase(const PhaseMap& pm, double gauge);

/// Same, with explicit boundary taps (e.g. quality-selected ones). Fades at a
/// boundary are bridged with map taps within +-bridge_radius of it.
DiffPhaseMap differential_phase(const PhaseMap& pm, double gauge, std::span<const std::size_t> boundary_taps,
                                std::size_t bridge_radius = 2);

/// Unwraps a phi-difference series whose wrap period is pi.
void unwrap_half_circle(std::span<double> series);

/// 10 log10(mean_t ||H_i||_F^2 / 2) per tap, clipped to floor_db.
std::vector<double> intensity_trace(const JonesMap& jm, double floor_db = -200.0);

/// Gauge-cell boundary taps b_k = first + k * gauge_taps up to last.
std::vector<std::size_t> uniform_gauge_taps(std::size_t first, std::size_t last, std::size_t gauge_taps);

/// For each uniform boundary, the tap within +-gauge_taps/2 with the largest mean |det H|.
std::vector<std::size_t> strongest_gauge_taps(const JonesMap& survey, std::size_t first, std::size_t last,
                                              std::size_t gauge_taps);

std::size_t gauge_in_taps(double gauge, double tap_pitch);

}  // namespace pmdas::dsp
