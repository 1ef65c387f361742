#pragma once

// Figure-level analyses over differential phase maps.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmdas/channel.hpp"
#include "pmdas/dsp.hpp"

namespace pmdas::analysis {

struct StdDevProfile {
    std::vector<double> positions;  // m
    std::vector<double> stddev;     // rad
    double window = 0;              // s
    std::size_t frames = 0;         // samples per segment used
};

/// Sample StDv per segment over the first `window` seconds of the map.
StdDevProfile stddev_profile(const dsp::DiffPhaseMap& dpm, double window);

/// Averaged periodogram of a real series: 50 % overlapped segments,
/// 3-term Blackman taper, one-sided density in rad^2/Hz.
struct Welch {
    std::vector<double> frequencies;  // Hz, spacing fs / segment_length
    std::vector<double> density;
    std::size_t segments = 0;
    std::size_t segment_length = 0;
};

Welch welch_psd(std::span<const double> series, double sample_rate, std::size_t segment_length);

/// Main-lobe half-width of the taper, in bins.
inline constexpr std::size_t kTaperHalfWidthBins = 3;
inline constexpr const char* kTaperName = "blackman";

/// Peak bin near `frequency` over the median of bins outside the main lobe, in dB.
double tone_snr_db(const Welch& w, double frequency);

struct SpectrumReport {
    double position = 0;     // m, center of the analysed segment
    std::size_t segment = 0;
    std::vector<double> frequencies;
    std::vector<double> psd_db;  // dB rad^2/Hz
    double bin_spacing = 0;      // Hz, 1 / window
    std::size_t averaged_segments = 0;
    std::optional<double> tone_frequency;
    double tone_snr_db = 0;
};

/// PSD of the differential phase at the segment nearest `position`,
/// averaged over the whole map with periodogram length `window`.
SpectrumReport psd(const dsp::DiffPhaseMap& dpm, double position, double window,
                   std::optional<double> tone_frequency = std::nullopt);

struct DetectedEvent {
    double position = 0;       // m
    std::size_t segment = 0;   // peak segment
    std::size_t first_segment = 0, last_segment = 0;
    double frequency = 0;      // Hz, dominant PSD bin
    double magnitude_pp = 0;   // rad, p99 - p1
    double stddev_peak = 0;    // rad
};

struct DetectOptions {
    double k = 6.0;             // threshold = median + k * MAD
    double min_stddev = 1e-3;   // rad, absolute floor on the threshold
    double psd_window = 0.05;   // s, periodogram length for the dominant frequency
};

/// max(median + k * MAD, min_stddev) over the profile.
double detection_threshold(const StdDevProfile& profile, const DetectOptions& options = {});

std::vector<DetectedEvent> detect_events(const StdDevProfile& profile, const dsp::DiffPhaseMap& dpm,
                                         const DetectOptions& options = {});

/// 4 pi n xi dL_pp / lambda
double theory_phase(double dl_pp, double refractive_index = codes::kDefaultRefractiveIndex,
                    double photoelastic = channel::kDefaultPhotoelastic,
                    double wavelength = channel::kDefaultWavelength);

/// Difference of the hi and lo quantiles (linear interpolation).
double peak_to_peak_percentile(std::span<const double> series, double lo = 0.01, double hi = 0.99);

/// 2 * amplitude of the least-squares sinusoid at `frequency` (with offset).
double sine_fit_peak_to_peak(std::span<const double> series, double sample_rate, double frequency);

double median(std::vector<double> v);

struct SensitivityPoint {
    double dl_pp = 0;              // m
    double measured_phase_pp = 0;  // rad
    double theory_phase_pp = 0;    // rad
    bool below_detection = false;  // theory < detection_factor * floor
};

struct SensitivityCurve {
    std::vector<SensitivityPoint> points;
    double noise_floor_stddev = 0;  // rad
    double position = 0;            // m
    double frequency = 0;           // Hz
    double window = 0;              // s
};

}  // namespace pmdas::analysis
