#include "pmdas/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "pmdas/fft.hpp"

namespace pmdas::analysis {

namespace {

std::size_t window_frames(double window, double frame_period)
{
    return static_cast<std::size_t>(std::llround(window / frame_period));
}

double sample_stddev(std::span<const double> x)
{
    if (x.size() < 2) return 0.0;
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / double(x.size() - 1));
}

std::size_t nearest_bin(const Welch& w, double f)
{
    const double df = w.frequencies.size() > 1 ? w.frequencies[1] - w.frequencies[0] : 1.0;
    const auto k = static_cast<std::size_t>(std::llround(f / df));
    return std::min(k, w.frequencies.size() - 1);
}

}  // namespace

double median(std::vector<double> v)
{
    if (v.empty()) throw Error("median: empty input");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(mid), v.end());
    if (v.size() % 2) return v[mid];
    const double upper = v[mid];
    const double lower = *std::max_element(v.begin(), v.begin() + std::ptrdiff_t(mid));
    return 0.5 * (lower + upper);
}

StdDevProfile stddev_profile(const dsp::DiffPhaseMap& dpm, double window)
{
    const std::size_t frames = window_frames(window, dpm.frame_period);
    if (frames < 10) throw ConfigError("stddev_profile: window must cover at least 10 frame periods");
    if (frames > dpm.num_frames) throw ConfigError("stddev_profile: window exceeds the capture duration");
    StdDevProfile p;
    p.window = window;
    p.frames = frames;
    p.positions = dpm.positions;
    p.stddev.resize(dpm.num_segments);
    std::vector<double> series(frames);
    for (std::size_t s = 0; s < dpm.num_segments; ++s) {
        for (std::size_t f = 0; f < frames; ++f) series[f] = dpm.at(f, s);
        p.stddev[s] = sample_stddev(series);
    }
    return p;
}

Welch welch_psd(std::span<const double> series, double sample_rate, std::size_t segment_length)
{
    if (segment_length < 8) throw ConfigError("welch_psd: segment length must be >= 8 samples");
    const std::size_t hop = segment_length / 2;
    if (series.size() < segment_length + hop) {
        throw ConfigError("welch_psd: series too short for two periodogram segments");
    }
    const std::size_t nseg = 1 + (series.size() - segment_length) / hop;

    std::vector<double> taper(segment_length);
    double taper_power = 0;
    for (std::size_t i = 0; i < segment_length; ++i) {
        const double a = 2.0 * kPi * double(i) / double(segment_length - 1);
        taper[i] = 0.42 - 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
        taper_power += taper[i] * taper[i];
    }

    Welch w;
    w.segments = nseg;
    w.segment_length = segment_length;
    const std::size_t nbins = segment_length / 2 + 1;
    w.frequencies.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k) w.frequencies[k] = double(k) * sample_rate / double(segment_length);
    w.density.assign(nbins, 0.0);

    Fft fft(segment_length);
    std::vector<cd> in(segment_length), out(segment_length);
    const double scale = 1.0 / (sample_rate * taper_power * double(nseg));
    for (std::size_t s = 0; s < nseg; ++s) {
        const auto seg = series.subspan(s * hop, segment_length);
        const double mean = std::accumulate(seg.begin(), seg.end(), 0.0) / double(segment_length);
        for (std::size_t i = 0; i < segment_length; ++i) in[i] = (seg[i] - mean) * taper[i];
        fft.forward(in, out);
        for (std::size_t k = 0; k < nbins; ++k) {
            const bool unique = k == 0 || (segment_length % 2 == 0 && k == nbins - 1);
            w.density[k] += (unique ? 1.0 : 2.0) * std::norm(out[k]) * scale;
        }
    }
    return w;
}

double tone_snr_db(const Welch& w, double frequency)
{
    const std::size_t k0 = nearest_bin(w, frequency);
    std::size_t peak = k0;
    for (std::size_t k = k0 > 0 ? k0 - 1 : 0; k <= std::min(k0 + 1, w.density.size() - 1); ++k) {
        if (w.density[k] > w.density[peak]) peak = k;
    }
    std::vector<double> rest;
    for (std::size_t k = 0; k < w.density.size(); ++k) {
        const std::size_t d = k > peak ? k - peak : peak - k;
        if (d > kTaperHalfWidthBins) rest.push_back(w.density[k]);
    }
    const double floor = median(rest);
    if (floor <= 0) return w.density[peak] > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    return 10.0 * std::log10(w.density[peak] / floor);
}

SpectrumReport psd(const dsp::DiffPhaseMap& dpm, double position, double window, std::optional<double> tone_frequency)
{
    if (dpm.num_segments == 0) throw Error("psd: empty map");
    const double half = 0.5 * dpm.gauge;
    if (position < dpm.positions.front() - half || position > dpm.positions.back() + half) {
        throw ConfigError("psd: position " + std::to_string(position) + " m is outside the fiber");
    }
    const std::size_t seg_len = window_frames(window, dpm.frame_period);
    const std::size_t s = dpm.segment_at(position);
    const auto series = dpm.series(s);
    const Welch w = welch_psd(series, 1.0 / dpm.frame_period, seg_len);

    SpectrumReport r;
    r.position = dpm.positions[s];
    r.segment = s;
    r.frequencies = w.frequencies;
    r.bin_spacing = w.frequencies[1] - w.frequencies[0];
    r.averaged_segments = w.segments;
    r.psd_db.resize(w.density.size());
    for (std::size_t k = 0; k < w.density.size(); ++k) {
        r.psd_db[k] = 10.0 * std::log10(std::max(w.density[k], 1e-300));
    }
    if (tone_frequency) {
        r.tone_frequency = tone_frequency;
        r.tone_snr_db = tone_snr_db(w, *tone_frequency);
    }
    return r;
}

double detection_threshold(const StdDevProfile& profile, const DetectOptions& options)
{
    if (profile.stddev.empty()) return options.min_stddev;
    const double med = median(profile.stddev);
    std::vector<double> dev(profile.stddev.size());
    std::transform(profile.stddev.begin(), profile.stddev.end(), dev.begin(),
                   [med](double v) { return std::abs(v - med); });
    return std::max(med + options.k * median(dev), options.min_stddev);
}

std::vector<DetectedEvent> detect_events(const StdDevProfile& profile, const dsp::DiffPhaseMap& dpm,
                                         const DetectOptions& options)
{
    if (profile.stddev.size() != dpm.num_segments) throw Error("detect_events: profile and map are not aligned");
    std::vector<DetectedEvent> events;
    if (profile.stddev.empty()) return events;

    const double threshold = detection_threshold(profile, options);

    const std::size_t n = profile.stddev.size();
    const std::size_t psd_len = window_frames(options.psd_window, dpm.frame_period);
    for (std::size_t s = 0; s < n;) {
        if (profile.stddev[s] <= threshold) {
            ++s;
            continue;
        }
        DetectedEvent e;
        e.first_segment = s;
        e.segment = s;
        while (s < n && profile.stddev[s] > threshold) {
            if (profile.stddev[s] > profile.stddev[e.segment]) e.segment = s;
            e.last_segment = s;
            ++s;
        }
        e.position = dpm.positions[e.segment];
        e.stddev_peak = profile.stddev[e.segment];

        const auto series = dpm.series(e.segment);
        const std::span<const double> windowed(series.data(), std::min(profile.frames, series.size()));
        e.magnitude_pp = peak_to_peak_percentile(windowed);
        const Welch w = welch_psd(series, 1.0 / dpm.frame_period, psd_len);
        std::size_t best = 1;
        for (std::size_t k = 1; k < w.density.size(); ++k) {
            if (w.density[k] > w.density[best]) best = k;
        }
        e.frequency = w.frequencies[best];
        events.push_back(e);
    }
    return events;
}

double theory_phase(double dl_pp, double refractive_index, double photoelastic, double wavelength)
{
    if (dl_pp < 0) throw ConfigError("theory_phase: elongation must be >= 0");
    return 4.0 * kPi * refractive_index * photoelastic * dl_pp / wavelength;
}

double peak_to_peak_percentile(std::span<const double> series, double lo, double hi)
{
    if (series.empty()) throw Error("peak_to_peak_percentile: empty series");
    std::vector<double> v(series.begin(), series.end());
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * double(v.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - double(i);
        return i + 1 < v.size() ? v[i] * (1 - frac) + v[i + 1] * frac : v[i];
    };
    return quantile(hi) - quantile(lo);
}

double sine_fit_peak_to_peak(std::span<const double> series, double sample_rate, double frequency)
{
    if (series.size() < 3) throw Error("sine_fit_peak_to_peak: need at least 3 samples");
    // Normal equations for x ~ a cos + b sin + c.
    std::array<std::array<double, 3>, 3> m{};
    std::array<double, 3> rhs{};
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double ph = 2.0 * kPi * frequency * double(i) / sample_rate;
        const std::array<double, 3> basis{std::cos(ph), std::sin(ph), 1.0};
        for (int r = 0; r < 3; ++r) {
            rhs[r] += basis[r] * series[i];
            for (int c = 0; c < 3; ++c) m[r][c] += basis[r] * basis[c];
        }
    }
    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        }
        std::swap(m[col], m[piv]);
        std::swap(rhs[col], rhs[piv]);
        if (std::abs(m[col][col]) < 1e-300) throw Error("sine_fit_peak_to_peak: singular fit");
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int c = col; c < 3; ++c) m[r][c] -= f * m[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::array<double, 3> sol{};
    for (int r = 2; r >= 0; --r) {
        double acc = rhs[r];
        for (int c = r + 1; c < 3; ++c) acc -= m[r][c] * sol[c];
        sol[r] = acc / m[r][r];
    }
    return 2.0 * std::hypot(sol[0], sol[1]);
}

}  // namespace pmdas::analysis
