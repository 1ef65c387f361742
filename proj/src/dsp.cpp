#include "pmdas/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmdas/parallel.hpp"

namespace pmdas::dsp {

std::vector<cd> circular_correlate_direct(std::span<const cd> r, std::span<const double> ref, std::size_t lags)
{
    const std::size_t n = ref.size();
    if (r.size() != n) throw Error("circular_correlate_direct: length mismatch");
    if (n > kDirectCorrelatorMaxLength) throw Error("circular_correlate_direct: reference too long for the direct path");
    std::vector<cd> out(std::min(lags, n));
    for (std::size_t tau = 0; tau < out.size(); ++tau) {
        cd acc{};
        for (std::size_t i = 0; i < n; ++i) acc += r[(i + tau) % n] * ref[i];
        out[tau] = acc;
    }
    return out;
}

CircularCorrelator::CircularCorrelator(std::span<const double> ref)
    : fft_(std::make_shared<const Fft>(ref.size())), ref_spectrum_(ref.size())
{
    std::vector<cd> tmp(ref.begin(), ref.end());
    fft_->forward(tmp, ref_spectrum_);
    const double scale = 1.0 / double(ref.size());
    for (auto& v : ref_spectrum_) v = std::conj(v) * scale;
}

void CircularCorrelator::transform(std::span<const cd> r, std::span<cd> spectrum) const { fft_->forward(r, spectrum); }

void CircularCorrelator::correlate_spectrum(std::span<const cd> r_spectrum, std::span<cd> out) const
{
    std::vector<cd> prod(r_spectrum.size());
    for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = r_spectrum[k] * ref_spectrum_[k];
    fft_->inverse(prod, out);
}

void CircularCorrelator::correlate(std::span<const cd> r, std::span<cd> out) const
{
    std::vector<cd> spec(r.size());
    transform(r, spec);
    correlate_spectrum(spec, out);
}

JonesEstimator::JonesEstimator(const codes::OrthogonalCodeSet& set, std::size_t samples_per_symbol, bool direct)
    : sps_(samples_per_symbol), direct_(direct)
{
    if (sps_ == 0) throw ConfigError("JonesEstimator: samples per symbol must be >= 1");
    const auto report = codes::verify_code_set(set);
    if (!report.ok()) throw ConfigError("JonesEstimator: code set fails verification");
    auto append = [](std::vector<double>& out, const codes::BipolarSequence& s) {
        for (int8_t v : s.symbols()) out.push_back(double(v));
    };
    append(stream_x_, set.pair_x.a);
    append(stream_x_, set.pair_x.b);
    append(stream_y_, set.pair_y.a);
    append(stream_y_, set.pair_y.b);
    frame_symbols_ = stream_x_.size();
    if (direct_ && frame_symbols_ > kDirectCorrelatorMaxLength) {
        throw ConfigError("JonesEstimator: direct correlator limited to frames of " +
                          std::to_string(kDirectCorrelatorMaxLength) + " symbols");
    }
    if (!direct_) {
        corr_x_ = std::make_unique<CircularCorrelator>(stream_x_);
        corr_y_ = std::make_unique<CircularCorrelator>(stream_y_);
    }
}

void JonesEstimator::estimate(std::span<const cd> x, std::span<const cd> y, std::span<const std::size_t> taps,
                              std::span<Jones> out) const
{
    const std::size_t L = frame_symbols_;
    if (x.size() != L * sps_ || y.size() != L * sps_) throw Error("JonesEstimator: frame length mismatch");
    if (out.size() != taps.size()) throw Error("JonesEstimator: output size mismatch");

    std::vector<cd> rx(L), ry(L);
    for (std::size_t m = 0; m < L; ++m) {
        rx[m] = x[m * sps_];
        ry[m] = y[m * sps_];
    }
    std::size_t max_tap = 0;
    for (auto t : taps) {
        if (t >= L) throw Error("JonesEstimator: tap beyond frame length");
        max_tap = std::max(max_tap, t);
    }

    if (direct_) {
        const double scale = 1.0 / double(L);
        const auto xx = circular_correlate_direct(rx, stream_x_, max_tap + 1);
        const auto xy = circular_correlate_direct(rx, stream_y_, max_tap + 1);
        const auto yx = circular_correlate_direct(ry, stream_x_, max_tap + 1);
        const auto yy = circular_correlate_direct(ry, stream_y_, max_tap + 1);
        for (std::size_t k = 0; k < taps.size(); ++k) {
            const auto t = taps[k];
            out[k] = {xx[t] * scale, xy[t] * scale, yx[t] * scale, yy[t] * scale};
        }
        return;
    }

    std::vector<cd> sx(L), sy(L), cxx(L), cxy(L), cyx(L), cyy(L);
    corr_x_->transform(rx, sx);
    corr_x_->transform(ry, sy);
    corr_x_->correlate_spectrum(sx, cxx);
    corr_y_->correlate_spectrum(sx, cxy);
    corr_x_->correlate_spectrum(sy, cyx);
    corr_y_->correlate_spectrum(sy, cyy);
    const double scale = 1.0 / double(L);
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const auto t = taps[k];
        out[k] = {cxx[t] * scale, cxy[t] * scale, cyx[t] * scale, cyy[t] * scale};
    }
}

JonesMap estimate_jones_map(const channel::IQCapture& capture, const codes::OrthogonalCodeSet& set,
                            const EstimateOptions& options)
{
    capture.validate();
    const auto& h = capture.header;
    const double sps_real = h.sample_rate / h.symbol_rate;
    const auto sps = static_cast<std::size_t>(std::llround(sps_real));
    if (h.code_K != uint32_t(set.K) || h.frame_len != 2 * set.size() * sps) {
        throw ConfigError("estimate_jones_map: capture header does not match the code set");
    }
    if (h.num_frames <= channel::kTransientFrames) {
        throw ConfigError("estimate_jones_map: capture holds no steady-state frame");
    }
    JonesEstimator est(set, sps, options.direct);

    JonesMap jm;
    jm.first_frame = channel::kTransientFrames;
    jm.num_frames = h.num_frames - channel::kTransientFrames;
    jm.frame_period = double(h.frame_len) / h.sample_rate;
    jm.tap_pitch = fiber_velocity(options.refractive_index) / (2.0 * h.symbol_rate);
    if (!options.taps.empty()) {
        jm.taps = options.taps;
    } else {
        const std::size_t max_tap = std::min(options.max_tap.value_or(est.max_unambiguous_tap()),
                                             est.frame_symbols() - 1);
        jm.taps.resize(max_tap + 1);
        for (std::size_t t = 0; t <= max_tap; ++t) jm.taps[t] = t;
    }
    jm.values.resize(jm.num_frames * jm.taps.size());
    const std::size_t ntaps = jm.taps.size();
    parallel_for(jm.num_frames, options.threads, [&](std::size_t f) {
        const std::size_t cf = f + jm.first_frame;
        est.estimate(capture.frame_x(cf), capture.frame_y(cf), jm.taps,
                     std::span(jm.values).subspan(f * ntaps, ntaps));
    });
    return jm;
}

PhaseMap extract_phase_map(const JonesMap& jm)
{
    PhaseMap pm;
    pm.num_frames = jm.num_frames;
    pm.taps = jm.taps;
    pm.frame_period = jm.frame_period;
    pm.tap_pitch = jm.tap_pitch;
    const std::size_t ntaps = jm.taps.size();
    pm.values.assign(jm.num_frames * ntaps, std::numeric_limits<double>::quiet_NaN());
    pm.valid.assign(jm.num_frames * ntaps, 0);

    std::vector<double> mag(ntaps), sorted(ntaps);
    for (std::size_t f = 0; f < jm.num_frames; ++f) {
        for (std::size_t k = 0; k < ntaps; ++k) {
            const cd d = jm.at(f, k).det();
            if (!std::isfinite(d.real()) || !std::isfinite(d.imag())) {
                throw Error("extract_phase_map: non-finite Jones matrix at frame " + std::to_string(f));
            }
            mag[k] = std::abs(d);
        }
        sorted = mag;
        std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(ntaps / 2), sorted.end());
        const double threshold = ntaps ? kFadeThreshold * sorted[ntaps / 2] : 0.0;
        for (std::size_t k = 0; k < ntaps; ++k) {
            if (mag[k] > 0 && mag[k] >= threshold) {
                pm.values[f * ntaps + k] = 0.5 * std::arg(jm.at(f, k).det());
                pm.valid[f * ntaps + k] = 1;
            }
        }
    }
    return pm;
}

void unwrap_half_circle(std::span<double> series)
{
    if (series.empty()) return;
    // Start on the principal half-circle (-pi/2, pi/2].
    series[0] -= kPi * std::ceil(series[0] / kPi - 0.5);
    for (std::size_t t = 1; t < series.size(); ++t) {
        const double jump = series[t] - series[t - 1];
        series[t] -= kPi * std::round(jump / kPi);
    }
}

std::size_t gauge_in_taps(double gauge, double tap_pitch)
{
    if (!(tap_pitch > 0)) throw ConfigError("gauge: tap pitch must be > 0");
    if (!(gauge >= tap_pitch * (1 - 1e-9))) throw ConfigError("processing.gauge: must be >= the tap pitch");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(gauge / tap_pitch)));
}

std::vector<std::size_t> uniform_gauge_taps(std::size_t first, std::size_t last, std::size_t gauge_taps)
{
    if (gauge_taps == 0) throw ConfigError("uniform_gauge_taps: gauge must be >= 1 tap");
    std::vector<std::size_t> taps;
    for (std::size_t t = first; t <= last; t += gauge_taps) taps.push_back(t);
    return taps;
}

std::vector<std::size_t> strongest_gauge_taps(const JonesMap& survey, std::size_t first, std::size_t last,
                                              std::size_t gauge_taps)
{
    const std::size_t ntaps = survey.taps.size();
    std::vector<double> quality(ntaps, 0.0);
    for (std::size_t f = 0; f < survey.num_frames; ++f) {
        for (std::size_t k = 0; k < ntaps; ++k) quality[k] += std::abs(survey.at(f, k).det());
    }
    std::vector<std::size_t> out;
    const std::size_t half = gauge_taps / 2;
    for (std::size_t target : uniform_gauge_taps(first, last, gauge_taps)) {
        const std::size_t lo = target > half ? target - half : 0;
        const std::size_t hi = target + (gauge_taps - 1 - half);
        std::optional<std::size_t> best;
        for (std::size_t k = 0; k < ntaps; ++k) {
            const auto t = survey.taps[k];
            if (t < lo || t > hi || t < first || t > last) continue;
            if (!best || quality[k] > quality[*best]) best = k;
        }
        if (!best) throw ConfigError("strongest_gauge_taps: survey holds no tap near " + std::to_string(target));
        out.push_back(survey.taps[*best]);
    }
    return out;
}

std::vector<double> DiffPhaseMap::series(std::size_t s) const
{
    std::vector<double> out(num_frames);
    for (std::size_t f = 0; f < num_frames; ++f) out[f] = at(f, s);
    return out;
}

std::size_t DiffPhaseMap::segment_at(double z) const
{
    if (num_segments == 0) throw Error("DiffPhaseMap: no segments");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < num_segments; ++s) {
        const double d = std::abs(positions[s] - z);
        if (d < best_d) {
            best_d = d;
            best = s;
        }
    }
    return best;
}

namespace {

// cells[b] lists map-tap slots usable for boundary b, nominal slot first.
DiffPhaseMap difference_cells(const PhaseMap& pm, double gauge_m, const std::vector<std::vector<std::size_t>>& cells)
{
    const std::size_t segments = cells.size() - 1;
    DiffPhaseMap dpm;
    dpm.num_frames = pm.num_frames;
    dpm.num_segments = segments;
    dpm.gauge = gauge_m;
    dpm.reference_tap = pm.taps[cells[0].front()];
    dpm.frame_period = pm.frame_period;
    dpm.values.resize(pm.num_frames * segments);
    dpm.bridged.assign(segments, 0);
    for (std::size_t s = 0; s < segments; ++s) {
        const auto a = pm.taps[cells[s].front()], b = pm.taps[cells[s + 1].front()];
        dpm.start_taps.push_back(a);
        dpm.end_taps.push_back(b);
        dpm.positions.push_back(0.5 * double(a + b) * pm.tap_pitch);
    }

    std::vector<double> phase(segments + 1);
    std::vector<uint8_t> was_bridged(segments + 1);
    for (std::size_t f = 0; f < pm.num_frames; ++f) {
        for (std::size_t b = 0; b <= segments; ++b) {
            std::optional<std::size_t> pick;
            for (std::size_t k : cells[b]) {
                if (pm.is_valid(f, k)) {
                    pick = k;
                    break;
                }
            }
            if (!pick) {
                throw Error("differential_phase: no valid taps in gauge cell " + std::to_string(b) + " at frame " +
                            std::to_string(f));
            }
            was_bridged[b] = *pick != cells[b].front();
            phase[b] = pm.at(f, *pick);
        }
        for (std::size_t s = 0; s < segments; ++s) {
            dpm.values[f * segments + s] = phase[s + 1] - phase[s];
            if (was_bridged[s] || was_bridged[s + 1]) ++dpm.bridged[s];
        }
    }

    std::vector<double> series(pm.num_frames);
    for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t f = 0; f < pm.num_frames; ++f) series[f] = dpm.values[f * segments + s];
        unwrap_half_circle(series);
        for (std::size_t f = 0; f < pm.num_frames; ++f) dpm.values[f * segments + s] = series[f];
    }
    return dpm;
}

// Map slots with taps in [lo, hi], ordered by distance to `center`.
std::vector<std::size_t> cell_slots(const PhaseMap& pm, std::size_t lo, std::size_t hi, std::size_t center)
{
    std::vector<std::size_t> slots;
    for (std::size_t k = 0; k < pm.taps.size(); ++k) {
        if (pm.taps[k] >= lo && pm.taps[k] <= hi) slots.push_back(k);
    }
    auto dist = [&](std::size_t k) { return pm.taps[k] > center ? pm.taps[k] - center : center - pm.taps[k]; };
    std::stable_sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
    return slots;
}

}  // namespace

DiffPhaseMap differential_phase(const PhaseMap& pm, double gauge)
{
    const std::size_t ntaps = pm.taps.size();
    if (ntaps == 0 || pm.num_frames == 0) throw Error("differential_phase: empty phase map");
    const std::size_t g = gauge_in_taps(gauge, pm.tap_pitch);

    // Reference: first tap valid in at least half the frames.
    std::optional<std::size_t> ref;
    for (std::size_t k = 0; k < ntaps && !ref; ++k) {
        std::size_t count = 0;
        for (std::size_t f = 0; f < pm.num_frames; ++f) count += pm.is_valid(f, k);
        if (2 * count >= pm.num_frames) ref = k;
    }
    if (!ref) throw Error("differential_phase: no valid reference tap");
    const std::size_t first_tap = pm.taps[*ref];
    const std::size_t last_tap = *std::max_element(pm.taps.begin(), pm.taps.end());
    const std::size_t segments = (last_tap - first_tap) / g;
    if (segments == 0) throw Error("differential_phase: map spans less than one gauge length");

    const std::size_t half = g / 2;
    std::vector<std::vector<std::size_t>> cells(segments + 1);
    for (std::size_t b = 0; b <= segments; ++b) {
        const std::size_t target = first_tap + b * g;
        const std::size_t lo = b == 0 ? first_tap : target - half;
        cells[b] = cell_slots(pm, lo, target + (g - 1 - half), target);
        if (cells[b].empty()) {
            throw Error("differential_phase: no taps in gauge cell around tap " + std::to_string(target));
        }
    }
    return difference_cells(pm, double(g) * pm.tap_pitch, cells);
}

DiffPhaseMap differential_phase(const PhaseMap& pm, double gauge, std::span<const std::size_t> boundary_taps,
                                std::size_t bridge_radius)
{
    if (pm.taps.empty() || pm.num_frames == 0) throw Error("differential_phase: empty phase map");
    if (boundary_taps.size() < 2) throw Error("differential_phase: need at least two boundary taps");
    std::vector<std::vector<std::size_t>> cells;
    for (std::size_t b = 0; b < boundary_taps.size(); ++b) {
        const std::size_t t = boundary_taps[b];
        if (b > 0 && t <= boundary_taps[b - 1]) throw Error("differential_phase: boundary taps must increase");
        auto slots = cell_slots(pm, t > bridge_radius ? t - bridge_radius : 0, t + bridge_radius, t);
        if (slots.empty() || pm.taps[slots.front()] != t) {
            throw Error("differential_phase: boundary tap " + std::to_string(t) + " is not in the phase map");
        }
        cells.push_back(std::move(slots));
    }
    return difference_cells(pm, gauge, cells);
}

std::vector<double> intensity_trace(const JonesMap& jm, double floor_db)
{
    if (jm.num_frames == 0) throw Error("intensity_trace: map holds no frames");
    const std::size_t ntaps = jm.taps.size();
    std::vector<double> acc(ntaps, 0.0);
    for (std::size_t f = 0; f < jm.num_frames; ++f) {
        for (std::size_t k = 0; k < ntaps; ++k) acc[k] += jm.at(f, k).frobenius2();
    }
    std::vector<double> out(ntaps);
    for (std::size_t k = 0; k < ntaps; ++k) {
        const double mean = acc[k] / double(jm.num_frames) / 2.0;
        out[k] = mean > 0 ? std::max(floor_db, 10.0 * std::log10(mean)) : floor_db;
    }
    return out;
}

}  // namespace pmdas::dsp
