#include "pmdas/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pmdas/parallel.hpp"

namespace pmdas::channel {

namespace {

// Substream tags; fixed so that captures stay reproducible across releases.
constexpr uint64_t kTagFiber = 0x6669626572;  // "fiber"
constexpr uint64_t kTagLaser = 0x6c61736572;  // "laser"
constexpr uint64_t kTagAwgn = 0x6177676e;     // "awgn"

// Random SU(2) rotation by angle ~ N(0, strength^2) about a uniform axis.
Jones random_retarder(std::mt19937_64& rng, double strength)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    const double theta = strength * normal(rng);
    double n1 = normal(rng), n2 = normal(rng), n3 = normal(rng);
    const double norm = std::sqrt(n1 * n1 + n2 * n2 + n3 * n3);
    if (norm > 0) {
        n1 /= norm;
        n2 /= norm;
        n3 /= norm;
    } else {
        n1 = 1;
    }
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    const cd alpha(c, -s * n1);
    const cd beta(-s * n3, -s * n2);
    return {alpha, beta, -std::conj(beta), std::conj(alpha)};
}

// Pull an accumulated product back onto SU(2) to stop rounding drift.
Jones reproject_su2(const Jones& m)
{
    cd alpha = 0.5 * (m.xx + std::conj(m.yy));
    cd beta = 0.5 * (m.xy - std::conj(m.yx));
    const double norm = std::sqrt(std::norm(alpha) + std::norm(beta));
    alpha /= norm;
    beta /= norm;
    return {alpha, beta, -std::conj(beta), std::conj(alpha)};
}

double quantize(double v, double full_scale, int bits)
{
    const double levels = std::ldexp(1.0, bits);
    const double step = 2.0 * full_scale / levels;
    double k = std::floor(v / step);
    k = std::clamp(k, -levels / 2, levels / 2 - 1);
    return (k + 0.5) * step;
}

}  // namespace

std::mt19937_64 substream(uint64_t seed, uint64_t tag, uint64_t index)
{
    std::seed_seq seq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(tag), uint32_t(tag >> 32),
                      uint32_t(index), uint32_t(index >> 32)};
    return std::mt19937_64(seq);
}

double FiberSpec::length() const
{
    return std::accumulate(spans.begin(), spans.end(), 0.0, [](double acc, const Span& s) { return acc + s.length; });
}

void FiberSpec::validate() const
{
    if (spans.empty()) throw ConfigError("fiber.spans: at least one span is required");
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const std::string path = "fiber.spans[" + std::to_string(i) + "]";
        if (!(spans[i].length > 0)) throw ConfigError(path + ".length: must be > 0");
        if (!(spans[i].loss_db_per_km >= 0)) throw ConfigError(path + ".loss: must be >= 0");
    }
    const double L = length();
    for (std::size_t i = 0; i < connectors.size(); ++i) {
        const std::string path = "fiber.connectors[" + std::to_string(i) + "]";
        if (!(connectors[i].loss_db >= 0)) throw ConfigError(path + ".loss: must be >= 0");
        if (!(connectors[i].position >= 0 && connectors[i].position <= L)) {
            throw ConfigError(path + ".position: must lie within the fiber");
        }
    }
    if (!(refractive_index > 1 && refractive_index < 2)) {
        throw ConfigError("fiber.refractive_index: must lie in (1, 2)");
    }
    if (!(wavelength > 0)) throw ConfigError("probe.wavelength: must be > 0");
    if (!(photoelastic > 0)) throw ConfigError("fiber.photoelastic: must be > 0");
    if (!(birefringence_strength >= 0)) throw ConfigError("fiber.birefringence: must be >= 0");
    if (!std::isfinite(rayleigh_level_db)) throw ConfigError("fiber.rayleigh_level_db: must be finite");
}

double FiberSpec::one_way_loss_db(double z) const
{
    double loss = 0;
    double start = 0;
    for (const auto& s : spans) {
        const double covered = std::clamp(z - start, 0.0, s.length);
        loss += s.loss_db_per_km * covered / 1000.0;
        start += s.length;
    }
    for (const auto& c : connectors) {
        if (z > c.position) loss += c.loss_db;
    }
    return loss;
}

FiberRealization synthesize_fiber(const FiberSpec& spec, double symbol_rate)
{
    spec.validate();
    if (!(symbol_rate > 0)) throw ConfigError("synthesize_fiber: symbol rate must be > 0");

    FiberRealization fiber;
    fiber.symbol_rate = symbol_rate;
    fiber.length = spec.length();
    fiber.refractive_index = spec.refractive_index;
    fiber.wavelength = spec.wavelength;
    fiber.photoelastic = spec.photoelastic;
    const double cf = fiber_velocity(spec.refractive_index);
    fiber.tap_pitch = cf / (2.0 * symbol_rate);

    const auto m = static_cast<std::size_t>(std::floor(fiber.length / fiber.tap_pitch));
    if (m == 0) throw ConfigError("synthesize_fiber: fiber shorter than one resolution cell");

    auto rng = substream(spec.rng_seed, kTagFiber, 0);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    const double level = std::pow(10.0, spec.rayleigh_level_db / 10.0);

    fiber.taps.reserve(m);
    Jones forward = Jones::identity();
    for (std::size_t i = 1; i <= m; ++i) {
        Tap tap;
        tap.index = i;
        tap.z = double(i) * fiber.tap_pitch;
        tap.delay = 2.0 * tap.z / cf;
        // Round trip: the one-way loss is traversed twice.
        const double power = level * std::pow(10.0, -2.0 * spec.one_way_loss_db(tap.z) / 10.0);
        const double re = normal(rng);
        const double im = normal(rng);
        tap.reflectivity = std::sqrt(power) * cd(re, im);
        forward = reproject_su2(random_retarder(rng, spec.birefringence_strength) * forward);
        tap.forward = forward;
        fiber.taps.push_back(tap);
    }
    return fiber;
}

double PerturbationEvent::elongation(double t) const
{
    return 0.5 * amplitude_pp * std::sin(2.0 * kPi * frequency * t + phase);
}

double photoelastic_phase(double elongation, double refractive_index, double photoelastic, double wavelength)
{
    return elongation * 4.0 * kPi * refractive_index * photoelastic / wavelength;
}

std::vector<Jones> ground_truth_response(const FiberRealization& fiber, std::span<const PerturbationEvent> events,
                                         double t)
{
    std::vector<Jones> h;
    h.reserve(fiber.taps.size());
    for (const auto& tap : fiber.taps) {
        double phase = 0;
        for (const auto& e : events) {
            if (tap.z > e.position) {
                phase += photoelastic_phase(e.elongation(t), fiber.refractive_index, fiber.photoelastic,
                                            fiber.wavelength);
            }
        }
        h.push_back(std::polar(1.0, phase) * tap.round_trip());
    }
    return h;
}

void NoiseSpec::validate() const
{
    if (!(laser_linewidth >= 0) || !std::isfinite(laser_linewidth)) {
        throw ConfigError("noise.linewidth: must be finite and >= 0");
    }
    if (awgn_snr_db && !std::isfinite(*awgn_snr_db)) {
        throw ConfigError("noise.awgn_snr_db: must be finite (omit for a noiseless run)");
    }
    if (adc_bits && (*adc_bits < 8 || *adc_bits > 16)) {
        throw ConfigError("noise.adc_bits: must lie in 8..16");
    }
}

std::vector<double> laser_phase_walk(double linewidth, std::size_t n_samples, double sample_rate, uint64_t seed)
{
    if (linewidth < 0) throw ConfigError("laser_phase_walk: linewidth must be >= 0");
    std::vector<double> phase(n_samples, 0.0);
    if (linewidth == 0 || n_samples == 0) return phase;
    if (!(sample_rate > 0)) throw ConfigError("laser_phase_walk: sample rate must be > 0");
    const double step = std::sqrt(2.0 * kPi * linewidth / sample_rate);
    auto rng = substream(seed, kTagLaser, 0);
    std::normal_distribution<double> normal(0.0, step);
    for (std::size_t i = 1; i < n_samples; ++i) phase[i] = phase[i - 1] + normal(rng);
    return phase;
}

void IQCapture::validate() const
{
    const auto& h = header;
    if (!(h.symbol_rate > 0) || !(h.sample_rate > 0)) throw Error("capture: rates must be > 0");
    const double sps = h.sample_rate / h.symbol_rate;
    if (std::abs(sps - std::round(sps)) > 1e-9 || std::round(sps) < 1) {
        throw Error("capture: sample rate is not an integer multiple of the symbol rate");
    }
    if (h.code_K > 24) throw Error("capture: code_K out of range");
    const std::size_t expected_len = (std::size_t{8} << h.code_K) * std::size_t(std::round(sps));
    if (h.frame_len != expected_len) {
        throw Error("capture: frame_len " + std::to_string(h.frame_len) + " does not match 2*(4*2^K)*sps = " +
                    std::to_string(expected_len));
    }
    const std::size_t total = std::size_t(h.frame_len) * h.num_frames;
    if (x.size() != total || y.size() != total) throw Error("capture: payload size does not match header");
}

BackscatterSimulator::BackscatterSimulator(const codes::ProbeFrame& frame, const FiberRealization& fiber,
                                           std::vector<PerturbationEvent> events, NoiseSpec noise, double duration,
                                           BackscatterOptions options)
    : probe_(frame), events_(std::move(events)), noise_(noise), options_(options)
{
    noise_.validate();
    if (fiber.taps.empty()) throw ConfigError("backscatter: fiber has no taps");
    if (std::abs(fiber.symbol_rate - frame.f_symb) > 1e-9 * frame.f_symb ||
        std::abs(fiber.refractive_index - frame.refractive_index) > 1e-12) {
        throw ConfigError("backscatter: fiber realization was synthesized for a different probe");
    }
    const auto timing = codes::validate_timing(fiber.length, frame, noise_.laser_linewidth);
    if (!timing.lower_bound_ok && !options_.allow_timing_violation) {
        throw TimingError("backscatter: T_code = " + std::to_string(frame.t_code) + " s is not above 4*T_ir = " +
                          std::to_string(4 * timing.t_ir) + " s");
    }
    if (!timing.coherence_ok) {
        warnings_.push_back("T_code exceeds the laser coherence time; phase extraction may be unreliable");
    }

    frame_len_ = frame.length();
    fft_len_ = 2 * frame_len_;
    if (fiber.max_delay() >= frame_len_) {
        throw TimingError("backscatter: channel spread exceeds one frame; cannot synthesize");
    }
    if (!(duration >= 2 * frame.t_code)) {
        throw ConfigError("backscatter: duration must cover at least two frames (" + std::to_string(2 * frame.t_code) +
                          " s)");
    }
    num_frames_ = static_cast<std::size_t>(std::floor(duration / frame.t_code * (1 + 1e-12)));

    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        const std::string path = "events[" + std::to_string(i) + "]";
        if (!(e.position > 0 && e.position < fiber.length)) throw ConfigError(path + ".position: must lie in (0, L)");
        if (!(e.amplitude_pp >= 0)) throw ConfigError(path + ".amplitude_pp: must be >= 0");
        if (!(e.frequency >= 0)) throw ConfigError(path + ".frequency: must be >= 0");
        if (e.frequency >= frame.bw) {
            warnings_.push_back(path + ": frequency " + std::to_string(e.frequency) +
                                " Hz is not below the mechanical bandwidth; it will alias");
        }
    }
    std::stable_sort(events_.begin(), events_.end(),
                     [](const auto& a, const auto& b) { return a.position < b.position; });
    phase_per_meter_ = photoelastic_phase(1.0, fiber.refractive_index, fiber.photoelastic, fiber.wavelength);

    double peak = 0, total = 0;
    for (const auto& tap : fiber.taps) {
        peak = std::max(peak, std::norm(tap.reflectivity));
        total += std::norm(tap.reflectivity);
    }
    noise_var_ = noise_.awgn_snr_db ? peak / std::pow(10.0, *noise_.awgn_snr_db / 10.0) : 0.0;
    adc_full_scale_ = 4.0 * std::sqrt((total + noise_var_) / 2.0);

    fft_ = std::make_shared<const Fft>(fft_len_);
    build_region_spectra(fiber);

    // Input spectra for the noiseless-laser case: the two-frame block seen by
    // frame 0 (nothing before t = 0) and by every later frame.
    const std::array<const std::vector<double>*, 2> streams{&probe_.x_stream, &probe_.y_stream};
    for (std::size_t q = 0; q < 2; ++q) {
        std::vector<cd> block(fft_len_);
        for (std::size_t j = 0; j < fft_len_; ++j) block[j] = (*streams[q])[j % frame_len_];
        steady_input_spectrum_[q].resize(fft_len_);
        fft_->forward(block, steady_input_spectrum_[q]);
        std::fill(block.begin(), block.begin() + std::ptrdiff_t(frame_len_), cd{});
        first_input_spectrum_[q].resize(fft_len_);
        fft_->forward(block, first_input_spectrum_[q]);
    }

    frame_start_phase_.assign(num_frames_ + 1, 0.0);
    if (noise_.laser_linewidth > 0) {
        const double step = std::sqrt(2.0 * kPi * noise_.laser_linewidth / frame.f_symb);
        std::vector<double> sums(num_frames_, 0.0);
        parallel_for(num_frames_, options_.threads, [&](std::size_t f) {
            auto rng = substream(noise_.rng_seed, kTagLaser, f);
            std::normal_distribution<double> normal(0.0, step);
            double s = 0;
            for (std::size_t j = 0; j < frame_len_; ++j) s += normal(rng);
            sums[f] = s;
        });
        for (std::size_t f = 0; f < num_frames_; ++f) frame_start_phase_[f + 1] = frame_start_phase_[f] + sums[f];
    }
}

void BackscatterSimulator::build_region_spectra(const FiberRealization& fiber)
{
    const std::size_t regions = events_.size() + 1;
    std::vector<std::array<std::vector<cd>, 4>> taps(regions);
    for (auto& r : taps) {
        for (auto& e : r) e.assign(fft_len_, cd{});
    }
    for (const auto& tap : fiber.taps) {
        const auto region = static_cast<std::size_t>(std::count_if(
            events_.begin(), events_.end(), [&](const auto& e) { return tap.z > e.position; }));
        const Jones h = tap.round_trip();
        taps[region][0][tap.index] = h.xx;
        taps[region][1][tap.index] = h.xy;
        taps[region][2][tap.index] = h.yx;
        taps[region][3][tap.index] = h.yy;
    }
    region_spectra_.resize(regions);
    for (std::size_t r = 0; r < regions; ++r) {
        for (std::size_t e = 0; e < 4; ++e) {
            region_spectra_[r][e].resize(fft_len_);
            fft_->forward(taps[r][e], region_spectra_[r][e]);
        }
    }
}

double BackscatterSimulator::region_phase(std::size_t region, double t) const
{
    double phase = 0;
    for (std::size_t e = 0; e < region; ++e) phase += phase_per_meter_ * events_[e].elongation(t);
    return phase;
}

// Laser phase over the two-frame block [(f-1) L, (f+1) L).
std::vector<double> BackscatterSimulator::frame_walk(std::size_t f) const
{
    std::vector<double> walk(fft_len_, 0.0);
    const double step = std::sqrt(2.0 * kPi * noise_.laser_linewidth / probe_.f_symb);
    for (std::size_t half = 0; half < 2; ++half) {
        if (half == 0 && f == 0) continue;
        const std::size_t g = f + half - 1;
        auto rng = substream(noise_.rng_seed, kTagLaser, g);
        std::normal_distribution<double> normal(0.0, step);
        double phase = frame_start_phase_[g];
        double* out = walk.data() + half * frame_len_;
        for (std::size_t j = 0; j < frame_len_; ++j) {
            out[j] = phase;
            phase += normal(rng);
        }
    }
    return walk;
}

CaptureHeader BackscatterSimulator::header() const
{
    CaptureHeader h;
    h.sample_rate = probe_.f_symb;
    h.symbol_rate = probe_.f_symb;
    h.frame_len = static_cast<uint32_t>(frame_len_);
    h.num_frames = static_cast<uint32_t>(num_frames_);
    h.code_K = static_cast<uint32_t>(probe_.K);
    return h;
}

void BackscatterSimulator::frame(std::size_t f, std::span<cd> x, std::span<cd> y) const
{
    if (f >= num_frames_) throw Error("backscatter: frame index out of range");
    if (x.size() != frame_len_ || y.size() != frame_len_) throw Error("backscatter: output span size mismatch");

    const std::size_t L = frame_len_, P = fft_len_;
    const bool laser = noise_.laser_linewidth > 0;
    const std::array<const std::vector<double>*, 2> streams{&probe_.x_stream, &probe_.y_stream};

    std::vector<double> walk;
    std::array<std::vector<cd>, 2> owned_input;
    std::array<const std::vector<cd>*, 2> input{};
    if (laser) {
        walk = frame_walk(f);
        std::vector<cd> block(P);
        for (std::size_t q = 0; q < 2; ++q) {
            for (std::size_t j = 0; j < P; ++j) {
                const bool before_start = f == 0 && j < L;
                block[j] = before_start ? cd{} : (*streams[q])[j % L] * std::polar(1.0, -walk[j]);
            }
            owned_input[q].resize(P);
            fft_->forward(block, owned_input[q]);
            input[q] = &owned_input[q];
        }
    } else {
        const auto& src = f == 0 ? first_input_spectrum_ : steady_input_spectrum_;
        input = {&src[0], &src[1]};
    }

    const double t_frame = double(f) * probe_.t_code;
    const std::array<std::span<cd>, 2> out{x, y};
    std::vector<cd> spec(P), time(P);

    // y_p = sum_q h_pq * u_q, element order xx, xy, yx, yy.
    auto accumulate_region = [&](std::size_t r, std::size_t p, cd weight) {
        const auto& hp0 = region_spectra_[r][2 * p];
        const auto& hp1 = region_spectra_[r][2 * p + 1];
        const auto& u0 = *input[0];
        const auto& u1 = *input[1];
        for (std::size_t k = 0; k < P; ++k) spec[k] += weight * (hp0[k] * u0[k] + hp1[k] * u1[k]);
    };

    const double inv_p = 1.0 / double(P);
    for (std::size_t p = 0; p < 2; ++p) {
        if (options_.quasi_static) {
            std::fill(spec.begin(), spec.end(), cd{});
            for (std::size_t r = 0; r < region_spectra_.size(); ++r) {
                accumulate_region(r, p, std::polar(1.0, region_phase(r, t_frame)));
            }
            fft_->inverse(spec, time);
            for (std::size_t m = 0; m < L; ++m) out[p][m] = time[L + m] * inv_p;
        } else {
            std::fill(out[p].begin(), out[p].end(), cd{});
            for (std::size_t r = 0; r < region_spectra_.size(); ++r) {
                std::fill(spec.begin(), spec.end(), cd{});
                accumulate_region(r, p, 1.0);
                fft_->inverse(spec, time);
                for (std::size_t m = 0; m < L; ++m) {
                    const double t = t_frame + double(m) / probe_.f_symb;
                    out[p][m] += std::polar(1.0, region_phase(r, t)) * time[L + m] * inv_p;
                }
            }
        }
        if (laser) {
            for (std::size_t m = 0; m < L; ++m) out[p][m] *= std::polar(1.0, walk[L + m]);
        }
    }

    if (noise_var_ > 0) {
        auto rng = substream(noise_.rng_seed, kTagAwgn, f);
        std::normal_distribution<double> normal(0.0, std::sqrt(noise_var_ / 2.0));
        for (auto& o : out) {
            for (auto& v : o) v += cd(normal(rng), normal(rng));
        }
    }

    if (noise_.adc_bits) {
        const int bits = *noise_.adc_bits;
        for (auto& o : out) {
            for (auto& v : o) {
                v = adc_full_scale_ > 0 ? cd(quantize(v.real(), adc_full_scale_, bits),
                                             quantize(v.imag(), adc_full_scale_, bits))
                                        : cd{};
            }
        }
    }
}

IQCapture BackscatterSimulator::run() const
{
    IQCapture cap;
    cap.header = header();
    cap.x.resize(num_frames_ * frame_len_);
    cap.y.resize(num_frames_ * frame_len_);
    parallel_for(num_frames_, options_.threads, [&](std::size_t f) {
        frame(f, std::span(cap.x).subspan(f * frame_len_, frame_len_),
              std::span(cap.y).subspan(f * frame_len_, frame_len_));
    });
    return cap;
}

IQCapture backscatter(const codes::ProbeFrame& frame, const FiberRealization& fiber,
                      std::span<const PerturbationEvent> events, const NoiseSpec& noise, double duration,
                      BackscatterOptions options)
{
    BackscatterSimulator sim(frame, fiber, std::vector<PerturbationEvent>(events.begin(), events.end()), noise,
                             duration, options);
    return sim.run();
}

}  // namespace pmdas::channel
