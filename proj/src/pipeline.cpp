#include "pmdas/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "pmdas/csv.hpp"
#include "pmdas/parallel.hpp"

namespace pmdas::pipeline {

using nlohmann::json;

namespace {

struct FrameBuffers {
    std::vector<cd> x, y;
};

// Calls fn(row, x, y) for capture frames [first, first + count). Sources that
// cannot be read concurrently are loaded in sequential chunks.
template <typename Fn>
void for_frames(FrameSource& source, std::size_t first, std::size_t count, unsigned threads, Fn&& fn)
{
    const std::size_t len = source.header().frame_len;
    if (source.concurrent()) {
        parallel_for(count, threads, [&](std::size_t i) {
            thread_local FrameBuffers buf;
            buf.x.resize(len);
            buf.y.resize(len);
            source.frame(first + i, buf.x, buf.y);
            fn(i, std::span<const cd>(buf.x), std::span<const cd>(buf.y));
        });
        return;
    }
    const std::size_t chunk = 4 * std::size_t(resolve_threads(threads));
    std::vector<FrameBuffers> bufs(std::min(chunk, count));
    for (auto& b : bufs) {
        b.x.resize(len);
        b.y.resize(len);
    }
    for (std::size_t start = 0; start < count; start += chunk) {
        const std::size_t n = std::min(chunk, count - start);
        for (std::size_t i = 0; i < n; ++i) source.frame(first + start + i, bufs[i].x, bufs[i].y);
        parallel_for(n, threads, [&](std::size_t i) {
            fn(start + i, std::span<const cd>(bufs[i].x), std::span<const cd>(bufs[i].y));
        });
    }
}

dsp::JonesMap estimate_rows(FrameSource& source, const dsp::JonesEstimator& est, std::vector<std::size_t> taps,
                            std::size_t rows, const dsp::JonesMap& geometry, unsigned threads)
{
    dsp::JonesMap jm;
    jm.first_frame = channel::kTransientFrames;
    jm.num_frames = rows;
    jm.frame_period = geometry.frame_period;
    jm.tap_pitch = geometry.tap_pitch;
    jm.taps = std::move(taps);
    const std::size_t ntaps = jm.taps.size();
    jm.values.resize(rows * ntaps);
    for_frames(source, jm.first_frame, rows, threads, [&](std::size_t row, std::span<const cd> x, std::span<const cd> y) {
        est.estimate(x, y, jm.taps, std::span(jm.values).subspan(row * ntaps, ntaps));
    });
    return jm;
}

double sample_stddev(std::span<const double> v)
{
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / double(v.size() - 1));
}

config::RunConfig single_event_run(const config::RunConfig& base, double position, double frequency, double amplitude,
                                   double window, uint64_t seed)
{
    config::RunConfig run = base;
    run.events.clear();
    if (amplitude > 0) run.events.push_back({position, 1.0, amplitude, frequency, 0.0});
    run.noise.rng_seed = seed;
    run.sensitivity.reset();
    const auto frame = base.probe_frame();
    run.simulation.duration = window + double(channel::kTransientFrames + 1) * frame.t_code;
    return run;
}

std::vector<double> window_series(const dsp::DiffPhaseMap& dpm, double position, double window)
{
    const std::size_t s = dpm.segment_at(position);
    const auto n = static_cast<std::size_t>(std::llround(window / dpm.frame_period));
    if (n < 3 || n > dpm.num_frames) throw ConfigError("window does not fit the processed record");
    auto series = dpm.series(s);
    series.resize(n);
    return series;
}

bool wants(const config::RunConfig& cfg, const std::string& format)
{
    return std::find(cfg.outputs.formats.begin(), cfg.outputs.formats.end(), format) != cfg.outputs.formats.end();
}

}  // namespace

void MemorySource::frame(std::size_t f, std::span<cd> x, std::span<cd> y)
{
    const auto fx = capture_.frame_x(f), fy = capture_.frame_y(f);
    std::copy(fx.begin(), fx.end(), x.begin());
    std::copy(fy.begin(), fy.end(), y.begin());
}

ProcessOptions process_options(const config::RunConfig& cfg)
{
    ProcessOptions o;
    o.fiber_length = cfg.fiber.length();
    o.refractive_index = cfg.fiber.refractive_index;
    o.gauge = cfg.processing.gauge;
    o.tap_selection = cfg.processing.tap_selection;
    o.survey_frames = cfg.processing.survey_frames;
    o.threads = cfg.simulation.threads;
    return o;
}

ProcessResult process(FrameSource& source, const codes::OrthogonalCodeSet& set, const ProcessOptions& options)
{
    const auto h = source.header();
    const auto sps = static_cast<std::size_t>(std::llround(h.sample_rate / h.symbol_rate));
    if (sps == 0 || h.code_K != uint32_t(set.K) || h.frame_len != 2 * set.size() * sps) {
        throw ConfigError("process: capture header does not match the configured code set");
    }
    if (h.num_frames <= channel::kTransientFrames + 1) {
        throw ConfigError("process: capture holds fewer than two steady-state frames");
    }
    const dsp::JonesEstimator est(set, sps);

    dsp::JonesMap geometry;
    geometry.frame_period = double(h.frame_len) / h.sample_rate;
    geometry.tap_pitch = fiber_velocity(options.refractive_index) / (2.0 * h.symbol_rate);
    std::size_t max_tap = est.max_unambiguous_tap();
    if (options.fiber_length > 0) {
        max_tap = std::min(max_tap, static_cast<std::size_t>(std::floor(options.fiber_length / geometry.tap_pitch + 1e-9)));
    }
    if (max_tap < 2) throw ConfigError("process: fiber shorter than two resolution cells");
    const std::size_t rows = h.num_frames - channel::kTransientFrames;
    const std::size_t g = dsp::gauge_in_taps(options.gauge, geometry.tap_pitch);

    ProcessResult r;
    std::vector<std::size_t> all(max_tap);
    std::iota(all.begin(), all.end(), std::size_t{1});
    r.survey = estimate_rows(source, est, all, std::min(std::max<std::size_t>(options.survey_frames, 1), rows),
                             geometry, options.threads);
    r.intensity_db = dsp::intensity_trace(r.survey);

    if (options.tap_selection == "strongest") {
        r.boundaries = dsp::strongest_gauge_taps(r.survey, 1, max_tap, g);
    } else if (options.tap_selection == "uniform") {
        r.boundaries = dsp::uniform_gauge_taps(1, max_tap, g);
    } else {
        throw ConfigError("process: unknown tap selection \"" + options.tap_selection + "\"");
    }
    if (r.boundaries.size() < 2) throw ConfigError("process: gauge length exceeds the monitored fiber");

    std::vector<std::size_t> keep;
    for (std::size_t b : r.boundaries) {
        const std::size_t lo = b > options.bridge_radius ? std::max<std::size_t>(1, b - options.bridge_radius) : 1;
        for (std::size_t t = lo; t <= std::min(max_tap, b + options.bridge_radius); ++t) keep.push_back(t);
    }
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());

    r.selected = estimate_rows(source, est, std::move(keep), rows, geometry, options.threads);
    r.phase = dsp::extract_phase_map(r.selected);
    r.diff = dsp::differential_phase(r.phase, double(g) * geometry.tap_pitch, r.boundaries, options.bridge_radius);
    return r;
}

std::vector<double> psd_positions(const config::RunConfig& cfg)
{
    if (!cfg.processing.psd_positions.empty()) return cfg.processing.psd_positions;
    std::vector<double> ev;
    for (const auto& e : cfg.events) ev.push_back(e.position);
    std::sort(ev.begin(), ev.end());
    std::vector<double> out = ev;
    const double L = cfg.fiber.length();
    if (ev.empty()) {
        out.push_back(0.5 * L);
    } else if (ev.size() == 1) {
        out.push_back(ev[0] > 0.5 * L ? 0.5 * ev[0] : 0.5 * (ev[0] + L));
    } else {
        std::size_t gap = 0;
        for (std::size_t i = 1; i + 1 < ev.size(); ++i) {
            if (ev[i + 1] - ev[i] > ev[gap + 1] - ev[gap]) gap = i;
        }
        out.push_back(0.5 * (ev[gap] + ev[gap + 1]));
    }
    return out;
}

AnalysisResult analyze(const dsp::DiffPhaseMap& dpm, const config::RunConfig& cfg)
{
    AnalysisResult r;
    r.profile = analysis::stddev_profile(dpm, cfg.processing.window);
    analysis::DetectOptions d;
    d.k = cfg.processing.detect_k;
    d.min_stddev = cfg.processing.min_event_stddev;
    d.psd_window = cfg.processing.psd_window;
    r.detection_threshold = analysis::detection_threshold(r.profile, d);
    r.events = analysis::detect_events(r.profile, dpm, d);
    for (double z : psd_positions(cfg)) {
        std::optional<double> tone;
        for (const auto& e : cfg.events) {
            if (std::abs(e.position - z) <= 0.5 * dpm.gauge) tone = e.frequency;
        }
        r.spectra.push_back(analysis::psd(dpm, z, cfg.processing.psd_window, tone));
    }
    return r;
}

std::unique_ptr<channel::BackscatterSimulator> make_simulator(const config::RunConfig& cfg,
                                                               const codes::ProbeFrame& frame,
                                                               const channel::FiberRealization& fiber)
{
    channel::BackscatterOptions o;
    o.quasi_static = cfg.simulation.quasi_static;
    o.threads = cfg.simulation.threads;
    return std::make_unique<channel::BackscatterSimulator>(frame, fiber, cfg.events, cfg.noise, cfg.simulation.duration,
                                                           o);
}

dsp::DiffPhaseMap simulate_and_process(const config::RunConfig& cfg)
{
    const auto set = codes::make_code_set(cfg.probe.K);
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    const auto sim = make_simulator(cfg, frame, fiber);
    SimulatorSource source(*sim);
    return process(source, set, process_options(cfg)).diff;
}

analysis::SensitivityCurve sensitivity_sweep(const config::RunConfig& base, const std::vector<double>& amplitudes,
                                             const SweepOptions& options)
{
    if (!std::is_sorted(amplitudes.begin(), amplitudes.end())) {
        throw ConfigError("sensitivity_sweep: amplitudes must be sorted ascending");
    }
    analysis::SensitivityCurve curve;
    curve.position = options.position;
    curve.frequency = options.frequency;
    curve.window = options.window;
    curve.noise_floor_stddev = noise_floor(base, options.position, options.window, base.noise.awgn_snr_db);
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        const auto run = single_event_run(base, options.position, options.frequency, amplitudes[i], options.window,
                                          base.noise.rng_seed + 1 + i);
        const auto dpm = simulate_and_process(run);
        const auto series = window_series(dpm, options.position, options.window);
        analysis::SensitivityPoint p;
        p.dl_pp = amplitudes[i];
        p.measured_phase_pp = analysis::sine_fit_peak_to_peak(series, 1.0 / dpm.frame_period, options.frequency);
        p.theory_phase_pp =
            analysis::theory_phase(amplitudes[i], base.fiber.refractive_index, base.fiber.photoelastic,
                                   base.fiber.wavelength);
        p.below_detection = p.theory_phase_pp < options.detection_factor * curve.noise_floor_stddev;
        curve.points.push_back(p);
    }
    return curve;
}

double noise_floor(const config::RunConfig& base, double position, double window, std::optional<double> snr_db)
{
    auto run = single_event_run(base, position, 0.0, 0.0, window, base.noise.rng_seed + 1000);
    run.noise.awgn_snr_db = snr_db;
    const auto dpm = simulate_and_process(run);
    return sample_stddev(window_series(dpm, position, window));
}

double calibrate_awgn_snr(const config::RunConfig& base, double position, double window, double target_stddev,
                          double lo_db, double hi_db, int iterations)
{
    if (!(target_stddev > 0)) throw ConfigError("calibrate_awgn_snr: target must be > 0");
    // The floor falls as SNR rises; keep lo on the noisy side of the target.
    for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo_db + hi_db);
        if (noise_floor(base, position, window, mid) > target_stddev) {
            lo_db = mid;
        } else {
            hi_db = mid;
        }
    }
    return 0.5 * (lo_db + hi_db);
}

void write_process_outputs(const std::filesystem::path& dir, const ProcessResult& r, const config::RunConfig& cfg)
{
    std::filesystem::create_directories(dir);
    io::write_intensity_csv(dir / "intensity.csv", r.survey.taps, r.intensity_db, r.survey.tap_pitch);
    io::write_jones_csv(dir / "jones.csv", r.selected);
    io::write_phase_csv(dir / "phase.csv", r.phase);
    io::write_diff_phase(dir, r.diff);
    json meta;
    meta["config"] = json::parse(config::to_json(cfg));
    meta["tap_pitch"] = r.survey.tap_pitch;
    meta["frame_period"] = r.survey.frame_period;
    meta["survey_frames"] = r.survey.num_frames;
    meta["processed_frames"] = r.selected.num_frames;
    meta["first_capture_frame"] = r.selected.first_frame;
    meta["max_tap"] = r.survey.taps.back();
    meta["tap_selection"] = cfg.processing.tap_selection;
    meta["boundary_taps"] = r.boundaries;
    meta["fade_threshold"] = dsp::kFadeThreshold;
    io::write_text(dir / "process.json", meta.dump(2) + "\n");
}

void write_analysis_outputs(const std::filesystem::path& dir, const AnalysisResult& r, const config::RunConfig& cfg)
{
    std::filesystem::create_directories(dir);
    io::write_profile_csv(dir / "profile.csv", r.profile);
    io::write_events_csv(dir / "events.csv", r.events);
    json spectra = json::array();
    for (std::size_t i = 0; i < r.spectra.size(); ++i) {
        const auto& s = r.spectra[i];
        const std::string name = "psd_" + std::to_string(i) + ".csv";
        io::write_psd_csv(dir / name, s);
        json e{{"file", name},
               {"position", s.position},
               {"segment", s.segment},
               {"bin_spacing", s.bin_spacing},
               {"averaged_segments", s.averaged_segments}};
        if (s.tone_frequency) {
            e["tone_frequency"] = *s.tone_frequency;
            e["tone_snr_db"] = s.tone_snr_db;
        }
        spectra.push_back(e);
    }
    json meta;
    meta["stddev_window"] = r.profile.window;
    meta["stddev_frames"] = r.profile.frames;
    meta["psd_window"] = cfg.processing.psd_window;
    meta["psd_overlap"] = 0.5;
    meta["taper"] = analysis::kTaperName;
    meta["taper_half_width_bins"] = analysis::kTaperHalfWidthBins;
    meta["detect_k"] = cfg.processing.detect_k;
    meta["min_event_stddev"] = cfg.processing.min_event_stddev;
    meta["detection_threshold"] = r.detection_threshold;
    meta["magnitude_estimator"] = "p99 - p1";
    meta["fiber_seed"] = cfg.fiber.rng_seed;
    meta["noise_seed"] = cfg.noise.rng_seed;
    meta["spectra"] = spectra;
    io::write_text(dir / "analysis.json", meta.dump(2) + "\n");
}

namespace {

void run_sensitivity(const std::filesystem::path& dir, const config::RunConfig& cfg)
{
    const auto& s = *cfg.sensitivity;
    config::RunConfig base = cfg;
    std::optional<double> calibrated;
    if (s.target_floor) {
        calibrated = calibrate_awgn_snr(cfg, s.position, s.window, *s.target_floor);
        base.noise.awgn_snr_db = calibrated;
    }
    const auto curve = sensitivity_sweep(base, s.amplitudes, {s.position, s.frequency, s.window, s.detection_factor});
    io::write_sensitivity_csv(dir / "sensitivity.csv", curve);
    json meta{{"position", curve.position},
              {"frequency", curve.frequency},
              {"window", curve.window},
              {"noise_floor_stddev", curve.noise_floor_stddev},
              {"detection_factor", s.detection_factor},
              {"measured_estimator", "sine fit at the drive frequency"},
              {"awgn_snr_db", base.noise.awgn_snr_db ? json(*base.noise.awgn_snr_db) : json(nullptr)},
              {"calibrated", calibrated.has_value()},
              {"floor_seed", base.noise.rng_seed + 1000},
              {"first_run_seed", base.noise.rng_seed + 1}};
    io::write_text(dir / "sensitivity.json", meta.dump(2) + "\n");
}

}  // namespace

void simulate_to_file(const config::RunConfig& cfg, const std::filesystem::path& capture_path)
{
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    const auto sim = make_simulator(cfg, frame, fiber);
    if (capture_path.has_parent_path()) std::filesystem::create_directories(capture_path.parent_path());
    io::CaptureWriter writer(capture_path, sim->header());
    const std::size_t len = sim->frame_length();
    const std::size_t chunk = 4 * std::size_t(resolve_threads(cfg.simulation.threads));
    std::vector<FrameBuffers> bufs(chunk);
    for (auto& b : bufs) {
        b.x.resize(len);
        b.y.resize(len);
    }
    for (std::size_t start = 0; start < sim->num_frames(); start += chunk) {
        const std::size_t n = std::min(chunk, sim->num_frames() - start);
        parallel_for(n, cfg.simulation.threads, [&](std::size_t i) { sim->frame(start + i, bufs[i].x, bufs[i].y); });
        for (std::size_t i = 0; i < n; ++i) writer.write_frame(bufs[i].x, bufs[i].y);
    }
    writer.close();
}

std::vector<std::string> run_pipeline(const config::RunConfig& cfg)
{
    auto warnings = config::validate(cfg);
    const auto dir = cfg.outputs.directory;
    std::filesystem::create_directories(dir);
    io::write_text(dir / "config.json", config::to_json(cfg) + "\n");

    const auto set = codes::make_code_set(cfg.probe.K);
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    io::write_ground_truth_csv(dir / "ground_truth.csv", fiber);

    ProcessResult pr;
    if (wants(cfg, "capture")) {
        const auto path = dir / "capture.dasiq";
        simulate_to_file(cfg, path);
        CaptureFileSource source(path);
        pr = process(source, set, process_options(cfg));
    } else {
        const auto sim = make_simulator(cfg, frame, fiber);
        for (const auto& w : sim->warnings()) warnings.push_back(w);
        SimulatorSource source(*sim);
        pr = process(source, set, process_options(cfg));
    }
    write_process_outputs(dir, pr, cfg);
    write_analysis_outputs(dir, analyze(pr.diff, cfg), cfg);
    if (cfg.sensitivity) run_sensitivity(dir, cfg);
    return warnings;
}

void run_analysis_stage(const std::filesystem::path& dir, const config::RunConfig& cfg)
{
    const auto dpm = io::read_diff_phase(dir);
    write_analysis_outputs(dir, analyze(dpm, cfg), cfg);
    if (cfg.sensitivity) run_sensitivity(dir, cfg);
}

}  // namespace pmdas::pipeline
