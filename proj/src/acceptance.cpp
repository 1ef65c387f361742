#include "pmdas/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <random>
#include <sstream>
#include <unistd.h>

#include "pmdas/analysis.hpp"
#include "pmdas/codes.hpp"
#include "pmdas/config.hpp"
#include "pmdas/dsp.hpp"
#include "pmdas/fft.hpp"
#include "pmdas/pipeline.hpp"

namespace pmdas::acceptance {

namespace {

using channel::PerturbationEvent;

// Aperiodic correlation through a zero-padded FFT, rounded to integers.
// Independent of the integer kernel in codes.
std::vector<int64_t> fft_correlation(const codes::BipolarSequence& x, const codes::BipolarSequence& y)
{
    const std::size_t n = x.size();
    std::size_t m = 1;
    while (m < 2 * n) m <<= 1;
    Fft fft(m);
    std::vector<cd> a(m), b(m), fa(m), fb(m), out(m);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = double(x[i]);
        b[i] = double(y[i]);
    }
    fft.forward(a, fa);
    fft.forward(b, fb);
    for (std::size_t k = 0; k < m; ++k) fa[k] *= std::conj(fb[k]);
    fft.inverse(fa, out);
    // out[k] = m * sum_i x[i + k] y[i] (circular); lag k < 0 lives at m + k.
    std::vector<int64_t> r(2 * n - 1);
    for (std::ptrdiff_t k = -std::ptrdiff_t(n - 1); k < std::ptrdiff_t(n); ++k) {
        const auto idx = std::size_t(k < 0 ? std::ptrdiff_t(m) + k : k);
        r[std::size_t(k + std::ptrdiff_t(n) - 1)] = std::llround(out[idx].real() / double(m));
    }
    return r;
}

// Direct time-domain tap sum: y_p[n] = sum_i sum_q H_pq(i, t) s_q[n - d_i],
// with zero input before the first sample.
void tap_sum_frame(const codes::ProbeFrame& frame, const channel::FiberRealization& fiber,
                   std::span<const PerturbationEvent> events, bool quasi_static, std::size_t f, std::span<cd> x,
                   std::span<cd> y)
{
    const std::size_t L = frame.length();
    std::fill(x.begin(), x.end(), cd{});
    std::fill(y.begin(), y.end(), cd{});
    auto stream = [&](int q, long long n) -> double {
        if (n < 0) return 0.0;
        const auto& s = q == 0 ? frame.x_stream : frame.y_stream;
        return s[std::size_t(n) % L];
    };
    std::vector<Jones> h;
    const double t_frame = double(f) * frame.t_code;
    if (quasi_static) h = channel::ground_truth_response(fiber, events, t_frame);
    for (std::size_t m = 0; m < L; ++m) {
        if (!quasi_static) h = channel::ground_truth_response(fiber, events, t_frame + double(m) / frame.f_symb);
        const long long n = static_cast<long long>(f * L + m);
        cd ax{}, ay{};
        for (std::size_t i = 0; i < fiber.taps.size(); ++i) {
            const long long src = n - static_cast<long long>(fiber.taps[i].index);
            const double sx = stream(0, src), sy = stream(1, src);
            ax += h[i].xx * sx + h[i].xy * sy;
            ay += h[i].yx * sx + h[i].yy * sy;
        }
        x[m] = ax;
        y[m] = ay;
    }
}

double max_abs(std::span<const cd> v)
{
    double m = 0;
    for (const auto& c : v) m = std::max(m, std::abs(c));
    return m;
}

channel::NoiseSpec noiseless()
{
    channel::NoiseSpec n;
    n.laser_linewidth = 0;
    return n;
}

config::RunConfig noiseless_desk()
{
    auto cfg = config::desk_scenario();
    cfg.noise = noiseless();
    cfg.events.clear();
    return cfg;
}

// Max over taps of ||H_est - H_true||_F / ||H_true||_F.
double max_relative_error(std::span<const Jones> est, std::span<const Jones> truth)
{
    double worst = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        worst = std::max(worst, std::sqrt((est[i] - truth[i]).frobenius2() / truth[i].frobenius2()));
    }
    return worst;
}

// Estimated Jones matrices of steady-state frame 1 for taps 1..max_tap.
std::vector<Jones> estimate_frame(const codes::OrthogonalCodeSet& set, const channel::IQCapture& cap,
                                  std::size_t max_tap)
{
    dsp::JonesEstimator est(set);
    std::vector<std::size_t> taps(max_tap);
    for (std::size_t t = 0; t < max_tap; ++t) taps[t] = t + 1;
    std::vector<Jones> out(max_tap);
    est.estimate(cap.frame_x(1), cap.frame_y(1), taps, out);
    return out;
}

// Desk two-event scenario, simulated and processed once.
struct TwoTone {
    config::RunConfig cfg;
    dsp::DiffPhaseMap dpm;
    pipeline::AnalysisResult result;
};

const TwoTone& two_tone()
{
    static const TwoTone tt = [] {
        TwoTone t;
        t.cfg = config::desk_scenario();
        t.dpm = pipeline::simulate_and_process(t.cfg);
        t.result = pipeline::analyze(t.dpm, t.cfg);
        return t;
    }();
    return tt;
}

bool check_code_identities(std::ostream& d)
{
    bool ok = true;
    for (int K = 0; K <= 14; ++K) {
        const auto s = codes::make_code_set(K);
        const auto rep = codes::verify_code_set(s);
        const std::size_t N = s.size();
        const auto axx = fft_correlation(s.pair_x.a, s.pair_x.a), bxx = fft_correlation(s.pair_x.b, s.pair_x.b);
        const auto ayy = fft_correlation(s.pair_y.a, s.pair_y.a), byy = fft_correlation(s.pair_y.b, s.pair_y.b);
        const auto cxa = fft_correlation(s.pair_x.a, s.pair_y.a), cxb = fft_correlation(s.pair_x.b, s.pair_y.b);
        bool oracle = true;
        for (std::size_t k = 0; k < 2 * N - 1; ++k) {
            const int64_t expect = k == N - 1 ? int64_t(2 * N) : 0;
            oracle = oracle && axx[k] + bxx[k] == expect && ayy[k] + byy[k] == expect && cxa[k] + cxb[k] == 0;
        }
        if (!rep.ok() || !oracle) {
            d << "K=" << K << " verify=" << rep.ok() << " oracle=" << oracle << "; ";
            ok = false;
        }
    }
    d << "K=0..14 verified by the integer checker and an FFT oracle";
    return ok;
}

bool check_timing(std::ostream& d)
{
    const auto field = config::field_scenario();
    const auto frame = field.probe_frame();
    const auto rep = codes::validate_timing(26000.0, frame, field.noise.laser_linewidth);
    const bool tcode = std::abs(frame.t_code - 1.048576e-3) < 1e-12;
    const bool bw = std::abs(frame.bw - 476.837158203125) < 1e-6 && std::abs(frame.bw / 475.0 - 1.0) < 0.005;
    const bool tir = std::abs(4 * rep.t_ir - 1.006e-3) < 0.001e-3 && rep.lower_bound_ok;
    bool accepted = true;
    try {
        config::validate(field);
    } catch (const Error&) {
        accepted = false;
    }
    auto longer = field;
    longer.fiber.spans = {{30000.0, 0.2}};
    longer.fiber.connectors.clear();
    longer.events = {{900.0, 0.55, 1e-7, 300.0, 0.0}};
    bool rejected = false;
    try {
        config::validate(longer);
    } catch (const TimingError&) {
        rejected = true;
    }
    d << std::setprecision(7) << "T_code=" << frame.t_code * 1e3 << " ms BW=" << frame.bw << " Hz 4T_ir(26km)="
      << 4 * rep.t_ir * 1e3 << " ms; 26 km accepted=" << accepted << ", 30 km rejected=" << rejected;
    return tcode && bw && tir && accepted && rejected;
}

bool check_reconstruction(std::ostream& d)
{
    auto cfg = noiseless_desk();
    const auto set = codes::make_code_set(cfg.probe.K);
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    const auto cap = channel::backscatter(frame, fiber, {}, noiseless(), 3 * frame.t_code);
    const auto truth = channel::ground_truth_response(fiber, {}, frame.t_code);
    const double err = max_relative_error(estimate_frame(set, cap, fiber.taps.size()), truth);

    // Stretch the fiber until 4 T_ir exceeds T_code.
    cfg.fiber.spans = {{4000.0, 0.2}};
    cfg.fiber.connectors.clear();
    const auto rep = codes::validate_timing(cfg.fiber.length(), frame, 0);
    const auto long_fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    channel::BackscatterOptions o;
    o.allow_timing_violation = true;
    const auto bad = channel::backscatter(frame, long_fiber, {}, noiseless(), 3 * frame.t_code, o);
    const std::size_t half = set.size() / 2;
    const auto bad_truth = channel::ground_truth_response(long_fiber, {}, frame.t_code);
    const double bad_err = max_relative_error(estimate_frame(set, bad, half), std::span(bad_truth).first(half));
    d << std::scientific << std::setprecision(2) << "2 km: " << err << " (" << fiber.taps.size()
      << " taps); 4 km (lower bound ok=" << rep.lower_bound_ok << "): " << bad_err;
    return err < 1e-9 && !rep.lower_bound_ok && bad_err > 1e-3;
}

bool check_photoelastic(std::ostream& d)
{
    bool ok = true;
    d << std::setprecision(4);
    for (double dl : {50e-9, 100e-9, 200e-9}) {
        auto cfg = noiseless_desk();
        cfg.events = {{700.0, 1.0, dl, 100.0, 0.0}};
        cfg.simulation.duration = 0.2 + 2 * cfg.probe_frame().t_code;
        const auto dpm = pipeline::simulate_and_process(cfg);
        const auto n = static_cast<std::size_t>(std::llround(0.2 / dpm.frame_period));
        auto series = dpm.series(dpm.segment_at(700.0));
        series.resize(n);
        const double measured = analysis::peak_to_peak_percentile(series);
        const double theory = analysis::theory_phase(dl);
        ok = ok && std::abs(measured / theory - 1.0) < 0.05;
        d << dl * 1e9 << " nm: " << measured << "/" << theory << " rad; ";
    }
    return ok;
}

bool check_two_tone(std::ostream& d)
{
    const auto& tt = two_tone();
    const auto& ev = tt.result.events;
    const double bin = 1.0 / tt.cfg.processing.psd_window;
    bool ok = ev.size() == 2;
    d << std::setprecision(5) << ev.size() << " events";
    for (std::size_t i = 0; i < ev.size(); ++i) {
        d << " [" << ev[i].position << " m, " << ev[i].frequency << " Hz]";
        if (ok) {
            const auto& truth = tt.cfg.events[i];
            ok = ok && std::abs(ev[i].position - truth.position) <= tt.cfg.processing.gauge &&
                 std::abs(ev[i].frequency - truth.frequency) <= bin;
        }
    }
    // Unperturbed segment midway between the events.
    const double quiet = 0.5 * (tt.cfg.events[0].position + tt.cfg.events[1].position);
    const auto r = analysis::psd(tt.dpm, quiet, tt.cfg.processing.psd_window);
    const double med = analysis::median(r.psd_db);
    d << "; quiet " << r.position << " m, median " << med << " dB:";
    for (const auto& e : tt.cfg.events) {
        const auto k = static_cast<std::size_t>(std::llround(e.frequency / r.bin_spacing));
        d << " " << e.frequency << " Hz at " << r.psd_db[k] - med << " dB";
        ok = ok && r.psd_db[k] < med + 10.0;
    }
    return ok;
}

bool check_stddev_ratio(std::ostream& d)
{
    const auto& tt = two_tone();
    const auto& p = tt.result.profile;
    const double a = p.stddev[tt.dpm.segment_at(tt.cfg.events[0].position)];
    const double b = p.stddev[tt.dpm.segment_at(tt.cfg.events[1].position)];
    const double ratio = a / b;
    d << std::setprecision(4) << "StDv " << a << " / " << b << " = " << ratio;
    return std::abs(ratio / 0.414 - 1.0) < 0.10;
}

struct Line {
    double slope = 0, intercept = 0;
};

Line fit(const std::vector<double>& z, const std::vector<double>& v)
{
    const double n = double(z.size());
    double sz = 0, sv = 0, szz = 0, szv = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        sz += z[i];
        sv += v[i];
        szz += z[i] * z[i];
        szv += z[i] * v[i];
    }
    Line l;
    l.slope = (n * szv - sz * sv) / (n * szz - sz * sz);
    l.intercept = (sv - l.slope * sz) / n;
    return l;
}

bool check_loss(std::ostream& d)
{
    constexpr std::size_t kSeeds = 1024;
    auto cfg = noiseless_desk();
    cfg.fiber.spans = {{1000.0, 0.2}, {1000.0, 0.2}};
    cfg.fiber.connectors = {{1000.0, 1.0}};
    const auto set = codes::make_code_set(cfg.probe.K);
    const auto frame = cfg.probe_frame();
    std::vector<double> power;
    double pitch = 0;
    for (std::size_t s = 0; s < kSeeds; ++s) {
        cfg.fiber.rng_seed = 5000 + s;
        const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
        pitch = fiber.tap_pitch;
        const auto cap = channel::backscatter(frame, fiber, {}, noiseless(), 2.5 * frame.t_code);
        dsp::JonesMap jm;
        jm.num_frames = 1;
        jm.taps.resize(fiber.taps.size());
        for (std::size_t t = 0; t < jm.taps.size(); ++t) jm.taps[t] = t + 1;
        jm.values = estimate_frame(set, cap, fiber.taps.size());
        const auto trace = dsp::intensity_trace(jm);
        power.resize(trace.size());
        for (std::size_t t = 0; t < trace.size(); ++t) power[t] += std::pow(10.0, trace[t] / 10.0) / double(kSeeds);
    }
    // Fit each span away from its ends, in dB against km.
    std::array<std::vector<double>, 2> z, v;
    for (std::size_t t = 0; t < power.size(); ++t) {
        const double zt = double(t + 1) * pitch;
        const int span = zt < 1000.0 ? 0 : 1;
        const double from = span == 0 ? 0.0 : 1000.0;
        if (zt < from + 20.0 || zt > from + 980.0) continue;
        z[span].push_back(zt / 1000.0);
        v[span].push_back(10.0 * std::log10(power[t]));
    }
    const Line a = fit(z[0], v[0]), b = fit(z[1], v[1]);
    const double step = (a.intercept + a.slope) - (b.intercept + b.slope);
    d << std::setprecision(4) << kSeeds << " seeds: slopes " << a.slope << ", " << b.slope
      << " dB/km; 1 dB connector step " << step << " dB";
    return std::abs(a.slope + 0.4) <= 0.05 && std::abs(b.slope + 0.4) <= 0.05 && std::abs(step - 2.0) <= 0.1;
}

bool check_correlator_oracle(std::ostream& d)
{
    std::mt19937_64 rng(42);
    std::normal_distribution<double> normal;
    double worst = 0;
    for (int K : {0, 4, 7, 10}) {
        const auto set = codes::make_code_set(K);
        const auto frame = codes::build_probe_frame(set, 125e6);
        std::vector<cd> r(frame.length());
        for (auto& v : r) v = cd(normal(rng), normal(rng));
        for (const auto* ref : {&frame.x_stream, &frame.y_stream}) {
            const auto direct = dsp::circular_correlate_direct(r, *ref, r.size());
            std::vector<cd> fast(r.size());
            dsp::CircularCorrelator(*ref).correlate(r, fast);
            double diff = 0;
            for (std::size_t k = 0; k < r.size(); ++k) diff = std::max(diff, std::abs(fast[k] - direct[k]));
            worst = std::max(worst, diff / max_abs(direct));
        }
    }
    // Whole estimator on a noisy simulated frame, N = 4096.
    auto cfg = config::desk_scenario();
    cfg.probe.K = 10;
    cfg.fiber.spans = {{1500.0, 0.2}};
    cfg.fiber.connectors.clear();
    cfg.events = {{700.0, 1.0, 1e-7, 300.0, 0.0}};
    const auto set = codes::make_code_set(cfg.probe.K);
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    const auto cap = channel::backscatter(frame, fiber, cfg.events, cfg.noise, 3 * frame.t_code);
    std::vector<std::size_t> taps(set.size() / 2 + 1);
    for (std::size_t t = 0; t < taps.size(); ++t) taps[t] = t;
    std::vector<Jones> fast(taps.size()), slow(taps.size());
    dsp::JonesEstimator(set, 1, false).estimate(cap.frame_x(1), cap.frame_y(1), taps, fast);
    dsp::JonesEstimator(set, 1, true).estimate(cap.frame_x(1), cap.frame_y(1), taps, slow);
    double scale = 0, diff = 0;
    for (std::size_t t = 0; t < taps.size(); ++t) {
        scale = std::max(scale, std::sqrt(slow[t].frobenius2()));
        diff = std::max(diff, std::sqrt((fast[t] - slow[t]).frobenius2()));
    }
    d << std::scientific << std::setprecision(2) << "correlator " << worst << ", estimator " << diff / scale;
    return worst < 1e-12 && diff / scale < 1e-12;
}

double synthesis_error(const codes::ProbeFrame& frame, const channel::FiberRealization& fiber,
                       const std::vector<PerturbationEvent>& events, bool quasi_static, std::size_t frames)
{
    channel::BackscatterOptions o;
    o.quasi_static = quasi_static;
    channel::BackscatterSimulator sim(frame, fiber, events, noiseless(), double(frames) * frame.t_code + 1e-12, o);
    const std::size_t L = frame.length();
    std::vector<cd> x(L), y(L), ox(L), oy(L);
    double worst = 0;
    for (std::size_t f = 0; f < sim.num_frames(); ++f) {
        sim.frame(f, x, y);
        tap_sum_frame(frame, fiber, events, quasi_static, f, ox, oy);
        const double scale = std::max(max_abs(ox), max_abs(oy));
        for (std::size_t m = 0; m < L; ++m) {
            worst = std::max(worst, std::max(std::abs(x[m] - ox[m]), std::abs(y[m] - oy[m])) / scale);
        }
    }
    return worst;
}

bool check_synthesis_oracle(std::ostream& d)
{
    auto cfg = noiseless_desk();
    cfg.probe.K = 5;
    cfg.fiber.spans = {{50.0, 0.2}};
    cfg.fiber.connectors.clear();
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    const std::vector<PerturbationEvent> events{{12.0, 1.0, 300e-9, 20e3, 0.3}, {31.0, 1.0, 150e-9, 45e3, 1.1}};
    const double qs = synthesis_error(frame, fiber, events, true, 40);
    const double ps = synthesis_error(frame, fiber, events, false, 40);

    auto desk = config::desk_scenario();
    const auto desk_frame = desk.probe_frame();
    const auto desk_fiber = channel::synthesize_fiber(desk.fiber, desk.probe.symbol_rate);
    const double big = synthesis_error(desk_frame, desk_fiber, desk.events, true, 2);
    d << std::scientific << std::setprecision(2) << fiber.taps.size() << " taps quasi-static " << qs << ", per-sample "
      << ps << "; " << desk_fiber.taps.size() << " taps " << big;
    return fiber.taps.size() <= 64 && qs < 1e-9 && ps < 1e-9 && big < 1e-9;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool check_determinism(std::ostream& d)
{
    const auto root = std::filesystem::temp_directory_path() / ("pmdas_determinism_" + std::to_string(::getpid()));
    std::filesystem::remove_all(root);
    auto cfg = config::desk_scenario();
    cfg.simulation.duration = 0.03;
    cfg.processing.window = 0.02;
    cfg.processing.psd_window = 0.005;
    cfg.outputs.formats = {"csv", "capture"};
    const std::array<std::pair<const char*, unsigned>, 3> runs{{{"serial", 1}, {"parallel_a", 4}, {"parallel_b", 4}}};
    for (const auto& [name, threads] : runs) {
        cfg.simulation.threads = threads;
        cfg.outputs.directory = root / name;
        pipeline::run_pipeline(cfg);
    }
    std::size_t compared = 0;
    bool ok = true;
    for (const auto& entry : std::filesystem::directory_iterator(root / "serial")) {
        const auto name = entry.path().filename();
        const auto ext = name.extension();
        if (ext != ".csv" && ext != ".dasiq") continue;
        const auto ref = slurp(entry.path());
        for (const char* other : {"parallel_a", "parallel_b"}) {
            if (slurp(root / other / name) != ref) {
                d << name.string() << " differs in " << other << "; ";
                ok = false;
            }
        }
        ++compared;
    }
    std::filesystem::remove_all(root);
    d << compared << " files byte-identical across serial and two parallel runs";
    return ok && compared >= 8;
}

}  // namespace

const std::vector<Check>& checks()
{
    static const std::vector<Check> all{
        {"code identities", check_code_identities},
        {"timing formulas", check_timing},
        {"perfect reconstruction", check_reconstruction},
        {"photo-elastic law", check_photoelastic},
        {"two-tone detection", check_two_tone},
        {"stddev ratio", check_stddev_ratio},
        {"loss signature", check_loss},
        {"oracle correlator", check_correlator_oracle},
        {"oracle synthesis", check_synthesis_oracle},
        {"determinism", check_determinism},
    };
    return all;
}

bool run_all(std::ostream& out, const std::string& filter)
{
    bool all_ok = true;
    for (const auto& c : checks()) {
        if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
        std::ostringstream detail;
        bool ok = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail << " exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out << (ok ? "PASS " : "FAIL ") << c.name << ": " << detail.str() << " (" << std::fixed
            << std::setprecision(1) << secs << " s)" << std::endl;
        all_ok = all_ok && ok;
    }
    return all_ok;
}

}  // namespace pmdas::acceptance
