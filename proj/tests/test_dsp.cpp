#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "pmdas/dsp.hpp"

using namespace pmdas;
using namespace pmdas::dsp;

namespace {

struct TapValue {
    std::size_t tap;
    Jones h;
};

// Steady-state periodic probing at one sample per symbol:
// r[m] = sum_i H_i s[(m - tap_i) mod L]. Frame 0 is the transient and gets the same content.
channel::IQCapture periodic_capture(const codes::OrthogonalCodeSet& set,
                                    const std::function<std::vector<TapValue>(std::size_t)>& taps_at,
                                    std::size_t steady_frames)
{
    const auto frame = codes::build_probe_frame(set, 125e6);
    const std::size_t L = frame.length();
    channel::IQCapture c;
    c.header = {125e6, 125e6, uint32_t(L), uint32_t(steady_frames + 1), uint32_t(set.K)};
    c.x.resize(L * (steady_frames + 1));
    c.y.resize(L * (steady_frames + 1));
    for (std::size_t f = 0; f <= steady_frames; ++f) {
        const auto taps = taps_at(f == 0 ? 0 : f - 1);
        for (std::size_t m = 0; m < L; ++m) {
            cd ax{}, ay{};
            for (const auto& t : taps) {
                const std::size_t n = (m + L - t.tap % L) % L;
                const double sx = frame.x_stream[n], sy = frame.y_stream[n];
                ax += t.h.xx * sx + t.h.xy * sy;
                ay += t.h.yx * sx + t.h.yy * sy;
            }
            c.x[f * L + m] = ax;
            c.y[f * L + m] = ay;
        }
    }
    return c;
}

Jones random_su2(std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    double v[4];
    double norm = 0;
    for (double& e : v) {
        e = g(rng);
        norm += e * e;
    }
    norm = std::sqrt(norm);
    const cd a(v[0] / norm, v[1] / norm), b(v[2] / norm, v[3] / norm);
    return {a, -std::conj(b), b, std::conj(a)};
}

Jones random_jones(std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    return {cd(g(rng), g(rng)), cd(g(rng), g(rng)), cd(g(rng), g(rng)), cd(g(rng), g(rng))};
}

double jones_error(const Jones& a, const Jones& b) { return std::sqrt((a - b).frobenius2()); }

cd polar(double phase) { return std::polar(1.0, phase); }

// Phase map with phi(t, tap) given directly; every entry valid.
PhaseMap phase_map(std::size_t frames, std::size_t taps, const std::function<double(std::size_t, std::size_t)>& phi)
{
    PhaseMap pm;
    pm.num_frames = frames;
    pm.frame_period = 1e-3;
    pm.tap_pitch = 1.0;
    for (std::size_t t = 0; t < taps; ++t) pm.taps.push_back(t);
    pm.values.resize(frames * taps);
    pm.valid.assign(frames * taps, 1);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t t = 0; t < taps; ++t) {
            const double v = phi(f, t);
            pm.values[f * taps + t] = v - kPi * std::ceil(v / kPi - 0.5);
        }
    }
    return pm;
}

// Round-trip matrices r_i F_i^T D_i F_i, with D_i carrying the cumulative event phase.
JonesMap round_trip_map(std::size_t frames, std::size_t taps, const std::function<double(std::size_t, std::size_t)>& phi,
                        std::mt19937_64& rng, bool rotate_each_frame)
{
    JonesMap jm;
    jm.num_frames = frames;
    jm.frame_period = 1e-3;
    jm.tap_pitch = 1.0;
    for (std::size_t t = 0; t < taps; ++t) jm.taps.push_back(t);
    std::vector<Jones> fwd(taps);
    std::vector<cd> refl(taps);
    std::normal_distribution<double> g;
    for (std::size_t t = 0; t < taps; ++t) {
        fwd[t] = random_su2(rng);
        refl[t] = cd(g(rng), g(rng));
    }
    jm.values.resize(frames * taps);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t t = 0; t < taps; ++t) {
            if (rotate_each_frame) fwd[t] = random_su2(rng);
            const Jones f_ev = polar(0.5 * phi(f, t)) * fwd[t];
            jm.at(f, t) = refl[t] * (f_ev.transpose() * f_ev);
        }
    }
    return jm;
}

}  // namespace

TEST_CASE("single identity tap reconstructs to machine precision")
{
    const auto set = codes::make_code_set(5);
    const auto cap = periodic_capture(set, [](std::size_t) { return std::vector<TapValue>{{0, Jones::identity()}}; }, 2);
    for (bool direct : {false, true}) {
        EstimateOptions opt;
        opt.direct = direct;
        const auto jm = estimate_jones_map(cap, set, opt);
        REQUIRE(jm.num_frames == 2);
        REQUIRE(jm.taps.size() == set.size() / 2 + 1);
        for (std::size_t f = 0; f < jm.num_frames; ++f) {
            CHECK(jones_error(jm.at(f, 0), Jones::identity()) < 1e-12);
            for (std::size_t k = 1; k < jm.taps.size(); ++k) CHECK(std::sqrt(jm.at(f, k).frobenius2()) < 1e-12);
        }
    }
}

TEST_CASE("64 arbitrary taps within the unambiguous range are recovered exactly")
{
    const auto set = codes::make_code_set(6);  // N = 256, taps 0..128
    std::mt19937_64 rng(3);
    std::vector<TapValue> truth;
    std::vector<std::size_t> idx(129);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < 64; ++i) truth.push_back({idx[i], random_jones(rng)});
    const auto cap = periodic_capture(set, [&](std::size_t) { return truth; }, 1);
    const auto jm = estimate_jones_map(cap, set);
    std::vector<Jones> expect(jm.taps.size());
    for (const auto& t : truth) expect[t.tap] = t.h;
    double worst = 0;
    for (std::size_t k = 0; k < jm.taps.size(); ++k) worst = std::max(worst, jones_error(jm.at(0, k), expect[k]));
    CHECK(worst < 1e-12);

    const auto direct = estimate_jones_map(cap, set, {.direct = true});
    for (std::size_t k = 0; k < jm.taps.size(); ++k) CHECK(jones_error(direct.at(0, k), jm.at(0, k)) < 1e-12);
}

TEST_CASE("a reflector beyond N/2 leaks into the estimated taps")
{
    const auto set = codes::make_code_set(6);
    std::mt19937_64 rng(4);
    const std::vector<TapValue> truth{{10, random_jones(rng)}, {300, random_jones(rng)}};
    const auto cap = periodic_capture(set, [&](std::size_t) { return truth; }, 1);
    const auto jm = estimate_jones_map(cap, set);
    double worst = 0;
    for (std::size_t k = 0; k < jm.taps.size(); ++k) {
        const Jones expect = k == 10 ? truth[0].h : Jones{};
        worst = std::max(worst, jones_error(jm.at(0, k), expect));
    }
    CHECK(worst > 0.1);
}

TEST_CASE("estimator rejects mismatched captures and spans")
{
    const auto set = codes::make_code_set(3);
    auto cap = periodic_capture(set, [](std::size_t) { return std::vector<TapValue>{{0, Jones::identity()}}; }, 1);
    CHECK_THROWS_AS(estimate_jones_map(cap, codes::make_code_set(4)), ConfigError);
    cap.header.num_frames = 1;
    cap.x.resize(cap.header.frame_len);
    cap.y.resize(cap.header.frame_len);
    CHECK_THROWS_AS(estimate_jones_map(cap, set), ConfigError);
}

TEST_CASE("phase of a determinant: worked examples")
{
    JonesMap jm;
    jm.num_frames = 1;
    jm.taps = {0, 1, 2, 3};
    jm.values = {Jones::identity(), polar(kPi / 4) * Jones::identity(), Jones{1.0, 0.0, 0.0, polar(kPi / 3)},
                 Jones{0.0, 1.0, 1.0, 0.0}};
    const auto pm = extract_phase_map(jm);
    CHECK(pm.at(0, 0) == doctest::Approx(0.0));
    CHECK(pm.at(0, 1) == doctest::Approx(kPi / 4));
    CHECK(pm.at(0, 2) == doctest::Approx(kPi / 6));
    // det = -1: phase pi/2 is on the closed end of the principal interval
    CHECK(pm.at(0, 3) == doctest::Approx(kPi / 2));
    for (std::size_t k = 0; k < 4; ++k) CHECK(pm.is_valid(0, k));
}

TEST_CASE("zero and faded taps are marked invalid")
{
    JonesMap jm;
    jm.num_frames = 1;
    jm.taps = {0, 1, 2, 3, 4};
    jm.values = {Jones::identity(), Jones::identity(), Jones{}, 1e-9 * Jones::identity(), Jones::identity()};
    const auto pm = extract_phase_map(jm);
    CHECK(pm.is_valid(0, 0));
    CHECK_FALSE(pm.is_valid(0, 2));
    CHECK(std::isnan(pm.at(0, 2)));
    // |det| = 1e-18 against a median of 1
    CHECK_FALSE(pm.is_valid(0, 3));
    jm.values[1].xx = cd(std::nan(""), 0);
    CHECK_THROWS(extract_phase_map(jm));
}

TEST_CASE("static fiber gives zero differential phase everywhere")
{
    std::mt19937_64 rng(5);
    const auto jm = round_trip_map(50, 101, [](std::size_t, std::size_t) { return 0.0; }, rng, false);
    const auto dpm = differential_phase(extract_phase_map(jm), 10.0);
    CHECK(dpm.num_segments == 10);
    CHECK(dpm.num_frames == 50);
    for (std::size_t s = 0; s < dpm.num_segments; ++s) {
        const auto v = dpm.series(s);
        const double first = v.front();
        for (double x : v) CHECK(std::abs(x - first) < 1e-12);
    }
}

TEST_CASE("an event inside one gauge segment only moves that segment")
{
    std::mt19937_64 rng(6);
    const double amp = 0.8;
    // Strain between taps 44 and 47: cumulative phase steps inside segment [40, 50].
    auto phi = [&](std::size_t f, std::size_t t) {
        const double s = amp * std::sin(2 * kPi * double(f) / 25.0);
        return t >= 47 ? s : t >= 44 ? s * double(t - 43) / 4.0 : 0.0;
    };
    const auto dpm = differential_phase(extract_phase_map(round_trip_map(100, 101, phi, rng, true)), 10.0);
    REQUIRE(dpm.num_segments == 10);
    const std::size_t ev = dpm.segment_at(45.0);
    CHECK(dpm.start_taps[ev] == 40);
    CHECK(dpm.end_taps[ev] == 50);
    auto swing = [&](std::size_t s) {
        const auto v = dpm.series(s);
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *hi - *lo;
    };
    const double pp = swing(ev);
    // frames miss the sine peaks by at most a quarter step
    CHECK(pp == doctest::Approx(2 * amp).epsilon(1e-2));
    for (std::size_t s = 0; s < dpm.num_segments; ++s) {
        if (s != ev) CHECK(swing(s) < 0.01 * pp);
    }
}

TEST_CASE("transmitter and receiver rotations cancel in the differential phase")
{
    auto phi = [](std::size_t f, std::size_t t) { return t >= 30 ? 0.3 * std::cos(0.2 * double(f)) : 0.0; };
    std::mt19937_64 r1(7), r2(7);
    const auto fixed = round_trip_map(40, 61, phi, r1, false);
    auto rotated = round_trip_map(40, 61, phi, r2, false);
    // A common receiver-side unitary and a common global phase on every tap.
    std::mt19937_64 rng(8);
    const Jones u = polar(1.1) * random_su2(rng);
    for (auto& h : rotated.values) h = u * h;
    const auto a = differential_phase(extract_phase_map(fixed), 10.0);
    const auto b = differential_phase(extract_phase_map(rotated), 10.0);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t s = 0; s < a.num_segments; ++s) {
        const auto va = a.series(s), vb = b.series(s);
        for (std::size_t f = 0; f < va.size(); ++f) CHECK((vb[f] - vb[0]) == doctest::Approx(va[f] - va[0]).epsilon(1e-9));
    }
}

TEST_CASE("differential phase is linear in the event phase")
{
    auto run = [](double amp) {
        std::mt19937_64 rng(9);
        auto phi = [amp](std::size_t f, std::size_t t) { return t >= 25 ? amp * std::sin(0.3 * double(f)) : 0.0; };
        const auto dpm = differential_phase(extract_phase_map(round_trip_map(60, 51, phi, rng, true)), 10.0);
        return dpm.series(dpm.segment_at(25.0));
    };
    const auto a = run(0.1), b = run(0.3), c = run(0.4);
    for (std::size_t f = 0; f < a.size(); ++f) {
        const double da = a[f] - a[0], db = b[f] - b[0], dc = c[f] - c[0];
        CHECK(da + db == doctest::Approx(dc).epsilon(1e-9).scale(1.0));
        CHECK(3 * da == doctest::Approx(db).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("time unwrapping follows a ramp through many half-circles")
{
    // 3 pi in total, 0.05 rad per frame, so every +-pi/2 crossing wraps.
    const std::size_t frames = 189;
    auto phi = [](std::size_t f, std::size_t t) { return t >= 5 ? 0.05 * double(f) : 0.0; };
    const auto dpm = differential_phase(phase_map(frames, 21, phi), 10.0);
    const auto v = dpm.series(0);
    for (std::size_t f = 0; f < frames; ++f) CHECK(v[f] == doctest::Approx(0.05 * double(f)).scale(1.0).epsilon(1e-12));
    CHECK(v.back() > 3 * kPi - 0.1);

    std::vector<double> s{1.5, -1.5, 1.4, -1.6};
    unwrap_half_circle(s);
    CHECK(s[1] == doctest::Approx(-1.5 + kPi));
    CHECK(s[2] == doctest::Approx(1.4));
    CHECK(s[3] == doctest::Approx(-1.6 + kPi));
    std::vector<double> start{2.0};
    unwrap_half_circle(start);
    CHECK(start[0] == doctest::Approx(2.0 - kPi));
}

TEST_CASE("segment geometry from the regular grid")
{
    PhaseMap pm = phase_map(3, 40, [](std::size_t, std::size_t) { return 0.0; });
    pm.tap_pitch = 0.8;
    // Tap 0 faded in two of three frames: the reference moves to tap 1.
    pm.valid[0] = 0;
    pm.valid[40] = 0;
    const auto dpm = differential_phase(pm, 4.0);
    CHECK(dpm.reference_tap == 1);
    CHECK(dpm.gauge == doctest::Approx(4.0));
    CHECK(dpm.num_segments == (39 - 1) / 5);
    CHECK(dpm.start_taps[0] == 1);
    CHECK(dpm.end_taps[0] == 6);
    CHECK(dpm.positions[0] == doctest::Approx(3.5 * 0.8));
    CHECK(dpm.segment_at(-100.0) == 0);
    CHECK(dpm.segment_at(1e6) == dpm.num_segments - 1);
    CHECK_THROWS_AS(differential_phase(pm, 0.5), ConfigError);
    CHECK_THROWS(differential_phase(phase_map(3, 5, [](std::size_t, std::size_t) { return 0.0; }), 10.0));
}

TEST_CASE("fades at a boundary are bridged from a neighbouring tap")
{
    auto phi = [](std::size_t f, std::size_t t) { return t >= 15 ? 0.2 * double(f) : 0.0; };
    auto pm = phase_map(10, 31, phi);
    // Boundary tap 10 fades in frame 4; tap 9 stands in.
    pm.valid[4 * 31 + 10] = 0;
    pm.values[4 * 31 + 10] = std::nan("");
    const auto dpm = differential_phase(pm, 10.0);
    CHECK(dpm.bridged[0] == 1);
    CHECK(dpm.bridged[1] == 1);
    CHECK(dpm.bridged[2] == 0);
    for (std::size_t f = 0; f < 10; ++f) CHECK(dpm.at(f, 1) == doctest::Approx(0.2 * double(f)).scale(1.0));

    // Whole cell faded: nothing to bridge with.
    for (std::size_t t = 5; t < 15; ++t) pm.valid[4 * 31 + t] = 0;
    CHECK_THROWS(differential_phase(pm, 10.0));
}

TEST_CASE("explicit boundary taps")
{
    auto phi = [](std::size_t f, std::size_t t) { return t >= 23 ? 0.1 * double(f) : 0.0; };
    auto pm = phase_map(8, 60, phi);
    const std::vector<std::size_t> bounds{3, 12, 22, 33, 41};
    const auto dpm = differential_phase(pm, 10.0, bounds);
    CHECK(dpm.num_segments == 4);
    CHECK(dpm.start_taps == std::vector<std::size_t>{3, 12, 22, 33});
    CHECK(dpm.end_taps == std::vector<std::size_t>{12, 22, 33, 41});
    CHECK(dpm.positions[2] == doctest::Approx(27.5));
    CHECK(dpm.reference_tap == 3);
    for (std::size_t f = 0; f < 8; ++f) {
        CHECK(dpm.at(f, 2) == doctest::Approx(0.1 * double(f)).scale(1.0));
        CHECK(dpm.at(f, 1) == doctest::Approx(0.0).scale(1.0));
    }

    pm.valid[5 * 60 + 22] = 0;
    const auto bridged = differential_phase(pm, 10.0, bounds, 2);
    CHECK(bridged.bridged[1] == 1);
    CHECK(bridged.bridged[2] == 1);
    // ties go to the lower tap: 21, on the quiet side of the step
    CHECK(bridged.at(5, 2) == doctest::Approx(0.5).scale(1.0));

    const std::vector<std::size_t> unordered{3, 12, 12}, missing{3, 70}, one{3};
    CHECK_THROWS(differential_phase(pm, 10.0, unordered));
    CHECK_THROWS(differential_phase(pm, 10.0, missing));
    CHECK_THROWS(differential_phase(pm, 10.0, one));
}

TEST_CASE("intensity trace in dB with a floor")
{
    JonesMap jm;
    jm.num_frames = 2;
    jm.taps = {0, 1, 2};
    jm.values = {Jones::identity(), 0.1 * Jones::identity(), Jones{},
                 Jones::identity(), 0.1 * Jones::identity(), Jones{}};
    const auto db = intensity_trace(jm, -150.0);
    CHECK(db[0] == doctest::Approx(0.0));
    CHECK(db[1] == doctest::Approx(-20.0));
    CHECK(db[2] == -150.0);
    jm.num_frames = 0;
    CHECK_THROWS(intensity_trace(jm));
}

TEST_CASE("gauge helpers")
{
    CHECK(uniform_gauge_taps(1, 31, 10) == std::vector<std::size_t>{1, 11, 21, 31});
    CHECK(uniform_gauge_taps(1, 30, 10) == std::vector<std::size_t>{1, 11, 21});
    CHECK_THROWS_AS(uniform_gauge_taps(0, 10, 0), ConfigError);
    CHECK(gauge_in_taps(10.0, 0.827) == 12);
    CHECK(gauge_in_taps(0.827, 0.827) == 1);
    CHECK_THROWS_AS(gauge_in_taps(0.5, 0.827), ConfigError);
    CHECK_THROWS_AS(gauge_in_taps(10.0, 0.0), ConfigError);

    JonesMap survey;
    survey.num_frames = 1;
    for (std::size_t t = 0; t <= 30; ++t) survey.taps.push_back(t);
    survey.values.assign(31, 0.5 * Jones::identity());
    survey.values[12] = Jones::identity();
    survey.values[18] = 2.0 * Jones::identity();
    const auto best = strongest_gauge_taps(survey, 0, 30, 10);
    REQUIRE(best.size() == 4);
    CHECK(best[1] == 12);
    CHECK(best[2] == 18);
}
