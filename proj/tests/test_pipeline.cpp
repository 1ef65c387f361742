#include <doctest.h>

#include <filesystem>

#include <json.hpp>
#include <unistd.h>

#include "pmdas/csv.hpp"
#include "pmdas/pipeline.hpp"

using namespace pmdas;
using namespace pmdas::pipeline;
namespace fs = std::filesystem;

namespace {

// 150 m at K = 7: 8.2 us frames, a few thousand frames per run.
config::RunConfig small_run(double duration = 0.03)
{
    nlohmann::json j;
    j["probe"] = {{"K", 7}};
    j["fiber"] = {{"spans", nlohmann::json::array({{{"length", 150.0}, {"loss", 0.2}}})}, {"seed", 5}};
    j["events"] = nlohmann::json::array(
        {{{"position", 75.0}, {"amplitude_pp", 5e-8}, {"frequency", 1000.0}, {"stretched_length", 1.0}}});
    j["noise"] = {{"seed", 9}};
    j["simulation"] = {{"duration", duration}};
    j["processing"] = {{"gauge", 10.0}, {"window", 0.02}, {"psd_window", 0.004}};
    return config::parse_config(j.dump());
}

bool same_values(const dsp::DiffPhaseMap& a, const dsp::DiffPhaseMap& b)
{
    return a.values == b.values && a.start_taps == b.start_taps && a.end_taps == b.end_taps;
}

}  // namespace

TEST_CASE("streaming from the simulator matches processing a resident capture")
{
    const auto cfg = small_run();
    const auto set = codes::make_code_set(cfg.probe.K);
    const auto frame = cfg.probe_frame();
    const auto fiber = channel::synthesize_fiber(cfg.fiber, cfg.probe.symbol_rate);
    const auto sim = make_simulator(cfg, frame, fiber);
    const auto capture = sim->run();

    auto opts = process_options(cfg);
    SimulatorSource streamed(*sim);
    MemorySource resident(capture);
    opts.threads = 1;
    const auto a = process(streamed, set, opts);
    opts.threads = 4;
    const auto b = process(resident, set, opts);
    CHECK(same_values(a.diff, b.diff));
    CHECK(a.boundaries == b.boundaries);
    CHECK(a.survey.num_frames == opts.survey_frames);
    CHECK(a.diff.num_frames == capture.header.num_frames - channel::kTransientFrames);
    // the fiber ends at tap 181, so boundaries stop at the last whole gauge
    CHECK(a.boundaries.back() <= std::size_t(150.0 / frame.s_r));
    CHECK(a.intensity_db.size() == a.survey.taps.size());
}

TEST_CASE("noiseless event shows up at its segment with the photo-elastic swing")
{
    const auto cfg = small_run();
    const auto dpm = simulate_and_process(cfg);
    const auto r = analyze(dpm, cfg);
    REQUIRE(r.events.size() == 1);
    CHECK(std::abs(r.events[0].position - 75.0) < 10.0);
    CHECK(r.events[0].frequency == doctest::Approx(1000.0).epsilon(0.15));
    const double theory = analysis::theory_phase(5e-8);
    const auto s = dpm.series(r.events[0].segment);
    CHECK(analysis::sine_fit_peak_to_peak(s, 1.0 / dpm.frame_period, 1000.0) == doctest::Approx(theory).epsilon(0.01));
    CHECK(r.spectra.size() == 2);
}

TEST_CASE("noiseless sensitivity sweep follows the theory line")
{
    auto cfg = small_run();
    const std::vector<double> amps{1e-8, 3e-8, 1e-7};
    const auto curve = sensitivity_sweep(cfg, amps, {.position = 75.0, .frequency = 1000.0, .window = 0.02});
    REQUIRE(curve.points.size() == 3);
    CHECK(curve.noise_floor_stddev < 1e-6);
    for (const auto& p : curve.points) {
        CHECK(p.measured_phase_pp / p.theory_phase_pp == doctest::Approx(1.0).epsilon(0.05));
        CHECK_FALSE(p.below_detection);
    }
    CHECK_THROWS_AS(sensitivity_sweep(cfg, {2e-8, 1e-8}, {.position = 75.0}), ConfigError);
}

TEST_CASE("default psd positions")
{
    auto cfg = small_run();
    CHECK(psd_positions(cfg) == std::vector<double>{75.0, 112.5});
    cfg.events.clear();
    CHECK(psd_positions(cfg) == std::vector<double>{75.0});
    cfg.events = {{.position = 20.0}, {.position = 140.0}, {.position = 40.0}};
    CHECK(psd_positions(cfg) == std::vector<double>{20.0, 40.0, 140.0, 90.0});
    cfg.processing.psd_positions = {33.0};
    CHECK(psd_positions(cfg) == std::vector<double>{33.0});
}

TEST_CASE("pipeline through a capture file writes every output")
{
    const fs::path dir = fs::temp_directory_path() / ("pmdas_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    auto cfg = small_run();
    cfg.outputs.directory = dir;
    cfg.outputs.formats = {"csv", "capture"};
    run_pipeline(cfg);
    for (const char* name : {"config.json", "ground_truth.csv", "capture.dasiq", "intensity.csv", "jones.csv",
                             "phase.csv", "diff_phase.csv", "diff_phase.json", "process.json", "profile.csv",
                             "events.csv", "psd_0.csv", "psd_1.csv", "analysis.json"}) {
        CHECK_MESSAGE(fs::exists(dir / name), name);
    }
    // float32 capture versus the in-memory chain
    const auto from_file = io::read_diff_phase(dir);
    const auto direct = simulate_and_process(cfg);
    REQUIRE(from_file.values.size() == direct.values.size());
    double worst = 0;
    for (std::size_t i = 0; i < direct.values.size(); ++i) {
        worst = std::max(worst, std::abs(from_file.values[i] - direct.values[i]));
    }
    CHECK(worst < 1e-4);
    fs::remove_all(dir);
}
