#pragma once

// JSON run configuration. Parsing is strict: unknown keys are errors.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pmdas/channel.hpp"
#include "pmdas/codes.hpp"

namespace pmdas::config {

struct ProbeConfig {
    int K = 14;
    double symbol_rate = 125e6;  // baud
    double wavelength = channel::kDefaultWavelength;
};

struct SimulationConfig {
    double duration = 1.0;  // s
    bool quasi_static = true;
    unsigned threads = 0;
};

struct ProcessingConfig {
    double gauge = 100.0;          // m
    double window = 1.0;           // s, StDv window
    double psd_window = 0.1;       // s, periodogram length
    std::string tap_selection = "uniform";  // "uniform" | "strongest"
    std::size_t survey_frames = 16;
    double detect_k = 6.0;
    double min_event_stddev = 1e-3;
    std::vector<double> psd_positions;  // m; empty = event positions plus one quiet segment
};

struct SensitivityConfig {
    std::vector<double> amplitudes;  // m, ascending
    double position = 0;             // m
    double frequency = 100.0;        // Hz
    double window = 0.2;             // s
    double detection_factor = 3.0;   // below_detection: theory < factor * floor
    std::optional<double> target_floor;  // rad; if set, noise.awgn_snr_db is calibrated to this floor StDv
};

struct OutputConfig {
    std::filesystem::path directory = "out";
    std::vector<std::string> formats{"csv"};  // "csv", "capture"
};

struct RunConfig {
    ProbeConfig probe;
    channel::FiberSpec fiber;
    std::vector<channel::PerturbationEvent> events;
    channel::NoiseSpec noise;
    SimulationConfig simulation;
    ProcessingConfig processing;
    std::optional<SensitivityConfig> sensitivity;
    OutputConfig outputs;

    codes::ProbeFrame probe_frame() const;
};

/// Parses and validates; throws ConfigError with a path-qualified message.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Cross-field checks: timing lower bound, events inside the fiber and
/// below the mechanical bandwidth, processing parameters. Returns warnings.
std::vector<std::string> validate(const RunConfig& cfg);

/// Serializes back to JSON (used for sidecar metadata).
std::string to_json(const RunConfig& cfg);

/// The shipped 26 km, K = 14, 125 MBaud scenario with events at 900 m / 300 Hz and 25 km / 180 Hz.
RunConfig field_scenario();
/// 2 km, K = 11 analog used by the acceptance suite.
RunConfig desk_scenario();

}  // namespace pmdas::config
