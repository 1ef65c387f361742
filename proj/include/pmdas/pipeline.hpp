#pragma once

// Streaming simulate -> process -> analyze chain. Frames are pulled from a
// FrameSource in chunks so that a full capture never has to be resident.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pmdas/analysis.hpp"
#include "pmdas/capture.hpp"
#include "pmdas/channel.hpp"
#include "pmdas/config.hpp"
#include "pmdas/dsp.hpp"

namespace pmdas::pipeline {

class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual channel::CaptureHeader header() const = 0;
    virtual void frame(std::size_t f, std::span<cd> x, std::span<cd> y) = 0;
    /// True if frame() may be called concurrently.
    virtual bool concurrent() const { return false; }
};

class SimulatorSource final : public FrameSource {
public:
    explicit SimulatorSource(const channel::BackscatterSimulator& sim) : sim_(sim) {}
    channel::CaptureHeader header() const override { return sim_.header(); }
    void frame(std::size_t f, std::span<cd> x, std::span<cd> y) override { sim_.frame(f, x, y); }
    bool concurrent() const override { return true; }

private:
    const channel::BackscatterSimulator& sim_;
};

class CaptureFileSource final : public FrameSource {
public:
    explicit CaptureFileSource(const std::filesystem::path& path) : reader_(path) {}
    channel::CaptureHeader header() const override { return reader_.header(); }
    void frame(std::size_t f, std::span<cd> x, std::span<cd> y) override { reader_.read_frame(f, x, y); }

private:
    io::CaptureReader reader_;
};

class MemorySource final : public FrameSource {
public:
    explicit MemorySource(const channel::IQCapture& capture) : capture_(capture) {}
    channel::CaptureHeader header() const override { return capture_.header; }
    void frame(std::size_t f, std::span<cd> x, std::span<cd> y) override;
    bool concurrent() const override { return true; }

private:
    const channel::IQCapture& capture_;
};

struct ProcessOptions {
    double fiber_length = 0;        // m; taps beyond it are not estimated
    double refractive_index = codes::kDefaultRefractiveIndex;
    double gauge = 100.0;           // m
    std::string tap_selection = "uniform";
    std::size_t survey_frames = 16;
    std::size_t bridge_radius = 2;  // extra taps kept on each side of a boundary
    unsigned threads = 0;
};

ProcessOptions process_options(const config::RunConfig& cfg);

struct ProcessResult {
    dsp::JonesMap survey;                 // all taps, first survey_frames frames
    std::vector<double> intensity_db;     // per survey tap
    std::vector<std::size_t> boundaries;  // gauge boundary taps
    dsp::JonesMap selected;               // boundary taps and their neighbours, all frames
    dsp::PhaseMap phase;
    dsp::DiffPhaseMap diff;
};

/// Drops the transient frame, surveys every tap over the first frames, picks
/// gauge boundaries and estimates only those taps for the whole record.
ProcessResult process(FrameSource& source, const codes::OrthogonalCodeSet& set, const ProcessOptions& options);

struct AnalysisResult {
    analysis::StdDevProfile profile;
    std::vector<analysis::DetectedEvent> events;
    double detection_threshold = 0;
    std::vector<analysis::SpectrumReport> spectra;
};

/// PSD positions: processing.psd_positions, or each event plus the midpoint
/// of the quietest gap between events.
std::vector<double> psd_positions(const config::RunConfig& cfg);

AnalysisResult analyze(const dsp::DiffPhaseMap& dpm, const config::RunConfig& cfg);

/// Simulator for cfg; throws TimingError / ConfigError as the config demands.
std::unique_ptr<channel::BackscatterSimulator> make_simulator(const config::RunConfig& cfg,
                                                               const codes::ProbeFrame& frame,
                                                               const channel::FiberRealization& fiber);

/// Simulate and process cfg entirely in memory.
dsp::DiffPhaseMap simulate_and_process(const config::RunConfig& cfg);

struct SweepOptions {
    double position = 0;
    double frequency = 100.0;
    double window = 0.2;
    double detection_factor = 3.0;
};

/// One single-event run per amplitude with independent noise seeds; measured
/// pp is a sine fit at the drive frequency over the window. The floor is the
/// StDv of an unperturbed run at the same segment.
analysis::SensitivityCurve sensitivity_sweep(const config::RunConfig& base, const std::vector<double>& amplitudes,
                                             const SweepOptions& options);

/// Unperturbed floor StDv at `position` for the given AWGN SNR.
double noise_floor(const config::RunConfig& base, double position, double window, std::optional<double> snr_db);

/// Bisects noise.awgn_snr_db until the unperturbed floor StDv matches target.
double calibrate_awgn_snr(const config::RunConfig& base, double position, double window, double target_stddev,
                          double lo_db = -30.0, double hi_db = 50.0, int iterations = 14);

void write_process_outputs(const std::filesystem::path& dir, const ProcessResult& r, const config::RunConfig& cfg);
void write_analysis_outputs(const std::filesystem::path& dir, const AnalysisResult& r, const config::RunConfig& cfg);

/// Streams the simulator into a capture file.
void simulate_to_file(const config::RunConfig& cfg, const std::filesystem::path& capture_path);

/// Reads the diff-phase map in dir and writes the analysis (and sensitivity) outputs next to it.
void run_analysis_stage(const std::filesystem::path& dir, const config::RunConfig& cfg);

/// All stages into cfg.outputs.directory. Returns warnings.
std::vector<std::string> run_pipeline(const config::RunConfig& cfg);

}  // namespace pmdas::pipeline
