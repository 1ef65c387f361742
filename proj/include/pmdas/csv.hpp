#pragma once

// CSV and sidecar-JSON emitters. Column layouts are documented in docs/FORMATS.md.
// Floating values are written with 17 significant digits.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "pmdas/analysis.hpp"
#include "pmdas/channel.hpp"
#include "pmdas/codes.hpp"
#include "pmdas/dsp.hpp"

namespace pmdas::io {

std::string format_double(double v);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string> columns);
    CsvWriter& cell(double v);
    CsvWriter& cell(std::size_t v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(const std::string& v);
    void end_row();
    void close();

private:
    void sep();
    std::ofstream out_;
    std::filesystem::path path_;
    std::size_t columns_ = 0;
    std::size_t in_row_ = 0;
};

void write_code_csv(const std::filesystem::path& path, const codes::ProbeFrame& frame);
void write_ground_truth_csv(const std::filesystem::path& path, const channel::FiberRealization& fiber);
void write_jones_csv(const std::filesystem::path& path, const dsp::JonesMap& jm);
void write_phase_csv(const std::filesystem::path& path, const dsp::PhaseMap& pm);
/// Writes <stem>.csv and <stem>.json (segment geometry and timing).
void write_diff_phase(const std::filesystem::path& dir, const dsp::DiffPhaseMap& dpm);
dsp::DiffPhaseMap read_diff_phase(const std::filesystem::path& dir);
void write_intensity_csv(const std::filesystem::path& path, std::span<const std::size_t> taps,
                         std::span<const double> intensity_db, double tap_pitch);
void write_profile_csv(const std::filesystem::path& path, const analysis::StdDevProfile& p);
void write_psd_csv(const std::filesystem::path& path, const analysis::SpectrumReport& r);
void write_events_csv(const std::filesystem::path& path, std::span<const analysis::DetectedEvent> events);
void write_sensitivity_csv(const std::filesystem::path& path, const analysis::SensitivityCurve& c);
void write_text(const std::filesystem::path& path, const std::string& text);

inline constexpr const char* kDiffPhaseStem = "diff_phase";

}  // namespace pmdas::io
