#include "pmdas/csv.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace pmdas::io {

using nlohmann::json;

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string> columns)
    : out_(path, std::ios::trunc), path_(path), columns_(columns.size())
{
    if (!out_) throw IoError(path.string() + ": cannot open for writing");
    bool first = true;
    for (const auto& c : columns) {
        if (!first) out_ << ',';
        out_ << c;
        first = false;
    }
    out_ << '\n';
}

void CsvWriter::sep()
{
    if (in_row_++ > 0) out_ << ',';
}

CsvWriter& CsvWriter::cell(double v)
{
    sep();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::cell(std::size_t v)
{
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::cell(long long v)
{
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v)
{
    sep();
    out_ << v;
    return *this;
}

void CsvWriter::end_row()
{
    if (in_row_ != columns_) throw IoError(path_.string() + ": row has " + std::to_string(in_row_) + " cells");
    out_ << '\n';
    in_row_ = 0;
}

void CsvWriter::close()
{
    out_.close();
    if (!out_) throw IoError(path_.string() + ": write failed");
}

void write_code_csv(const std::filesystem::path& path, const codes::ProbeFrame& frame)
{
    CsvWriter w(path, {"index", "x", "y"});
    for (std::size_t i = 0; i < frame.length(); ++i) {
        w.cell(i).cell(static_cast<long long>(frame.x_stream[i])).cell(static_cast<long long>(frame.y_stream[i]));
        w.end_row();
    }
    w.close();
}

void write_ground_truth_csv(const std::filesystem::path& path, const channel::FiberRealization& fiber)
{
    CsvWriter w(path, {"tap", "z", "g_re", "g_im", "m_xx_re", "m_xx_im", "m_xy_re", "m_xy_im", "m_yx_re", "m_yx_im",
                       "m_yy_re", "m_yy_im"});
    for (const auto& tap : fiber.taps) {
        const Jones m = tap.forward.transpose() * tap.forward;
        w.cell(tap.index).cell(tap.z).cell(tap.reflectivity.real()).cell(tap.reflectivity.imag());
        for (cd v : {m.xx, m.xy, m.yx, m.yy}) w.cell(v.real()).cell(v.imag());
        w.end_row();
    }
    w.close();
}

void write_jones_csv(const std::filesystem::path& path, const dsp::JonesMap& jm)
{
    CsvWriter w(path, {"frame", "tap", "xx_re", "xx_im", "xy_re", "xy_im", "yx_re", "yx_im", "yy_re", "yy_im"});
    for (std::size_t f = 0; f < jm.num_frames; ++f) {
        for (std::size_t k = 0; k < jm.taps.size(); ++k) {
            const Jones& h = jm.at(f, k);
            w.cell(f).cell(jm.taps[k]);
            for (cd v : {h.xx, h.xy, h.yx, h.yy}) w.cell(v.real()).cell(v.imag());
            w.end_row();
        }
    }
    w.close();
}

void write_phase_csv(const std::filesystem::path& path, const dsp::PhaseMap& pm)
{
    CsvWriter w(path, {"frame", "tap", "phase", "valid"});
    for (std::size_t f = 0; f < pm.num_frames; ++f) {
        for (std::size_t k = 0; k < pm.taps.size(); ++k) {
            const bool ok = pm.is_valid(f, k);
            w.cell(f).cell(pm.taps[k]);
            if (ok) w.cell(pm.at(f, k));
            else w.cell(std::string("nan"));
            w.cell(std::size_t(ok ? 1 : 0));
            w.end_row();
        }
    }
    w.close();
}

void write_diff_phase(const std::filesystem::path& dir, const dsp::DiffPhaseMap& dpm)
{
    CsvWriter w(dir / (std::string(kDiffPhaseStem) + ".csv"), {"frame", "segment", "value"});
    for (std::size_t f = 0; f < dpm.num_frames; ++f) {
        for (std::size_t s = 0; s < dpm.num_segments; ++s) {
            w.cell(f).cell(s).cell(dpm.at(f, s));
            w.end_row();
        }
    }
    w.close();

    json meta;
    meta["num_frames"] = dpm.num_frames;
    meta["num_segments"] = dpm.num_segments;
    meta["frame_period"] = dpm.frame_period;
    meta["gauge"] = dpm.gauge;
    meta["reference_tap"] = dpm.reference_tap;
    meta["positions"] = dpm.positions;
    meta["start_taps"] = dpm.start_taps;
    meta["end_taps"] = dpm.end_taps;
    meta["bridged_frames"] = dpm.bridged;
    write_text(dir / (std::string(kDiffPhaseStem) + ".json"), meta.dump(2) + "\n");
}

dsp::DiffPhaseMap read_diff_phase(const std::filesystem::path& dir)
{
    const auto meta_path = dir / (std::string(kDiffPhaseStem) + ".json");
    const auto csv_path = dir / (std::string(kDiffPhaseStem) + ".csv");
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw IoError(meta_path.string() + ": cannot open");
    dsp::DiffPhaseMap dpm;
    try {
        const json meta = json::parse(meta_in);
        dpm.num_frames = meta.at("num_frames").get<std::size_t>();
        dpm.num_segments = meta.at("num_segments").get<std::size_t>();
        dpm.frame_period = meta.at("frame_period").get<double>();
        dpm.gauge = meta.at("gauge").get<double>();
        dpm.reference_tap = meta.at("reference_tap").get<std::size_t>();
        dpm.positions = meta.at("positions").get<std::vector<double>>();
        dpm.start_taps = meta.at("start_taps").get<std::vector<std::size_t>>();
        dpm.end_taps = meta.at("end_taps").get<std::vector<std::size_t>>();
        dpm.bridged = meta.at("bridged_frames").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }
    if (dpm.positions.size() != dpm.num_segments) throw IoError(meta_path.string() + ": positions/segments mismatch");

    std::ifstream in(csv_path);
    if (!in) throw IoError(csv_path.string() + ": cannot open");
    dpm.values.assign(dpm.num_frames * dpm.num_segments, 0.0);
    std::vector<uint8_t> seen(dpm.values.size(), 0);
    std::string line;
    std::getline(in, line);
    if (line != "frame,segment,value") throw IoError(csv_path.string() + ": unexpected header '" + line + "'");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t f = 0, s = 0;
        double v = 0;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lf", &f, &s, &v) != 3 || f >= dpm.num_frames ||
            s >= dpm.num_segments) {
            throw IoError(csv_path.string() + ":" + std::to_string(lineno) + ": malformed row");
        }
        dpm.values[f * dpm.num_segments + s] = v;
        seen[f * dpm.num_segments + s] = 1;
    }
    for (auto b : seen) {
        if (!b) throw IoError(csv_path.string() + ": missing (frame, segment) rows");
    }
    return dpm;
}

void write_intensity_csv(const std::filesystem::path& path, std::span<const std::size_t> taps,
                         std::span<const double> intensity_db, double tap_pitch)
{
    CsvWriter w(path, {"tap", "z", "intensity_db"});
    for (std::size_t k = 0; k < taps.size(); ++k) {
        w.cell(taps[k]).cell(double(taps[k]) * tap_pitch).cell(intensity_db[k]);
        w.end_row();
    }
    w.close();
}

void write_profile_csv(const std::filesystem::path& path, const analysis::StdDevProfile& p)
{
    CsvWriter w(path, {"segment", "position", "stddev"});
    for (std::size_t s = 0; s < p.stddev.size(); ++s) {
        w.cell(s).cell(p.positions[s]).cell(p.stddev[s]);
        w.end_row();
    }
    w.close();
}

void write_psd_csv(const std::filesystem::path& path, const analysis::SpectrumReport& r)
{
    CsvWriter w(path, {"frequency", "psd_db"});
    for (std::size_t k = 0; k < r.frequencies.size(); ++k) {
        w.cell(r.frequencies[k]).cell(r.psd_db[k]);
        w.end_row();
    }
    w.close();
}

void write_events_csv(const std::filesystem::path& path, std::span<const analysis::DetectedEvent> events)
{
    CsvWriter w(path, {"position", "segment", "first_segment", "last_segment", "frequency", "magnitude_pp",
                       "stddev_peak"});
    for (const auto& e : events) {
        w.cell(e.position).cell(e.segment).cell(e.first_segment).cell(e.last_segment).cell(e.frequency);
        w.cell(e.magnitude_pp).cell(e.stddev_peak);
        w.end_row();
    }
    w.close();
}

void write_sensitivity_csv(const std::filesystem::path& path, const analysis::SensitivityCurve& c)
{
    CsvWriter w(path, {"dl_pp", "measured_phase_pp", "theory_phase_pp", "below_detection"});
    for (const auto& p : c.points) {
        w.cell(p.dl_pp).cell(p.measured_phase_pp).cell(p.theory_phase_pp).cell(std::size_t(p.below_detection ? 1 : 0));
        w.end_row();
    }
    w.close();
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << text;
    out.close();
    if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace pmdas::io
