#include "pmdas/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pmdas::config {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

    template <typename T>
    T get(const std::string& key, T fallback)
    {
        seen_.insert(key);
        if (!has(key)) return fallback;
        return convert<T>(obj_.at(key), field(key));
    }

    template <typename T>
    std::optional<T> get_optional(const std::string& key)
    {
        seen_.insert(key);
        if (!has(key)) return std::nullopt;
        return convert<T>(obj_.at(key), field(key));
    }

    const json* child(const std::string& key)
    {
        seen_.insert(key);
        return has(key) ? &obj_.at(key) : nullptr;
    }

    std::string field(const std::string& key) const { return path_ + "." + key; }

    void finish() const
    {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
        }
    }

private:
    template <typename T>
    static T convert(const json& v, const std::string& where)
    {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError(where + ": expected a number");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.get<int64_t>() < 0) throw ConfigError(where + ": must be >= 0");
                }
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(where + ": expected a string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

const json& require_array(const json& v, const std::string& where)
{
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    return v;
}

std::vector<double> number_list(const json* v, const std::string& where)
{
    std::vector<double> out;
    if (!v) return out;
    for (std::size_t i = 0; i < require_array(*v, where).size(); ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
        out.push_back((*v)[i].get<double>());
    }
    return out;
}

channel::FiberSpec parse_fiber(const json& j, double wavelength)
{
    ObjectReader r(j, "fiber");
    channel::FiberSpec f;
    f.wavelength = wavelength;
    if (const json* spans = r.child("spans")) {
        for (std::size_t i = 0; i < require_array(*spans, "fiber.spans").size(); ++i) {
            ObjectReader s((*spans)[i], "fiber.spans[" + std::to_string(i) + "]");
            channel::Span span;
            span.length = s.get<double>("length", 0.0);
            span.loss_db_per_km = s.get<double>("loss", channel::kDefaultLossDbPerKm);
            s.finish();
            f.spans.push_back(span);
        }
    }
    if (const json* conns = r.child("connectors")) {
        for (std::size_t i = 0; i < require_array(*conns, "fiber.connectors").size(); ++i) {
            ObjectReader c((*conns)[i], "fiber.connectors[" + std::to_string(i) + "]");
            channel::Connector conn;
            conn.position = c.get<double>("position", 0.0);
            conn.loss_db = c.get<double>("loss", 0.0);
            c.finish();
            f.connectors.push_back(conn);
        }
    }
    f.refractive_index = r.get<double>("refractive_index", codes::kDefaultRefractiveIndex);
    f.photoelastic = r.get<double>("photoelastic", channel::kDefaultPhotoelastic);
    f.rayleigh_level_db = r.get<double>("rayleigh_level_db", 0.0);
    f.birefringence_strength = r.get<double>("birefringence", 0.05);
    f.rng_seed = r.get<uint64_t>("seed", 1);
    r.finish();
    return f;
}

channel::PerturbationEvent parse_event(const json& j, const std::string& path)
{
    ObjectReader r(j, path);
    channel::PerturbationEvent e;
    e.position = r.get<double>("position", 0.0);
    e.stretched_length = r.get<double>("stretched_length", 0.0);
    e.amplitude_pp = r.get<double>("amplitude_pp", 0.0);
    e.frequency = r.get<double>("frequency", 0.0);
    e.phase = r.get<double>("phase", 0.0);
    const auto kind = r.get<std::string>("kind", "sine");
    if (kind != "sine") throw ConfigError(r.field("kind") + ": only \"sine\" waveforms are supported");
    r.finish();
    return e;
}

}  // namespace

codes::ProbeFrame RunConfig::probe_frame() const
{
    return codes::build_probe_frame(codes::make_code_set(probe.K), probe.symbol_rate, fiber.refractive_index);
}

RunConfig parse_config(const std::string& json_text)
{
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    ObjectReader top(doc, "config");
    RunConfig cfg;

    if (const json* p = top.child("probe")) {
        ObjectReader r(*p, "probe");
        cfg.probe.K = r.get<int>("K", cfg.probe.K);
        cfg.probe.symbol_rate = r.get<double>("symbol_rate", cfg.probe.symbol_rate);
        cfg.probe.wavelength = r.get<double>("wavelength", cfg.probe.wavelength);
        r.finish();
    }
    const json* fiber = top.child("fiber");
    if (!fiber) throw ConfigError("config.fiber: required");
    cfg.fiber = parse_fiber(*fiber, cfg.probe.wavelength);

    if (const json* ev = top.child("events")) {
        for (std::size_t i = 0; i < require_array(*ev, "events").size(); ++i) {
            cfg.events.push_back(parse_event((*ev)[i], "events[" + std::to_string(i) + "]"));
        }
    }
    if (const json* n = top.child("noise")) {
        ObjectReader r(*n, "noise");
        cfg.noise.laser_linewidth = r.get<double>("linewidth", 0.0);
        cfg.noise.awgn_snr_db = r.get_optional<double>("awgn_snr_db");
        cfg.noise.adc_bits = r.get_optional<int>("adc_bits");
        cfg.noise.rng_seed = r.get<uint64_t>("seed", cfg.noise.rng_seed);
        r.finish();
    }
    if (const json* s = top.child("simulation")) {
        ObjectReader r(*s, "simulation");
        cfg.simulation.duration = r.get<double>("duration", cfg.simulation.duration);
        cfg.simulation.quasi_static = r.get<bool>("quasi_static", cfg.simulation.quasi_static);
        cfg.simulation.threads = r.get<unsigned>("threads", cfg.simulation.threads);
        r.finish();
    }
    if (const json* p = top.child("processing")) {
        ObjectReader r(*p, "processing");
        auto& pc = cfg.processing;
        pc.gauge = r.get<double>("gauge", pc.gauge);
        pc.window = r.get<double>("window", pc.window);
        pc.psd_window = r.get<double>("psd_window", pc.psd_window);
        pc.tap_selection = r.get<std::string>("tap_selection", pc.tap_selection);
        pc.survey_frames = r.get<std::size_t>("survey_frames", pc.survey_frames);
        pc.detect_k = r.get<double>("detect_k", pc.detect_k);
        pc.min_event_stddev = r.get<double>("min_event_stddev", pc.min_event_stddev);
        pc.psd_positions = number_list(r.child("psd_positions"), "processing.psd_positions");
        r.finish();
    }
    if (const json* s = top.child("sensitivity")) {
        ObjectReader r(*s, "sensitivity");
        SensitivityConfig sc;
        sc.amplitudes = number_list(r.child("amplitudes"), "sensitivity.amplitudes");
        sc.position = r.get<double>("position", 0.0);
        sc.frequency = r.get<double>("frequency", sc.frequency);
        sc.window = r.get<double>("window", sc.window);
        sc.detection_factor = r.get<double>("detection_factor", sc.detection_factor);
        sc.target_floor = r.get_optional<double>("target_floor");
        r.finish();
        cfg.sensitivity = sc;
    }
    if (const json* o = top.child("outputs")) {
        ObjectReader r(*o, "outputs");
        cfg.outputs.directory = r.get<std::string>("directory", cfg.outputs.directory.string());
        if (const json* f = r.child("formats")) {
            cfg.outputs.formats.clear();
            for (std::size_t i = 0; i < require_array(*f, "outputs.formats").size(); ++i) {
                const auto& v = (*f)[i];
                const std::string where = "outputs.formats[" + std::to_string(i) + "]";
                if (!v.is_string()) throw ConfigError(where + ": expected a string");
                const auto s = v.get<std::string>();
                if (s != "csv" && s != "capture") throw ConfigError(where + ": unknown format \"" + s + "\"");
                cfg.outputs.formats.push_back(s);
            }
        }
        r.finish();
    }
    top.finish();
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<std::string> validate(const RunConfig& cfg)
{
    std::vector<std::string> warnings;
    if (cfg.probe.K < 0 || cfg.probe.K > 20) throw ConfigError("probe.K: must lie in 0..20");
    if (!(cfg.probe.symbol_rate > 0)) throw ConfigError("probe.symbol_rate: must be > 0");
    if (!(cfg.probe.wavelength > 0)) throw ConfigError("probe.wavelength: must be > 0");
    cfg.fiber.validate();
    cfg.noise.validate();

    const auto frame = cfg.probe_frame();
    const double L = cfg.fiber.length();
    const auto timing = codes::validate_timing(L, frame, cfg.noise.laser_linewidth);
    if (!timing.lower_bound_ok) {
        throw TimingError("probe: lower timing bound violated: 4*T_ir = " + std::to_string(4 * timing.t_ir * 1e3) +
                          " ms is not below T_code = " + std::to_string(frame.t_code * 1e3) +
                          " ms (fiber.spans total " + std::to_string(L) + " m)");
    }
    if (!timing.coherence_ok) {
        warnings.push_back("probe: T_code exceeds the laser coherence time " + std::to_string(timing.t_coh) + " s");
    }

    for (std::size_t i = 0; i < cfg.events.size(); ++i) {
        const auto& e = cfg.events[i];
        const std::string path = "events[" + std::to_string(i) + "]";
        if (!(e.position > 0 && e.position < L)) throw ConfigError(path + ".position: must lie in (0, L)");
        if (!(e.amplitude_pp >= 0)) throw ConfigError(path + ".amplitude_pp: must be >= 0");
        if (!(e.stretched_length >= 0)) throw ConfigError(path + ".stretched_length: must be >= 0");
        if (!(e.frequency >= 0 && e.frequency < frame.bw)) {
            throw ConfigError(path + ".frequency: must lie in [0, bw = " + std::to_string(frame.bw) + " Hz)");
        }
    }

    const auto& sim = cfg.simulation;
    if (!(sim.duration >= 2 * frame.t_code)) {
        throw ConfigError("simulation.duration: must cover at least two frames (" + std::to_string(2 * frame.t_code) +
                          " s)");
    }
    const auto& pc = cfg.processing;
    if (!(pc.gauge >= frame.s_r)) throw ConfigError("processing.gauge: must be >= the spatial resolution");
    if (!(pc.gauge < L)) throw ConfigError("processing.gauge: must be shorter than the fiber");
    const double steady = sim.duration - frame.t_code;
    if (!(pc.window >= 10 * frame.t_code)) throw ConfigError("processing.window: must cover >= 10 frames");
    if (pc.window > steady + 1e-12) throw ConfigError("processing.window: exceeds the simulated steady-state duration");
    if (!(pc.psd_window >= 8 * frame.t_code) || pc.psd_window * 1.5 > steady + 1e-12) {
        throw ConfigError("processing.psd_window: need >= 8 frames and room for two overlapped segments");
    }
    if (pc.tap_selection != "uniform" && pc.tap_selection != "strongest") {
        throw ConfigError("processing.tap_selection: expected \"uniform\" or \"strongest\"");
    }
    if (pc.survey_frames == 0) throw ConfigError("processing.survey_frames: must be >= 1");
    if (!(pc.detect_k > 0)) throw ConfigError("processing.detect_k: must be > 0");
    if (!(pc.min_event_stddev >= 0)) throw ConfigError("processing.min_event_stddev: must be >= 0");
    for (std::size_t i = 0; i < pc.psd_positions.size(); ++i) {
        if (!(pc.psd_positions[i] > 0 && pc.psd_positions[i] < L)) {
            throw ConfigError("processing.psd_positions[" + std::to_string(i) + "]: must lie in (0, L)");
        }
    }
    if (cfg.sensitivity) {
        const auto& s = *cfg.sensitivity;
        if (s.amplitudes.empty()) throw ConfigError("sensitivity.amplitudes: must not be empty");
        for (std::size_t i = 0; i < s.amplitudes.size(); ++i) {
            if (!(s.amplitudes[i] >= 0)) throw ConfigError("sensitivity.amplitudes: must be >= 0");
            if (i > 0 && s.amplitudes[i] < s.amplitudes[i - 1]) {
                throw ConfigError("sensitivity.amplitudes: must be sorted ascending");
            }
        }
        if (!(s.position > 0 && s.position < L)) throw ConfigError("sensitivity.position: must lie in (0, L)");
        if (!(s.frequency > 0 && s.frequency < frame.bw)) throw ConfigError("sensitivity.frequency: must lie in (0, bw)");
        if (!(s.window >= 10 * frame.t_code) || s.window > steady + 1e-12) {
            throw ConfigError("sensitivity.window: must cover >= 10 frames and fit in the simulated duration");
        }
        if (!(s.detection_factor > 0)) throw ConfigError("sensitivity.detection_factor: must be > 0");
        if (s.target_floor && !(*s.target_floor > 0)) throw ConfigError("sensitivity.target_floor: must be > 0");
    }
    return warnings;
}

std::string to_json(const RunConfig& cfg)
{
    json j;
    j["probe"] = {{"K", cfg.probe.K}, {"symbol_rate", cfg.probe.symbol_rate}, {"wavelength", cfg.probe.wavelength}};
    json spans = json::array(), conns = json::array();
    for (const auto& s : cfg.fiber.spans) spans.push_back({{"length", s.length}, {"loss", s.loss_db_per_km}});
    for (const auto& c : cfg.fiber.connectors) conns.push_back({{"position", c.position}, {"loss", c.loss_db}});
    j["fiber"] = {{"spans", spans},
                  {"connectors", conns},
                  {"refractive_index", cfg.fiber.refractive_index},
                  {"photoelastic", cfg.fiber.photoelastic},
                  {"rayleigh_level_db", cfg.fiber.rayleigh_level_db},
                  {"birefringence", cfg.fiber.birefringence_strength},
                  {"seed", cfg.fiber.rng_seed}};
    json events = json::array();
    for (const auto& e : cfg.events) {
        events.push_back({{"kind", "sine"},
                          {"position", e.position},
                          {"stretched_length", e.stretched_length},
                          {"amplitude_pp", e.amplitude_pp},
                          {"frequency", e.frequency},
                          {"phase", e.phase}});
    }
    j["events"] = events;
    j["noise"] = {{"linewidth", cfg.noise.laser_linewidth},
                  {"awgn_snr_db", cfg.noise.awgn_snr_db ? json(*cfg.noise.awgn_snr_db) : json(nullptr)},
                  {"adc_bits", cfg.noise.adc_bits ? json(*cfg.noise.adc_bits) : json(nullptr)},
                  {"seed", cfg.noise.rng_seed}};
    j["simulation"] = {{"duration", cfg.simulation.duration},
                       {"quasi_static", cfg.simulation.quasi_static},
                       {"threads", cfg.simulation.threads}};
    const auto& pc = cfg.processing;
    j["processing"] = {{"gauge", pc.gauge},
                       {"window", pc.window},
                       {"psd_window", pc.psd_window},
                       {"tap_selection", pc.tap_selection},
                       {"survey_frames", pc.survey_frames},
                       {"detect_k", pc.detect_k},
                       {"min_event_stddev", pc.min_event_stddev},
                       {"psd_positions", pc.psd_positions}};
    if (cfg.sensitivity) {
        const auto& s = *cfg.sensitivity;
        j["sensitivity"] = {{"amplitudes", s.amplitudes},
                            {"position", s.position},
                            {"frequency", s.frequency},
                            {"window", s.window},
                            {"detection_factor", s.detection_factor},
                            {"target_floor", s.target_floor ? json(*s.target_floor) : json(nullptr)}};
    }
    j["outputs"] = {{"directory", cfg.outputs.directory.string()}, {"formats", cfg.outputs.formats}};
    return j.dump(2);
}

RunConfig field_scenario()
{
    RunConfig cfg;
    cfg.probe = {14, 125e6, channel::kDefaultWavelength};
    cfg.fiber.spans = {{900.0, 0.2}, {24100.0, 0.2}, {1000.0, 0.2}};
    cfg.fiber.connectors = {{900.0, 0.2}, {25000.0, 0.8}};
    // Equal strain on 55 cm and 133 cm of wound fiber.
    const double strain_pp = 1.22e-7;
    cfg.events = {{900.0, 0.55, 0.55 * strain_pp, 300.0, 0.0}, {25000.0, 1.33, 1.33 * strain_pp, 180.0, 0.0}};
    cfg.noise.laser_linewidth = 100.0;
    cfg.noise.awgn_snr_db = 0.0;
    cfg.noise.adc_bits = 12;
    cfg.simulation.duration = 1.0;
    cfg.processing.window = 0.9;
    cfg.processing.psd_window = 0.1;
    return cfg;
}

RunConfig desk_scenario()
{
    RunConfig cfg;
    cfg.probe = {11, 125e6, channel::kDefaultWavelength};
    cfg.fiber.spans = {{1000.0, 0.2}, {1000.0, 0.2}};
    cfg.fiber.connectors = {{1000.0, 0.5}};
    const double strain_pp = 1.22e-7;
    cfg.events = {{450.0, 0.55, 0.55 * strain_pp, 300.0, 0.0}, {1750.0, 1.33, 1.33 * strain_pp, 180.0, 0.0}};
    cfg.noise.laser_linewidth = 100.0;
    cfg.noise.awgn_snr_db = 0.0;
    cfg.noise.adc_bits = 12;
    cfg.simulation.duration = 0.25;
    cfg.processing.gauge = 100.0;
    cfg.processing.window = 0.2;
    cfg.processing.psd_window = 0.05;
    return cfg;
}

}  // namespace pmdas::config
