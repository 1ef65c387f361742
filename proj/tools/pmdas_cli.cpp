// pmdas: code generation, backscatter simulation, Jones/phase processing and
// event analysis for a dual-polarization coded phase-OTDR.
//
// Exit codes: 0 success, 1 internal error, 2 config/validation error,
// 3 I/O error, 4 acceptance failure.

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pmdas/acceptance.hpp"
#include "pmdas/codes.hpp"
#include "pmdas/config.hpp"
#include "pmdas/csv.hpp"
#include "pmdas/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pmdas;

namespace {

struct Overrides {
    std::optional<double> duration;
    std::optional<unsigned> threads;
    std::optional<uint64_t> noise_seed;
    std::optional<uint64_t> fiber_seed;

    void attach(CLI::App* cmd)
    {
        cmd->add_option("--duration", duration, "Override simulation.duration (s)");
        cmd->add_option("--threads", threads, "Override simulation.threads (0 = all cores)");
        cmd->add_option("--noise-seed", noise_seed, "Override noise.seed");
        cmd->add_option("--fiber-seed", fiber_seed, "Override fiber.seed");
    }

    config::RunConfig load(const fs::path& path, bool print_warnings = true) const
    {
        auto cfg = config::load_config(path);
        if (duration) cfg.simulation.duration = *duration;
        if (threads) cfg.simulation.threads = *threads;
        if (noise_seed) cfg.noise.rng_seed = *noise_seed;
        if (fiber_seed) cfg.fiber.rng_seed = *fiber_seed;
        const auto warnings = config::validate(cfg);
        if (print_warnings) {
            for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        }
        return cfg;
    }
};

codes::BipolarSequence parse_sequence(const std::string& text)
{
    std::vector<int8_t> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(static_cast<int8_t>(std::stoi(item)));
        } catch (const std::exception&) {
            throw ConfigError("--pairs: cannot parse \"" + item + "\"");
        }
    }
    return codes::BipolarSequence(std::move(v));
}

void print_report(const codes::VerificationReport& r)
{
    std::cout << "complementary_x=" << r.complementary_x << " complementary_y=" << r.complementary_y
              << " mutually_orthogonal=" << r.mutually_orthogonal << "\n";
    if (r.first_violation) {
        std::cout << "first violation: " << codes::to_string(r.first_violation->which)
                  << " lag=" << r.first_violation->lag << " value=" << r.first_violation->value << "\n";
    }
}

int cmd_codes(int K, bool verify, const std::vector<std::string>& pairs, const std::string& out, double symbol_rate)
{
    if (!pairs.empty()) {
        if (pairs.size() != 4) throw ConfigError("--pairs: expected four sequences a1 b1 a2 b2");
        codes::OrthogonalCodeSet set;
        set.pair_x = {parse_sequence(pairs[0]), parse_sequence(pairs[1])};
        set.pair_y = {parse_sequence(pairs[2]), parse_sequence(pairs[3])};
        const auto r = codes::verify_code_set(set);
        print_report(r);
        return r.ok() ? 0 : 2;
    }
    const auto set = codes::make_code_set(K);
    if (verify) {
        const auto r = codes::verify_code_set(set);
        print_report(r);
        if (!r.ok()) return 2;
    }
    const auto frame = codes::build_probe_frame(set, symbol_rate);
    if (!out.empty()) {
        io::write_code_csv(out, frame);
    } else if (!verify) {
        std::cout << "index,x,y\n";
        for (std::size_t i = 0; i < frame.length(); ++i) {
            std::cout << i << "," << frame.x_stream[i] << "," << frame.y_stream[i] << "\n";
        }
    }
    if (verify) {
        std::cout << "N=" << set.size() << " T_code=" << frame.t_code << " s BW=" << frame.bw
                  << " Hz S_r=" << frame.s_r << " m\n";
    }
    return 0;
}

int cmd_process(const config::RunConfig& cfg, const fs::path& capture, const fs::path& out)
{
    pipeline::CaptureFileSource source(capture);
    const auto set = codes::make_code_set(cfg.probe.K);
    const auto r = pipeline::process(source, set, pipeline::process_options(cfg));
    pipeline::write_process_outputs(out, r, cfg);
    return 0;
}

template <typename Fn>
int guarded(Fn&& fn)
{
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dual-polarization coded phase-OTDR simulator and processor"};
    app.require_subcommand(1);

    int K = 14;
    bool verify = false;
    std::vector<std::string> pairs;
    std::string codes_out;
    double symbol_rate = 125e6;
    auto* codes_cmd = app.add_subcommand("codes", "Emit or verify a mutually orthogonal complementary code set");
    codes_cmd->add_option("--k", K, "Recursion count (sequence length 4 * 2^K)")->check(CLI::Range(0, 20));
    codes_cmd->add_flag("--verify", verify, "Check complementarity and mutual orthogonality");
    codes_cmd->add_option("--pairs", pairs, "Verify an explicit grouping: a1 b1 a2 b2, comma separated symbols");
    codes_cmd->add_option("--out", codes_out, "Write the probe frame CSV here instead of stdout");
    codes_cmd->add_option("--symbol-rate", symbol_rate, "Symbol rate for the reported timing (baud)");

    Overrides ov;
    fs::path config_path, capture_path, out_path, in_path;

    auto* sim_cmd = app.add_subcommand("simulate", "Synthesize a capture file");
    sim_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sim_cmd->add_option("--out", capture_path, "Capture file to write")->required();
    ov.attach(sim_cmd);

    auto* proc_cmd = app.add_subcommand("process", "Capture to Jones, phase and differential phase CSVs");
    proc_cmd->add_option("--capture", capture_path, "Capture file")->required();
    proc_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    proc_cmd->add_option("--out", out_path, "Output directory")->required();
    ov.attach(proc_cmd);

    auto* an_cmd = app.add_subcommand("analyze", "Profile, PSD, events and sensitivity from a processed directory");
    an_cmd->add_option("--in", in_path, "Directory written by process")->required();
    an_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    ov.attach(an_cmd);

    auto* pipe_cmd = app.add_subcommand("pipeline", "Run all stages into outputs.directory");
    pipe_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    pipe_cmd->add_option("--out", out_path, "Override outputs.directory");
    ov.attach(pipe_cmd);

    std::string filter;
    auto* self_cmd = app.add_subcommand("selftest", "Run the acceptance suite");
    self_cmd->add_option("--filter", filter, "Only checks whose name contains this text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*codes_cmd) return guarded([&] { return cmd_codes(K, verify, pairs, codes_out, symbol_rate); });
    if (*sim_cmd) {
        return guarded([&] {
            pipeline::simulate_to_file(ov.load(config_path), capture_path);
            return 0;
        });
    }
    if (*proc_cmd) return guarded([&] { return cmd_process(ov.load(config_path), capture_path, out_path); });
    if (*an_cmd) {
        return guarded([&] {
            pipeline::run_analysis_stage(in_path, ov.load(config_path));
            return 0;
        });
    }
    if (*pipe_cmd) {
        return guarded([&] {
            auto cfg = ov.load(config_path, false);
            if (!out_path.empty()) cfg.outputs.directory = out_path;
            for (const auto& w : pipeline::run_pipeline(cfg)) std::cerr << "warning: " << w << "\n";
            return 0;
        });
    }
    if (*self_cmd) return guarded([&] { return acceptance::run_all(std::cout, filter) ? 0 : 4; });
    return 1;
}
