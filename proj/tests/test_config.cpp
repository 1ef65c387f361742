#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "pmdas/config.hpp"

using namespace pmdas;
using namespace pmdas::config;
using nlohmann::json;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(PMDAS_SOURCE_DIR) / "configs";

json desk_json() { return json::parse(to_json(desk_scenario())); }

std::string error_of(const json& j)
{
    try {
        parse_config(j.dump());
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("shipped configs load and match the built-in scenarios")
{
    const auto field = load_config(kConfigs / "field_26km.json");
    CHECK(field.probe.K == 14);
    CHECK(field.fiber.length() == doctest::Approx(26000.0));
    REQUIRE(field.events.size() == 2);
    CHECK(field.events[0].position == 900.0);
    CHECK(field.events[0].frequency == 300.0);
    CHECK(field.events[1].position == 25000.0);
    CHECK(field.events[1].frequency == 180.0);
    CHECK(validate(field).empty());

    const auto desk = load_config(kConfigs / "desk_2km.json");
    CHECK(desk.probe.K == 11);
    CHECK(desk.fiber.length() == doctest::Approx(2000.0));
    CHECK(to_json(desk) == to_json(load_config(kConfigs / "desk_2km.json")));
}

TEST_CASE("a 30 km fiber violates the lower timing bound")
{
    auto j = json::parse(to_json(field_scenario()));
    j["fiber"]["spans"] = json::array({{{"length", 30000.0}, {"loss", 0.2}}});
    j["events"] = json::array();
    j["processing"]["psd_positions"] = json::array();
    const auto msg = error_of(j);
    CHECK(msg.find("lower timing bound") != std::string::npos);
    CHECK_THROWS_AS(parse_config(j.dump()), TimingError);
}

TEST_CASE("serialization round trip")
{
    auto cfg = desk_scenario();
    cfg.sensitivity = SensitivityConfig{{1e-8, 5e-8, 1e-7}, 450.0, 300.0, 0.1, 3.0, 0.05};
    cfg.outputs.formats = {"csv", "capture"};
    cfg.noise.adc_bits.reset();
    const auto text = to_json(cfg);
    const auto back = parse_config(text);
    CHECK(to_json(back) == text);
    REQUIRE(back.sensitivity);
    CHECK(back.sensitivity->amplitudes.size() == 3);
    CHECK(*back.sensitivity->target_floor == 0.05);
    CHECK_FALSE(back.noise.adc_bits);
    CHECK(back.outputs.formats.size() == 2);
}

TEST_CASE("empty event list and omitted sections take defaults")
{
    json j;
    j["fiber"] = {{"spans", json::array({{{"length", 2000.0}, {"loss", 0.2}}})}};
    j["probe"] = {{"K", 11}};
    j["events"] = json::array();
    j["simulation"] = {{"duration", 0.05}};
    j["processing"] = {{"window", 0.02}, {"psd_window", 0.01}};
    const auto cfg = parse_config(j.dump());
    CHECK(cfg.events.empty());
    CHECK(cfg.probe.symbol_rate == 125e6);
    CHECK(cfg.processing.gauge == 100.0);
    CHECK(cfg.processing.tap_selection == "uniform");
    CHECK_FALSE(cfg.noise.awgn_snr_db);
    CHECK_FALSE(cfg.sensitivity);
    CHECK(cfg.outputs.formats == std::vector<std::string>{"csv"});
}

TEST_CASE("unknown keys are reported with their path")
{
    auto j = desk_json();
    j["processing"]["gauge_length"] = 10.0;
    CHECK(error_of(j).find("processing.gauge_length") != std::string::npos);
    j = desk_json();
    j["events"][1]["amplitude"] = 1e-7;
    CHECK(error_of(j).find("events[1].amplitude") != std::string::npos);
    j = desk_json();
    j["extra"] = 1;
    CHECK(error_of(j).find("extra") != std::string::npos);
}

TEST_CASE("field validation")
{
    auto expect = [](const std::function<void(json&)>& edit, const std::string& needle) {
        auto j = desk_json();
        edit(j);
        const auto msg = error_of(j);
        CHECK_MESSAGE(msg.find(needle) != std::string::npos, needle << " -> " << msg);
    };
    expect([](json& j) { j["probe"]["K"] = 21; }, "probe.K");
    expect([](json& j) { j["probe"]["K"] = "eleven"; }, "probe.K");
    expect([](json& j) { j["events"][0]["position"] = 2500.0; }, "events[0].position");
    expect([](json& j) { j["events"][0]["frequency"] = 5000.0; }, "events[0].frequency");
    expect([](json& j) { j["events"][0]["kind"] = "square"; }, "events[0].kind");
    expect([](json& j) { j["simulation"]["duration"] = 1e-4; }, "simulation.duration");
    expect([](json& j) { j["processing"]["gauge"] = 0.5; }, "processing.gauge");
    expect([](json& j) { j["processing"]["window"] = 0.001; }, "processing.window");
    expect([](json& j) { j["processing"]["window"] = 1.0; }, "processing.window");
    expect([](json& j) { j["processing"]["tap_selection"] = "best"; }, "processing.tap_selection");
    expect([](json& j) { j["processing"]["survey_frames"] = -1; }, "processing.survey_frames");
    expect([](json& j) { j["outputs"]["formats"] = json::array({"hdf5"}); }, "outputs.formats[0]");
    expect([](json& j) { j.erase("fiber"); }, "config.fiber");
    expect(
        [](json& j) {
            j["sensitivity"] = {{"amplitudes", json::array({2e-8, 1e-8})}, {"position", 450.0}};
        },
        "sensitivity.amplitudes");
    expect(
        [](json& j) {
            j["sensitivity"] = {{"amplitudes", json::array({1e-8})}, {"position", 450.0}, {"target_floor", 0.0}};
        },
        "sensitivity.target_floor");
    CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
    CHECK_THROWS_AS(load_config(kConfigs / "missing.json"), IoError);
}
