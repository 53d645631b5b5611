#include "isac/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "isac/error.hpp"

namespace isac {

using nlohmann::json;

namespace {

/// Reads keys out of one JSON object and rejects any it does not know.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError(name_ + ": unknown key '" + key + "'");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

Vec2 vec2_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(where + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

void read_comm(const json& j, CommConfig& c) {
    Section s(j, "comm");
    s.get("antennas", c.n_antennas);
    s.get("beams", c.n_beams);
    s.get("noise", c.noise_var);
    s.get("tx_gain", c.tx_gain);
    s.get("paths", c.n_paths);
    s.get("element_spacing", c.element_spacing);
    s.get("carrier_hz", c.carrier_hz);
}

void read_radar(const json& j, RadarConfig& r) {
    Section s(j, "radar");
    s.get("carrier_hz", r.carrier_hz);
    s.get("slope_hz_per_s", r.slope_hz_per_s);
    s.get("chirp_duration_s", r.chirp_duration_s);
    s.get("inter_chirp_wait_s", r.inter_chirp_wait_s);
    s.get("chirps", r.n_chirps);
    s.get("samples", r.n_samples);
    s.get("rx_antennas", r.n_rx);
    s.get("sample_rate_hz", r.sample_rate_hz);
    s.get("rx_spacing", r.rx_spacing);
    s.get("noise_floor", r.noise_floor);
}

void read_detect(const json& j, DetectConfig& d) {
    Section s(j, "detect");
    s.get("cfar_train", d.cfar_train);
    s.get("cfar_guard", d.cfar_guard);
    s.get("cfar_pfa", d.cfar_pfa);
    s.get("dbscan_eps", d.dbscan_eps);
    s.get("dbscan_min_pts", d.dbscan_min_pts);
    s.get("angle_fft_size", d.process.angle_fft_size);
    s.get("window", d.process.window);
    s.get("clutter_removal", d.process.clutter_removal);
    s.get("dynamic_range_db", d.dynamic_range_db);
    s.get("angle_peak_db", d.angle_peak_db);
}

void read_scenario(const json& j, ScenarioConfig& c) {
    Section s(j, "scenario");
    s.get("sequences", c.n_sequences);
    s.get("min_samples", c.min_samples);
    s.get("max_samples", c.max_samples);
    s.get("min_candidates", c.min_candidates);
    s.get("max_candidates", c.max_candidates);
    s.get("misalignment_deg", c.misalignment_deg);
    s.get("angle_noise_deg", c.angle_noise_deg);
    s.get("distortion_deg", c.distortion_deg);
    s.get("range_noise_m", c.range_noise_m);
    s.get("velocity_noise_mps", c.velocity_noise_mps);
    s.get("frame_rate_hz", c.frame_rate_hz);
    s.get("fov_deg", c.fov_deg);
    s.get("lanes_m", c.lanes_m);
    s.get("user_lane_forward", c.user_lane_forward);
    s.get("user_lane_backward", c.user_lane_backward);
    s.get("traffic_speed_min_mps", c.traffic_speed_min_mps);
    s.get("traffic_speed_max_mps", c.traffic_speed_max_mps);
    s.get("near_fraction", c.near_fraction);
    s.get("near_spread_deg", c.near_spread_deg);
    s.get("min_separation_deg", c.min_separation_deg);
    s.get("vehicle_gap_m", c.vehicle_gap_m);
}

}  // namespace

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    Section top(j, "config");
    top.get("seed", cfg.seed);
    if (const json* c = top.child("comm")) read_comm(*c, cfg.scenario.comm);
    if (const json* c = top.child("radar")) read_radar(*c, cfg.scenario.radar);
    if (const json* c = top.child("detect")) read_detect(*c, cfg.scenario.detect);
    if (const json* c = top.child("scenario")) read_scenario(*c, cfg.scenario);
    if (const json* objs = top.child("objects")) {
        if (!objs->is_array()) throw ConfigError("objects: expected an array");
        int id = 0;
        for (const auto& o : *objs) {
            const std::string where = "objects[" + std::to_string(id) + "]";
            Section s(o, where);
            SceneObject obj;
            obj.id = id++;
            const json* pos = s.child("position");
            if (!pos) throw ConfigError(where + ": position is required");
            obj.position = vec2_from(*pos, where + ".position");
            if (const json* vel = s.child("velocity")) obj.velocity = vec2_from(*vel, where + ".velocity");
            s.get("reflectivity", obj.reflectivity);
            s.get("comm_user", obj.is_comm_user);
            cfg.objects.push_back(obj);
        }
    }
    cfg.scenario.seed = cfg.seed;
    cfg.scenario.validate();
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    const ScenarioConfig& sc = cfg.scenario;
    const CommConfig& c = sc.comm;
    const RadarConfig& r = sc.radar;
    const DetectConfig& d = sc.detect;
    json j;
    j["seed"] = cfg.seed;
    j["comm"] = {{"antennas", c.n_antennas}, {"beams", c.n_beams},   {"noise", c.noise_var},
                 {"tx_gain", c.tx_gain},     {"paths", c.n_paths},   {"element_spacing", c.element_spacing},
                 {"carrier_hz", c.carrier_hz}};
    j["radar"] = {{"carrier_hz", r.carrier_hz},
                  {"slope_hz_per_s", r.slope_hz_per_s},
                  {"chirp_duration_s", r.chirp_duration_s},
                  {"inter_chirp_wait_s", r.inter_chirp_wait_s},
                  {"chirps", r.n_chirps},
                  {"samples", r.n_samples},
                  {"rx_antennas", r.n_rx},
                  {"sample_rate_hz", r.sample_rate_hz},
                  {"rx_spacing", r.rx_spacing},
                  {"noise_floor", r.noise_floor}};
    j["detect"] = {{"cfar_train", d.cfar_train},
                   {"cfar_guard", d.cfar_guard},
                   {"cfar_pfa", d.cfar_pfa},
                   {"dbscan_eps", d.dbscan_eps},
                   {"dbscan_min_pts", d.dbscan_min_pts},
                   {"angle_fft_size", d.process.angle_fft_size},
                   {"window", d.process.window},
                   {"clutter_removal", d.process.clutter_removal},
                   {"dynamic_range_db", d.dynamic_range_db},
                   {"angle_peak_db", d.angle_peak_db}};
    j["scenario"] = {{"sequences", sc.n_sequences},
                     {"min_samples", sc.min_samples},
                     {"max_samples", sc.max_samples},
                     {"min_candidates", sc.min_candidates},
                     {"max_candidates", sc.max_candidates},
                     {"misalignment_deg", sc.misalignment_deg},
                     {"angle_noise_deg", sc.angle_noise_deg},
                     {"distortion_deg", sc.distortion_deg},
                     {"range_noise_m", sc.range_noise_m},
                     {"velocity_noise_mps", sc.velocity_noise_mps},
                     {"frame_rate_hz", sc.frame_rate_hz},
                     {"fov_deg", sc.fov_deg},
                     {"lanes_m", sc.lanes_m},
                     {"user_lane_forward", sc.user_lane_forward},
                     {"user_lane_backward", sc.user_lane_backward},
                     {"traffic_speed_min_mps", sc.traffic_speed_min_mps},
                     {"traffic_speed_max_mps", sc.traffic_speed_max_mps},
                     {"near_fraction", sc.near_fraction},
                     {"near_spread_deg", sc.near_spread_deg},
                     {"min_separation_deg", sc.min_separation_deg},
                     {"vehicle_gap_m", sc.vehicle_gap_m}};
    if (!cfg.objects.empty()) {
        json objs = json::array();
        for (const auto& o : cfg.objects)
            objs.push_back({{"position", {o.position.x, o.position.y}},
                            {"velocity", {o.velocity.x, o.velocity.y}},
                            {"reflectivity", o.reflectivity},
                            {"comm_user", o.is_comm_user}});
        j["objects"] = objs;
    }
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace isac
