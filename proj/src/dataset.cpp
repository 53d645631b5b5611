#include "isac/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "isac/error.hpp"
#include "isac/radar_frontend.hpp"
#include "isac/rng.hpp"

namespace isac {

void ScenarioConfig::validate() const {
    if (n_sequences < 1) throw ConfigError("scenario: sequences must be >= 1");
    if (min_samples < 1 || max_samples < min_samples)
        throw ConfigError("scenario: need 1 <= min_samples <= max_samples");
    if (min_candidates < 1 || max_candidates < min_candidates)
        throw ConfigError("scenario: need 1 <= min_candidates <= max_candidates");
    if (!(angle_noise_deg >= 0.0) || !(range_noise_m >= 0.0) || !(velocity_noise_mps >= 0.0))
        throw ConfigError("scenario: noise levels must be >= 0");
    if (!(frame_rate_hz > 0.0)) throw ConfigError("scenario: frame_rate must be > 0");
    if (lanes_m.empty()) throw ConfigError("scenario: no lanes");
    if (user_lane_forward >= lanes_m.size() || user_lane_backward >= lanes_m.size())
        throw ConfigError("scenario: user lane index out of range");
    if (!(traffic_speed_min_mps >= 0.0) || traffic_speed_max_mps < traffic_speed_min_mps)
        throw ConfigError("scenario: bad traffic speed range");
    if (!(near_fraction >= 0.0 && near_fraction <= 1.0))
        throw ConfigError("scenario: near_fraction must be in [0, 1]");
    if (!(min_separation_deg >= 0.0))
        throw ConfigError("scenario: min_separation_deg must be >= 0");
    comm.validate();
    radar.validate();
    detect.validate();
}

GenerationMode parse_mode(const std::string& s) {
    if (s == "fast") return GenerationMode::fast;
    if (s == "full") return GenerationMode::full;
    throw ConfigError("unknown mode '" + s + "' (valid: fast, full)");
}

const char* to_string(GenerationMode m) noexcept {
    return m == GenerationMode::fast ? "fast" : "full";
}

double radar_angle(double comm_angle_deg, const ScenarioConfig& cfg) {
    return comm_angle_deg + cfg.misalignment_deg +
           cfg.distortion_deg * std::sin(3.0 * deg2rad(comm_angle_deg));
}

namespace {

void check_geometry(const ScenarioConfig& cfg) {
    for (std::size_t lane : {cfg.user_lane_forward, cfg.user_lane_backward})
        if (!(cfg.lanes_m[lane] > 0.0))
            throw DataError("impossible geometry: user lane at " +
                            format_double(cfg.lanes_m[lane]) +
                            " m never enters the field of view");
    if (!(cfg.fov_deg > 0.0 && cfg.fov_deg < 90.0))
        throw DataError("impossible geometry: field of view must be in (0, 90) degrees");
    const double worst =
        cfg.fov_deg + std::abs(cfg.misalignment_deg) + std::abs(cfg.distortion_deg) +
        4.0 * cfg.angle_noise_deg;
    if (worst >= 90.0)
        throw DataError("impossible geometry: radar angles leave [-90, 90] degrees");
    for (double y : cfg.lanes_m)
        if (!(y > 0.0)) throw DataError("impossible geometry: lane behind the basestation");
}

int lane_direction(const ScenarioConfig& cfg, std::size_t lane) {
    return lane < (cfg.lanes_m.size() + 1) / 2 ? +1 : -1;
}

struct SequencePlan {
    int direction = 1;
    std::size_t lane = 0;
    std::size_t n_samples = 1;
    double x_start = 0.0;
    double speed = 0.0;
    std::uint64_t seed = 0;
};

SequencePlan plan_sequence(const ScenarioConfig& cfg, std::size_t seq) {
    SequencePlan p;
    p.seed = derive_seed(cfg.seed, stream::kDataset, seq);
    Rng rng(p.seed);
    p.direction = std::bernoulli_distribution(0.5)(rng) ? +1 : -1;
    p.lane = p.direction > 0 ? cfg.user_lane_forward : cfg.user_lane_backward;
    p.n_samples =
        std::uniform_int_distribution<std::size_t>(cfg.min_samples, cfg.max_samples)(rng);
    const double half = cfg.lanes_m[p.lane] * std::tan(deg2rad(cfg.fov_deg));
    p.x_start = -p.direction * half;
    const double length = 2.0 * half;
    p.speed = p.n_samples > 1 ? length * cfg.frame_rate_hz / double(p.n_samples - 1) : 0.0;
    return p;
}

struct SampleScene {
    std::vector<SceneObject> objects;  // comm frame, user first
    std::uint64_t seed = 0;
};

SampleScene build_scene(const ScenarioConfig& cfg, const SequencePlan& plan, std::size_t index,
                        Rng& rng) {
    SampleScene sc;
    sc.seed = derive_seed(plan.seed, stream::kDataset, index + 1);
    rng.seed(sc.seed);

    const double t = double(index) / cfg.frame_rate_hz;
    const double yu = cfg.lanes_m[plan.lane];
    const Vec2 user_pos{plan.x_start + plan.direction * plan.speed * t, yu};
    std::uniform_real_distribution<double> rcs(0.5, 2.0);
    sc.objects.push_back({0, user_pos, {plan.direction * plan.speed, 0.0}, rcs(rng), true});

    const double user_az = azimuth_deg(user_pos);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(cfg.min_candidates,
                                                                     cfg.max_candidates)(rng);
    std::uniform_int_distribution<std::size_t> pick_lane(0, cfg.lanes_m.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> speed(cfg.traffic_speed_min_mps,
                                                 cfg.traffic_speed_max_mps);
    for (std::size_t n = 1; n < k; ++n) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            const std::size_t lane = pick_lane(rng);
            const double y = cfg.lanes_m[lane];
            double az;
            if (unit(rng) < cfg.near_fraction)
                az = user_az + cfg.near_spread_deg * (2.0 * unit(rng) - 1.0);
            else
                az = cfg.fov_deg * (2.0 * unit(rng) - 1.0);
            az = std::clamp(az, -cfg.fov_deg, cfg.fov_deg);
            const bool too_close = std::abs(az - user_az) < cfg.min_separation_deg;
            const Vec2 pos{y * std::tan(deg2rad(az)), y};
            const bool clash = std::any_of(sc.objects.begin(), sc.objects.end(), [&](const auto& o) {
                return o.position.y == y && std::abs(o.position.x - pos.x) < cfg.vehicle_gap_m;
            });
            const double v = lane_direction(cfg, lane) * speed(rng);
            const double refl = rcs(rng);
            if (clash || too_close) continue;
            sc.objects.push_back({int(n), pos, {v, 0.0}, refl, false});
            break;
        }
    }
    return sc;
}

UserTruth truth_of(const SceneObject& user, const ScenarioConfig& cfg) {
    return {user.range(), radar_angle(user.azimuth(), cfg),
            radial_velocity(user.position, user.velocity), user.azimuth()};
}

std::size_t optimal_beam_for(std::span<const SceneObject> scene, const ScenarioConfig& cfg,
                             const Codebook& codebook, std::uint64_t seed) {
    const CVector h = synthesize_channel(scene, cfg.comm, derive_seed(seed, stream::kChannel, 0));
    const auto powers = sweep_powers(h, codebook, cfg.comm, derive_seed(seed, stream::kChannel, 1));
    return optimal_beam(powers);
}

struct Frame {
    bool kept = false;
    Sample sample;
    UserTruth truth;
};

Frame fast_frame(const ScenarioConfig& cfg, const SampleScene& sc, const Codebook& codebook,
                 Rng& rng) {
    std::normal_distribution<double> n_angle(0.0, 1.0), n_range(0.0, 1.0), n_vel(0.0, 1.0);
    struct Entry {
        Candidate c;
        bool user;
    };
    std::vector<Entry> entries;
    for (const auto& o : sc.objects) {
        Candidate c;
        c.range = o.range() + cfg.range_noise_m * n_range(rng);
        c.angle = radar_angle(o.azimuth(), cfg) + cfg.angle_noise_deg * n_angle(rng);
        c.velocity = radial_velocity(o.position, o.velocity) + cfg.velocity_noise_mps * n_vel(rng);
        const double r = o.range();
        c.power = o.reflectivity * 1e4 / (r * r * r * r);
        c.n_points = 1;
        entries.push_back({c, o.is_comm_user});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.c.power > b.c.power; });
    Frame f;
    f.kept = true;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        f.sample.candidates.push_back(entries[k].c);
        if (entries[k].user) f.sample.label = k;
    }
    const SceneObject& user = comm_user(sc.objects);
    f.sample.beam = optimal_beam_for(sc.objects, cfg, codebook, sc.seed);
    f.truth = truth_of(user, cfg);
    return f;
}

Frame full_frame(const ScenarioConfig& cfg, const SampleScene& sc, const Codebook& codebook) {
    const RadarCube cube =
        synthesize_frame(radar_scene(sc.objects, cfg), cfg.radar,
                         derive_seed(sc.seed, stream::kRadarNoise));
    Frame f;
    f.sample.candidates = detect_objects(cube, cfg.radar, cfg.detect);
    const SceneObject& user = comm_user(sc.objects);
    f.truth = truth_of(user, cfg);
    if (f.sample.candidates.empty()) return f;

    // Label: nearest candidate in bin units, gated at 2 bins per axis.
    const double dr = cfg.radar.range_bin_m(), dv = cfg.radar.velocity_bin_mps();
    const double du = 1.0 / (cfg.radar.rx_spacing * double(cfg.detect.process.angle_fft_size));
    const double su = std::sin(deg2rad(f.truth.angle));
    double best = INFINITY;
    for (std::size_t k = 0; k < f.sample.candidates.size(); ++k) {
        const auto& c = f.sample.candidates[k];
        const double er = std::abs(c.range - f.truth.range) / dr;
        const double ev = std::abs(c.velocity - f.truth.velocity) / dv;
        const double ea = std::abs(std::sin(deg2rad(c.angle)) - su) / du;
        if (er > 2.0 || ev > 2.0 || ea > 2.0) continue;
        const double d = er * er + ev * ev + ea * ea;
        if (d < best) {
            best = d;
            f.sample.label = k;
            f.kept = true;
        }
    }
    if (f.kept) f.sample.beam = optimal_beam_for(sc.objects, cfg, codebook, sc.seed);
    return f;
}

std::vector<Frame> generate_sequence(const ScenarioConfig& cfg, GenerationMode mode,
                                     std::size_t seq, const Codebook& codebook) {
    const SequencePlan plan = plan_sequence(cfg, seq);
    std::vector<Frame> frames;
    frames.reserve(plan.n_samples);
    Rng rng;
    for (std::size_t i = 0; i < plan.n_samples; ++i) {
        const SampleScene sc = build_scene(cfg, plan, i, rng);
        Frame f = mode == GenerationMode::fast ? fast_frame(cfg, sc, codebook, rng)
                                               : full_frame(cfg, sc, codebook);
        f.sample.sequence_id = seq;
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace

std::vector<SceneObject> to_radar_frame(std::span<const SceneObject> scene,
                                        const ScenarioConfig& cfg) {
    std::vector<SceneObject> out(scene.begin(), scene.end());
    for (auto& o : out) {
        const double delta = deg2rad(radar_angle(o.azimuth(), cfg) - o.azimuth());
        const double c = std::cos(delta), s = std::sin(delta);
        auto rot = [&](Vec2 v) { return Vec2{v.x * c + v.y * s, -v.x * s + v.y * c}; };
        o.position = rot(o.position);
        o.velocity = rot(o.velocity);
    }
    return out;
}

std::vector<SceneObject> radar_scene(std::span<const SceneObject> scene,
                                     const ScenarioConfig& cfg) {
    auto out = to_radar_frame(scene, cfg);
    for (auto& o : out) o.reflectivity *= std::pow(10.0 / o.range(), 4.0);
    return out;
}

std::vector<SceneObject> scenario_scene(const ScenarioConfig& cfg, std::size_t sequence,
                                        std::size_t index) {
    cfg.validate();
    check_geometry(cfg);
    const SequencePlan plan = plan_sequence(cfg, sequence);
    if (index >= plan.n_samples) throw std::out_of_range("scenario_scene: sample index");
    Rng rng;
    return build_scene(cfg, plan, index, rng).objects;
}

GeneratedDataset generate_dataset_with_truth(const ScenarioConfig& cfg, GenerationMode mode,
                                             std::size_t threads) {
    cfg.validate();
    check_geometry(cfg);
    const Codebook codebook =
        dft_codebook(cfg.comm.n_antennas, cfg.comm.n_beams, cfg.comm.element_spacing);

    std::vector<std::vector<Frame>> per_seq(cfg.n_sequences);
    threads = std::clamp<std::size_t>(threads, 1, cfg.n_sequences);
    if (threads == 1) {
        for (std::size_t s = 0; s < cfg.n_sequences; ++s)
            per_seq[s] = generate_sequence(cfg, mode, s, codebook);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t s; (s = next.fetch_add(1)) < cfg.n_sequences;)
                        per_seq[s] = generate_sequence(cfg, mode, s, codebook);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    GeneratedDataset out;
    std::uint64_t id = 0;
    for (auto& frames : per_seq)
        for (auto& f : frames) {
            f.sample.sample_id = id++;
            if (!f.kept) {
                ++out.dropped;
                continue;
            }
            out.samples.push_back(std::move(f.sample));
            out.truth.push_back(f.truth);
        }
    return out;
}

std::vector<Sample> generate_dataset(const ScenarioConfig& cfg, GenerationMode mode,
                                     std::size_t threads) {
    return generate_dataset_with_truth(cfg, mode, threads).samples;
}

DatasetSplit split_by_sequence(std::span<const Sample> samples, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
    std::vector<std::uint64_t> order;
    std::map<std::uint64_t, std::size_t> counts;
    for (const auto& s : samples)
        if (counts[s.sequence_id]++ == 0) order.push_back(s.sequence_id);
    if (order.size() < 2) throw DataError("split needs at least two sequences");

    Rng rng(derive_seed(seed, stream::kSplit));
    std::shuffle(order.begin(), order.end(), rng);
    const double target = ratio * double(samples.size());
    std::map<std::uint64_t, bool> in_train;
    std::size_t taken = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const bool take = double(taken) < target && k + 1 < order.size();
        in_train[order[k]] = take;
        if (take) taken += counts[order[k]];
    }
    DatasetSplit split;
    for (const auto& s : samples) (in_train[s.sequence_id] ? split.train : split.test).push_back(s);
    return split;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

constexpr const char* kSampleHeader =
    "sample_id,sequence_id,K_t,k,range_m,angle_deg,vel_mps,power,b_star,label_k,n_points";
constexpr std::size_t kRequiredColumns = 10;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
T parse_field(std::string_view f, const std::string& src, std::size_t line, const char* what) {
    T v{};
    const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseError(src, line, std::string("bad ") + what + " '" + std::string(f) + "'");
    return v;
}

}  // namespace

void write_samples(std::ostream& os, std::span<const Sample> samples) {
    os << kSampleHeader << '\n';
    for (const auto& s : samples)
        for (std::size_t k = 0; k < s.candidates.size(); ++k) {
            const auto& c = s.candidates[k];
            os << s.sample_id << ',' << s.sequence_id << ',' << s.candidates.size() << ',' << k
               << ',' << format_double(c.range) << ',' << format_double(c.angle) << ','
               << format_double(c.velocity) << ',' << format_double(c.power) << ',' << s.beam
               << ',' << s.label << ',' << c.n_points << '\n';
        }
}

void save_samples(const std::filesystem::path& path, std::span<const Sample> samples) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_samples(os, samples);
    if (!os) throw DataError("write failed: " + path.string());
}

std::vector<Sample> read_samples(std::istream& is, const std::string& src) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) throw ParseError(src, 1, "empty file, expected header");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        const auto cols = split_fields(line);
        const auto want = split_fields(kSampleHeader);
        if (cols.size() < kRequiredColumns || cols.size() > want.size() ||
            !std::equal(cols.begin(), cols.end(), want.begin()))
            throw ParseError(src, lineno, "unexpected header '" + line + "'");
    }

    std::vector<Sample> out;
    std::size_t expected_k = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() < kRequiredColumns || f.size() > kRequiredColumns + 1)
            throw ParseError(src, lineno, "expected 10 or 11 columns, got " +
                                              std::to_string(f.size()));
        const auto sid = parse_field<std::uint64_t>(f[0], src, lineno, "sample_id");
        const auto seq = parse_field<std::uint64_t>(f[1], src, lineno, "sequence_id");
        const auto kt = parse_field<std::size_t>(f[2], src, lineno, "K_t");
        const auto k = parse_field<std::size_t>(f[3], src, lineno, "k");
        Candidate c;
        c.range = parse_field<double>(f[4], src, lineno, "range_m");
        c.angle = parse_field<double>(f[5], src, lineno, "angle_deg");
        c.velocity = parse_field<double>(f[6], src, lineno, "vel_mps");
        c.power = parse_field<double>(f[7], src, lineno, "power");
        const auto beam = parse_field<std::size_t>(f[8], src, lineno, "b_star");
        const auto label = parse_field<std::size_t>(f[9], src, lineno, "label_k");
        c.n_points = f.size() > kRequiredColumns
                         ? parse_field<std::size_t>(f[10], src, lineno, "n_points")
                         : 1;
        if (kt == 0) throw ParseError(src, lineno, "K_t must be >= 1");
        if (label >= kt) throw ParseError(src, lineno, "label_k out of range");

        if (k == 0) {
            if (expected_k != 0) throw ParseError(src, lineno, "previous sample is incomplete");
            Sample s;
            s.sample_id = sid;
            s.sequence_id = seq;
            s.beam = beam;
            s.label = label;
            out.push_back(std::move(s));
        } else {
            if (out.empty() || k != expected_k)
                throw ParseError(src, lineno, "candidate index out of sequence");
            const Sample& s = out.back();
            if (s.sample_id != sid || s.sequence_id != seq || s.beam != beam ||
                s.label != label || k >= kt)
                throw ParseError(src, lineno, "row disagrees with its sample");
        }
        out.back().candidates.push_back(c);
        expected_k = k + 1 == kt ? 0 : k + 1;
    }
    if (expected_k != 0) throw ParseError(src, lineno, "file ends inside a sample");
    for (const auto& s : out)
        if (s.candidates.size() == 0) throw ParseError(src, lineno, "sample without candidates");
    return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read_samples(is, path.string());
}

void write_candidates(std::ostream& os, std::span<const CandidateRecord> records) {
    os << "sample_id,k,range_m,angle_deg,vel_mps,power,n_points\n";
    for (const auto& r : records)
        for (std::size_t k = 0; k < r.candidates.size(); ++k) {
            const auto& c = r.candidates[k];
            os << r.sample_id << ',' << k << ',' << format_double(c.range) << ','
               << format_double(c.angle) << ',' << format_double(c.velocity) << ','
               << format_double(c.power) << ',' << c.n_points << '\n';
        }
}

}  // namespace isac
