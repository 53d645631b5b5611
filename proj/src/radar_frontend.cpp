#include "isac/radar_frontend.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "isac/error.hpp"
#include "isac/rng.hpp"

namespace isac {

double RadarConfig::range_bin_m() const noexcept {
    return kSpeedOfLight * sample_rate_hz / (2.0 * slope_hz_per_s * double(n_samples));
}

double RadarConfig::velocity_bin_mps() const noexcept {
    return wavelength_m() / (2.0 * double(n_chirps) * chirp_period_s());
}

void RadarConfig::validate() const {
    if (!(carrier_hz > 0.0)) throw ConfigError("radar: carrier_hz must be > 0");
    if (!(slope_hz_per_s > 0.0) || !(chirp_duration_s > 0.0))
        throw ConfigError("radar: slope and chirp duration must be > 0");
    if (!(inter_chirp_wait_s >= 0.0)) throw ConfigError("radar: inter_chirp_wait must be >= 0");
    if (n_chirps < 1 || n_samples < 1 || n_rx < 1)
        throw ConfigError("radar: chirps, samples and rx antennas must be >= 1");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("radar: sample_rate must be > 0");
    // Allow float round-off in configs that sample the whole chirp.
    if (double(n_samples) / sample_rate_hz > chirp_duration_s * (1.0 + 1e-9))
        throw ConfigError("radar: n_samples / sample_rate exceeds chirp duration");
    if (!(noise_floor >= 0.0)) throw ConfigError("radar: noise_floor must be >= 0");
}

RadarCube::RadarCube(std::size_t n_rx, std::size_t n_chirps, std::size_t n_samples)
    : n_rx_(n_rx), n_chirps_(n_chirps), n_samples_(n_samples),
      data_(n_rx * n_chirps * n_samples, cdouble{}) {}

namespace {

struct ToneTerms {
    double amplitude;
    double base_cycles;      // f_c tau - mu tau^2 / 2
    double beat_hz;          // mu tau
    double doppler_hz;       // 2 v_r f_c / c
    double spatial_cycles;   // spacing sin(theta), per antenna
};

ToneTerms tone_terms(const SceneObject& obj, const RadarConfig& cfg) {
    const double d = obj.range();
    if (!(d > 0.0)) throw std::invalid_argument("if_tone: object range must be > 0");
    const double tau = 2.0 * d / kSpeedOfLight;
    const double mu = cfg.slope_hz_per_s;
    return {std::sqrt(obj.reflectivity),
            cfg.carrier_hz * tau - 0.5 * mu * tau * tau,
            mu * tau,
            2.0 * radial_velocity(obj.position, obj.velocity) * cfg.carrier_hz / kSpeedOfLight,
            cfg.rx_spacing * std::sin(deg2rad(obj.azimuth()))};
}

constexpr double kTwoPi = 2.0 * kPi;

}  // namespace

cdouble if_tone(const SceneObject& object, const RadarConfig& cfg, std::size_t antenna,
                std::size_t chirp, std::size_t sample) {
    const ToneTerms tt = tone_terms(object, cfg);
    const double t = double(sample) / cfg.sample_rate_hz;
    const double cycles = tt.beat_hz * t + tt.base_cycles +
                          tt.doppler_hz * double(chirp) * cfg.chirp_period_s() +
                          tt.spatial_cycles * double(antenna);
    return std::polar(tt.amplitude, kTwoPi * cycles);
}

RadarCube synthesize_frame(std::span<const SceneObject> scene, const RadarConfig& cfg,
                           std::uint64_t seed) {
    if (scene.empty()) throw std::invalid_argument("synthesize_frame: empty scene");
    cfg.validate();
    RadarCube cube(cfg.n_rx, cfg.n_chirps, cfg.n_samples);

    // The tone factors into per-antenna, per-chirp and per-sample phasors.
    std::vector<cdouble> ant(cfg.n_rx), chirp(cfg.n_chirps), fast(cfg.n_samples);
    for (const auto& obj : scene) {
        const ToneTerms tt = tone_terms(obj, cfg);
        const cdouble base = std::polar(tt.amplitude, kTwoPi * tt.base_cycles);
        for (std::size_t m = 0; m < cfg.n_rx; ++m)
            ant[m] = base * std::polar(1.0, kTwoPi * tt.spatial_cycles * double(m));
        for (std::size_t l = 0; l < cfg.n_chirps; ++l)
            chirp[l] = std::polar(1.0, kTwoPi * tt.doppler_hz * double(l) * cfg.chirp_period_s());
        for (std::size_t i = 0; i < cfg.n_samples; ++i)
            fast[i] = std::polar(1.0, kTwoPi * tt.beat_hz * double(i) / cfg.sample_rate_hz);
        for (std::size_t m = 0; m < cfg.n_rx; ++m)
            for (std::size_t l = 0; l < cfg.n_chirps; ++l) {
                const cdouble ml = ant[m] * chirp[l];
                cdouble* row = &cube.at(m, l, 0);
                for (std::size_t i = 0; i < cfg.n_samples; ++i) row[i] += ml * fast[i];
            }
    }

    if (cfg.noise_floor > 0.0) {
        Rng rng(seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(cfg.noise_floor / 2.0));
        for (auto& v : cube.data()) v += cdouble(gauss(rng), gauss(rng));
    }
    return cube;
}

namespace {

constexpr std::array<char, 4> kCubeMagic{'R', 'C', 'U', 'B'};
constexpr std::uint32_t kCubeVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated header");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

}  // namespace

void write_cube(const std::filesystem::path& path, const RadarCube& cube) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write(kCubeMagic.data(), 4);
    put_u32(os, kCubeVersion);
    put_u32(os, static_cast<std::uint32_t>(cube.n_rx()));
    put_u32(os, static_cast<std::uint32_t>(cube.n_chirps()));
    put_u32(os, static_cast<std::uint32_t>(cube.n_samples()));
    for (const auto& v : cube.data()) {
        put_f32(os, static_cast<float>(v.real()));
        put_f32(os, static_cast<float>(v.imag()));
    }
    if (!os) throw DataError("write failed: " + path.string());
}

RadarCube read_cube(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    const std::string name = path.string();
    try {
        std::array<char, 4> magic{};
        if (!is.read(magic.data(), 4) || magic != kCubeMagic) throw DataError("bad magic");
        const std::uint32_t version = get_u32(is);
        if (version != kCubeVersion)
            throw DataError("unsupported version " + std::to_string(version));
        const std::uint32_t ma = get_u32(is), mc = get_u32(is), ms = get_u32(is);
        if (ma == 0 || mc == 0 || ms == 0) throw DataError("zero dimension");
        const std::uint64_t count = std::uint64_t(ma) * mc * ms;
        if (count > (std::uint64_t(1) << 32)) throw DataError("implausible dimensions");
        RadarCube cube(ma, mc, ms);
        std::vector<unsigned char> raw(count * 8);
        if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
            throw DataError("truncated payload");
        auto f32 = [&](std::size_t off) {
            const std::uint32_t u = std::uint32_t(raw[off]) | (std::uint32_t(raw[off + 1]) << 8) |
                                    (std::uint32_t(raw[off + 2]) << 16) |
                                    (std::uint32_t(raw[off + 3]) << 24);
            return double(std::bit_cast<float>(u));
        };
        auto data = cube.data();
        for (std::size_t k = 0; k < data.size(); ++k) data[k] = {f32(8 * k), f32(8 * k + 4)};
        return cube;
    } catch (const DataError& e) {
        throw DataError(name + ": " + e.what());
    }
}

}  // namespace isac
