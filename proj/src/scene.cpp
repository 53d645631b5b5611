#include "isac/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "isac/error.hpp"
#include "isac/rng.hpp"

namespace isac {

double norm(Vec2 v) noexcept { return std::hypot(v.x, v.y); }

double azimuth_deg(Vec2 p) noexcept { return rad2deg(std::atan2(p.x, p.y)); }

double radial_velocity(Vec2 position, Vec2 velocity) noexcept {
    const double r = norm(position);
    if (r == 0.0) return 0.0;
    return -(position.x * velocity.x + position.y * velocity.y) / r;
}

void validate_scene(std::span<const SceneObject> scene) {
    std::size_t users = 0;
    for (const auto& obj : scene) {
        if (obj.is_comm_user) ++users;
        if (!(obj.reflectivity > 0.0))
            throw DataError("object " + std::to_string(obj.id) + ": reflectivity must be > 0");
        if (!(obj.range() > 0.0))
            throw DataError("object " + std::to_string(obj.id) + ": position at array origin");
    }
    if (users != 1)
        throw DataError("scene must contain exactly one comm user, found " +
                        std::to_string(users));
}

const SceneObject& comm_user(std::span<const SceneObject> scene) {
    auto it = std::find_if(scene.begin(), scene.end(),
                           [](const SceneObject& o) { return o.is_comm_user; });
    if (it == scene.end()) throw DataError("scene has no comm user");
    return *it;
}

void CommConfig::validate() const {
    if (n_antennas < 1) throw ConfigError("comm: antennas must be >= 1");
    if (n_beams < 1) throw ConfigError("comm: beams must be >= 1");
    if (!(tx_gain > 0.0)) throw ConfigError("comm: tx_gain must be > 0");
    if (!(noise_var >= 0.0)) throw ConfigError("comm: noise must be >= 0");
    if (n_paths < 1) throw ConfigError("comm: paths must be >= 1");
    if (!(element_spacing > 0.0)) throw ConfigError("comm: element_spacing must be > 0");
    if (!(carrier_hz > 0.0)) throw ConfigError("comm: carrier_hz must be > 0");
}

CVector array_response(double theta_deg, std::size_t n_antennas, double spacing) {
    if (!(theta_deg >= -90.0 && theta_deg <= 90.0))
        throw std::domain_error("array_response: angle outside [-90, 90] degrees");
    const double step = 2.0 * kPi * spacing * std::sin(deg2rad(theta_deg));
    CVector a(n_antennas);
    for (std::size_t m = 0; m < n_antennas; ++m) a[m] = std::polar(1.0, step * double(m));
    return a;
}

Codebook dft_codebook(std::size_t n_antennas, std::size_t n_beams, double spacing) {
    if (n_antennas < 1 || n_beams < 1)
        throw std::invalid_argument("dft_codebook: antennas and beams must be >= 1");
    Codebook cb;
    cb.vectors.reserve(n_beams);
    cb.pointing_angles.reserve(n_beams);
    const double scale = 1.0 / std::sqrt(double(n_antennas));
    for (std::size_t b = 0; b < n_beams; ++b) {
        const double s = -1.0 + 2.0 * double(b) / double(n_beams);
        const double phi = rad2deg(std::asin(s));
        CVector f = array_response(phi, n_antennas, spacing);
        for (auto& v : f) v *= scale;
        cb.vectors.push_back(std::move(f));
        cb.pointing_angles.push_back(phi);
    }
    return cb;
}

CVector channel_from_paths(std::span<const PathSpec> paths, std::size_t n_antennas,
                           double spacing) {
    CVector h(n_antennas, cdouble{});
    for (const auto& p : paths) {
        const CVector a = array_response(p.angle_deg, n_antennas, spacing);
        for (std::size_t m = 0; m < n_antennas; ++m) h[m] += p.gain * a[m];
    }
    return h;
}

double free_space_amplitude(double distance_m, double carrier_hz) {
    if (!(distance_m > 0.0)) throw std::invalid_argument("free_space_amplitude: distance <= 0");
    const double lambda = kSpeedOfLight / carrier_hz;
    return lambda / (4.0 * kPi * distance_m);
}

CVector synthesize_channel(std::span<const SceneObject> scene, const CommConfig& cfg,
                           std::uint64_t seed) {
    cfg.validate();
    const SceneObject& user = comm_user(scene);
    Rng rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

    std::vector<PathSpec> paths;
    const double los = free_space_amplitude(user.range(), cfg.carrier_hz);
    paths.push_back({std::polar(los, phase(rng)), user.azimuth()});

    // Scattered paths: 10 dB below line of sight, within +-30 degrees.
    std::uniform_real_distribution<double> spread(-30.0, 30.0);
    for (std::size_t p = 1; p < cfg.n_paths; ++p) {
        const double angle = std::clamp(user.azimuth() + spread(rng), -90.0, 90.0);
        paths.push_back({std::polar(los * std::sqrt(0.1), phase(rng)), angle});
    }
    return channel_from_paths(paths, cfg.n_antennas, cfg.element_spacing);
}

namespace {

cdouble inner(std::span<const cdouble> h, std::span<const cdouble> f) {
    cdouble acc{};
    for (std::size_t m = 0; m < h.size(); ++m) acc += std::conj(h[m]) * f[m];
    return acc;
}

}  // namespace

std::vector<double> beam_gains(std::span<const cdouble> h, const Codebook& codebook) {
    std::vector<double> gains;
    gains.reserve(codebook.size());
    for (const auto& f : codebook.vectors) {
        if (f.size() != h.size())
            throw std::invalid_argument("beam_gains: channel length " + std::to_string(h.size()) +
                                        " != codeword length " + std::to_string(f.size()));
        gains.push_back(std::norm(inner(h, f)));
    }
    return gains;
}

std::vector<double> sweep_powers(std::span<const cdouble> h, const Codebook& codebook,
                                 const CommConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(cfg.noise_var / 2.0));
    const double amp = std::sqrt(cfg.tx_gain);
    std::vector<double> powers;
    powers.reserve(codebook.size());
    for (const auto& f : codebook.vectors) {
        if (f.size() != h.size()) throw std::invalid_argument("sweep_powers: dimension mismatch");
        cdouble y = amp * inner(h, f);
        if (cfg.noise_var > 0.0) y += cdouble(gauss(rng), gauss(rng));
        powers.push_back(std::norm(y));
    }
    return powers;
}

std::size_t optimal_beam(std::span<const double> gains) {
    if (gains.empty()) throw std::invalid_argument("optimal_beam: empty gain vector");
    std::size_t best = 0;
    for (std::size_t b = 1; b < gains.size(); ++b)
        if (gains[b] > gains[best]) best = b;
    return best;
}

}  // namespace isac
