#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace isac {

using cdouble = std::complex<double>;
using CVector = std::vector<cdouble>;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) noexcept { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) noexcept { return rad * 180.0 / kPi; }

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

double norm(Vec2 v) noexcept;

/// Azimuth of a point seen from the origin, degrees. Boresight is +y and
/// positive angles open toward +x.
double azimuth_deg(Vec2 p) noexcept;

/// Closing speed of an object (positive when approaching the origin).
double radial_velocity(Vec2 position, Vec2 velocity) noexcept;

struct SceneObject {
    int id = 0;
    Vec2 position;  // m
    Vec2 velocity;  // m/s
    // Linear power gain of the radar return; the IF amplitude is its square root.
    double reflectivity = 1.0;
    bool is_comm_user = false;

    double range() const noexcept { return norm(position); }
    double azimuth() const noexcept { return azimuth_deg(position); }
};

/// Throws DataError unless the scene has exactly one comm user and every
/// object has positive reflectivity and a nonzero position.
void validate_scene(std::span<const SceneObject> scene);

const SceneObject& comm_user(std::span<const SceneObject> scene);

struct CommConfig {
    std::size_t n_antennas = 16;
    std::size_t n_beams = 64;
    double tx_gain = 1.0;
    double noise_var = 0.0;
    std::size_t n_paths = 1;
    double element_spacing = 0.5;  // wavelengths
    double carrier_hz = 60e9;

    void validate() const;
};

struct Codebook {
    std::vector<CVector> vectors;
    std::vector<double> pointing_angles;  // degrees, strictly increasing

    std::size_t size() const noexcept { return vectors.size(); }
};

/// ULA response, element m = exp(j 2 pi spacing m sin(theta)).
CVector array_response(double theta_deg, std::size_t n_antennas, double spacing = 0.5);

/// Oversampled DFT codebook: sin(phi_b) = -1 + 2b/B for b = 0..B-1, and
/// f_b = a(phi_b) / sqrt(N).
Codebook dft_codebook(std::size_t n_antennas, std::size_t n_beams, double spacing = 0.5);

struct PathSpec {
    cdouble gain;
    double angle_deg = 0.0;
};

/// h = sum_p alpha_p a(theta_p).
CVector channel_from_paths(std::span<const PathSpec> paths, std::size_t n_antennas,
                           double spacing = 0.5);

/// Free-space amplitude lambda / (4 pi d).
double free_space_amplitude(double distance_m, double carrier_hz);

/// Geometric channel toward the comm user. The line-of-sight path uses the
/// user azimuth with free-space magnitude and a seeded uniform phase; extra
/// paths (n_paths > 1) scatter around it with weaker random gains.
CVector synthesize_channel(std::span<const SceneObject> scene, const CommConfig& cfg,
                           std::uint64_t seed);

/// |h^H f_b|^2 for every beam.
std::vector<double> beam_gains(std::span<const cdouble> h, const Codebook& codebook);

/// Received power per beam of a sweep, |sqrt(rho) h^H f_b + n|^2 with
/// n ~ CN(0, noise_var). Exact (rho-scaled) gains when noise_var = 0.
std::vector<double> sweep_powers(std::span<const cdouble> h, const Codebook& codebook,
                                 const CommConfig& cfg, std::uint64_t seed);

/// Argmax with ties toward the lowest index.
std::size_t optimal_beam(std::span<const double> gains);

}  // namespace isac
