#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "isac/scene.hpp"

namespace isac {

/// FMCW chirp-train parameters. Defaults follow a long-range 77 GHz setup:
/// 10 MHz/us slope, 250 chirps of 512 complex samples, ~249 m max range and
/// ~22.6 m/s max unambiguous velocity.
struct RadarConfig {
    double carrier_hz = 77e9;
    double slope_hz_per_s = 10e12;
    double chirp_duration_s = 31e-6;
    double inter_chirp_wait_s = 12e-6;
    std::size_t n_chirps = 250;
    std::size_t n_samples = 512;
    std::size_t n_rx = 4;
    double sample_rate_hz = 16.666e6;
    double rx_spacing = 0.5;  // wavelengths
    double noise_floor = 0.0;

    double bandwidth_hz() const noexcept { return slope_hz_per_s * chirp_duration_s; }
    double chirp_period_s() const noexcept { return chirp_duration_s + inter_chirp_wait_s; }
    double wavelength_m() const noexcept { return kSpeedOfLight / carrier_hz; }
    /// Range spanned by one sample-axis FFT bin.
    double range_bin_m() const noexcept;
    /// Radial velocity spanned by one chirp-axis FFT bin.
    double velocity_bin_mps() const noexcept;
    double max_range_m() const noexcept { return range_bin_m() * double(n_samples); }
    double max_velocity_mps() const noexcept { return velocity_bin_mps() * double(n_chirps) / 2.0; }

    void validate() const;
};

/// Complex ADC samples, antenna-major then chirp then sample.
class RadarCube {
public:
    RadarCube() = default;
    RadarCube(std::size_t n_rx, std::size_t n_chirps, std::size_t n_samples);

    std::size_t n_rx() const noexcept { return n_rx_; }
    std::size_t n_chirps() const noexcept { return n_chirps_; }
    std::size_t n_samples() const noexcept { return n_samples_; }

    cdouble& at(std::size_t m, std::size_t l, std::size_t i) noexcept {
        return data_[(m * n_chirps_ + l) * n_samples_ + i];
    }
    const cdouble& at(std::size_t m, std::size_t l, std::size_t i) const noexcept {
        return data_[(m * n_chirps_ + l) * n_samples_ + i];
    }

    std::span<cdouble> data() noexcept { return data_; }
    std::span<const cdouble> data() const noexcept { return data_; }

    bool matches(const RadarConfig& cfg) const noexcept {
        return n_rx_ == cfg.n_rx && n_chirps_ == cfg.n_chirps && n_samples_ == cfg.n_samples;
    }

private:
    std::size_t n_rx_ = 0;
    std::size_t n_chirps_ = 0;
    std::size_t n_samples_ = 0;
    std::vector<cdouble> data_;
};

/// One IF sample of a single point reflector: the FMCW beat tone for
/// round-trip delay 2d/c, advanced by the Doppler phase of chirp l and the
/// receive-array phase of antenna m. Stop-and-hop: the object does not move
/// within a frame.
cdouble if_tone(const SceneObject& object, const RadarConfig& cfg, std::size_t antenna,
                std::size_t chirp, std::size_t sample);

/// Sum of all object returns plus circular Gaussian noise of power
/// cfg.noise_floor. Deterministic in seed.
RadarCube synthesize_frame(std::span<const SceneObject> scene, const RadarConfig& cfg,
                           std::uint64_t seed);

/// Binary cube file: "RCUB", u32 version, u32 M_a, M_c, M_s (little endian),
/// then float32 (re, im) pairs in antenna, chirp, sample order.
void write_cube(const std::filesystem::path& path, const RadarCube& cube);
RadarCube read_cube(const std::filesystem::path& path);

}  // namespace isac
