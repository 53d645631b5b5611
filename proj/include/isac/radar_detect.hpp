#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "isac/radar_frontend.hpp"

namespace isac {

/// Squared-magnitude radar cube, angle x Doppler x range, with the physical
/// coordinate of every bin along each axis.
class PowerCube {
public:
    PowerCube() = default;
    PowerCube(std::size_t n_angle, std::size_t n_doppler, std::size_t n_range);

    std::size_t n_angle() const noexcept { return n_angle_; }
    std::size_t n_doppler() const noexcept { return n_doppler_; }
    std::size_t n_range() const noexcept { return n_range_; }

    double& at(std::size_t a, std::size_t d, std::size_t r) noexcept {
        return power_[(a * n_doppler_ + d) * n_range_ + r];
    }
    double at(std::size_t a, std::size_t d, std::size_t r) const noexcept {
        return power_[(a * n_doppler_ + d) * n_range_ + r];
    }
    /// Contiguous range line at (angle a, Doppler d).
    std::span<const double> range_line(std::size_t a, std::size_t d) const noexcept {
        return {power_.data() + (a * n_doppler_ + d) * n_range_, n_range_};
    }
    std::span<double> data() noexcept { return power_; }
    std::span<const double> data() const noexcept { return power_; }

    std::vector<double> angle_deg;      // per angle bin
    std::vector<double> velocity_mps;   // per Doppler bin, closing positive
    std::vector<double> range_m;        // per range bin

private:
    std::size_t n_angle_ = 0;
    std::size_t n_doppler_ = 0;
    std::size_t n_range_ = 0;
    std::vector<double> power_;
};

struct ProcessOptions {
    std::size_t angle_fft_size = 64;
    // Hann taper on the range and Doppler axes. The angle axis is never
    // tapered: with a handful of receive antennas the taper costs more
    // resolution than it buys in sidelobe level.
    bool window = true;
    // Mean-over-chirps removal after the range FFT. Off only for inspection.
    bool clutter_removal = true;
};

/// Subtract, for every (antenna, range bin), the mean over chirps. Operates
/// on a range-transformed cube laid out antenna, chirp, range.
void remove_static_clutter(std::span<cdouble> data, std::size_t n_rx, std::size_t n_chirps,
                           std::size_t n_range);

/// Range FFT, clutter cleaning, Doppler FFT (shifted), angle FFT
/// (zero-padded, shifted), squared magnitude.
PowerCube process_cube(const RadarCube& cube, const RadarConfig& cfg,
                       const ProcessOptions& opts = {});

struct DetectConfig {
    std::size_t cfar_train = 8;
    std::size_t cfar_guard = 2;
    double cfar_pfa = 1e-3;
    double dbscan_eps = 3.0;        // in bins
    std::size_t dbscan_min_pts = 2;
    ProcessOptions process;
    // Post-CFAR gates; a negative value disables the gate.
    // Drop cells more than this many dB below the strongest cell in the cube.
    double dynamic_range_db = 30.0;
    // Keep only cells that peak along their angle line (same Doppler and
    // range bin, circular neighbours) and lie within this many dB of the
    // line maximum; suppresses array sidelobes and main-lobe wrap.
    double angle_peak_db = 6.0;

    void validate() const;
};

struct CellDetection {
    std::size_t angle = 0;
    std::size_t doppler = 0;
    std::size_t range = 0;
    double power = 0.0;
};

/// CA-CFAR scaling for N_t training cells: N_t (pfa^(-1/N_t) - 1).
double cfar_scale(double pfa, std::size_t n_training);

/// Cell-averaging CFAR along the range axis of every (angle, Doppler) line.
/// Training cells: cfar_train on each side beyond cfar_guard guard cells;
/// near the ends the full 2*cfar_train window is taken from the one side
/// that fits. Results are in cube order.
std::vector<CellDetection> cfar_detect(const PowerCube& pc, const DetectConfig& cfg);

/// Apply the dynamic-range and angle-peak gates of cfg.
std::vector<CellDetection> gate_detections(std::span<const CellDetection> detections,
                                           const PowerCube& pc, const DetectConfig& cfg);

using Point3 = std::array<double, 3>;

inline constexpr int kNoise = -1;

/// DBSCAN under Euclidean distance (neighbors at distance <= eps, a point
/// counts itself). Points are scanned in index order and clusters numbered
/// in order of creation, so labels are deterministic.
std::vector<int> dbscan(std::span<const Point3> points, double eps, std::size_t min_pts);

struct Candidate {
    double range = 0.0;     // m
    double angle = 0.0;     // degrees
    double velocity = 0.0;  // m/s, closing positive
    std::size_t n_points = 1;
    double power = 0.0;

    bool operator==(const Candidate&) const = default;
};

/// Unweighted mean physical coordinates per cluster, summed power, noise
/// dropped, sorted by descending power.
std::vector<Candidate> summarize_clusters(std::span<const CellDetection> detections,
                                          std::span<const int> labels, const PowerCube& pc);

/// Bin-index coordinates (range, Doppler, angle) used for clustering.
std::vector<Point3> detection_coordinates(std::span<const CellDetection> detections);

std::vector<Candidate> detect_objects(const RadarCube& cube, const RadarConfig& radar,
                                      const DetectConfig& cfg);

}  // namespace isac
