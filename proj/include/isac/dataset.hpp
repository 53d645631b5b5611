#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "isac/identify.hpp"
#include "isac/radar_detect.hpp"
#include "isac/scene.hpp"

namespace isac {

/// Synthetic drive-through scenario: a basestation looking across a
/// multi-lane road. The comm user drives an inner lane of its direction
/// through the field of view once per sequence, slower than the surrounding
/// traffic, while other vehicles occupy every lane.
struct ScenarioConfig {
    std::size_t n_sequences = 20;
    std::size_t min_samples = 80;  // per sequence
    std::size_t max_samples = 120;
    std::size_t min_candidates = 1;
    std::size_t max_candidates = 6;
    double misalignment_deg = 5.0;  // radar angle = comm angle + this
    double angle_noise_deg = 1.5;
    // Radar angle error A sin(3 theta) on top of the misalignment.
    double distortion_deg = 3.0;
    double range_noise_m = 0.25;
    double velocity_noise_mps = 0.15;
    double frame_rate_hz = 9.0;
    double fov_deg = 55.0;  // user visible for |azimuth| <= fov
    // Lateral distance of each lane from the basestation. The first half of
    // the lanes carry +x traffic, the rest -x.
    std::vector<double> lanes_m{20.0, 23.5, 27.0, 30.5};
    std::size_t user_lane_forward = 1;
    std::size_t user_lane_backward = 2;
    double traffic_speed_min_mps = 7.5;
    double traffic_speed_max_mps = 16.0;
    // Share of other vehicles placed within +-near_spread_deg of the user.
    double near_fraction = 0.6;
    double near_spread_deg = 6.0;
    // Other vehicles closer than this in azimuth to the user are redrawn.
    double min_separation_deg = 0.0;
    double vehicle_gap_m = 6.0;  // minimum same-lane spacing
    std::uint64_t seed = 0;

    CommConfig comm;
    RadarConfig radar;
    DetectConfig detect;

    void validate() const;
};

enum class GenerationMode { fast, full };

GenerationMode parse_mode(const std::string& s);
const char* to_string(GenerationMode m) noexcept;

/// Noise-free comm-user state in the radar frame.
struct UserTruth {
    double range = 0.0;
    double angle = 0.0;
    double velocity = 0.0;
    double comm_angle = 0.0;
};

struct GeneratedDataset {
    std::vector<Sample> samples;
    std::vector<UserTruth> truth;  // parallel to samples
    std::size_t dropped = 0;       // full mode: samples without a gated label
};

/// Radar-frame angle of an object at comm-frame azimuth theta, before noise.
double radar_angle(double comm_angle_deg, const ScenarioConfig& cfg);

GeneratedDataset generate_dataset_with_truth(const ScenarioConfig& cfg, GenerationMode mode,
                                             std::size_t threads = 1);

std::vector<Sample> generate_dataset(const ScenarioConfig& cfg, GenerationMode mode,
                                     std::size_t threads = 1);

/// Ground-truth scene of one sample (comm frame) as generated; exposed for
/// the CLI frame writer and tests.
std::vector<SceneObject> scenario_scene(const ScenarioConfig& cfg, std::size_t sequence,
                                        std::size_t index);

/// Rotate every object into the radar frame (misalignment plus distortion).
std::vector<SceneObject> to_radar_frame(std::span<const SceneObject> scene,
                                        const ScenarioConfig& cfg);

/// Radar-frame scene ready for waveform synthesis: rotated as above, with
/// each reflectivity scaled by the two-way spreading loss (10 m / r)^4.
std::vector<SceneObject> radar_scene(std::span<const SceneObject> scene,
                                     const ScenarioConfig& cfg);

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Shuffle sequences with the seed and move them to train until the train
/// share of samples reaches ratio; the remainder is test.
DatasetSplit split_by_sequence(std::span<const Sample> samples, double ratio, std::uint64_t seed);

/// Sample file: header plus one comma-separated row per candidate.
void write_samples(std::ostream& os, std::span<const Sample> samples);
void save_samples(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_samples(std::istream& is, const std::string& source = "<stream>");
std::vector<Sample> load_samples(const std::filesystem::path& path);

struct CandidateRecord {
    std::uint64_t sample_id = 0;
    std::vector<Candidate> candidates;
};

/// Detection output: sample_id, k, range_m, angle_deg, vel_mps, power, n_points.
void write_candidates(std::ostream& os, std::span<const CandidateRecord> records);

/// Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

}  // namespace isac
