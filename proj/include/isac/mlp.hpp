#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "isac/radar_detect.hpp"

namespace isac::ml {

enum class Activation : std::uint32_t { identity = 0, relu = 1, sigmoid = 2 };

const char* to_string(Activation a) noexcept;

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out
    Activation activation = Activation::identity;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Activation act);

    std::size_t n_params() const noexcept { return weights.size() + bias.size(); }
    bool same_shape(const DenseLayer& o) const noexcept {
        return in == o.in && out == o.out && activation == o.activation;
    }
};

/// Input scaling to [0, 1]: range / range_max,
/// (angle - angle_center + span/2) / span, (velocity + vel_max) / (2 vel_max),
/// beam / (n_beams - 1).
struct Normalization {
    double range_max = 250.0;
    double angle_center = 0.0;
    double angle_span = 180.0;
    double vel_max = 25.0;
    std::size_t n_beams = 64;

    void validate() const;
};

/// Hidden widths of the two expanding branches and the contracting head.
struct MlpWidths {
    std::array<std::size_t, 3> radar{16, 32, 64};
    std::array<std::size_t, 3> beam{16, 32, 64};
    std::array<std::size_t, 3> head{64, 32, 16};
};

/// Per-candidate scorer: a radar branch (range, angle, velocity) and a beam
/// branch (beam index) of three dense layers each, concatenated into a
/// four-layer head ending in a single sigmoid unit.
struct MlpModel {
    std::array<DenseLayer, 3> radar;
    std::array<DenseLayer, 3> beam;
    std::array<DenseLayer, 4> head;
    Normalization norm;

    MlpModel() = default;
    MlpModel(const MlpWidths& widths, const Normalization& norm);

    std::size_t n_params() const noexcept;
    /// Same layer structure with all parameters zero.
    MlpModel zeros_like() const;

    template <typename F>
    void for_each_layer(F&& f) {
        for (auto& l : radar) f(l);
        for (auto& l : beam) f(l);
        for (auto& l : head) f(l);
    }
    template <typename F>
    void for_each_layer(F&& f) const {
        for (const auto& l : radar) f(l);
        for (const auto& l : beam) f(l);
        for (const auto& l : head) f(l);
    }

    bool same_shape(const MlpModel& o) const noexcept;
    bool operator==(const MlpModel& o) const noexcept;
};

/// Normalized (range, angle, velocity) and beam inputs.
std::array<double, 4> normalized_inputs(const Normalization& norm, const Candidate& c,
                                        std::size_t beam);

/// Likelihood that the candidate is the comm user given the optimal beam.
double forward(const MlpModel& model, const Candidate& candidate, std::size_t beam);

struct TrainRow {
    Candidate candidate;
    std::size_t beam = 0;
    double target = 0.0;  // 1 for the comm user, else 0
};

struct LossGrad {
    double mse = 0.0;
    MlpModel grad;
};

/// Mean squared error over the batch and its gradient by backpropagation.
LossGrad loss_and_grad(const MlpModel& model, std::span<const TrainRow> batch);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of a flat parameter block. `step` is the
/// 1-based count of the update being applied.
void adam_update(std::span<double> params, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamHyper& hyper);

struct AdamState {
    MlpModel m;
    MlpModel v;
    std::uint64_t step = 0;
    AdamHyper hyper;

    AdamState() = default;
    AdamState(const MlpModel& like, const AdamHyper& hyper);
};

void adam_step(AdamState& state, MlpModel& params, const MlpModel& grad);

/// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights (variance 2/fan_in),
/// zero biases.
MlpModel init_weights(const MlpWidths& widths, const Normalization& norm, std::uint64_t seed);

/// Binary checkpoint: "IMLP", u32 version, u32 layer count, per layer
/// (u32 in, u32 out, u32 activation), five f64 normalization values, then
/// f64 weights and biases in layer order, all little endian.
void save_checkpoint(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace isac::ml
