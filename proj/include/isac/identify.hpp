#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isac/mlp.hpp"
#include "isac/radar_detect.hpp"

namespace isac {

/// One labeled observation: the detected candidates, the optimal comm beam
/// and (in labeled data) the index of the candidate that is the comm user.
struct Sample {
    std::uint64_t sample_id = 0;
    std::uint64_t sequence_id = 0;
    std::vector<Candidate> candidates;
    std::size_t beam = 0;
    std::size_t label = 0;

    bool operator==(const Sample&) const = default;
};

/// Throws DataError on an empty candidate list, label out of range or beam
/// outside [0, n_beams).
void validate_sample(const Sample& s, std::size_t n_beams);

/// Index of the candidate whose angle is closest to target_deg; ties go to
/// the lowest index.
std::size_t nearest_angle(std::span<const Candidate> candidates, double target_deg);

// ---- model-based estimators ------------------------------------------------

/// Mean signed residual between the target's radar angle and the pointing
/// angle of its optimal beam (the least-squares offset).
double estimate_offset(std::span<const Sample> train, std::span<const double> beam_angles);

std::size_t predict_offset(std::span<const Candidate> candidates, std::size_t beam,
                           double offset_deg, std::span<const double> beam_angles);

struct LinearFit {
    double intercept = 0.0;
    double slope = 1.0;
    double residual_std = 0.0;  // population std of training residuals
    double slope_stderr = 0.0;  // OLS standard error of the slope

    double operator()(double x) const noexcept { return intercept + slope * x; }
};

/// Ordinary least squares y = intercept + slope x. Throws DataError when
/// fewer than two points or all x equal.
LinearFit fit_ols(std::span<const double> x, std::span<const double> y);

/// OLS of the target radar angle on the optimal-beam pointing angle.
LinearFit fit_linreg_angle(std::span<const Sample> train, std::span<const double> beam_angles);

struct LinReg3d {
    std::array<LinearFit, 3> fits;  // range, angle, velocity
    std::array<double, 3> scale;    // residual std per axis, floored at 1e-6
};

LinReg3d fit_linreg_3d(std::span<const Sample> train, std::span<const double> beam_angles);

/// Nearest candidate to the predicted (range, angle, velocity) state under
/// per-axis z-scored Euclidean distance.
std::size_t predict_linreg_3d(std::span<const Candidate> candidates, std::size_t beam,
                              const LinReg3d& model, std::span<const double> beam_angles);

struct LookupTable {
    std::vector<double> angle;  // per beam
    std::vector<bool> observed; // false where the global-offset fallback was used
};

LookupTable fit_lookup(std::span<const Sample> train, std::span<const double> beam_angles);

std::size_t predict_lookup(std::span<const Candidate> candidates, std::size_t beam,
                           const LookupTable& table);

// ---- neural scorer ----------------------------------------------------------

struct DnnHyper {
    double lr = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    ml::MlpWidths widths;
};

/// One row per (sample, candidate), target 1 for the labeled candidate.
std::vector<ml::TrainRow> expand_rows(std::span<const Sample> samples);

/// Input normalization derived from the training candidates.
ml::Normalization fit_normalization(std::span<const Sample> train, std::size_t n_beams);

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Adam on the per-candidate MSE, reshuffled every epoch, final-epoch weights.
ml::MlpModel train_dnn(std::span<const Sample> train, std::size_t n_beams, const DnnHyper& hyper,
                       const EpochCallback& on_epoch = {});

/// Highest-scoring candidate; ties go to the lowest index.
std::size_t predict_dnn(std::span<const Candidate> candidates, std::size_t beam,
                        const ml::MlpModel& model);

// ---- solver interface -------------------------------------------------------

class Solver {
public:
    virtual ~Solver() = default;

    virtual std::string_view name() const noexcept = 0;
    virtual void fit(std::span<const Sample> train) = 0;
    virtual std::size_t predict(std::span<const Candidate> candidates, std::size_t beam) const = 0;

    /// Persist fitted parameters under dir (as <name>.json plus any binary).
    virtual void save(const std::filesystem::path& dir) const = 0;
    virtual void load(const std::filesystem::path& dir) = 0;
};

/// offset, linreg-angle, linreg-3d, lookup, dnn.
const std::vector<std::string>& solver_names();

/// Throws ConfigError naming the valid solvers for an unknown name.
std::unique_ptr<Solver> make_solver(std::string_view name, std::vector<double> beam_angles,
                                    const DnnHyper& dnn = {});

/// Fraction of samples whose prediction equals the label.
double evaluate(const Solver& solver, std::span<const Sample> test);

std::vector<std::size_t> predict_all(const Solver& solver, std::span<const Sample> samples);

}  // namespace isac
