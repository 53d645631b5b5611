#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "isac/dataset.hpp"
#include "isac/error.hpp"
#include "isac/identify.hpp"
#include "isac/scene.hpp"

using namespace isac;

namespace {

const std::vector<double>& codebook_angles() {
    static const std::vector<double> a = dft_codebook(16, 64).pointing_angles;
    return a;
}

Candidate at_angle(double angle, double range = 30.0, double vel = 0.0) {
    return {range, angle, vel, 1, 1.0};
}

struct SynthOptions {
    double offset = 5.0;
    double slope = 1.0;
    double noise = 0.0;
    std::size_t max_k = 5;
    double gap = 4.0;  // minimum angular distance from the target to a distractor
};

// Samples whose target sits at offset + slope * beam angle (+ noise) and
// whose distractors stay at least `gap` degrees away from it.
std::vector<Sample> synth(std::size_t n, const SynthOptions& o, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> beam(20, 44), kdist(1, o.max_k);
    std::normal_distribution<double> noise(0.0, o.noise);
    std::uniform_real_distribution<double> side(o.gap, 25.0), rng_r(10.0, 60.0), vel(-10.0, 10.0);
    std::vector<Sample> out;
    for (std::size_t t = 0; t < n; ++t) {
        Sample s;
        s.sample_id = t;
        s.sequence_id = t / 50;
        s.beam = beam(rng);
        const double truth = o.offset + o.slope * codebook_angles()[s.beam] +
                             (o.noise > 0.0 ? noise(rng) : 0.0);
        const std::size_t k = kdist(rng);
        s.label = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
        for (std::size_t c = 0; c < k; ++c) {
            if (c == s.label) {
                s.candidates.push_back(at_angle(truth, rng_r(rng), vel(rng)));
            } else {
                const double sign = (rng() & 1) ? 1.0 : -1.0;
                s.candidates.push_back(at_angle(truth + sign * side(rng), rng_r(rng), vel(rng)));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

ScenarioConfig small_scenario(std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.n_sequences = 4;
    cfg.min_samples = 40;
    cfg.max_samples = 50;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST(Offset, ExactFiveDegrees) {
    const auto train = synth(300, {5.0, 1.0, 0.0}, 1);
    EXPECT_NEAR(estimate_offset(train, codebook_angles()), 5.0, 1e-9);
}

TEST(Offset, ZeroOffsetData) {
    const auto train = synth(300, {0.0, 1.0, 0.0}, 2);
    EXPECT_NEAR(estimate_offset(train, codebook_angles()), 0.0, 1e-12);
}

TEST(Offset, NoisyRecoveryWithinTwoTenths) {
    for (std::uint64_t seed = 10; seed < 30; ++seed) {
        const auto train = synth(500, {5.0, 1.0, 1.0}, seed);
        EXPECT_NEAR(estimate_offset(train, codebook_angles()), 5.0, 0.2) << "seed " << seed;
    }
}

TEST(Offset, EmptyTrainThrows) {
    EXPECT_THROW(estimate_offset({}, codebook_angles()), DataError);
}

TEST(Offset, PredictPicksNearestToCorrectedBeam) {
    // Beam 32 points at 0 degrees in a 64-beam codebook.
    ASSERT_NEAR(codebook_angles()[32], 0.0, 1e-12);
    const std::vector<Candidate> c{at_angle(-10.0), at_angle(0.5), at_angle(20.0)};
    EXPECT_EQ(predict_offset(c, 32, 0.0, codebook_angles()), 1u);
    EXPECT_EQ(predict_offset(c, 32, 15.0, codebook_angles()), 2u);
}

TEST(Offset, SingleCandidateIsAlwaysChosen) {
    const std::vector<Candidate> c{at_angle(70.0)};
    for (std::size_t b : {0u, 17u, 63u}) EXPECT_EQ(predict_offset(c, b, 5.0, codebook_angles()), 0u);
}

TEST(Offset, TiesGoToLowestIndex) {
    const std::vector<Candidate> c{at_angle(2.0), at_angle(-2.0), at_angle(2.0)};
    EXPECT_EQ(predict_offset(c, 32, 0.0, codebook_angles()), 0u);
}

TEST(Offset, NoiselessSamplesArePerfect) {
    const auto data = synth(1000, {5.0, 1.0, 0.0}, 3);
    auto solver = make_solver("offset", codebook_angles());
    solver->fit(data);
    EXPECT_DOUBLE_EQ(evaluate(*solver, data), 1.0);
}

TEST(LinReg, ExactLinearDataRecovered) {
    const auto train = synth(400, {2.0, 0.95, 0.0}, 4);
    const LinearFit f = fit_linreg_angle(train, codebook_angles());
    EXPECT_NEAR(f.intercept, 2.0, 1e-9);
    EXPECT_NEAR(f.slope, 0.95, 1e-9);
    EXPECT_NEAR(f.residual_std, 0.0, 1e-9);
}

TEST(LinReg, UnitSlopeReducesToOffset) {
    const auto train = synth(400, {3.5, 1.0, 0.0}, 5);
    const LinearFit f = fit_linreg_angle(train, codebook_angles());
    EXPECT_NEAR(f.slope, 1.0, 1e-9);
    EXPECT_NEAR(f.intercept, estimate_offset(train, codebook_angles()), 1e-9);
}

TEST(LinReg, SlopeWithinTwoStandardErrors) {
    int inside = 0;
    const int trials = 200;
    for (int k = 0; k < trials; ++k) {
        const auto train = synth(300, {5.0, 0.9877, 1.5}, 100 + k);
        const LinearFit f = fit_linreg_angle(train, codebook_angles());
        ASSERT_GT(f.slope_stderr, 0.0);
        if (std::abs(f.slope - 0.9877) <= 2.0 * f.slope_stderr) ++inside;
    }
    // About 95% of the trials should fall within two standard errors.
    EXPECT_GE(inside, int(0.9 * trials));
}

TEST(LinReg, DegenerateDesignThrows) {
    auto train = synth(10, {}, 6);
    for (auto& s : train) s.beam = 30;
    EXPECT_THROW(fit_linreg_angle(train, codebook_angles()), DataError);
    EXPECT_THROW(fit_linreg_3d(train, codebook_angles()), DataError);
    EXPECT_THROW(fit_ols(std::vector<double>{1.0}, std::vector<double>{2.0}), DataError);
}

TEST(LinReg3d, ExactLinearStateIsPerfect) {
    // Range, angle and velocity of the target are all affine in the beam angle,
    // distractors share the angle but differ in range and velocity.
    std::mt19937_64 rng(7);
    std::vector<Sample> data;
    for (std::size_t t = 0; t < 400; ++t) {
        Sample s;
        s.sample_id = t;
        s.beam = 16 + rng() % 32;
        const double phi = codebook_angles()[s.beam];
        const Candidate target{40.0 + 0.3 * phi, 4.0 + 0.98 * phi, 2.0 - 0.1 * phi, 1, 1.0};
        const std::size_t k = 1 + rng() % 5;
        s.label = rng() % k;
        for (std::size_t c = 0; c < k; ++c) {
            Candidate d = target;
            if (c != s.label) {
                d.range += 3.0 + double(c);
                d.velocity -= 1.5;
            }
            s.candidates.push_back(d);
        }
        data.push_back(s);
    }
    auto solver = make_solver("linreg-3d", codebook_angles());
    solver->fit(data);
    EXPECT_DOUBLE_EQ(evaluate(*solver, data), 1.0);
}

TEST(LinReg3d, AngleDominatedDistanceMatchesLinRegAngle) {
    // Only the angle tracks the beam; range and velocity of every candidate
    // are random, so their large residual spread removes them from the distance.
    auto data = synth(500, {4.0, 0.97, 0.3}, 8);
    auto lr = make_solver("linreg-angle", codebook_angles());
    auto l3 = make_solver("linreg-3d", codebook_angles());
    lr->fit(data);
    l3->fit(data);
    std::size_t agree = 0;
    for (const auto& s : data)
        agree += lr->predict(s.candidates, s.beam) == l3->predict(s.candidates, s.beam);
    EXPECT_GE(double(agree) / double(data.size()), 0.97);
}

TEST(Lookup, BeamMeansAndFallback) {
    std::vector<Sample> train;
    for (int k = 0; k < 3; ++k) {
        Sample s;
        s.sample_id = k;
        s.beam = 5;
        s.candidates = {at_angle(12.0), at_angle(40.0)};
        s.label = 0;
        train.push_back(s);
    }
    Sample other;
    other.sample_id = 9;
    other.beam = 40;
    other.candidates = {at_angle(-30.0), at_angle(codebook_angles()[40] + 2.0)};
    other.label = 1;
    train.push_back(other);

    const LookupTable t = fit_lookup(train, codebook_angles());
    ASSERT_EQ(t.angle.size(), 64u);
    EXPECT_DOUBLE_EQ(t.angle[5], 12.0);
    EXPECT_TRUE(t.observed[5]);
    EXPECT_DOUBLE_EQ(t.angle[40], codebook_angles()[40] + 2.0);
    // Unseen beams use the global offset.
    const double offset = estimate_offset(train, codebook_angles());
    EXPECT_FALSE(t.observed[20]);
    EXPECT_DOUBLE_EQ(t.angle[20], codebook_angles()[20] + offset);

    const std::vector<Candidate> c{at_angle(30.0), at_angle(11.0)};
    EXPECT_EQ(predict_lookup(c, 5, t), 1u);
    EXPECT_EQ(predict_lookup(std::vector<Candidate>{at_angle(1.0)}, 63, t), 0u);
}

TEST(Lookup, AbsorbsNonlinearDistortion) {
    // The target angle bends away from any straight line in the beam angle.
    std::mt19937_64 rng(12);
    std::vector<Sample> data;
    for (std::size_t t = 0; t < 2000; ++t) {
        Sample s;
        s.sample_id = t;
        s.beam = 16 + rng() % 32;
        const double phi = codebook_angles()[s.beam];
        const double truth = phi + 5.0 + 4.0 * std::sin(deg2rad(4.0 * phi));
        s.candidates = {at_angle(truth), at_angle(truth + 5.0), at_angle(truth - 5.0)};
        std::shuffle(s.candidates.begin(), s.candidates.end(), rng);
        s.label = std::size_t(std::find_if(s.candidates.begin(), s.candidates.end(),
                                           [&](const Candidate& c) { return c.angle == truth; }) -
                              s.candidates.begin());
        data.push_back(s);
    }
    auto lookup = make_solver("lookup", codebook_angles());
    auto linreg = make_solver("linreg-angle", codebook_angles());
    lookup->fit(data);
    linreg->fit(data);
    EXPECT_DOUBLE_EQ(evaluate(*lookup, data), 1.0);
    EXPECT_GE(evaluate(*lookup, data), evaluate(*linreg, data));
}

TEST(Dnn, ExpandRowsOnePerCandidate) {
    const auto data = synth(20, {}, 13);
    const auto rows = expand_rows(data);
    std::size_t n = 0, pos = 0;
    for (const auto& s : data) n += s.candidates.size();
    for (const auto& r : rows) pos += r.target == 1.0;
    EXPECT_EQ(rows.size(), n);
    EXPECT_EQ(pos, data.size());
}

TEST(Dnn, MemorizesTwoSamples) {
    std::vector<Sample> toy(2);
    toy[0] = {0, 0, {at_angle(-20.0, 15.0, 5.0), at_angle(10.0, 40.0, -3.0)}, 10, 0};
    toy[1] = {1, 1, {at_angle(-5.0, 25.0, 1.0), at_angle(30.0, 50.0, 8.0)}, 40, 1};
    DnnHyper hyp;
    hyp.epochs = 3000;
    hyp.seed = 3;
    double last = 1.0;
    const auto model = train_dnn(toy, 64, hyp, [&](std::size_t, double l) { last = l; });
    EXPECT_LT(last, 1e-3);
    for (const auto& s : toy) EXPECT_EQ(predict_dnn(s.candidates, s.beam, model), s.label);
}

TEST(Dnn, LossDecreasesOverFirstEpochs) {
    const auto data = generate_dataset(small_scenario(5), GenerationMode::fast);
    std::vector<double> losses;
    DnnHyper hyp;
    hyp.epochs = 5;
    hyp.seed = 5;
    train_dnn(data, 64, hyp, [&](std::size_t, double l) { losses.push_back(l); });
    ASSERT_EQ(losses.size(), 5u);
    for (std::size_t k = 0; k < losses.size(); ++k) {
        EXPECT_TRUE(std::isfinite(losses[k]));
        if (k > 0) {
            EXPECT_LT(losses[k], losses[k - 1]) << "epoch " << k;
        }
    }
}

TEST(Dnn, SameSeedSameModel) {
    const auto data = generate_dataset(small_scenario(6), GenerationMode::fast);
    DnnHyper hyp;
    hyp.epochs = 3;
    hyp.seed = 42;
    EXPECT_EQ(train_dnn(data, 64, hyp), train_dnn(data, 64, hyp));
    DnnHyper other = hyp;
    other.seed = 43;
    EXPECT_FALSE(train_dnn(data, 64, hyp) == train_dnn(data, 64, other));
}

TEST(Dnn, EmptyExpansionThrows) {
    EXPECT_THROW(train_dnn({}, 64, {}), DataError);
}

TEST(Dnn, SingleAndDuplicateCandidates) {
    const auto model = ml::init_weights({}, {}, 17);
    EXPECT_EQ(predict_dnn(std::vector<Candidate>{at_angle(3.0)}, 30, model), 0u);
    const Candidate c = at_angle(-7.0, 22.0, 4.0);
    const std::vector<Candidate> dup{c, c, c};
    EXPECT_EQ(predict_dnn(dup, 30, model), 0u);
}

TEST(Dnn, SelectionSurvivesPermutation) {
    const auto data = generate_dataset(small_scenario(7), GenerationMode::fast);
    DnnHyper hyp;
    hyp.epochs = 5;
    hyp.seed = 7;
    const auto model = train_dnn(data, 64, hyp);
    std::mt19937_64 rng(8);
    std::size_t tested = 0;
    for (const auto& s : data) {
        if (s.candidates.size() < 2) continue;
        std::vector<double> scores;
        for (const auto& c : s.candidates) scores.push_back(ml::forward(model, c, s.beam));
        auto sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;

        const std::size_t chosen = predict_dnn(s.candidates, s.beam, model);
        std::vector<std::size_t> perm(s.candidates.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Candidate> permuted;
        for (std::size_t p : perm) permuted.push_back(s.candidates[p]);
        const std::size_t picked = predict_dnn(permuted, s.beam, model);
        EXPECT_EQ(perm[picked], chosen);
        ++tested;
    }
    EXPECT_GT(tested, 50u);
}

TEST(Evaluate, PerfectAndConstantPredictors) {
    auto data = synth(100, {5.0, 1.0, 0.0}, 21);
    auto solver = make_solver("offset", codebook_angles());
    solver->fit(data);
    EXPECT_DOUBLE_EQ(evaluate(*solver, data), 1.0);

    // Every label 0 and every prediction 0 because each list has one entry.
    for (auto& s : data) {
        s.candidates.resize(1);
        s.label = 0;
    }
    EXPECT_DOUBLE_EQ(evaluate(*solver, data), 1.0);
    EXPECT_THROW(evaluate(*solver, {}), DataError);
}

TEST(Evaluate, OrderDoesNotMatter) {
    auto data = synth(300, {5.0, 1.0, 3.0, 5, 1.0}, 22);
    auto solver = make_solver("lookup", codebook_angles());
    solver->fit(data);
    const double acc = evaluate(*solver, data);
    std::shuffle(data.begin(), data.end(), std::mt19937_64(1));
    EXPECT_DOUBLE_EQ(evaluate(*solver, data), acc);
}

TEST(Solvers, UniformAngleShiftLeavesPredictionsUnchanged) {
    const auto data = generate_dataset(small_scenario(9), GenerationMode::fast);
    const auto split = split_by_sequence(data, 0.75, 9);
    auto shift = [](std::vector<Sample> v, double d) {
        for (auto& s : v)
            for (auto& c : s.candidates) c.angle += d;
        return v;
    };
    const auto train2 = shift(split.train, 7.25);
    const auto test2 = shift(split.test, 7.25);
    DnnHyper hyp;
    hyp.epochs = 3;
    for (const auto& name : solver_names()) {
        auto a = make_solver(name, codebook_angles(), hyp);
        auto b = make_solver(name, codebook_angles(), hyp);
        a->fit(split.train);
        b->fit(train2);
        EXPECT_EQ(predict_all(*a, split.test), predict_all(*b, test2)) << name;
    }
}

TEST(Solvers, PredictionsAlwaysInRange) {
    const auto data = synth(200, {5.0, 1.0, 5.0, 6, 0.5}, 23);
    DnnHyper hyp;
    hyp.epochs = 1;
    for (const auto& name : solver_names()) {
        auto s = make_solver(name, codebook_angles(), hyp);
        s->fit(data);
        for (const auto& smp : data) EXPECT_LT(s->predict(smp.candidates, smp.beam), smp.candidates.size());
    }
}

TEST(Solvers, SaveLoadPreservesPredictions) {
    const auto dir = std::filesystem::temp_directory_path() / "isac_identify_models";
    std::filesystem::create_directories(dir);
    const auto data = synth(300, {5.0, 0.98, 2.0, 6, 1.0}, 24);
    DnnHyper hyp;
    hyp.epochs = 2;
    for (const auto& name : solver_names()) {
        auto a = make_solver(name, codebook_angles(), hyp);
        a->fit(data);
        a->save(dir);
        auto b = make_solver(name, codebook_angles(), hyp);
        b->load(dir);
        EXPECT_EQ(predict_all(*a, data), predict_all(*b, data)) << name;
    }
    std::filesystem::remove_all(dir);
}

TEST(Solvers, UnknownNameIsAConfigError) {
    try {
        make_solver("kalman", codebook_angles());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("linreg-angle"), std::string::npos);
    }
    EXPECT_EQ(solver_names().size(), 5u);
}

TEST(Solvers, UnfittedPredictIsALogicError) {
    auto s = make_solver("offset", codebook_angles());
    EXPECT_THROW(s->predict(std::vector<Candidate>{at_angle(0.0)}, 3), std::logic_error);
}
