#include "isac/identify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "isac/error.hpp"
#include "isac/rng.hpp"

namespace isac {

using nlohmann::json;

void validate_sample(const Sample& s, std::size_t n_beams) {
    const std::string id = "sample " + std::to_string(s.sample_id);
    if (s.candidates.empty()) throw DataError(id + ": no candidates");
    if (s.label >= s.candidates.size()) throw DataError(id + ": label out of range");
    if (s.beam >= n_beams) throw DataError(id + ": beam index out of range");
}

std::size_t nearest_angle(std::span<const Candidate> candidates, double target_deg) {
    if (candidates.empty()) throw std::invalid_argument("nearest_angle: no candidates");
    std::size_t best = 0;
    double best_d = std::abs(candidates[0].angle - target_deg);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
        const double d = std::abs(candidates[k].angle - target_deg);
        if (d < best_d) {
            best = k;
            best_d = d;
        }
    }
    return best;
}

namespace {

double beam_angle(std::span<const double> beam_angles, std::size_t beam) {
    if (beam >= beam_angles.size()) throw DataError("beam index out of codebook range");
    return beam_angles[beam];
}

void require_nonempty(std::span<const Sample> s, const char* what) {
    if (s.empty()) throw DataError(std::string(what) + ": empty training set");
}

const Candidate& target(const Sample& s) {
    if (s.label >= s.candidates.size())
        throw DataError("sample " + std::to_string(s.sample_id) + ": label out of range");
    return s.candidates[s.label];
}

}  // namespace

double estimate_offset(std::span<const Sample> train, std::span<const double> beam_angles) {
    require_nonempty(train, "estimate_offset");
    double sum = 0.0;
    for (const auto& s : train) sum += target(s).angle - beam_angle(beam_angles, s.beam);
    return sum / double(train.size());
}

std::size_t predict_offset(std::span<const Candidate> candidates, std::size_t beam,
                           double offset_deg, std::span<const double> beam_angles) {
    return nearest_angle(candidates, beam_angle(beam_angles, beam) + offset_deg);
}

LinearFit fit_ols(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_ols: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw DataError("linear regression needs at least two samples");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / double(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
    double sxx = 0.0, sxy = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        scale += x[k] * x[k];
    }
    if (!(sxx > 1e-12 * (scale + 1.0)))
        throw DataError("degenerate regression design: all beam angles equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = y[k] - f(x[k]);
        ssr += r * r;
    }
    f.residual_std = std::sqrt(ssr / double(n));
    f.slope_stderr = n > 2 ? std::sqrt(ssr / double(n - 2) / sxx) : 0.0;
    return f;
}

LinearFit fit_linreg_angle(std::span<const Sample> train, std::span<const double> beam_angles) {
    require_nonempty(train, "fit_linreg_angle");
    std::vector<double> x, y;
    for (const auto& s : train) {
        x.push_back(beam_angle(beam_angles, s.beam));
        y.push_back(target(s).angle);
    }
    return fit_ols(x, y);
}

LinReg3d fit_linreg_3d(std::span<const Sample> train, std::span<const double> beam_angles) {
    require_nonempty(train, "fit_linreg_3d");
    std::vector<double> x;
    std::array<std::vector<double>, 3> y;
    for (const auto& s : train) {
        const Candidate& c = target(s);
        x.push_back(beam_angle(beam_angles, s.beam));
        y[0].push_back(c.range);
        y[1].push_back(c.angle);
        y[2].push_back(c.velocity);
    }
    LinReg3d m;
    for (std::size_t a = 0; a < 3; ++a) {
        m.fits[a] = fit_ols(x, y[a]);
        m.scale[a] = std::max(m.fits[a].residual_std, 1e-6);
    }
    return m;
}

std::size_t predict_linreg_3d(std::span<const Candidate> candidates, std::size_t beam,
                              const LinReg3d& model, std::span<const double> beam_angles) {
    if (candidates.empty()) throw std::invalid_argument("predict_linreg_3d: no candidates");
    const double phi = beam_angle(beam_angles, beam);
    const std::array<double, 3> pred{model.fits[0](phi), model.fits[1](phi), model.fits[2](phi)};
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const std::array<double, 3> st{candidates[k].range, candidates[k].angle,
                                       candidates[k].velocity};
        double d = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
            const double z = (st[a] - pred[a]) / model.scale[a];
            d += z * z;
        }
        if (k == 0 || d < best_d) {
            best = k;
            best_d = d;
        }
    }
    return best;
}

LookupTable fit_lookup(std::span<const Sample> train, std::span<const double> beam_angles) {
    require_nonempty(train, "fit_lookup");
    const std::size_t nb = beam_angles.size();
    std::vector<double> sum(nb, 0.0);
    std::vector<std::size_t> count(nb, 0);
    for (const auto& s : train) {
        beam_angle(beam_angles, s.beam);
        sum[s.beam] += target(s).angle;
        ++count[s.beam];
    }
    const double offset = estimate_offset(train, beam_angles);
    LookupTable t;
    t.angle.resize(nb);
    t.observed.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        t.observed[b] = count[b] > 0;
        t.angle[b] = count[b] > 0 ? sum[b] / double(count[b]) : beam_angles[b] + offset;
    }
    return t;
}

std::size_t predict_lookup(std::span<const Candidate> candidates, std::size_t beam,
                           const LookupTable& table) {
    if (beam >= table.angle.size()) throw DataError("beam index out of lookup table range");
    return nearest_angle(candidates, table.angle[beam]);
}

std::vector<ml::TrainRow> expand_rows(std::span<const Sample> samples) {
    std::vector<ml::TrainRow> rows;
    for (const auto& s : samples)
        for (std::size_t k = 0; k < s.candidates.size(); ++k)
            rows.push_back({s.candidates[k], s.beam, k == s.label ? 1.0 : 0.0});
    return rows;
}

ml::Normalization fit_normalization(std::span<const Sample> train, std::size_t n_beams) {
    double rmax = 0.0, vmax = 0.0;
    double amin = INFINITY, amax = -INFINITY;
    for (const auto& s : train)
        for (const auto& c : s.candidates) {
            rmax = std::max(rmax, c.range);
            vmax = std::max(vmax, std::abs(c.velocity));
            amin = std::min(amin, c.angle);
            amax = std::max(amax, c.angle);
        }
    ml::Normalization n;
    n.range_max = std::max(rmax, 1e-3);
    n.vel_max = std::max(vmax, 1e-3);
    if (amin <= amax) {
        n.angle_center = 0.5 * (amin + amax);
        n.angle_span = std::max(amax - amin, 1.0);
    }
    n.n_beams = n_beams;
    return n;
}

ml::MlpModel train_dnn(std::span<const Sample> train, std::size_t n_beams, const DnnHyper& hyper,
                       const EpochCallback& on_epoch) {
    if (hyper.batch < 1) throw ConfigError("train_dnn: batch size must be >= 1");
    const auto rows = expand_rows(train);
    if (rows.empty()) throw DataError("train_dnn: no training rows");

    ml::MlpModel model =
        ml::init_weights(hyper.widths, fit_normalization(train, n_beams),
                         derive_seed(hyper.seed, stream::kInit));
    ml::AdamHyper ah;
    ah.lr = hyper.lr;
    ml::AdamState adam(model, ah);

    std::vector<std::size_t> order(rows.size());
    std::vector<ml::TrainRow> batch;
    batch.reserve(hyper.batch);
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(hyper.seed, stream::kShuffle, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
            const std::size_t stop = std::min(order.size(), start + hyper.batch);
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) batch.push_back(rows[order[k]]);
            auto lg = ml::loss_and_grad(model, batch);
            loss_sum += lg.mse * double(batch.size());
            ml::adam_step(adam, model, lg.grad);
        }
        if (on_epoch) on_epoch(epoch, loss_sum / double(rows.size()));
    }
    return model;
}

std::size_t predict_dnn(std::span<const Candidate> candidates, std::size_t beam,
                        const ml::MlpModel& model) {
    if (candidates.empty()) throw std::invalid_argument("predict_dnn: no candidates");
    std::size_t best = 0;
    double best_s = -1.0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const double s = ml::forward(model, candidates[k], beam);
        if (s > best_s) {
            best = k;
            best_s = s;
        }
    }
    return best;
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw DataError("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

json fit_to_json(const LinearFit& f) {
    return {{"intercept", f.intercept}, {"slope", f.slope}, {"residual_std", f.residual_std},
            {"slope_stderr", f.slope_stderr}};
}

LinearFit fit_from_json(const json& j) {
    LinearFit f;
    f.intercept = j.at("intercept").get<double>();
    f.slope = j.at("slope").get<double>();
    f.residual_std = j.value("residual_std", 0.0);
    f.slope_stderr = j.value("slope_stderr", 0.0);
    return f;
}

class SolverBase : public Solver {
public:
    explicit SolverBase(std::vector<double> beam_angles) : beam_angles_(std::move(beam_angles)) {
        if (beam_angles_.empty()) throw ConfigError("solver: empty codebook");
    }

    void save(const std::filesystem::path& dir) const override {
        require_fitted();
        json j = params();
        j["solver"] = std::string(name());
        write_json(dir / (std::string(name()) + ".json"), j);
    }

    void load(const std::filesystem::path& dir) override {
        const auto path = dir / (std::string(name()) + ".json");
        const json j = read_json(path);
        try {
            if (j.at("solver").get<std::string>() != name())
                throw DataError("solver name mismatch");
            load_params(j);
        } catch (const json::exception& e) {
            throw DataError(path.string() + ": " + e.what());
        }
        fitted_ = true;
    }

protected:
    virtual json params() const = 0;
    virtual void load_params(const json& j) = 0;

    void require_fitted() const {
        if (!fitted_) throw std::logic_error(std::string(name()) + ": solver not fitted");
    }

    std::vector<double> beam_angles_;
    bool fitted_ = false;
};

class OffsetSolver final : public SolverBase {
public:
    using SolverBase::SolverBase;
    std::string_view name() const noexcept override { return "offset"; }
    void fit(std::span<const Sample> train) override {
        offset_ = estimate_offset(train, beam_angles_);
        fitted_ = true;
    }
    std::size_t predict(std::span<const Candidate> c, std::size_t beam) const override {
        require_fitted();
        return predict_offset(c, beam, offset_, beam_angles_);
    }

private:
    json params() const override { return {{"offset_deg", offset_}}; }
    void load_params(const json& j) override { offset_ = j.at("offset_deg").get<double>(); }
    double offset_ = 0.0;
};

class LinRegAngleSolver final : public SolverBase {
public:
    using SolverBase::SolverBase;
    std::string_view name() const noexcept override { return "linreg-angle"; }
    void fit(std::span<const Sample> train) override {
        fit_ = fit_linreg_angle(train, beam_angles_);
        fitted_ = true;
    }
    std::size_t predict(std::span<const Candidate> c, std::size_t beam) const override {
        require_fitted();
        return nearest_angle(c, fit_(beam_angle(beam_angles_, beam)));
    }

private:
    json params() const override { return fit_to_json(fit_); }
    void load_params(const json& j) override { fit_ = fit_from_json(j); }
    LinearFit fit_;
};

class LinReg3dSolver final : public SolverBase {
public:
    using SolverBase::SolverBase;
    std::string_view name() const noexcept override { return "linreg-3d"; }
    void fit(std::span<const Sample> train) override {
        model_ = fit_linreg_3d(train, beam_angles_);
        fitted_ = true;
    }
    std::size_t predict(std::span<const Candidate> c, std::size_t beam) const override {
        require_fitted();
        return predict_linreg_3d(c, beam, model_, beam_angles_);
    }

private:
    json params() const override {
        return {{"range", fit_to_json(model_.fits[0])},
                {"angle", fit_to_json(model_.fits[1])},
                {"velocity", fit_to_json(model_.fits[2])},
                {"scale", model_.scale}};
    }
    void load_params(const json& j) override {
        model_.fits = {fit_from_json(j.at("range")), fit_from_json(j.at("angle")),
                       fit_from_json(j.at("velocity"))};
        model_.scale = j.at("scale").get<std::array<double, 3>>();
    }
    LinReg3d model_;
};

class LookupSolver final : public SolverBase {
public:
    using SolverBase::SolverBase;
    std::string_view name() const noexcept override { return "lookup"; }
    void fit(std::span<const Sample> train) override {
        table_ = fit_lookup(train, beam_angles_);
        fitted_ = true;
    }
    std::size_t predict(std::span<const Candidate> c, std::size_t beam) const override {
        require_fitted();
        return predict_lookup(c, beam, table_);
    }

private:
    json params() const override {
        return {{"angle_deg", table_.angle}, {"observed", table_.observed}};
    }
    void load_params(const json& j) override {
        table_.angle = j.at("angle_deg").get<std::vector<double>>();
        table_.observed = j.at("observed").get<std::vector<bool>>();
        if (table_.angle.size() != beam_angles_.size() ||
            table_.observed.size() != table_.angle.size())
            throw DataError("lookup table size does not match codebook");
    }
    LookupTable table_;
};

class DnnSolver final : public SolverBase {
public:
    DnnSolver(std::vector<double> beam_angles, const DnnHyper& hyper)
        : SolverBase(std::move(beam_angles)), hyper_(hyper) {}
    std::string_view name() const noexcept override { return "dnn"; }
    void fit(std::span<const Sample> train) override {
        model_ = train_dnn(train, beam_angles_.size(), hyper_);
        fitted_ = true;
    }
    std::size_t predict(std::span<const Candidate> c, std::size_t beam) const override {
        require_fitted();
        return predict_dnn(c, beam, model_);
    }
    void save(const std::filesystem::path& dir) const override {
        SolverBase::save(dir);
        ml::save_checkpoint(dir / "dnn.ckpt", model_);
    }
    void load(const std::filesystem::path& dir) override {
        SolverBase::load(dir);
        model_ = ml::load_checkpoint(dir / "dnn.ckpt");
    }

private:
    json params() const override {
        json layers = json::array();
        model_.for_each_layer([&](const ml::DenseLayer& l) {
            layers.push_back({{"in", l.in}, {"out", l.out},
                              {"activation", ml::to_string(l.activation)}});
        });
        return {{"checkpoint", "dnn.ckpt"},
                {"hyperparameters",
                 {{"optimizer", "adam"}, {"lr", hyper_.lr}, {"beta1", 0.9}, {"beta2", 0.999},
                  {"eps", 1e-8}, {"epochs", hyper_.epochs}, {"batch", hyper_.batch},
                  {"seed", hyper_.seed}, {"loss", "mse"}}},
                {"layers", layers},
                {"normalization",
                 {{"range_max", model_.norm.range_max},
                  {"angle_center", model_.norm.angle_center},
                  {"angle_span", model_.norm.angle_span},
                  {"vel_max", model_.norm.vel_max},
                  {"n_beams", model_.norm.n_beams}}}};
    }
    void load_params(const json& j) override {
        const auto& h = j.at("hyperparameters");
        hyper_.lr = h.at("lr").get<double>();
        hyper_.epochs = h.at("epochs").get<std::size_t>();
        hyper_.batch = h.at("batch").get<std::size_t>();
        hyper_.seed = h.at("seed").get<std::uint64_t>();
    }
    DnnHyper hyper_;
    ml::MlpModel model_;
};

}  // namespace

const std::vector<std::string>& solver_names() {
    static const std::vector<std::string> names{"offset", "linreg-angle", "linreg-3d", "lookup",
                                                "dnn"};
    return names;
}

std::unique_ptr<Solver> make_solver(std::string_view name, std::vector<double> beam_angles,
                                    const DnnHyper& dnn) {
    if (name == "offset") return std::make_unique<OffsetSolver>(std::move(beam_angles));
    if (name == "linreg-angle") return std::make_unique<LinRegAngleSolver>(std::move(beam_angles));
    if (name == "linreg-3d") return std::make_unique<LinReg3dSolver>(std::move(beam_angles));
    if (name == "lookup") return std::make_unique<LookupSolver>(std::move(beam_angles));
    if (name == "dnn") return std::make_unique<DnnSolver>(std::move(beam_angles), dnn);
    std::string valid;
    for (const auto& n : solver_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown solver '" + std::string(name) + "' (valid: " + valid + ")");
}

std::vector<std::size_t> predict_all(const Solver& solver, std::span<const Sample> samples) {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(solver.predict(s.candidates, s.beam));
    return out;
}

double evaluate(const Solver& solver, std::span<const Sample> test) {
    if (test.empty()) throw DataError("evaluate: empty test set");
    std::size_t hits = 0;
    for (const auto& s : test)
        if (solver.predict(s.candidates, s.beam) == s.label) ++hits;
    return double(hits) / double(test.size());
}

}  // namespace isac
