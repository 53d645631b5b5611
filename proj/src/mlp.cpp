#include "isac/mlp.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "isac/error.hpp"
#include "isac/rng.hpp"

namespace isac::ml {

const char* to_string(Activation a) noexcept {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "unknown";
}

DenseLayer::DenseLayer(std::size_t in_, std::size_t out_, Activation act)
    : in(in_), out(out_), weights(in_ * out_, 0.0), bias(out_, 0.0), activation(act) {}

void Normalization::validate() const {
    if (!(range_max > 0.0) || !(angle_span > 0.0) || !(vel_max > 0.0) || n_beams < 1 ||
        !std::isfinite(angle_center))
        throw std::invalid_argument("normalization constants must be positive");
}

MlpModel::MlpModel(const MlpWidths& w, const Normalization& n) : norm(n) {
    radar = {DenseLayer(3, w.radar[0], Activation::relu),
             DenseLayer(w.radar[0], w.radar[1], Activation::relu),
             DenseLayer(w.radar[1], w.radar[2], Activation::relu)};
    beam = {DenseLayer(1, w.beam[0], Activation::relu),
            DenseLayer(w.beam[0], w.beam[1], Activation::relu),
            DenseLayer(w.beam[1], w.beam[2], Activation::relu)};
    head = {DenseLayer(w.radar[2] + w.beam[2], w.head[0], Activation::relu),
            DenseLayer(w.head[0], w.head[1], Activation::relu),
            DenseLayer(w.head[1], w.head[2], Activation::relu),
            DenseLayer(w.head[2], 1, Activation::sigmoid)};
}

std::size_t MlpModel::n_params() const noexcept {
    std::size_t n = 0;
    for_each_layer([&](const DenseLayer& l) { n += l.n_params(); });
    return n;
}

MlpModel MlpModel::zeros_like() const {
    MlpModel z = *this;
    z.for_each_layer([](DenseLayer& l) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    });
    return z;
}

bool MlpModel::same_shape(const MlpModel& o) const noexcept {
    auto eq = [](const auto& a, const auto& b) {
        for (std::size_t k = 0; k < a.size(); ++k)
            if (!a[k].same_shape(b[k])) return false;
        return true;
    };
    return eq(radar, o.radar) && eq(beam, o.beam) && eq(head, o.head);
}

bool MlpModel::operator==(const MlpModel& o) const noexcept {
    if (!same_shape(o)) return false;
    auto eq = [](const auto& a, const auto& b) {
        for (std::size_t k = 0; k < a.size(); ++k)
            if (a[k].weights != b[k].weights || a[k].bias != b[k].bias) return false;
        return true;
    };
    return eq(radar, o.radar) && eq(beam, o.beam) && eq(head, o.head) &&
           norm.range_max == o.norm.range_max && norm.angle_center == o.norm.angle_center &&
           norm.angle_span == o.norm.angle_span &&
           norm.vel_max == o.norm.vel_max && norm.n_beams == o.norm.n_beams;
}

std::array<double, 4> normalized_inputs(const Normalization& norm, const Candidate& c,
                                        std::size_t beam) {
    norm.validate();
    if (!std::isfinite(c.range) || !std::isfinite(c.angle) || !std::isfinite(c.velocity))
        throw std::invalid_argument("forward: non-finite candidate input");
    const double beam_den = norm.n_beams > 1 ? double(norm.n_beams - 1) : 1.0;
    return {c.range / norm.range_max,
            (c.angle - norm.angle_center + norm.angle_span / 2.0) / norm.angle_span,
            (c.velocity + norm.vel_max) / (2.0 * norm.vel_max), double(beam) / beam_den};
}

namespace {

double activate(Activation a, double z) noexcept {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::identity: break;
    }
    return z;
}

// Derivative expressed through the pre-activation z and output y.
double activate_grad(Activation a, double z, double y) noexcept {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::identity: break;
    }
    return 1.0;
}

void dense_forward(const DenseLayer& l, const double* x, double* z, double* y) {
    for (std::size_t o = 0; o < l.out; ++o) {
        const double* w = l.weights.data() + o * l.in;
        double acc = l.bias[o];
        for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * x[i];
        z[o] = acc;
        y[o] = activate(l.activation, acc);
    }
}

// Given dL/dy, accumulate parameter gradients and write dL/dx (if dx != null).
// dy is overwritten with dL/dz.
void dense_backward(const DenseLayer& l, DenseLayer& g, const double* x, const double* z,
                    const double* y, double* dy, double* dx) {
    for (std::size_t o = 0; o < l.out; ++o) dy[o] *= activate_grad(l.activation, z[o], y[o]);
    for (std::size_t o = 0; o < l.out; ++o) {
        const double dz = dy[o];
        g.bias[o] += dz;
        double* gw = g.weights.data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) gw[i] += dz * x[i];
    }
    if (dx) {
        std::fill_n(dx, l.in, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
            const double dz = dy[o];
            const double* w = l.weights.data() + o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) dx[i] += w[i] * dz;
        }
    }
}

/// Activations of one chain of layers for a single row.
template <std::size_t L>
struct ChainTape {
    std::array<std::vector<double>, L + 1> act;  // act[0] is the input
    std::array<std::vector<double>, L> pre;

    explicit ChainTape(const std::array<DenseLayer, L>& layers) {
        act[0].resize(layers[0].in);
        for (std::size_t k = 0; k < L; ++k) {
            pre[k].resize(layers[k].out);
            act[k + 1].resize(layers[k].out);
        }
    }

    void forward(const std::array<DenseLayer, L>& layers) {
        for (std::size_t k = 0; k < L; ++k)
            dense_forward(layers[k], act[k].data(), pre[k].data(), act[k + 1].data());
    }

    // dout: dL/d(chain output); din receives dL/d(chain input) if non-null.
    void backward(const std::array<DenseLayer, L>& layers, std::array<DenseLayer, L>& grads,
                  std::vector<double> dout, double* din) const {
        std::vector<double> dprev;
        for (std::size_t k = L; k-- > 0;) {
            dprev.assign(layers[k].in, 0.0);
            const bool need_dx = k > 0 || din != nullptr;
            dense_backward(layers[k], grads[k], act[k].data(), pre[k].data(), act[k + 1].data(),
                           dout.data(), need_dx ? dprev.data() : nullptr);
            dout.swap(dprev);
        }
        if (din) std::copy(dout.begin(), dout.end(), din);
    }
};

struct ModelTape {
    ChainTape<3> radar;
    ChainTape<3> beam;
    ChainTape<4> head;

    explicit ModelTape(const MlpModel& m) : radar(m.radar), beam(m.beam), head(m.head) {}

    double forward(const MlpModel& m, const Candidate& c, std::size_t b) {
        const auto in = normalized_inputs(m.norm, c, b);
        std::copy_n(in.begin(), 3, radar.act[0].begin());
        beam.act[0][0] = in[3];
        radar.forward(m.radar);
        beam.forward(m.beam);
        auto& cat = head.act[0];
        const auto& ra = radar.act.back();
        const auto& ba = beam.act.back();
        if (cat.size() != ra.size() + ba.size())
            throw std::logic_error("branch widths do not match head input");
        std::copy(ra.begin(), ra.end(), cat.begin());
        std::copy(ba.begin(), ba.end(), cat.begin() + static_cast<std::ptrdiff_t>(ra.size()));
        head.forward(m.head);
        return head.act.back()[0];
    }

    void backward(const MlpModel& m, MlpModel& g, double dscore) {
        std::vector<double> dcat(head.act[0].size());
        head.backward(m.head, g.head, {dscore}, dcat.data());
        const std::size_t nr = radar.act.back().size();
        radar.backward(m.radar, g.radar, {dcat.begin(), dcat.begin() + static_cast<std::ptrdiff_t>(nr)},
                       nullptr);
        beam.backward(m.beam, g.beam, {dcat.begin() + static_cast<std::ptrdiff_t>(nr), dcat.end()},
                      nullptr);
    }
};

}  // namespace

double forward(const MlpModel& model, const Candidate& candidate, std::size_t beam) {
    ModelTape tape(model);
    return tape.forward(model, candidate, beam);
}

LossGrad loss_and_grad(const MlpModel& model, std::span<const TrainRow> batch) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    LossGrad out{0.0, model.zeros_like()};
    ModelTape tape(model);
    const double n = double(batch.size());
    for (const auto& row : batch) {
        if (row.target != 0.0 && row.target != 1.0)
            throw std::invalid_argument("loss_and_grad: target must be 0 or 1");
        const double s = tape.forward(model, row.candidate, row.beam);
        const double err = s - row.target;
        out.mse += err * err;
        tape.backward(model, out.grad, 2.0 * err / n);
    }
    out.mse /= n;
    return out;
}

void adam_update(std::span<double> params, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamHyper& h) {
    if (grad.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw std::invalid_argument("adam_update: shape mismatch");
    if (step == 0) throw std::invalid_argument("adam_update: step is 1-based");
    const double c1 = 1.0 - std::pow(h.beta1, double(step));
    const double c2 = 1.0 - std::pow(h.beta2, double(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * grad[k];
        v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * grad[k] * grad[k];
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        params[k] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
}

AdamState::AdamState(const MlpModel& like, const AdamHyper& h)
    : m(like.zeros_like()), v(like.zeros_like()), step(0), hyper(h) {}

void adam_step(AdamState& state, MlpModel& params, const MlpModel& grad) {
    if (!params.same_shape(grad) || !params.same_shape(state.m) || !params.same_shape(state.v))
        throw std::invalid_argument("adam_step: shape mismatch");
    ++state.step;
    auto run = [&](auto& p, const auto& g, auto& m, auto& v) {
        for (std::size_t k = 0; k < p.size(); ++k) {
            adam_update(p[k].weights, g[k].weights, m[k].weights, v[k].weights, state.step,
                        state.hyper);
            adam_update(p[k].bias, g[k].bias, m[k].bias, v[k].bias, state.step, state.hyper);
        }
    };
    run(params.radar, grad.radar, state.m.radar, state.v.radar);
    run(params.beam, grad.beam, state.m.beam, state.v.beam);
    run(params.head, grad.head, state.m.head, state.v.head);
}

MlpModel init_weights(const MlpWidths& widths, const Normalization& norm, std::uint64_t seed) {
    MlpModel model(widths, norm);
    Rng rng(seed);
    model.for_each_layer([&](DenseLayer& l) {
        const double limit = std::sqrt(6.0 / double(l.in));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (auto& w : l.weights) w = u(rng);
    });
    return model;
}

namespace {

constexpr char kCkptMagic[4] = {'I', 'M', 'L', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
    const auto u = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(u >> (8 * k));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated checkpoint");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated checkpoint");
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u |= std::uint64_t(b[k]) << (8 * k);
    return std::bit_cast<double>(u);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write(kCkptMagic, 4);
    put_u32(os, kCkptVersion);
    put_u32(os, 10);
    model.for_each_layer([&](const DenseLayer& l) {
        put_u32(os, static_cast<std::uint32_t>(l.in));
        put_u32(os, static_cast<std::uint32_t>(l.out));
        put_u32(os, static_cast<std::uint32_t>(l.activation));
    });
    put_f64(os, model.norm.range_max);
    put_f64(os, model.norm.angle_center);
    put_f64(os, model.norm.angle_span);
    put_f64(os, model.norm.vel_max);
    put_f64(os, double(model.norm.n_beams));
    model.for_each_layer([&](const DenseLayer& l) {
        for (double w : l.weights) put_f64(os, w);
        for (double b : l.bias) put_f64(os, b);
    });
    if (!os) throw DataError("write failed: " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    try {
        char magic[4];
        if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kCkptMagic))
            throw DataError("bad magic");
        if (get_u32(is) != kCkptVersion) throw DataError("unsupported checkpoint version");
        if (get_u32(is) != 10) throw DataError("unexpected layer count");
        std::array<DenseLayer, 10> layers;
        for (auto& l : layers) {
            const std::uint32_t in = get_u32(is), out = get_u32(is), act = get_u32(is);
            if (in == 0 || out == 0 || in > (1u << 16) || out > (1u << 16) || act > 2)
                throw DataError("bad layer header");
            l = DenseLayer(in, out, static_cast<Activation>(act));
        }
        MlpModel m;
        std::copy_n(layers.begin(), 3, m.radar.begin());
        std::copy_n(layers.begin() + 3, 3, m.beam.begin());
        std::copy_n(layers.begin() + 6, 4, m.head.begin());
        m.norm.range_max = get_f64(is);
        m.norm.angle_center = get_f64(is);
        m.norm.angle_span = get_f64(is);
        m.norm.vel_max = get_f64(is);
        m.norm.n_beams = static_cast<std::size_t>(get_f64(is));
        m.for_each_layer([&](DenseLayer& l) {
            for (auto& w : l.weights) w = get_f64(is);
            for (auto& b : l.bias) b = get_f64(is);
        });
        if (m.radar[0].in != 3 || m.beam[0].in != 1 || m.head[3].out != 1 ||
            m.head[0].in != m.radar[2].out + m.beam[2].out)
            throw DataError("inconsistent layer shapes");
        return m;
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace isac::ml
