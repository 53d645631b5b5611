#include "isac/radar_detect.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "isac/error.hpp"

namespace isac {

PowerCube::PowerCube(std::size_t n_angle, std::size_t n_doppler, std::size_t n_range)
    : angle_deg(n_angle, 0.0), velocity_mps(n_doppler, 0.0), range_m(n_range, 0.0),
      n_angle_(n_angle), n_doppler_(n_doppler), n_range_(n_range),
      power_(n_angle * n_doppler * n_range, 0.0) {}

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// In-place forward transform of one line held in an aligned scratch buffer.
class LineFft {
public:
    explicit LineFft(std::size_t n) : n_(n) {
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!buf_) throw std::bad_alloc();
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~LineFft() {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(buf_);
    }
    LineFft(const LineFft&) = delete;
    LineFft& operator=(const LineFft&) = delete;

    cdouble* line() noexcept { return reinterpret_cast<cdouble*>(buf_); }
    std::size_t size() const noexcept { return n_; }
    void run() noexcept { fftw_execute(plan_); }

private:
    std::size_t n_;
    fftw_complex* buf_ = nullptr;
    fftw_plan plan_ = nullptr;
};

std::vector<double> hann(std::size_t n, bool enabled) {
    std::vector<double> w(n, 1.0);
    if (!enabled || n < 2) return w;
    for (std::size_t k = 0; k < n; ++k)
        w[k] = 0.5 * (1.0 - std::cos(2.0 * kPi * double(k) / double(n - 1)));
    return w;
}

// Index of FFT bin k after shifting zero frequency to n/2.
constexpr std::size_t shifted(std::size_t k, std::size_t n) noexcept { return (k + n / 2) % n; }

}  // namespace

void remove_static_clutter(std::span<cdouble> data, std::size_t n_rx, std::size_t n_chirps,
                           std::size_t n_range) {
    if (data.size() != n_rx * n_chirps * n_range)
        throw std::invalid_argument("remove_static_clutter: shape mismatch");
    for (std::size_t m = 0; m < n_rx; ++m)
        for (std::size_t r = 0; r < n_range; ++r) {
            cdouble mean{};
            for (std::size_t l = 0; l < n_chirps; ++l) mean += data[(m * n_chirps + l) * n_range + r];
            mean /= double(n_chirps);
            for (std::size_t l = 0; l < n_chirps; ++l) data[(m * n_chirps + l) * n_range + r] -= mean;
        }
}

PowerCube process_cube(const RadarCube& cube, const RadarConfig& cfg, const ProcessOptions& opts) {
    if (!cube.matches(cfg)) throw DataError("process_cube: cube shape does not match radar config");
    if (opts.angle_fft_size < cube.n_rx())
        throw ConfigError("process_cube: angle FFT size smaller than antenna count");
    const std::size_t ma = cube.n_rx(), mc = cube.n_chirps(), ms = cube.n_samples();
    const std::size_t na = opts.angle_fft_size;

    std::vector<cdouble> work(cube.data().begin(), cube.data().end());

    // Range FFT along samples.
    {
        const auto w = hann(ms, opts.window);
        LineFft fft(ms);
        for (std::size_t ml = 0; ml < ma * mc; ++ml) {
            cdouble* row = work.data() + ml * ms;
            for (std::size_t i = 0; i < ms; ++i) fft.line()[i] = row[i] * w[i];
            fft.run();
            std::copy_n(fft.line(), ms, row);
        }
    }

    if (opts.clutter_removal) remove_static_clutter(work, ma, mc, ms);

    // Doppler FFT along chirps, zero velocity moved to bin mc/2.
    {
        const auto w = hann(mc, opts.window);
        LineFft fft(mc);
        for (std::size_t m = 0; m < ma; ++m)
            for (std::size_t r = 0; r < ms; ++r) {
                for (std::size_t l = 0; l < mc; ++l)
                    fft.line()[l] = work[(m * mc + l) * ms + r] * w[l];
                fft.run();
                for (std::size_t k = 0; k < mc; ++k)
                    work[(m * mc + shifted(k, mc)) * ms + r] = fft.line()[k];
            }
    }

    // Angle FFT along antennas, zero-padded.
    PowerCube pc(na, mc, ms);
    {
        LineFft fft(na);
        for (std::size_t d = 0; d < mc; ++d)
            for (std::size_t r = 0; r < ms; ++r) {
                std::fill_n(fft.line(), na, cdouble{});
                for (std::size_t m = 0; m < ma; ++m) fft.line()[m] = work[(m * mc + d) * ms + r];
                fft.run();
                for (std::size_t k = 0; k < na; ++k) pc.at(shifted(k, na), d, r) = std::norm(fft.line()[k]);
            }
    }

    for (std::size_t a = 0; a < na; ++a) {
        const double u = (double(a) - double(na / 2)) / double(na);
        pc.angle_deg[a] = rad2deg(std::asin(std::clamp(u / cfg.rx_spacing, -1.0, 1.0)));
    }
    const double dv = cfg.velocity_bin_mps();
    for (std::size_t d = 0; d < mc; ++d) pc.velocity_mps[d] = (double(d) - double(mc / 2)) * dv;
    const double dr = cfg.range_bin_m();
    for (std::size_t r = 0; r < ms; ++r) pc.range_m[r] = double(r) * dr;
    return pc;
}

void DetectConfig::validate() const {
    if (cfar_train < 1) throw ConfigError("detect: cfar_train must be >= 1");
    if (!(cfar_pfa > 0.0 && cfar_pfa < 1.0)) throw ConfigError("detect: cfar_pfa must be in (0, 1)");
    if (!(dbscan_eps > 0.0)) throw ConfigError("detect: dbscan_eps must be > 0");
    if (dbscan_min_pts < 1) throw ConfigError("detect: dbscan_min_pts must be >= 1");
    if (process.angle_fft_size < 1) throw ConfigError("detect: angle_fft_size must be >= 1");
}

double cfar_scale(double pfa, std::size_t n_training) {
    const double n = double(n_training);
    return n * (std::pow(pfa, -1.0 / n) - 1.0);
}

std::vector<CellDetection> cfar_detect(const PowerCube& pc, const DetectConfig& cfg) {
    cfg.validate();
    const std::size_t n = pc.n_range();
    const std::size_t t = cfg.cfar_train, g = cfg.cfar_guard;
    // Every cell needs 2t training cells on at least one side.
    if (n < 3 * t + 2 * g)
        throw ConfigError("cfar: training window (train=" + std::to_string(t) + ", guard=" +
                          std::to_string(g) + ") does not fit a range axis of " +
                          std::to_string(n));
    const std::size_t nt = 2 * t;
    const double scale = cfar_scale(cfg.cfar_pfa, nt) / double(nt);

    std::vector<CellDetection> out;
    std::vector<double> prefix(n + 1);
    for (std::size_t a = 0; a < pc.n_angle(); ++a)
        for (std::size_t d = 0; d < pc.n_doppler(); ++d) {
            const auto line = pc.range_line(a, d);
            prefix[0] = 0.0;
            for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + line[i];
            auto sum = [&](std::size_t lo, std::size_t hi) { return prefix[hi] - prefix[lo]; };

            for (std::size_t i = 0; i < n; ++i) {
                double noise;
                const bool lag_fits = i >= g + t;
                const bool lead_fits = i + g + t < n;
                if (lag_fits && lead_fits)
                    noise = sum(i - g - t, i - g) + sum(i + g + 1, i + g + t + 1);
                else if (lead_fits)
                    noise = sum(i + g + 1, i + g + nt + 1);
                else
                    noise = sum(i - g - nt, i - g);
                if (line[i] > scale * noise) out.push_back({a, d, i, line[i]});
            }
        }
    return out;
}

std::vector<CellDetection> gate_detections(std::span<const CellDetection> detections,
                                           const PowerCube& pc, const DetectConfig& cfg) {
    std::vector<CellDetection> out;
    if (detections.empty()) return out;
    double floor = 0.0;
    if (cfg.dynamic_range_db >= 0.0) {
        const double peak = *std::max_element(pc.data().begin(), pc.data().end());
        floor = peak * std::pow(10.0, -cfg.dynamic_range_db / 10.0);
    }
    const double line_ratio =
        cfg.angle_peak_db >= 0.0 ? std::pow(10.0, -cfg.angle_peak_db / 10.0) : 0.0;
    for (const auto& det : detections) {
        if (det.power < floor) continue;
        if (line_ratio > 0.0) {
            // The angle spectrum is periodic, so a main lobe near endfire
            // spills across the edge. Only circular local maxima survive,
            // which keeps that spill and the array sidelobes out.
            const std::size_t na = pc.n_angle();
            const double prev = pc.at((det.angle + na - 1) % na, det.doppler, det.range);
            const double next = pc.at((det.angle + 1) % na, det.doppler, det.range);
            if (na > 1 && (det.power < prev || det.power < next)) continue;
            double line_max = 0.0;
            for (std::size_t a = 0; a < na; ++a)
                line_max = std::max(line_max, pc.at(a, det.doppler, det.range));
            if (det.power < line_max * line_ratio) continue;
        }
        out.push_back(det);
    }
    return out;
}

namespace {

struct GridKey {
    std::int64_t x, y, z;
    bool operator==(const GridKey&) const = default;
};

struct GridKeyHash {
    std::size_t operator()(const GridKey& k) const noexcept {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
        h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

/// Uniform grid with cell size eps; a radius query visits the 27 adjacent cells.
class NeighborGrid {
public:
    NeighborGrid(std::span<const Point3> pts, double eps) : pts_(pts), eps_(eps) {
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(i);
    }

    void query(std::size_t i, std::vector<std::size_t>& out) const {
        out.clear();
        const GridKey c = key(pts_[i]);
        const double eps2 = eps_ * eps_;
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells_.end()) continue;
                    for (std::size_t j : it->second) {
                        double d2 = 0.0;
                        for (int k = 0; k < 3; ++k) {
                            const double diff = pts_[i][k] - pts_[j][k];
                            d2 += diff * diff;
                        }
                        if (d2 <= eps2) out.push_back(j);
                    }
                }
        std::sort(out.begin(), out.end());
    }

private:
    GridKey key(const Point3& p) const {
        return {static_cast<std::int64_t>(std::floor(p[0] / eps_)),
                static_cast<std::int64_t>(std::floor(p[1] / eps_)),
                static_cast<std::int64_t>(std::floor(p[2] / eps_))};
    }

    std::span<const Point3> pts_;
    double eps_;
    std::unordered_map<GridKey, std::vector<std::size_t>, GridKeyHash> cells_;
};

}  // namespace

std::vector<int> dbscan(std::span<const Point3> points, double eps, std::size_t min_pts) {
    if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be > 0");
    constexpr int kUnvisited = -2;
    std::vector<int> labels(points.size(), kUnvisited);
    const NeighborGrid grid(points, eps);

    std::vector<std::size_t> nbrs, frontier;
    int cluster = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (labels[i] != kUnvisited) continue;
        grid.query(i, nbrs);
        if (nbrs.size() < min_pts) {
            labels[i] = kNoise;
            continue;
        }
        labels[i] = cluster;
        frontier.assign(nbrs.begin(), nbrs.end());
        for (std::size_t q = 0; q < frontier.size(); ++q) {
            const std::size_t j = frontier[q];
            if (labels[j] == kNoise) labels[j] = cluster;  // border point
            if (labels[j] != kUnvisited) continue;
            labels[j] = cluster;
            grid.query(j, nbrs);
            if (nbrs.size() >= min_pts) frontier.insert(frontier.end(), nbrs.begin(), nbrs.end());
        }
        ++cluster;
    }
    return labels;
}

std::vector<Point3> detection_coordinates(std::span<const CellDetection> detections) {
    std::vector<Point3> pts;
    pts.reserve(detections.size());
    for (const auto& d : detections)
        pts.push_back({double(d.range), double(d.doppler), double(d.angle)});
    return pts;
}

std::vector<Candidate> summarize_clusters(std::span<const CellDetection> detections,
                                          std::span<const int> labels, const PowerCube& pc) {
    if (labels.size() != detections.size())
        throw std::invalid_argument("summarize_clusters: labels do not align with detections");
    const int n_clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<Candidate> out(static_cast<std::size_t>(std::max(n_clusters, 0)), Candidate{});
    for (auto& c : out) c.n_points = 0;
    for (std::size_t k = 0; k < detections.size(); ++k) {
        if (labels[k] < 0) continue;
        const auto& det = detections[k];
        Candidate& c = out[static_cast<std::size_t>(labels[k])];
        c.range += pc.range_m[det.range];
        c.angle += pc.angle_deg[det.angle];
        c.velocity += pc.velocity_mps[det.doppler];
        c.power += det.power;
        ++c.n_points;
    }
    std::erase_if(out, [](const Candidate& c) { return c.n_points == 0; });
    for (auto& c : out) {
        const double n = double(c.n_points);
        c.range /= n;
        c.angle /= n;
        c.velocity /= n;
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Candidate& a, const Candidate& b) { return a.power > b.power; });
    return out;
}

std::vector<Candidate> detect_objects(const RadarCube& cube, const RadarConfig& radar,
                                      const DetectConfig& cfg) {
    cfg.validate();
    const PowerCube pc = process_cube(cube, radar, cfg.process);
    const auto raw = cfar_detect(pc, cfg);
    const auto dets = gate_detections(raw, pc, cfg);
    const auto pts = detection_coordinates(dets);
    const auto labels = dbscan(pts, cfg.dbscan_eps, cfg.dbscan_min_pts);
    return summarize_clusters(dets, labels, pc);
}

}  // namespace isac
