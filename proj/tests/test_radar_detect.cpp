#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "isac/error.hpp"
#include "isac/radar_detect.hpp"

using namespace isac;

namespace {

SceneObject object_at(double range, double az_deg, double closing_mps, double refl = 1.0) {
    const double t = deg2rad(az_deg);
    SceneObject o;
    o.position = {range * std::sin(t), range * std::cos(t)};
    o.velocity = {-closing_mps * std::sin(t), -closing_mps * std::cos(t)};
    o.reflectivity = refl;
    return o;
}

double angle_for_bin(std::size_t a, std::size_t na, double spacing = 0.5) {
    const double u = (double(a) - double(na / 2)) / double(na);
    return rad2deg(std::asin(u / spacing));
}

struct Argmax {
    std::size_t a = 0, d = 0, r = 0;
    double p = -1.0;
};

Argmax argmax(const PowerCube& pc) {
    Argmax best;
    for (std::size_t a = 0; a < pc.n_angle(); ++a)
        for (std::size_t d = 0; d < pc.n_doppler(); ++d)
            for (std::size_t r = 0; r < pc.n_range(); ++r)
                if (pc.at(a, d, r) > best.p) best = {a, d, r, pc.at(a, d, r)};
    return best;
}

double max_power(const PowerCube& pc) {
    return *std::max_element(pc.data().begin(), pc.data().end());
}

PowerCube flat_cube(std::size_t na, std::size_t nd, std::size_t nr, double value) {
    PowerCube pc(na, nd, nr);
    std::fill(pc.data().begin(), pc.data().end(), value);
    return pc;
}

// Independent O(n^2) DBSCAN: core points by brute force, clusters as
// connected components of the core graph numbered by their lowest core
// index, border points joined to the earliest such cluster they touch.
std::vector<int> reference_dbscan(const std::vector<Point3>& pts, double eps, std::size_t min_pts) {
    const std::size_t n = pts.size();
    auto close = [&](std::size_t i, std::size_t j) {
        const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1],
                     dz = pts[i][2] - pts[j][2];
        return dx * dx + dy * dy + dz * dz <= eps * eps;
    };
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t cnt = 0;
        for (std::size_t j = 0; j < n; ++j) cnt += close(i, j);
        core[i] = cnt >= min_pts;
    }
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (core[i] && core[j] && close(i, j)) parent[find(i)] = find(j);
    std::map<std::size_t, int> cluster_of_root;
    for (std::size_t i = 0; i < n; ++i)
        if (core[i] && !cluster_of_root.count(find(i)))
            cluster_of_root.emplace(find(i), int(cluster_of_root.size()));
    std::vector<int> labels(n, kNoise);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) {
            labels[i] = cluster_of_root.at(find(i));
            continue;
        }
        int best = kNoise;
        for (std::size_t j = 0; j < n; ++j)
            if (core[j] && close(i, j)) {
                const int c = cluster_of_root.at(find(j));
                if (best == kNoise || c < best) best = c;
            }
        labels[i] = best;
    }
    return labels;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == kNoise) != (b[i] == kNoise)) return false;
        if (a[i] == kNoise) continue;
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

}  // namespace

// ---- process_cube ------------------------------------------------------------

TEST(ProcessCube, AllZeroCubeGivesAllZeroPower) {
    RadarConfig cfg;
    cfg.n_chirps = 32;
    const RadarCube cube(cfg.n_rx, cfg.n_chirps, cfg.n_samples);
    const PowerCube pc = process_cube(cube, cfg);
    EXPECT_EQ(pc.n_angle(), 64u);
    EXPECT_EQ(pc.n_doppler(), 32u);
    EXPECT_EQ(pc.n_range(), 512u);
    EXPECT_EQ(max_power(pc), 0.0);
}

TEST(ProcessCube, StaticReturnIsRemovedExactly) {
    RadarConfig cfg;
    cfg.n_chirps = 64;
    const std::vector<SceneObject> scene{object_at(30.0, 12.0, 0.0)};
    const RadarCube cube = synthesize_frame(scene, cfg, 1);
    ProcessOptions raw;
    raw.clutter_removal = false;
    const double before = max_power(process_cube(cube, cfg, raw));
    const double after = max_power(process_cube(cube, cfg));
    ASSERT_GT(before, 0.0);
    EXPECT_LT(after, 1e-10 * before);
}

TEST(ProcessCube, MovingReturnSurvivesCleaning) {
    RadarConfig cfg;
    const std::vector<SceneObject> scene{object_at(30.0, 12.0, 10.0)};
    const RadarCube cube = synthesize_frame(scene, cfg, 1);
    ProcessOptions raw;
    raw.clutter_removal = false;
    const double before = max_power(process_cube(cube, cfg, raw));
    const double after = max_power(process_cube(cube, cfg));
    EXPECT_LT(std::abs(after - before) / before, 0.05);
}

TEST(ProcessCube, ClutterCleaningIsIdempotent) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    std::vector<cdouble> x(3 * 20 * 16);
    for (auto& v : x) v = {g(rng), g(rng)};
    remove_static_clutter(x, 3, 20, 16);
    auto y = x;
    remove_static_clutter(y, 3, 20, 16);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(x[i] - y[i]), 0.0, 1e-12);
    EXPECT_THROW(remove_static_clutter(y, 3, 20, 15), std::invalid_argument);
}

TEST(ProcessCube, OnGridTargetPeaksAtAnalyticBins) {
    RadarConfig cfg;
    const double d = 100.0 * cfg.range_bin_m();
    const double v = 10.0 * cfg.velocity_bin_mps();
    const double az = angle_for_bin(40, 64);
    const std::vector<SceneObject> scene{object_at(d, az, v)};
    const PowerCube pc = process_cube(synthesize_frame(scene, cfg, 1), cfg);
    const Argmax m = argmax(pc);
    EXPECT_EQ(m.r, 100u);
    EXPECT_EQ(m.d, cfg.n_chirps / 2 + 10);
    EXPECT_EQ(m.a, 40u);
    EXPECT_NEAR(pc.range_m[m.r], d, 1e-9);
    EXPECT_NEAR(pc.velocity_mps[m.d], v, 1e-9);
    EXPECT_NEAR(pc.angle_deg[m.a], az, 1e-9);
}

TEST(ProcessCube, OffGridTargetPeaksWithinOneBin) {
    RadarConfig cfg;
    const double d = 61.3, v = -7.7, az = -23.0;
    const std::vector<SceneObject> scene{object_at(d, az, v)};
    const PowerCube pc = process_cube(synthesize_frame(scene, cfg, 1), cfg);
    const Argmax m = argmax(pc);
    EXPECT_LE(std::abs(pc.range_m[m.r] - d), cfg.range_bin_m());
    EXPECT_LE(std::abs(pc.velocity_mps[m.d] - v), cfg.velocity_bin_mps());
    EXPECT_LE(std::abs(0.5 * std::sin(deg2rad(pc.angle_deg[m.a])) - 0.5 * std::sin(deg2rad(az))),
              1.0 / 64.0);
}

TEST(ProcessCube, ShapeMismatchIsADataError) {
    RadarConfig cfg;
    const RadarCube cube(2, 3, 4);
    EXPECT_THROW(process_cube(cube, cfg), DataError);
}

// ---- CFAR --------------------------------------------------------------------

TEST(Cfar, ScaleMatchesClosedForm) {
    EXPECT_NEAR(cfar_scale(1e-3, 16), 16.0 * (std::pow(1e-3, -1.0 / 16.0) - 1.0), 1e-12);
}

TEST(Cfar, SingleImpulseIsTheOnlyDetection) {
    PowerCube pc = flat_cube(1, 1, 128, 1e-12);
    pc.at(0, 0, 60) = 1.0;
    DetectConfig cfg;
    const auto dets = cfar_detect(pc, cfg);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].range, 60u);
    EXPECT_EQ(dets[0].power, 1.0);
}

TEST(Cfar, ImpulseAtTheEdgesUsesOneSidedWindows) {
    for (std::size_t pos : {0u, 1u, 126u, 127u}) {
        PowerCube pc = flat_cube(1, 1, 128, 1e-12);
        pc.at(0, 0, pos) = 1.0;
        const auto dets = cfar_detect(pc, DetectConfig{});
        ASSERT_EQ(dets.size(), 1u) << pos;
        EXPECT_EQ(dets[0].range, pos);
    }
}

TEST(Cfar, EdgeCellThresholdUsesTheFarSide) {
    // Cell 0: guard cells 1..2, training cells 3..18 (2 * train cells).
    DetectConfig cfg;
    PowerCube pc = flat_cube(1, 1, 64, 1.0);
    const double alpha = cfar_scale(cfg.cfar_pfa, 16);
    pc.at(0, 0, 0) = alpha * 1.001;
    EXPECT_EQ(cfar_detect(pc, cfg).size(), 1u);
    pc.at(0, 0, 0) = alpha * 0.999;
    EXPECT_TRUE(cfar_detect(pc, cfg).empty());
}

TEST(Cfar, FlatPowerHasNoDetections) {
    EXPECT_TRUE(cfar_detect(flat_cube(4, 8, 64, 3.0), DetectConfig{}).empty());
}

TEST(Cfar, FalseAlarmRateOnExponentialNoise) {
    PowerCube pc(4, 256, 1024);
    std::mt19937_64 rng(2024);
    std::exponential_distribution<double> e(1.0);
    for (auto& v : pc.data()) v = e(rng);
    DetectConfig cfg;
    const double rate = double(cfar_detect(pc, cfg).size()) / double(pc.data().size());
    EXPECT_GE(rate, 0.5e-3);
    EXPECT_LE(rate, 2.0e-3);
}

TEST(Cfar, ScalingTheCubeLeavesDetectionsUnchanged) {
    PowerCube pc(2, 4, 256);
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> e(1.0);
    for (auto& v : pc.data()) v = e(rng);
    pc.at(1, 2, 100) = 80.0;
    PowerCube scaled = pc;
    for (auto& v : scaled.data()) v *= 37.5;
    DetectConfig cfg;
    cfg.cfar_pfa = 1e-2;
    const auto a = cfar_detect(pc, cfg), b = cfar_detect(scaled, cfg);
    ASSERT_EQ(a.size(), b.size());
    ASSERT_FALSE(a.empty());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].angle, b[i].angle);
        EXPECT_EQ(a[i].doppler, b[i].doppler);
        EXPECT_EQ(a[i].range, b[i].range);
    }
}

TEST(Cfar, WindowLargerThanAxisIsAConfigError) {
    DetectConfig cfg;
    cfg.cfar_train = 20;
    EXPECT_THROW(cfar_detect(flat_cube(1, 1, 40, 1.0), cfg), ConfigError);
}

TEST(Cfar, ConfigValidation) {
    DetectConfig cfg;
    cfg.cfar_pfa = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = DetectConfig{};
    cfg.cfar_train = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = DetectConfig{};
    cfg.dbscan_min_pts = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---- gates -------------------------------------------------------------------

TEST(Gates, DropWeakCellsAndAngleSidelobes) {
    PowerCube pc(8, 1, 4);
    // Angle line at range 0: main peak at a=3, weaker local peak at a=6.
    const double line[8] = {0.01, 0.1, 0.5, 1.0, 0.5, 0.02, 0.2, 0.01};
    for (std::size_t a = 0; a < 8; ++a) pc.at(a, 0, 0) = line[a];
    pc.at(0, 0, 2) = 1e-5;  // 50 dB down
    std::vector<CellDetection> dets;
    for (std::size_t a = 0; a < 8; ++a) dets.push_back({a, 0, 0, line[a]});
    dets.push_back({0, 0, 2, 1e-5});
    DetectConfig cfg;
    const auto kept = gate_detections(dets, pc, cfg);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].angle, 3u);

    cfg.angle_peak_db = 10.0;  // now the 7 dB secondary peak passes
    const auto kept2 = gate_detections(dets, pc, cfg);
    ASSERT_EQ(kept2.size(), 2u);
    EXPECT_EQ(kept2[1].angle, 6u);

    cfg.angle_peak_db = -1.0;
    cfg.dynamic_range_db = -1.0;
    EXPECT_EQ(gate_detections(dets, pc, cfg).size(), dets.size());
}

// ---- DBSCAN ------------------------------------------------------------------

TEST(Dbscan, TwoSeparatedGroups) {
    std::vector<Point3> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({double(i) * 0.5, 0.0, 0.0});
    for (int i = 0; i < 5; ++i) pts.push_back({30.0 + double(i) * 0.5, 0.0, 0.0});
    const auto labels = dbscan(pts, 3.0, 2);
    std::set<int> distinct(labels.begin(), labels.end());
    EXPECT_EQ(distinct.size(), 2u);
    EXPECT_EQ(labels[0], 0);
    EXPECT_EQ(labels[9], 1);
}

TEST(Dbscan, IsolatedPointIsNoise) {
    const std::vector<Point3> pts{{0.0, 0.0, 0.0}};
    EXPECT_EQ(dbscan(pts, 1.0, 2), std::vector<int>{kNoise});
    EXPECT_EQ(dbscan(pts, 1.0, 1), std::vector<int>{0});
    EXPECT_THROW(dbscan(pts, 0.0, 1), std::invalid_argument);
}

TEST(Dbscan, BoundaryDistanceCountsAsNeighbor) {
    const std::vector<Point3> pts{{0.0, 0.0, 0.0}, {3.0, 0.0, 0.0}};
    EXPECT_EQ(dbscan(pts, 3.0, 2), (std::vector<int>{0, 0}));
}

TEST(Dbscan, MatchesBruteForceReference) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> count(1, 60);
    std::uniform_real_distribution<double> coord(0.0, 20.0);
    std::uniform_real_distribution<double> eps_d(1.0, 4.0);
    std::uniform_int_distribution<int> minpts(1, 5);
    for (int inst = 0; inst < 100; ++inst) {
        std::vector<Point3> pts(std::size_t(count(rng)));
        for (auto& p : pts) p = {coord(rng), coord(rng), std::round(coord(rng))};
        const double eps = eps_d(rng);
        const std::size_t mp = std::size_t(minpts(rng));
        const auto got = dbscan(pts, eps, mp);
        const auto want = reference_dbscan(pts, eps, mp);
        EXPECT_TRUE(same_partition(got, want)) << "instance " << inst;
        // Valid partition: every cluster contains a core point.
        const int n_clusters = *std::max_element(got.begin(), got.end()) + 1;
        for (int c = 0; c < n_clusters; ++c)
            EXPECT_TRUE(std::count(got.begin(), got.end(), c) > 0);
    }
}

// ---- summarize / detect -----------------------------------------------------

TEST(Summarize, MeansAndOrdering) {
    PowerCube pc(2, 2, 4);
    pc.range_m = {48.0, 49.0, 50.0, 51.0};
    pc.velocity_mps = {3.0, 5.0};
    pc.angle_deg = {10.0, -20.0};
    const std::vector<CellDetection> dets{
        {0, 0, 1, 1.0}, {0, 0, 3, 2.0},   // cluster 0: ranges 49 and 51
        {1, 1, 0, 10.0}, {1, 1, 0, 5.0},  // cluster 1: same cell twice
        {0, 1, 2, 100.0},                 // noise
    };
    const std::vector<int> labels{0, 0, 1, 1, kNoise};
    const auto c = summarize_clusters(dets, labels, pc);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0].range, 48.0);
    EXPECT_EQ(c[0].angle, -20.0);
    EXPECT_EQ(c[0].velocity, 5.0);
    EXPECT_EQ(c[0].power, 15.0);
    EXPECT_EQ(c[0].n_points, 2u);
    EXPECT_EQ(c[1].range, 50.0);
    EXPECT_EQ(c[1].angle, 10.0);
    EXPECT_EQ(c[1].velocity, 3.0);
    EXPECT_THROW(summarize_clusters(dets, std::vector<int>{0}, pc), std::invalid_argument);
}

TEST(DetectObjects, ThreeObjectSceneWithinOneBin) {
    RadarConfig cfg;
    std::vector<SceneObject> scene{object_at(31.6, -18.4, 1.6), object_at(41.8, 16.7, 2.3),
                                   object_at(60.0, 1.9, -2.1)};
    scene[0].is_comm_user = true;
    const RadarCube cube = synthesize_frame(scene, cfg, 1);
    DetectConfig det;
    const auto cands = detect_objects(cube, cfg, det);
    ASSERT_EQ(cands.size(), 3u);
    const double du = 1.0 / double(det.process.angle_fft_size);
    for (const auto& o : scene) {
        const double d = o.range(), az = o.azimuth(), v = radial_velocity(o.position, o.velocity);
        const bool found = std::any_of(cands.begin(), cands.end(), [&](const Candidate& c) {
            return std::abs(c.range - d) <= cfg.range_bin_m() &&
                   std::abs(c.velocity - v) <= cfg.velocity_bin_mps() &&
                   std::abs(0.5 * std::sin(deg2rad(c.angle)) - 0.5 * std::sin(deg2rad(az))) <= du;
        });
        EXPECT_TRUE(found) << "object at " << d << " m, " << az << " deg, " << v << " m/s";
    }
    for (std::size_t k = 1; k < cands.size(); ++k) EXPECT_GE(cands[k - 1].power, cands[k].power);
}

TEST(DetectObjects, NearEndfireTargetYieldsOneCandidate) {
    // The main lobe of a target at -50 deg wraps past the angle-spectrum
    // edge; it must not come back as a ghost near +70 deg.
    RadarConfig cfg;
    const std::vector<SceneObject> scene{object_at(40.0, -50.0, 5.0)};
    const auto cands = detect_objects(synthesize_frame(scene, cfg, 1), cfg, DetectConfig{});
    ASSERT_EQ(cands.size(), 1u);
    EXPECT_NEAR(cands[0].angle, -50.0, 3.0);
}

TEST(DetectObjects, StaticReflectorIsCleanedAway) {
    RadarConfig cfg;
    cfg.n_chirps = 64;
    std::vector<SceneObject> scene{object_at(25.0, 0.0, 0.0, 50.0), object_at(40.0, 20.0, 6.0)};
    scene[1].is_comm_user = true;
    const auto cands = detect_objects(synthesize_frame(scene, cfg, 1), cfg, DetectConfig{});
    ASSERT_EQ(cands.size(), 1u);
    EXPECT_NEAR(cands[0].range, 40.0, cfg.range_bin_m());
    EXPECT_NEAR(cands[0].velocity, 6.0, cfg.velocity_bin_mps());
}
