// isac_ident: simulate datasets, synthesize and detect radar frames, fit and
// evaluate user-identification solvers, and emit plot data.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "isac/config.hpp"
#include "isac/dataset.hpp"
#include "isac/error.hpp"
#include "isac/identify.hpp"
#include "isac/radar_detect.hpp"
#include "isac/radar_frontend.hpp"
#include "isac/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace isac;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3 };

std::size_t thread_cap() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ISAC_IDENT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError(std::string("ISAC_IDENT_THREADS must be a positive integer, got '") +
                              env + "'");
        n = std::min<std::size_t>(n, std::size_t(v));
    }
    return n;
}

std::uint64_t fnv1a(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write " + tmp.string());
        os << text;
        if (!os.flush()) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    return os;
}

/// Tracks one command run. The manifest goes to disk before any result file
/// and is rewritten with output digests once the command finishes.
class Manifest {
public:
    Manifest(fs::path out_dir, std::string command, std::vector<std::string> argv,
             const RunConfig& cfg)
        : dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
        j_["tool"] = "isac_ident";
        j_["version"] = kVersion;
        j_["command"] = std::move(command);
        j_["argv"] = std::move(argv);
        j_["seed"] = cfg.seed;
        j_["config"] = config_to_json(cfg);
        j_["started_utc"] = utc_now();
        j_["status"] = "running";
        j_["outputs"] = json::array();
        fs::create_directories(dir_);
        flush();
    }

    const fs::path& dir() const { return dir_; }
    fs::path output(const std::string& rel) {
        outputs_.push_back(rel);
        return dir_ / rel;
    }
    void note(const std::string& key, json value) { j_[key] = std::move(value); }

    void finish() {
        json outs = json::array();
        for (const auto& rel : outputs_) {
            const fs::path p = dir_ / rel;
            outs.push_back({{"path", rel}, {"bytes", fs::file_size(p)}, {"fnv1a64", hex64(fnv1a(p))}});
        }
        j_["outputs"] = outs;
        j_["status"] = "complete";
        j_["wall_clock_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        flush();
    }

private:
    void flush() { write_atomic(dir_ / "manifest.json", j_.dump(2) + "\n"); }

    fs::path dir_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> outputs_;
    json j_;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    cfg.scenario.seed = cfg.seed;
    cfg.scenario.validate();
    return cfg;
}

std::vector<double> beam_angles(const RunConfig& cfg) {
    const auto& c = cfg.scenario.comm;
    return dft_codebook(c.n_antennas, c.n_beams, c.element_spacing).pointing_angles;
}

std::uint64_t split_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, stream::kSplit); }

/// A dataset argument is either a directory written by `simulate` (with
/// train.csv and test.csv) or a single sample file that is split here.
DatasetSplit load_split(const std::string& dataset, const RunConfig& cfg) {
    const fs::path p(dataset);
    if (fs::is_directory(p)) {
        DatasetSplit s{load_samples(p / "train.csv"), load_samples(p / "test.csv")};
        return s;
    }
    const auto all = load_samples(p);
    return split_by_sequence(all, 0.8, split_seed(cfg));
}

void check_labels(const DatasetSplit& s, std::size_t n_beams) {
    for (const auto* part : {&s.train, &s.test})
        for (const auto& x : *part) validate_sample(x, n_beams);
}

std::vector<std::string> selected_solvers(const std::string& name) {
    if (name == "all") return solver_names();
    std::vector<std::string> out;
    std::stringstream ss(name);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        make_solver(item, {0.0});  // validates the name
        out.push_back(item);
    }
    if (out.empty()) throw ConfigError("no solver selected");
    return out;
}

DnnHyper dnn_hyper(const RunConfig& cfg, std::size_t epochs) {
    DnnHyper h;
    h.seed = cfg.seed;
    h.epochs = epochs;
    return h;
}

// ---- commands ----------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& mode_name, double ratio,
                 const std::vector<std::string>& argv) {
    const RunConfig cfg = resolve_config(c);
    const GenerationMode mode = parse_mode(mode_name);
    Manifest m(c.out, "simulate", argv, cfg);
    m.note("mode", to_string(mode));

    const GeneratedDataset g = generate_dataset_with_truth(cfg.scenario, mode, thread_cap());
    if (g.samples.size() < 2) throw DataError("simulate: fewer than two samples generated");
    const DatasetSplit split = split_by_sequence(g.samples, ratio, split_seed(cfg));

    save_samples(m.output("samples.csv"), g.samples);
    save_samples(m.output("train.csv"), split.train);
    save_samples(m.output("test.csv"), split.test);
    m.finish();

    std::cout << "samples " << g.samples.size() << " sequences " << cfg.scenario.n_sequences
              << " train " << split.train.size() << " test " << split.test.size();
    if (mode == GenerationMode::full) std::cout << " dropped " << g.dropped;
    std::cout << "\n";
    return kOk;
}

int cmd_frame(const Common& c, std::size_t count, std::size_t sequence,
              const std::vector<std::string>& argv) {
    const RunConfig cfg = resolve_config(c);
    Manifest m(c.out, "frame", argv, cfg);
    const auto& radar = cfg.scenario.radar;

    std::vector<std::vector<SceneObject>> scenes;
    if (!cfg.objects.empty()) {
        // Explicit objects are taken as already in the radar frame.
        validate_scene(cfg.objects);
        scenes.push_back(cfg.objects);
    } else {
        for (std::size_t i = 0; i < count; ++i)
            scenes.push_back(radar_scene(scenario_scene(cfg.scenario, sequence, i), cfg.scenario));
    }
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const RadarCube cube =
            synthesize_frame(scenes[i], radar, derive_seed(cfg.seed, stream::kRadarNoise, i));
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06zu.rcub", i);
        write_cube(m.output(name), cube);
    }
    m.finish();
    std::cout << "frames " << scenes.size() << "\n";
    return kOk;
}

int cmd_detect(const Common& c, const std::string& cube_dir, const std::vector<std::string>& argv) {
    const RunConfig cfg = resolve_config(c);
    if (!fs::is_directory(cube_dir)) throw DataError("cube directory not found: " + cube_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cube_dir))
        if (e.is_regular_file() && e.path().extension() == ".rcub") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .rcub files in " + cube_dir);

    Manifest m(c.out, "detect", argv, cfg);
    std::vector<CandidateRecord> records(files.size());
    std::vector<std::exception_ptr> errors(files.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < files.size();) {
            try {
                const RadarCube cube = read_cube(files[i]);
                if (!cube.matches(cfg.scenario.radar))
                    throw DataError(files[i].string() + ": cube shape does not match radar config");
                records[i] = {i, detect_objects(cube, cfg.scenario.radar, cfg.scenario.detect)};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(thread_cap(), files.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    json index = json::array();
    for (std::size_t i = 0; i < files.size(); ++i)
        index.push_back({{"sample_id", i}, {"file", files[i].filename().string()}});
    m.note("cubes", index);
    auto os = open_out(m.output("candidates.csv"));
    write_candidates(os, records);
    os.close();
    m.finish();

    std::size_t total = 0;
    for (const auto& r : records) total += r.candidates.size();
    std::cout << "cubes " << files.size() << " candidates " << total << "\n";
    return kOk;
}

struct EvalRow {
    std::string solver;
    double train_acc = 0.0;
    double test_acc = 0.0;
    std::vector<std::size_t> predictions;
};

void write_eval(Manifest& m, const std::vector<EvalRow>& rows, const DatasetSplit& split) {
    {
        auto os = open_out(m.output("accuracy.csv"));
        os << "solver,train_accuracy,test_accuracy,n_train,n_test\n";
        for (const auto& r : rows)
            os << r.solver << ',' << format_double(r.train_acc) << ',' << format_double(r.test_acc)
               << ',' << split.train.size() << ',' << split.test.size() << '\n';
    }
    auto os = open_out(m.output("predictions.csv"));
    os << "solver,sample_id,sequence_id,K_t,b_star,predicted_k,label_k,correct\n";
    for (const auto& r : rows)
        for (std::size_t i = 0; i < split.test.size(); ++i) {
            const Sample& s = split.test[i];
            os << r.solver << ',' << s.sample_id << ',' << s.sequence_id << ','
               << s.candidates.size() << ',' << s.beam << ',' << r.predictions[i] << ','
               << s.label << ',' << (r.predictions[i] == s.label ? 1 : 0) << '\n';
        }
}

void print_table(const std::vector<EvalRow>& rows) {
    std::cout << "solver        train    test\n";
    for (const auto& r : rows) {
        char line[96];
        std::snprintf(line, sizeof line, "%-12s  %.4f   %.4f\n", r.solver.c_str(), r.train_acc,
                      r.test_acc);
        std::cout << line;
    }
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& solver,
              std::size_t epochs, const std::vector<std::string>& argv) {
    const RunConfig cfg = resolve_config(c);
    const auto names = selected_solvers(solver);
    const DatasetSplit split = load_split(dataset, cfg);
    check_labels(split, cfg.scenario.comm.n_beams);
    if (split.train.empty() || split.test.empty()) throw DataError("train or test split is empty");

    Manifest m(c.out, "train", argv, cfg);
    const fs::path model_dir = m.dir() / "models";
    fs::create_directories(model_dir);
    const auto angles = beam_angles(cfg);

    std::vector<EvalRow> rows;
    for (const auto& name : names) {
        auto s = make_solver(name, angles, dnn_hyper(cfg, epochs));
        s->fit(split.train);
        s->save(model_dir);
        m.output("models/" + name + ".json");
        if (name == "dnn") m.output("models/dnn.ckpt");
        rows.push_back({name, evaluate(*s, split.train), evaluate(*s, split.test),
                        predict_all(*s, split.test)});
    }
    write_eval(m, rows, split);
    m.finish();
    print_table(rows);
    return kOk;
}

int cmd_eval(const Common& c, const std::string& dataset, const std::string& models,
             const std::string& solver, const std::vector<std::string>& argv) {
    const RunConfig cfg = resolve_config(c);
    const auto names = selected_solvers(solver);
    const DatasetSplit split = load_split(dataset, cfg);
    check_labels(split, cfg.scenario.comm.n_beams);
    if (split.test.empty()) throw DataError("test split is empty");
    if (!fs::is_directory(models)) throw DataError("model directory not found: " + models);

    Manifest m(c.out, "eval", argv, cfg);
    const auto angles = beam_angles(cfg);
    std::vector<EvalRow> rows;
    for (const auto& name : names) {
        auto s = make_solver(name, angles);
        s->load(models);
        const double train_acc = split.train.empty() ? 0.0 : evaluate(*s, split.train);
        rows.push_back({name, train_acc, evaluate(*s, split.test), predict_all(*s, split.test)});
    }
    write_eval(m, rows, split);
    m.finish();
    print_table(rows);
    return kOk;
}

json read_params(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

int cmd_report(const Common& c, const std::string& dataset, const std::string& models,
               const std::vector<std::string>& argv) {
    const RunConfig cfg = resolve_config(c);
    const DatasetSplit split = load_split(dataset, cfg);
    check_labels(split, cfg.scenario.comm.n_beams);
    const auto angles = beam_angles(cfg);

    double offset = 0.0;
    LinearFit line;
    LookupTable table;
    if (models.empty()) {
        if (split.train.empty()) throw DataError("report: empty training split");
        offset = estimate_offset(split.train, angles);
        line = fit_linreg_angle(split.train, angles);
        table = fit_lookup(split.train, angles);
    } else {
        try {
            offset = read_params(fs::path(models) / "offset.json").at("offset_deg").get<double>();
            const json lj = read_params(fs::path(models) / "linreg-angle.json");
            line.intercept = lj.at("intercept").get<double>();
            line.slope = lj.at("slope").get<double>();
            table.angle = read_params(fs::path(models) / "lookup.json")
                              .at("angle_deg")
                              .get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw DataError(std::string("report: bad model parameters: ") + e.what());
        }
        if (table.angle.size() != angles.size())
            throw DataError("report: lookup table size does not match the codebook");
    }

    Manifest m(c.out, "report", argv, cfg);
    auto os = open_out(m.output("report.csv"));
    os << "sample_id,split,b_star,beam_angle_deg,target_radar_angle_deg,offset_fit_deg,"
          "linreg_fit_deg,lookup_fit_deg\n";
    std::size_t rows = 0;
    for (const auto& [part, name] : {std::pair{&split.train, "train"}, {&split.test, "test"}})
        for (const Sample& s : *part) {
            const double phi = angles[s.beam];
            os << s.sample_id << ',' << name << ',' << s.beam << ',' << format_double(phi) << ','
               << format_double(s.candidates[s.label].angle) << ','
               << format_double(phi + offset) << ',' << format_double(line(phi)) << ','
               << format_double(table.angle[s.beam]) << '\n';
            ++rows;
        }
    os.close();
    m.finish();
    std::cout << "rows " << rows << "\n";
    return kOk;
}

int run(std::vector<std::string> args);

int cmd_replay(const std::string& manifest_path, const std::string& out) {
    json j;
    try {
        std::ifstream is(manifest_path);
        if (!is) throw DataError("cannot read manifest " + manifest_path);
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw DataError(manifest_path + ": " + e.what());
    }
    std::vector<std::string> argv;
    std::string command;
    try {
        argv = j.at("argv").get<std::vector<std::string>>();
        command = j.at("command").get<std::string>();
        if (j.at("status").get<std::string>() != "complete")
            throw DataError(manifest_path + ": run did not complete");
    } catch (const json::exception& e) {
        throw DataError(manifest_path + ": " + e.what());
    }
    if (command == "replay") throw ConfigError("cannot replay a replay");

    const fs::path original = fs::path(manifest_path).parent_path();
    const fs::path target = out.empty() ? original / "replay" : fs::path(out);
    // Point --out at the replay directory; everything else is reused verbatim.
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i)
        if (argv[i] == "--out") {
            argv[i + 1] = target.string();
            replaced = true;
        }
    if (!replaced) throw DataError(manifest_path + ": recorded argv has no --out");

    const int rc = run(argv);
    if (rc != kOk) return rc;

    std::size_t mismatches = 0;
    for (const auto& o : j.at("outputs")) {
        const std::string rel = o.at("path").get<std::string>();
        const fs::path p = target / rel;
        const bool same = fs::exists(p) && hex64(fnv1a(p)) == o.at("fnv1a64").get<std::string>();
        if (!same) {
            std::cerr << "replay mismatch: " << rel << "\n";
            ++mismatches;
        }
    }
    if (mismatches) throw DataError("replay differs from the manifest in " +
                                    std::to_string(mismatches) + " output(s)");
    std::cout << "replay identical: " << j.at("outputs").size() << " output(s)\n";
    return kOk;
}

int run(std::vector<std::string> args) {
    CLI::App app{"Radar-aided communication user identification"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub, bool out_required = true) {
        sub->add_option("--config", common.config, "JSON config file");
        sub->add_option("--seed", common.seed, "Root seed (overrides the config)");
        auto* o = sub->add_option("--out", common.out, "Output directory");
        if (out_required) o->required();
    };

    std::string mode = "fast";
    double ratio = 0.8;
    auto* simulate = app.add_subcommand("simulate", "Generate a labeled dataset");
    add_common(simulate);
    simulate->add_option("--mode", mode, "fast | full")->check(CLI::IsMember({"fast", "full"}));
    simulate->add_option("--train-ratio", ratio, "Share of samples in the training split");

    std::size_t count = 1, sequence = 0;
    auto* frame = app.add_subcommand("frame", "Synthesize radar cubes (.rcub)");
    add_common(frame);
    frame->add_option("--count", count, "Frames to take from the scenario")
        ->check(CLI::PositiveNumber);
    frame->add_option("--sequence", sequence, "Scenario sequence to draw frames from");

    std::string cubes;
    auto* detect = app.add_subcommand("detect", "Detect candidate objects in stored cubes");
    add_common(detect);
    detect->add_option("--cubes", cubes, "Directory of .rcub files")->required();

    std::string dataset, solver = "all", models;
    std::size_t epochs = 100;
    auto* train = app.add_subcommand("train", "Fit solvers and evaluate them on the test split");
    add_common(train);
    train->add_option("--dataset", dataset, "simulate output directory or sample file")->required();
    train->add_option("--solver", solver, "Solver name, comma list or 'all'");
    train->add_option("--epochs", epochs, "Training epochs for the neural scorer")
        ->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Evaluate previously fitted solvers");
    add_common(eval);
    eval->add_option("--dataset", dataset, "simulate output directory or sample file")->required();
    eval->add_option("--models", models, "Directory of fitted solver files")->required();
    eval->add_option("--solver", solver, "Solver name, comma list or 'all'");

    auto* report = app.add_subcommand("report", "Emit beam-angle / radar-angle plot data");
    add_common(report);
    report->add_option("--dataset", dataset, "simulate output directory or sample file")->required();
    report->add_option("--models", models, "Fitted solver directory (refit when omitted)");

    std::string manifest;
    auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
    replay->add_option("--manifest", manifest, "manifest.json of a previous run")->required();
    replay->add_option("--out", common.out, "Replay directory (default: <run>/replay)");

    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    // The full argv goes into the manifest so replay can feed it back to run().
    if (*simulate) return cmd_simulate(common, mode, ratio, args);
    if (*frame) return cmd_frame(common, count, sequence, args);
    if (*detect) return cmd_detect(common, cubes, args);
    if (*train) return cmd_train(common, dataset, solver, epochs, args);
    if (*eval) return cmd_eval(common, dataset, models, solver, args);
    if (*report) return cmd_report(common, dataset, models, args);
    if (*replay) return cmd_replay(manifest, common.out);
    return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    try {
        return run(std::move(args));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
