// floeformer: synthetic-Arctic sea-ice-concentration pipeline.
// Subcommands: gen-data, train, predict, fuse, evaluate, report.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "floe/flow1.hpp"
#include "floe/fusion.hpp"
#include "floe/synthetic.hpp"
#include "floe/train.hpp"
#include "floe/uq.hpp"

namespace fs = std::filesystem;
using namespace floe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string five(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", id);
    return buf;
}

// key=value manifest beside every artifact directory; reusable as --config
// for the same subcommand (extra keys are tolerated).
struct Manifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> entries;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void set(const std::string& k, const std::string& v) { entries.emplace_back(k, v); }
    void set(const std::string& k, int64_t v) { set(k, std::to_string(v)); }
    void set(const std::string& k, uint64_t v) { set(k, std::to_string(v)); }
    void set(const std::string& k, double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        set(k, std::string(buf));
    }

    void write(const std::string& out_dir) const {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream os;
        os << "command=" << command << "\n";
        os << "version=" << kVersion << "\n";
        for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.3f", wall);
        os << "wall_clock_s=" << buf << "\n";
        atomic_write_file((fs::path(out_dir) / "run_manifest.txt").string(), os.str());
    }
};

void require_dir(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw IoError(std::string(what) + " path does not exist: " + path);
    if (!fs::is_directory(path)) throw IoError(std::string(what) + " is not a directory: " + path);
}

// Expands "--config FILE" into --key=value tokens injected right after the
// subcommand, so explicit flags (parsed take-last) win on conflict. Keys the
// subcommand does not know are ignored; that lets a run_manifest.txt be fed
// back as a config file.
std::vector<std::string> expand_config_args(const CLI::App& app, int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    size_t sub_pos = args.size();
    const CLI::App* sub = nullptr;
    for (size_t i = 0; i < args.size() && !sub; ++i) {
        for (const CLI::App* c : app.get_subcommands(nullptr)) {
            if (c->get_name() == args[i]) {
                sub_pos = i;
                sub = c;
                break;
            }
        }
    }
    if (!sub) return args;

    std::string config_path;
    for (size_t i = sub_pos + 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) return args;

    std::set<std::string> known;
    for (const CLI::Option* o : sub->get_options()) {
        for (const std::string& n : o->get_lnames()) known.insert(n);
    }

    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config file " + config_path);
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
        const size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const size_t eq = line.find('=', start);
        if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + line + "'");
        std::string key = line.substr(start, eq - start);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        if (!known.count(key)) continue;  // tolerated (manifest extras etc.)
        injected.push_back("--" + key + "=" + value);
    }

    std::vector<std::string> out(args.begin(), args.begin() + static_cast<long>(sub_pos) + 1);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + static_cast<long>(sub_pos) + 1, args.end());
    return out;
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenArgs {
    int scenes = 100;
    int side = 64;
    uint64_t seed = 1;
    std::string out;
    double train_frac = 0.7, val_frac = 0.1, test_frac = 0.2;
};

int run_gen(const GenArgs& a) {
    Manifest man;
    man.command = "gen-data";
    man.set("scenes", static_cast<int64_t>(a.scenes));
    man.set("side", static_cast<int64_t>(a.side));
    man.set("seed", a.seed);
    man.set("train-frac", a.train_frac);
    man.set("val-frac", a.val_frac);
    man.set("test-frac", a.test_frac);
    man.set("out", a.out);

    SplitFractions fr{a.train_frac, a.val_frac, a.test_frac};
    auto records = build_dataset(a.scenes, a.seed, a.side, fr);
    fs::create_directories(fs::path(a.out) / "chips");
    std::vector<ManifestRow> rows;
    for (const auto& rec : records) {
        const std::string rel =
            "chips/chip_" + std::string(to_string(rec.chip.sensor)) + "_" + five(rec.scene_id) + ".sicc";
        write_chip((fs::path(a.out) / rel).string(), rec);
        rows.push_back({rec.scene_id, rec.split, rec.scene_seed, rel});
    }
    atomic_write_file((fs::path(a.out) / "dataset.csv").string(), manifest_csv(rows));
    man.write(a.out);
    std::cout << "wrote " << records.size() << " chips to " << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string sensor = "sentinel1";
    std::string mode = "bayesian";
    std::string out;
    NetConfig net;
    TrainConfig tc;
    bool f64 = false;
};

struct LoadedSplit {
    std::vector<TrainSample> train, val;
    std::vector<ChipRecord> test;
    int side = 0;
};

LoadedSplit load_split(const std::string& data_dir, Sensor sensor) {
    require_dir(data_dir, "--data");
    const std::string csv_path = (fs::path(data_dir) / "dataset.csv").string();
    const auto bytes = read_file_bytes(csv_path);
    const auto rows = parse_manifest_csv(std::string(bytes.begin(), bytes.end()));
    LoadedSplit out;
    for (const auto& row : rows) {
        const std::string chip_path = (fs::path(data_dir) / row.path).string();
        auto rec = read_chip(chip_path);
        if (rec.chip.sensor != sensor) continue;
        out.side = rec.chip.side;
        if (row.split == Split::train) {
            out.train.push_back(to_sample(rec));
        } else if (row.split == Split::val) {
            out.val.push_back(to_sample(rec));
        } else {
            out.test.push_back(std::move(rec));
        }
    }
    if (out.train.empty()) throw ConfigError("train: no training chips for sensor in " + data_dir);
    return out;
}

template <class S>
int run_train_typed(const TrainArgs& a, Manifest& man) {
    const Sensor sensor = parse_sensor(a.sensor);
    const TrainMode mode = parse_mode(a.mode);
    LoadedSplit split = load_split(a.data, sensor);

    NetConfig net = a.net;
    net.chip_side = split.side;
    net.validate();

    auto result = train<S>(net, a.tc, mode, sensor, split.train, split.val);

    fs::create_directories(a.out);
    save_model((fs::path(a.out) / "best.bin").string(), result.best);
    for (const auto& snap : result.snapshots) {
        save_model((fs::path(a.out) / ("snap_" + std::to_string(snap.epoch) + ".bin")).string(),
                   snap.model);
    }
    atomic_write_file((fs::path(a.out) / "loss.csv").string(), loss_curve_csv(result.curve));
    man.set("best-epoch", static_cast<int64_t>(result.best_epoch));
    man.set("best-val-l1", result.best_val_l1);
    man.write(a.out);
    std::cout << "best epoch " << result.best_epoch << " (val L1 " << result.best_val_l1 << "), "
              << result.snapshots.size() << " snapshots -> " << a.out << "\n";
    return kExitOk;
}

int run_train(const TrainArgs& a) {
    Manifest man;
    man.command = "train";
    man.set("data", a.data);
    man.set("sensor", a.sensor);
    man.set("mode", a.mode);
    man.set("epochs", static_cast<int64_t>(a.tc.epochs));
    man.set("batch", static_cast<int64_t>(a.tc.batch));
    man.set("lr", a.tc.lr);
    man.set("optimizer", a.tc.optimizer);
    man.set("seed", a.tc.seed);
    man.set("kl-scale", a.tc.kl_scale);
    man.set("dropout-p", a.tc.dropout_p);
    man.set("sigma-init", a.tc.sigma_init);
    man.set("w-open-water", a.tc.w_open_water);
    man.set("w-miz", a.tc.w_miz);
    man.set("w-pack", a.tc.w_pack);
    man.set("snapshot-stride", static_cast<int64_t>(a.tc.snapshot_stride));
    man.set("token-grid", static_cast<int64_t>(a.net.token_grid));
    man.set("patch-side", static_cast<int64_t>(a.net.patch_side));
    man.set("hidden", static_cast<int64_t>(a.net.hidden));
    man.set("heads", static_cast<int64_t>(a.net.heads));
    man.set("repeats", static_cast<int64_t>(a.net.repeats));
    man.set("f64", a.f64 ? "1" : "0");
    man.set("out", a.out);
    return a.f64 ? run_train_typed<double>(a, man) : run_train_typed<float>(a, man);
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string model;
    std::string method = "bbb";
    int samples = 32;
    std::string chips;
    std::string split = "test";
    uint64_t seed = 1;
    double dropout_p = -1.0;  // negative: use the checkpoint's value
    std::string out;
    int workers = 0;
    bool f64 = false;
};

std::vector<ChipRecord> load_chips(const std::string& dir, const std::string& split_name,
                                   std::optional<Sensor> sensor) {
    if (split_name != "train" && split_name != "val" && split_name != "test" && split_name != "all") {
        throw ConfigError("--split must be train|val|test|all, got '" + split_name + "'");
    }
    require_dir(dir, "--chips");
    const auto bytes = read_file_bytes((fs::path(dir) / "dataset.csv").string());
    const auto rows = parse_manifest_csv(std::string(bytes.begin(), bytes.end()));
    std::vector<ChipRecord> out;
    for (const auto& row : rows) {
        if (split_name != "all" && std::string(to_string(row.split)) != split_name) continue;
        auto rec = read_chip((fs::path(dir) / row.path).string());
        if (sensor && rec.chip.sensor != *sensor) continue;
        out.push_back(std::move(rec));
    }
    return out;
}

template <class S>
int run_predict_typed(const PredictArgs& a, Manifest& man) {
    const UqMethod method = parse_method(a.method);

    std::vector<ModelT<S>> snapshots;
    ModelT<S> model;
    if (method == UqMethod::epoch_ensemble) {
        std::string dir = a.model;
        if (!fs::is_directory(dir)) throw IoError("--model must be a directory of snap_*.bin for epoch-ensemble");
        for (const auto& path : list_files(dir, ".bin")) {
            if (fs::path(path).filename().string().rfind("snap_", 0) == 0) {
                snapshots.push_back(load_model<S>(path));
            }
        }
        if (snapshots.size() < 2) {
            throw ConfigError("epoch-ensemble needs at least 2 snap_*.bin files in " + a.model);
        }
        model = snapshots.front();
    } else {
        std::string path = a.model;
        if (fs::is_directory(path)) path = (fs::path(path) / "best.bin").string();
        model = load_model<S>(path);
    }

    const auto chips = load_chips(a.chips, a.split, model.sensor);
    if (chips.empty()) throw ConfigError("predict: no matching chips (sensor " +
                                         std::string(to_string(model.sensor)) + ", split " + a.split + ")");
    const double p = a.dropout_p >= 0.0 ? a.dropout_p : model.dropout_p;

    // fail before touching the output directory
    if (method == UqMethod::bbb && !model.bayesian()) {
        throw ConfigError("method mismatch: bbb prediction requires a bayesian checkpoint");
    }
    if (method == UqMethod::mc_dropout) {
        if (!(model.dropout_p > 0.0)) {
            throw ConfigError("method mismatch: checkpoint was not trained with dropout");
        }
        if (!(p > 0.0) || p >= 1.0) {
            throw ConfigError("degenerate method: mc-dropout requires dropout p in (0,1)");
        }
    }

    fs::create_directories(a.out);
    parallel_for(static_cast<int64_t>(chips.size()), int64_t{1} << 40, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const ChipRecord& rec = chips[static_cast<size_t>(i)];
            const uint64_t chip_seed = mix(a.seed, static_cast<uint64_t>(rec.scene_id));
            UncertaintyField field;
            switch (method) {
                case UqMethod::bbb:
                    field = bbb_predict(model, rec.chip, a.samples, chip_seed);
                    break;
                case UqMethod::mc_dropout:
                    field = mc_dropout_predict(model, rec.chip, a.samples, p, chip_seed);
                    break;
                case UqMethod::epoch_ensemble:
                    field = ensemble_predict(snapshots, rec.chip);
                    break;
            }
            const std::string name = "field_" + std::string(to_string(method)) + "_" +
                                     to_string(model.sensor) + "_" + five(rec.scene_id) + ".uq";
            save_field((fs::path(a.out) / name).string(), field);
        }
    });
    man.set("chips-used", static_cast<int64_t>(chips.size()));
    man.write(a.out);
    std::cout << "predicted " << chips.size() << " chips (" << a.method << ") -> " << a.out << "\n";
    return kExitOk;
}

int run_predict(const PredictArgs& a) {
    Manifest man;
    man.command = "predict";
    man.set("model", a.model);
    man.set("method", a.method);
    man.set("samples", static_cast<int64_t>(a.samples));
    man.set("chips", a.chips);
    man.set("split", a.split);
    man.set("seed", a.seed);
    man.set("dropout-p", a.dropout_p);
    man.set("f64", a.f64 ? "1" : "0");
    man.set("out", a.out);
    if (a.workers > 0) set_worker_count(a.workers);
    return a.f64 ? run_predict_typed<double>(a, man) : run_predict_typed<float>(a, man);
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseArgs {
    std::string s1, rcm, amsr2;
    std::string out;
    std::string rule = "priority";
};

int run_fuse(const FuseArgs& a) {
    Manifest man;
    man.command = "fuse";
    man.set("s1", a.s1);
    man.set("rcm", a.rcm);
    man.set("amsr2", a.amsr2);
    man.set("rule", a.rule);
    man.set("out", a.out);

    const FuseRule rule = a.rule == "priority" ? FuseRule::priority
                          : a.rule == "lowest-uncertainty"
                              ? FuseRule::lowest_uncertainty
                              : throw ConfigError("fuse: rule must be priority or lowest-uncertainty");

    // collect fields per directory keyed by scene id (from the file name)
    auto index_dir = [](const std::string& dir) {
        require_dir(dir, "fuse input");
        std::map<int, std::string> by_scene;
        for (const auto& path : list_files(dir, ".uq")) {
            const std::string stem = fs::path(path).stem().string();
            const auto pos = stem.find_last_of('_');
            if (pos == std::string::npos) continue;
            by_scene[std::stoi(stem.substr(pos + 1))] = path;
        }
        return by_scene;
    };
    const auto s1 = index_dir(a.s1);
    const auto rcm = index_dir(a.rcm);
    const auto am = index_dir(a.amsr2);

    fs::create_directories(a.out);
    int fused = 0;
    for (const auto& [scene, path] : s1) {
        if (!rcm.count(scene) || !am.count(scene)) continue;
        std::vector<SensorLayer> layers;
        UqMethod method = UqMethod::bbb;
        for (const std::string& p : {path, rcm.at(scene), am.at(scene)}) {
            const UncertaintyField f = load_field(p);
            if (layers.empty()) method = f.method;  // tag from the top layer
            SensorLayer l;
            l.sensor = f.sensor;
            l.h = f.side;
            l.w = f.side;
            l.mean = f.mean;
            l.unc_pct = f.uncertainty_pct();
            l.mask.assign(f.mean.size(), 1);  // full coverage at desk scale
            layers.push_back(std::move(l));
        }
        const Mosaic m = mosaic(layers, rule);
        save_mosaic((fs::path(a.out) / ("mosaic_" + five(scene) + ".bin")).string(), m, method);
        ++fused;
    }
    if (fused == 0) throw ConfigError("fuse: no scene id present in all three input directories");
    man.set("mosaics", static_cast<int64_t>(fused));
    man.write(a.out);
    std::cout << "fused " << fused << " scenes -> " << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string out;
    int workers = 0;
};

int run_evaluate(const EvalArgs& a) {
    Manifest man;
    man.command = "evaluate";
    man.set("pred", a.pred);
    man.set("truth", a.truth);
    man.set("out", a.out);
    if (a.workers > 0) set_worker_count(a.workers);

    require_dir(a.pred, "--pred");
    require_dir(a.truth, "--truth");

    // pooled pixels per (method, sensor)
    struct Pool {
        std::vector<double> unc, truth, pred;
        int chips = 0;
    };
    std::map<std::pair<uint8_t, uint8_t>, Pool> pools;

    const auto field_paths = list_files(a.pred, ".uq");
    if (field_paths.empty()) throw ConfigError("evaluate: no .uq fields in " + a.pred);
    std::vector<UncertaintyField> fields(field_paths.size());
    std::vector<int> scene_ids(field_paths.size());
    parallel_for(static_cast<int64_t>(field_paths.size()), int64_t{1} << 40, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            fields[static_cast<size_t>(i)] = load_field(field_paths[static_cast<size_t>(i)]);
            const std::string stem = fs::path(field_paths[static_cast<size_t>(i)]).stem().string();
            scene_ids[static_cast<size_t>(i)] = std::stoi(stem.substr(stem.find_last_of('_') + 1));
        }
    });

    for (size_t i = 0; i < fields.size(); ++i) {
        const UncertaintyField& f = fields[i];
        const std::string chip_path =
            (fs::path(a.truth) / "chips" /
             ("chip_" + std::string(to_string(f.sensor)) + "_" + five(scene_ids[i]) + ".sicc"))
                .string();
        const ChipRecord rec = read_chip(chip_path);
        if (rec.chip.side != f.side) throw FormatError("evaluate: field/chip side mismatch for " + chip_path);
        Pool& pool = pools[{static_cast<uint8_t>(f.method), static_cast<uint8_t>(f.sensor)}];
        const auto upct = f.uncertainty_pct();
        pool.unc.insert(pool.unc.end(), upct.begin(), upct.end());
        pool.pred.insert(pool.pred.end(), f.mean.begin(), f.mean.end());
        for (float t : rec.truth) pool.truth.push_back(t);
        ++pool.chips;
    }

    std::vector<Table1Row> t1;
    std::vector<Table2Row> t2;
    for (const auto& [key, pool] : pools) {
        const auto method = static_cast<UqMethod>(key.first);
        const auto sensor = static_cast<Sensor>(key.second);
        for (const auto& bin : bin_uncertainty(pool.unc, pool.truth)) {
            t1.push_back({method, sensor, bin});
        }
        t2.push_back({sensor, method, accuracy(pool.pred, pool.truth), pool.chips});
    }
    fs::create_directories(a.out);
    atomic_write_file((fs::path(a.out) / "table1.csv").string(), table1_csv(t1));
    atomic_write_file((fs::path(a.out) / "table2.csv").string(), table2_csv(t2));
    man.set("groups", static_cast<int64_t>(pools.size()));
    man.write(a.out);
    std::cout << "evaluated " << fields.size() << " fields in " << pools.size() << " groups -> "
              << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string eval;
    std::string out;
};

int run_report(const ReportArgs& a) {
    Manifest man;
    man.command = "report";
    man.set("eval", a.eval);
    man.set("out", a.out);
    require_dir(a.eval, "--eval");
    fs::create_directories(a.out);

    int rendered = 0;
    for (const auto& path : list_files(a.eval, ".uq")) {
        const UncertaintyField f = load_field(path);
        const std::string stem = fs::path(path).stem().string();
        std::vector<double> mean_pct(f.mean.size());
        for (size_t i = 0; i < f.mean.size(); ++i) mean_pct[i] = 100.0 * f.mean[i];
        write_pgm_with_sidecar((fs::path(a.out) / (stem + "_mean.pgm")).string(), mean_pct, f.side, f.side);
        write_pgm_with_sidecar((fs::path(a.out) / (stem + "_unc.pgm")).string(), f.uncertainty_pct(),
                               f.side, f.side);
        ++rendered;
    }
    for (const auto& path : list_files(a.eval, ".bin")) {
        const std::string stem = fs::path(path).stem().string();
        if (stem.rfind("mosaic_", 0) != 0) continue;
        const Mosaic m = load_mosaic(path);
        std::vector<uint8_t> valid(m.mean.size());
        std::vector<double> mean_pct(m.mean.size());
        for (size_t i = 0; i < m.mean.size(); ++i) {
            valid[i] = m.provenance[i] != kNoProvenance;
            mean_pct[i] = valid[i] ? 100.0 * m.mean[i] : 0.0;
        }
        write_pgm_with_sidecar((fs::path(a.out) / (stem + "_mean.pgm")).string(), mean_pct, m.h, m.w, &valid);
        write_pgm_with_sidecar((fs::path(a.out) / (stem + "_unc.pgm")).string(), m.unc_pct, m.h, m.w, &valid);
        // provenance rendered on the same 0..254 scale: sensor code * 100
        std::vector<double> prov(m.provenance.size());
        for (size_t i = 0; i < prov.size(); ++i) {
            prov[i] = m.provenance[i] == kNoProvenance ? 0.0 : 50.0 * m.provenance[i];
        }
        write_pgm_with_sidecar((fs::path(a.out) / (stem + "_provenance.pgm")).string(), prov, m.h, m.w, &valid);
        ++rendered;
    }
    if (rendered == 0) throw ConfigError("report: nothing to render in " + a.eval);
    man.set("rendered", static_cast<int64_t>(rendered));
    man.write(a.out);
    std::cout << "rendered " << rendered << " artifacts -> " << a.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"floeformer: bayesian transformer pipeline for synthetic sea-ice concentration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic multi-sensor chip dataset");
    cmd_gen->add_option("--scenes", gen.scenes, "number of scenes")->capture_default_str();
    cmd_gen->add_option("--side", gen.side, "chip side in pixels")->capture_default_str();
    cmd_gen->add_option("--seed", gen.seed, "dataset seed")->capture_default_str();
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    cmd_gen->add_option("--train-frac", gen.train_frac, "training split fraction")->capture_default_str();
    cmd_gen->add_option("--val-frac", gen.val_frac, "validation split fraction")->capture_default_str();
    cmd_gen->add_option("--test-frac", gen.test_frac, "test split fraction")->capture_default_str();

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "train a model on one sensor");
    cmd_tr->add_option("--data", tr.data, "gen-data output directory")->required();
    cmd_tr->add_option("--sensor", tr.sensor, "sentinel1|rcm|amsr2")->capture_default_str();
    cmd_tr->add_option("--mode", tr.mode, "deterministic|bayesian|dropout")->capture_default_str();
    cmd_tr->add_option("--epochs", tr.tc.epochs, "training epochs")->capture_default_str();
    cmd_tr->add_option("--batch", tr.tc.batch, "minibatch size")->capture_default_str();
    cmd_tr->add_option("--lr", tr.tc.lr, "learning rate")->capture_default_str();
    cmd_tr->add_option("--optimizer", tr.tc.optimizer, "adam|sgd")->capture_default_str();
    cmd_tr->add_option("--seed", tr.tc.seed, "training seed")->capture_default_str();
    cmd_tr->add_option("--kl-scale", tr.tc.kl_scale, "KL weight; negative = 1/N_train, 1 = literal sum")
        ->capture_default_str();
    cmd_tr->add_option("--dropout-p", tr.tc.dropout_p, "dropout probability")->capture_default_str();
    cmd_tr->add_option("--sigma-init", tr.tc.sigma_init, "initial posterior spread")->capture_default_str();
    cmd_tr->add_option("--w-open-water", tr.tc.w_open_water, "loss weight: open water")->capture_default_str();
    cmd_tr->add_option("--w-miz", tr.tc.w_miz, "loss weight: marginal ice zone")->capture_default_str();
    cmd_tr->add_option("--w-pack", tr.tc.w_pack, "loss weight: ice pack")->capture_default_str();
    cmd_tr->add_option("--snapshot-stride", tr.tc.snapshot_stride, "epochs between snapshots")
        ->capture_default_str();
    cmd_tr->add_option("--token-grid", tr.net.token_grid, "tokens per chip side")->capture_default_str();
    cmd_tr->add_option("--patch-side", tr.net.patch_side, "pixels per patch side")->capture_default_str();
    cmd_tr->add_option("--hidden", tr.net.hidden, "feature width per patch")->capture_default_str();
    cmd_tr->add_option("--heads", tr.net.heads, "attention heads")->capture_default_str();
    cmd_tr->add_option("--repeats", tr.net.repeats, "global/local stage repeats")->capture_default_str();
    cmd_tr->add_flag("--no-residual", [&](int64_t) { tr.net.residual = false; }, "disable residual connections");
    cmd_tr->add_flag("--no-layer-norm", [&](int64_t) { tr.net.layer_norm = false; }, "disable layer norm");
    cmd_tr->add_flag("--f64", tr.f64, "train in 64-bit floats");
    cmd_tr->add_option("--out", tr.out, "output directory")->required();

    PredictArgs pr;
    auto* cmd_pr = app.add_subcommand("predict", "uncertainty-quantified prediction on chips");
    cmd_pr->add_option("--model", pr.model, "checkpoint file or train output directory")->required();
    cmd_pr->add_option("--method", pr.method, "bbb|mc-dropout|epoch-ensemble")->capture_default_str();
    cmd_pr->add_option("--samples", pr.samples, "Monte Carlo samples")->capture_default_str();
    cmd_pr->add_option("--chips", pr.chips, "gen-data output directory")->required();
    cmd_pr->add_option("--split", pr.split, "train|val|test|all")->capture_default_str();
    cmd_pr->add_option("--seed", pr.seed, "prediction seed")->capture_default_str();
    cmd_pr->add_option("--dropout-p", pr.dropout_p, "dropout rate override (default: checkpoint value)")
        ->capture_default_str();
    cmd_pr->add_option("--workers", pr.workers, "worker threads (default: cores / FLOEFORMER_THREADS)")
        ->capture_default_str();
    cmd_pr->add_flag("--f64", pr.f64, "run in 64-bit floats");
    cmd_pr->add_option("--out", pr.out, "output directory")->required();

    FuseArgs fu;
    auto* cmd_fu = app.add_subcommand("fuse", "decision-level mosaic of per-sensor fields");
    cmd_fu->add_option("--s1", fu.s1, "sentinel1 field directory")->required();
    cmd_fu->add_option("--rcm", fu.rcm, "rcm field directory")->required();
    cmd_fu->add_option("--amsr2", fu.amsr2, "amsr2 field directory")->required();
    cmd_fu->add_option("--rule", fu.rule, "priority|lowest-uncertainty")->capture_default_str();
    cmd_fu->add_option("--out", fu.out, "output directory")->required();

    EvalArgs ev;
    auto* cmd_ev = app.add_subcommand("evaluate", "per-class uncertainty table and accuracy metrics");
    cmd_ev->add_option("--pred", ev.pred, "directory of .uq fields")->required();
    cmd_ev->add_option("--truth", ev.truth, "gen-data output directory")->required();
    cmd_ev->add_option("--workers", ev.workers, "worker threads")->capture_default_str();
    cmd_ev->add_option("--out", ev.out, "output directory")->required();

    ReportArgs re;
    auto* cmd_re = app.add_subcommand("report", "graymap renderings of fields and mosaics");
    cmd_re->add_option("--eval", re.eval, "directory of .uq fields / mosaics")->required();
    cmd_re->add_option("--out", re.out, "output directory")->required();

    std::string config_path;
    for (CLI::App* c : {cmd_gen, cmd_tr, cmd_pr, cmd_fu, cmd_ev, cmd_re}) {
        c->add_option("--config", config_path, "key=value config file; explicit flags win");
        for (CLI::Option* o : c->get_options()) {
            if (o->get_expected_min() > 0) o->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
    }

    try {
        std::vector<std::string> args = expand_config_args(app, argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11 consumes reversed args
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_tr->parsed()) return run_train(tr);
        if (cmd_pr->parsed()) return run_predict(pr);
        if (cmd_fu->parsed()) return run_fuse(fu);
        if (cmd_ev->parsed()) return run_evaluate(ev);
        if (cmd_re->parsed()) return run_report(re);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
