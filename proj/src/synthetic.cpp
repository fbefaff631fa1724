#include "floe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "floe/binio.hpp"

namespace floe {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Smooth random field as a sum of low-frequency cosine modes, standardized to
// zero mean / unit variance over the grid.
std::vector<double> cosine_field(uint64_t seed, int side, int max_freq, int n_modes) {
    std::vector<double> f(static_cast<size_t>(side) * side, 0.0);
    for (int m = 0; m < n_modes; ++m) {
        const uint64_t ms = mix(seed, static_cast<uint64_t>(m) + 1);
        // frequencies in [-max_freq, max_freq], not both zero
        int fx = 0, fy = 0;
        for (uint64_t attempt = 0; fx == 0 && fy == 0; ++attempt) {
            fx = static_cast<int>(uniform01(ms, 2 * attempt) * (2 * max_freq + 1)) - max_freq;
            fy = static_cast<int>(uniform01(ms, 2 * attempt + 1) * (2 * max_freq + 1)) - max_freq;
        }
        const double phase = kTwoPi * uniform01(ms, 100);
        const double amp = 1.0 / (1.0 + fx * fx + fy * fy);
        for (int y = 0; y < side; ++y) {
            const double wy = kTwoPi * fy * y / side;
            for (int x = 0; x < side; ++x) {
                f[static_cast<size_t>(y) * side + x] +=
                    amp * std::cos(kTwoPi * fx * x / side + wy + phase);
            }
        }
    }
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    var /= static_cast<double>(f.size());
    const double rstd = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    for (double& v : f) v = (v - mean) * rstd;
    return f;
}

void standardize(std::vector<float>& g) {
    double mean = 0.0;
    for (float v : g) mean += v;
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (float v : g) var += (v - mean) * (v - mean);
    var /= static_cast<double>(g.size());
    const double rstd = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    for (float& v : g) v = static_cast<float>((v - mean) * rstd);
}

uint64_t sensor_salt(Sensor s) { return static_cast<uint64_t>(s) + 11; }

}  // namespace

std::vector<float> gaussian_blur(const std::vector<float>& grid, int side, double sigma) {
    if (sigma <= 0.0) return grid;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        ksum += kernel[static_cast<size_t>(i + radius)];
    }
    for (double& k : kernel) k /= ksum;

    auto reflect = [side](int i) {
        if (i < 0) i = -i - 1;
        if (i >= side) i = 2 * side - 1 - i;
        return i;
    };

    std::vector<double> tmp(grid.size()), out(grid.size());
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<size_t>(k + radius)] *
                       grid[static_cast<size_t>(y) * side + reflect(x + k)];
            }
            tmp[static_cast<size_t>(y) * side + x] = acc;
        }
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<size_t>(k + radius)] *
                       tmp[static_cast<size_t>(reflect(y + k)) * side + x];
            }
            out[static_cast<size_t>(y) * side + x] = acc;
        }
    std::vector<float> res(grid.size());
    for (size_t i = 0; i < res.size(); ++i) res[i] = static_cast<float>(out[i]);
    return res;
}

SceneTruth gen_truth(uint64_t seed, int side) {
    if (side < 16) throw ConfigError("gen_truth: side must be >= 16");
    const std::vector<double> field = cosine_field(seed_stream(seed, "truth"), side, 3, 8);

    SceneTruth t;
    t.side = side;
    t.seed = seed;
    t.sic.resize(field.size());
    t.cls.resize(field.size());
    // logistic squash; the gain sharpens transitions so all three classes
    // occupy meaningful area over many seeds
    const double gain = 2.5;
    for (size_t i = 0; i < field.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-gain * field[i]));
        t.sic[i] = static_cast<float>(s);
        t.cls[i] = static_cast<uint8_t>(s < 0.1 ? ConfClass::open_water
                                                : (s > 0.9 ? ConfClass::pack : ConfClass::miz));
    }
    return t;
}

SensorChip render_sar(const SceneTruth& truth, Sensor sensor, uint64_t seed,
                      const SensorSimConfig& cfg) {
    if (sensor != Sensor::sentinel1 && sensor != Sensor::rcm) {
        throw ConfigError("render_sar: sensor must be sentinel1 or rcm");
    }
    const int side = truth.side;
    const size_t n = truth.sic.size();
    const uint64_t s = mix(seed_stream(seed, "sar"), sensor_salt(sensor));

    SensorChip chip;
    chip.sensor = sensor;
    chip.side = side;
    chip.seed = seed;
    chip.ch0.resize(n);
    chip.ch1.resize(n);

    // horizontally elongated streak texture, shared by both polarizations
    std::vector<double> streaks(n, 0.0);
    if (cfg.enable_streaks) {
        const uint64_t ws = mix(s, 7);
        for (int m = 0; m < 4; ++m) {
            const uint64_t ms = mix(ws, static_cast<uint64_t>(m));
            const double fx = 3.0 + uniform01(ms, 0) * 5.0;  // fast across-track variation
            const double fy = uniform01(ms, 1) * 1.5;        // slow along-track variation
            const double phase = kTwoPi * uniform01(ms, 2);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    streaks[static_cast<size_t>(y) * side + x] +=
                        0.5 * std::cos(kTwoPi * (fx * x + fy * y) / side + phase);
                }
        }
    }

    for (int y = 0; y < side; ++y) {
        const double band = sensor == Sensor::rcm
                                ? cfg.rcm_band_amp * std::sin(kTwoPi * y / cfg.rcm_band_period)
                                : 0.0;
        for (int x = 0; x < side; ++x) {
            const size_t i = static_cast<size_t>(y) * side + x;
            const double sic = truth.sic[i];
            double hh = cfg.sar_water_hh + (cfg.sar_ice_hh - cfg.sar_water_hh) * sic;
            double hv = cfg.sar_water_hv + (cfg.sar_ice_hv - cfg.sar_water_hv) * sic;
            if (cfg.enable_speckle) {
                hh *= gamma_speckle(mix(s, 1), i, cfg.speckle_looks);
                hv *= gamma_speckle(mix(s, 2), i, cfg.speckle_looks);
            }
            if (cfg.enable_streaks) {
                const double open_water = 1.0 - sic;
                hh += cfg.wind_streak_amp * open_water * streaks[i];
                hv += 0.25 * cfg.wind_streak_amp * open_water * streaks[i];
            }
            if (sensor == Sensor::rcm) {
                const double ramp =
                    1.0 + cfg.rcm_ramp_amp * (static_cast<double>(x) / (side - 1) - 0.5);
                hh = hh * ramp + band;
                hv = hv * ramp + band;
            }
            chip.ch0[i] = static_cast<float>(hh);
            chip.ch1[i] = static_cast<float>(hv);
        }
    }
    standardize(chip.ch0);
    standardize(chip.ch1);
    return chip;
}

SensorChip render_pm(const SceneTruth& truth, uint64_t seed, const SensorSimConfig& cfg) {
    const int side = truth.side;
    const size_t n = truth.sic.size();
    const uint64_t s = mix(seed_stream(seed, "pm"), sensor_salt(Sensor::amsr2));

    std::vector<float> h(n), v(n);
    for (size_t i = 0; i < n; ++i) {
        const double sic = truth.sic[i];
        h[i] = static_cast<float>(cfg.pm_water_h + (cfg.pm_ice_h - cfg.pm_water_h) * sic);
        v[i] = static_cast<float>(cfg.pm_water_v + (cfg.pm_ice_v - cfg.pm_water_v) * sic);
    }
    if (cfg.enable_pm_blur) {
        h = gaussian_blur(h, side, cfg.pm_blur_sigma);
        v = gaussian_blur(v, side, cfg.pm_blur_sigma);
    }
    if (cfg.enable_clouds) {
        for (int c = 0; c < cfg.pm_cloud_count; ++c) {
            const uint64_t cs = mix(s, static_cast<uint64_t>(c) + 31);
            const double cx = uniform01(cs, 0) * side;
            const double cy = uniform01(cs, 1) * side;
            const double sigma = side * (0.06 + 0.10 * uniform01(cs, 2));
            const double amp = cfg.pm_cloud_amp * (2.0 * uniform01(cs, 3) - 1.0);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    const double bump = amp * std::exp(-0.5 * d2 / (sigma * sigma));
                    h[static_cast<size_t>(y) * side + x] += static_cast<float>(bump);
                    v[static_cast<size_t>(y) * side + x] += static_cast<float>(0.8 * bump);
                }
        }
    }

    SensorChip chip;
    chip.sensor = Sensor::amsr2;
    chip.side = side;
    chip.seed = seed;
    chip.ch0 = std::move(h);
    chip.ch1 = std::move(v);
    standardize(chip.ch0);
    standardize(chip.ch1);
    return chip;
}

std::vector<float> weak_label(const SceneTruth& truth, uint64_t seed, const SensorSimConfig& cfg) {
    std::vector<float> weak = truth.sic;
    if (cfg.enable_weak_blur) weak = gaussian_blur(weak, truth.side, cfg.weak_blur_sigma);
    if (cfg.weak_noise_std > 0.0) {
        const std::vector<double> noise =
            cosine_field(seed_stream(seed, "weaknoise"), truth.side, 5, 8);
        for (size_t i = 0; i < weak.size(); ++i) {
            weak[i] = static_cast<float>(weak[i] + cfg.weak_noise_std * noise[i]);
        }
    }
    for (float& v : weak) v = std::clamp(v, 0.0f, 1.0f);
    return weak;
}

std::vector<ChipRecord> build_dataset(int n_scenes, uint64_t seed, int side,
                                      const SplitFractions& fractions, const SensorSimConfig& cfg) {
    if (n_scenes < 3) throw ConfigError("build_dataset: need at least 3 scenes");
    const double fsum = fractions.train + fractions.val + fractions.test;
    if (std::fabs(fsum - 1.0) > 1e-9) throw ConfigError("build_dataset: split fractions must sum to 1");

    // largest-remainder split sizes, then a seeded permutation assigns scenes
    const double raw[3] = {fractions.train * n_scenes, fractions.val * n_scenes,
                           fractions.test * n_scenes};
    int counts[3];
    int used = 0;
    double rema[3];
    for (int i = 0; i < 3; ++i) {
        counts[i] = static_cast<int>(raw[i]);
        rema[i] = raw[i] - counts[i];
        used += counts[i];
    }
    while (used < n_scenes) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (rema[i] > rema[best]) best = i;
        }
        ++counts[best];
        rema[best] = -1.0;
        ++used;
    }

    std::vector<int> order(static_cast<size_t>(n_scenes));
    std::iota(order.begin(), order.end(), 0);
    const uint64_t shuffle_seed = seed_stream(seed, "split");
    for (int i = n_scenes - 1; i > 0; --i) {
        const int j = static_cast<int>(uniform01(shuffle_seed, static_cast<uint64_t>(i)) * (i + 1));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    std::vector<Split> split_of(static_cast<size_t>(n_scenes));
    int pos = 0;
    for (int s = 0; s < 3; ++s) {
        for (int k = 0; k < counts[s]; ++k) split_of[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = static_cast<Split>(s);
    }

    std::vector<ChipRecord> records;
    records.reserve(static_cast<size_t>(n_scenes) * 3);
    for (int id = 0; id < n_scenes; ++id) {
        const uint64_t scene_seed = mix(seed, static_cast<uint64_t>(id) + 1);
        const SceneTruth truth = gen_truth(scene_seed, side);
        const std::vector<float> weak = weak_label(truth, scene_seed, cfg);
        for (Sensor sensor : {Sensor::sentinel1, Sensor::rcm, Sensor::amsr2}) {
            ChipRecord rec;
            rec.chip = sensor == Sensor::amsr2 ? render_pm(truth, scene_seed, cfg)
                                               : render_sar(truth, sensor, scene_seed, cfg);
            rec.weak = weak;
            rec.cls = truth.cls;
            rec.truth = truth.sic;
            rec.split = split_of[static_cast<size_t>(id)];
            rec.scene_id = id;
            rec.scene_seed = scene_seed;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// SICC1 container
// ---------------------------------------------------------------------------

void write_chip(const std::string& path, const ChipRecord& rec) {
    const size_t n = static_cast<size_t>(rec.chip.side) * rec.chip.side;
    if (rec.chip.ch0.size() != n || rec.chip.ch1.size() != n || rec.weak.size() != n ||
        rec.cls.size() != n || rec.truth.size() != n) {
        throw FormatError("SICC1: grids do not share the chip side");
    }
    ByteWriter w;
    w.bytes("SICC1", 5);
    w.u32(static_cast<uint32_t>(rec.chip.side));
    w.u8(static_cast<uint8_t>(rec.chip.sensor));
    w.u32(2);  // channel count
    w.u32(5);  // grid count
    w.u32(static_cast<uint32_t>(rec.scene_id));
    w.u64(rec.scene_seed);
    w.u8(static_cast<uint8_t>(rec.split));

    auto grid = [&](const char* name, const std::vector<float>& g) {
        w.str(name);
        w.f32_array(g);
    };
    grid("ch0", rec.chip.ch0);
    grid("ch1", rec.chip.ch1);
    grid("truth_sic", rec.truth);
    grid("weak_sic", rec.weak);
    std::vector<float> cls(rec.cls.size());
    for (size_t i = 0; i < cls.size(); ++i) cls[i] = static_cast<float>(rec.cls[i]);
    grid("class", cls);
    atomic_write_file(path, w.data());
}

ChipRecord read_chip(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    r.expect_magic("SICC1");
    ChipRecord rec;
    rec.chip.side = static_cast<int>(r.u32());
    if (rec.chip.side <= 0 || rec.chip.side > 1 << 14) {
        throw FormatError(path + ": implausible chip side");
    }
    rec.chip.sensor = static_cast<Sensor>(r.u8());
    const uint32_t channels = r.u32();
    const uint32_t grids = r.u32();
    rec.scene_id = static_cast<int>(r.u32());
    rec.scene_seed = r.u64();
    rec.split = static_cast<Split>(r.u8());
    rec.chip.seed = rec.scene_seed;
    if (channels != 2) throw FormatError(path + ": unsupported channel count");

    const size_t n = static_cast<size_t>(rec.chip.side) * rec.chip.side;
    for (uint32_t g = 0; g < grids; ++g) {
        const std::string name = r.str();
        if (static_cast<uint64_t>(n) * 4 > r.remaining()) {
            throw FormatError(path + ": truncated file");
        }
        std::vector<float> data = r.f32_array(n);
        if (name == "ch0") {
            rec.chip.ch0 = std::move(data);
        } else if (name == "ch1") {
            rec.chip.ch1 = std::move(data);
        } else if (name == "truth_sic") {
            rec.truth = std::move(data);
        } else if (name == "weak_sic") {
            rec.weak = std::move(data);
        } else if (name == "class") {
            rec.cls.resize(n);
            for (size_t i = 0; i < n; ++i) rec.cls[i] = static_cast<uint8_t>(data[i]);
        } else {
            throw FormatError(path + ": unknown grid " + name);
        }
    }
    r.expect_end();
    if (rec.chip.ch0.empty() || rec.chip.ch1.empty() || rec.truth.empty() || rec.weak.empty() ||
        rec.cls.empty()) {
        throw FormatError(path + ": missing grids");
    }
    return rec;
}

std::string manifest_csv(const std::vector<ManifestRow>& rows) {
    std::ostringstream os;
    os << "scene_id,split,seed,path\n";
    for (const auto& r : rows) {
        os << r.scene_id << "," << to_string(r.split) << "," << r.seed << "," << r.path << "\n";
    }
    return os.str();
}

std::vector<ManifestRow> parse_manifest_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "scene_id,split,seed,path") {
        throw FormatError("manifest: bad header");
    }
    std::vector<ManifestRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, split, seed, path;
        if (!std::getline(ls, id, ',') || !std::getline(ls, split, ',') ||
            !std::getline(ls, seed, ',') || !std::getline(ls, path)) {
            throw FormatError("manifest: bad row '" + line + "'");
        }
        ManifestRow row;
        row.scene_id = std::stoi(id);
        row.seed = std::stoull(seed);
        row.path = path;
        if (split == "train") {
            row.split = Split::train;
        } else if (split == "val") {
            row.split = Split::val;
        } else if (split == "test") {
            row.split = Split::test;
        } else {
            throw FormatError("manifest: unknown split '" + split + "'");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace floe
