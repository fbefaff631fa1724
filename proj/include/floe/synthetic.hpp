#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "floe/types.hpp"

namespace floe {

// One synthetic scene: smooth SIC field in [0,1] plus per-pixel confidence
// class. Classes follow the fixed thresholds sic < 0.1 (open water) and
// sic > 0.9 (ice pack); everything between is marginal ice zone.
struct SceneTruth {
    int side = 0;
    uint64_t seed = 0;
    std::vector<float> sic;      // side*side, row-major
    std::vector<uint8_t> cls;    // ConfClass codes
};

// All sensor-model constants in one place. The forward models are stand-ins
// tuned for plausible contrast, not radiometric realism.
struct SensorSimConfig {
    // SAR linear-intensity tie points (water, ice) per polarization
    double sar_water_hh = 0.030, sar_ice_hh = 0.110;
    double sar_water_hv = 0.004, sar_ice_hv = 0.040;
    int speckle_looks = 4;
    bool enable_speckle = true;

    // additive wind-streak texture over open water (HH-dominant)
    double wind_streak_amp = 0.012;
    bool enable_streaks = true;

    // RCM-only artifacts
    double rcm_band_period = 8.0;   // rows
    double rcm_band_amp = 0.012;    // additive intensity
    double rcm_ramp_amp = 0.30;     // relative horizontal gain ramp

    // AMSR2 brightness-temperature tie points (water, ice) per polarization
    double pm_water_h = 160.0, pm_ice_h = 235.0;
    double pm_water_v = 190.0, pm_ice_v = 250.0;
    double pm_blur_sigma = 2.5;     // coarse-resolution stand-in
    bool enable_pm_blur = true;
    int pm_cloud_count = 3;
    double pm_cloud_amp = 18.0;
    bool enable_clouds = true;

    // weak-label degradation
    double weak_blur_sigma = 2.0;
    bool enable_weak_blur = true;
    double weak_noise_std = 0.05;
};

// Two standardized channels of one sensor over one scene.
struct SensorChip {
    Sensor sensor = Sensor::sentinel1;
    int side = 0;
    uint64_t seed = 0;
    std::vector<float> ch0;  // HH / 89-GHz H
    std::vector<float> ch1;  // HV / 89-GHz V
};

enum class Split : uint8_t { train = 0, val = 1, test = 2 };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

// One training sample: sensor channels, weak-label supervision, confidence
// classes for the loss weights, and the ground truth kept for evaluation.
struct ChipRecord {
    SensorChip chip;
    std::vector<float> weak;     // weak-label SIC in [0,1]
    std::vector<uint8_t> cls;    // ConfClass codes
    std::vector<float> truth;    // ground-truth SIC
    Split split = Split::train;
    int scene_id = 0;
    uint64_t scene_seed = 0;
};

struct SplitFractions {
    double train = 0.7, val = 0.1, test = 0.2;
};

SceneTruth gen_truth(uint64_t seed, int side);

SensorChip render_sar(const SceneTruth& truth, Sensor sensor, uint64_t seed,
                      const SensorSimConfig& cfg = {});

SensorChip render_pm(const SceneTruth& truth, uint64_t seed, const SensorSimConfig& cfg = {});

std::vector<float> weak_label(const SceneTruth& truth, uint64_t seed,
                              const SensorSimConfig& cfg = {});

// n_scenes scenes, three sensor chips each, deterministic split assignment
// with exact largest-remainder split sizes. No scene spans two splits.
std::vector<ChipRecord> build_dataset(int n_scenes, uint64_t seed, int side,
                                      const SplitFractions& fractions = {},
                                      const SensorSimConfig& cfg = {});

// SICC1 chip container.
void write_chip(const std::string& path, const ChipRecord& rec);
ChipRecord read_chip(const std::string& path);

// Dataset manifest: CSV "scene_id,split,seed,path", one row per chip file.
struct ManifestRow {
    int scene_id;
    Split split;
    uint64_t seed;
    std::string path;
};

std::string manifest_csv(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest_csv(const std::string& text);

// Convenience: separable Gaussian blur with reflected edges (exposed for the
// generator audits).
std::vector<float> gaussian_blur(const std::vector<float>& grid, int side, double sigma);

}  // namespace floe
