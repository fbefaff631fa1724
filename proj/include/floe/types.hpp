#pragma once

#include <cstdint>
#include <string>

#include "floe/common.hpp"

namespace floe {

enum class Sensor : uint8_t { sentinel1 = 0, rcm = 1, amsr2 = 2 };

enum class UqMethod : uint8_t { bbb = 0, mc_dropout = 1, epoch_ensemble = 2 };

enum class TrainMode : uint8_t { deterministic = 0, bayesian = 1, dropout = 2 };

// Per-pixel confidence class driving the geographic loss weights.
enum class ConfClass : uint8_t { open_water = 0, miz = 1, pack = 2 };

inline const char* to_string(Sensor s) {
    switch (s) {
        case Sensor::sentinel1: return "sentinel1";
        case Sensor::rcm: return "rcm";
        case Sensor::amsr2: return "amsr2";
    }
    return "?";
}

inline const char* to_string(UqMethod m) {
    switch (m) {
        case UqMethod::bbb: return "bbb";
        case UqMethod::mc_dropout: return "mc-dropout";
        case UqMethod::epoch_ensemble: return "epoch-ensemble";
    }
    return "?";
}

inline const char* to_string(TrainMode m) {
    switch (m) {
        case TrainMode::deterministic: return "deterministic";
        case TrainMode::bayesian: return "bayesian";
        case TrainMode::dropout: return "dropout";
    }
    return "?";
}

inline Sensor parse_sensor(const std::string& s) {
    if (s == "sentinel1") return Sensor::sentinel1;
    if (s == "rcm") return Sensor::rcm;
    if (s == "amsr2") return Sensor::amsr2;
    throw ConfigError("unknown sensor '" + s + "' (expected sentinel1|rcm|amsr2)");
}

inline UqMethod parse_method(const std::string& s) {
    if (s == "bbb") return UqMethod::bbb;
    if (s == "mc-dropout") return UqMethod::mc_dropout;
    if (s == "epoch-ensemble") return UqMethod::epoch_ensemble;
    throw ConfigError("unknown method '" + s + "' (expected bbb|mc-dropout|epoch-ensemble)");
}

inline TrainMode parse_mode(const std::string& s) {
    if (s == "deterministic") return TrainMode::deterministic;
    if (s == "bayesian") return TrainMode::bayesian;
    if (s == "dropout") return TrainMode::dropout;
    throw ConfigError("unknown mode '" + s + "' (expected deterministic|bayesian|dropout)");
}

}  // namespace floe
