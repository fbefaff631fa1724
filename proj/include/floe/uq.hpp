#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "floe/flow1.hpp"
#include "floe/net.hpp"
#include "floe/synthetic.hpp"
#include "floe/types.hpp"
#include "floe/variational.hpp"

namespace floe {

// Paired mean-SIC / uncertainty grids from one of the three UQ methods.
// variance is the population variance over samples (divide by S);
// uncertainty_pct = 100 * sqrt(variance), i.e. one standard deviation of the
// SIC fraction expressed in percentage points.
struct UncertaintyField {
    int side = 0;
    std::vector<double> mean;
    std::vector<double> variance;
    int samples = 0;
    UqMethod method = UqMethod::bbb;
    Sensor sensor = Sensor::sentinel1;
    uint64_t seed = 0;

    std::vector<double> uncertainty_pct() const {
        std::vector<double> u(variance.size());
        for (size_t i = 0; i < u.size(); ++i) u[i] = 100.0 * std::sqrt(variance[i]);
        return u;
    }

    void validate() const {
        const size_t n = static_cast<size_t>(side) * side;
        if (mean.size() != n || variance.size() != n) {
            throw ShapeError("uncertainty field: grid sizes do not match side");
        }
        for (size_t i = 0; i < n; ++i) {
            if (!(mean[i] >= 0.0 && mean[i] <= 1.0)) {
                throw NumericError("uncertainty field: mean outside [0,1]");
            }
            if (!(variance[i] >= 0.0)) throw NumericError("uncertainty field: negative variance");
        }
    }
};

// Per-pixel mean and population variance over equally-shaped SIC samples.
inline UncertaintyField predictive_moments(const std::vector<std::vector<double>>& samples,
                                           int side, UqMethod method, Sensor sensor,
                                           uint64_t seed) {
    if (samples.size() < 2) throw ConfigError("predictive_moments: need at least 2 samples");
    const size_t n = static_cast<size_t>(side) * side;
    for (const auto& s : samples) {
        if (s.size() != n) throw ShapeError("predictive_moments: sample shape mismatch");
    }
    UncertaintyField f;
    f.side = side;
    f.samples = static_cast<int>(samples.size());
    f.method = method;
    f.sensor = sensor;
    f.seed = seed;
    f.mean.resize(n);
    f.variance.resize(n);
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (size_t i = 0; i < n; ++i) {
        // shift by the first sample: identical samples give exactly zero
        // variance and the sums stay well-conditioned
        const double ref = samples[0][i];
        double dm = 0.0;
        for (const auto& s : samples) dm += s[i] - ref;
        dm *= inv;
        double v = 0.0;
        for (const auto& s : samples) {
            const double d = (s[i] - ref) - dm;
            v += d * d;
        }
        v *= inv;
        f.mean[i] = ref + dm;
        f.variance[i] = v < 0.0 ? 0.0 : v;
    }
    f.validate();
    return f;
}

namespace detail {

template <class S>
TensorT<S> chip_tensor(const SensorChip& chip, const NetConfig& cfg) {
    if (chip.side != cfg.chip_side) {
        throw ShapeError("predict: chip side " + std::to_string(chip.side) +
                         " does not match model side " + std::to_string(cfg.chip_side));
    }
    const size_t n = static_cast<size_t>(chip.side) * chip.side;
    std::vector<S> x(2 * n);
    for (size_t i = 0; i < n; ++i) x[i] = static_cast<S>(chip.ch0[i]);
    for (size_t i = 0; i < n; ++i) x[n + i] = static_cast<S>(chip.ch1[i]);
    return TensorT<S>::from({1, 2, chip.side, chip.side}, std::move(x));
}

template <class S>
std::vector<double> forward_grid(const ModelT<S>& model, const TensorT<S>& x,
                                 const ParamBankT<S>& bank, const DropoutSpec& drop = {}) {
    NetOutputT<S> out = net_forward(x, model.cfg, bank, drop);
    return out.sic.template to_vector<double>();
}

}  // namespace detail

// Bayes-by-backprop prediction: S independent posterior samples, one forward
// each (sample i uses seed + i), reduced to predictive moments.
template <class S>
UncertaintyField bbb_predict(const ModelT<S>& model, const SensorChip& chip, int n_samples,
                             uint64_t seed) {
    if (!model.bayesian()) {
        throw ConfigError("method mismatch: bbb prediction requires a bayesian checkpoint");
    }
    if (n_samples < 2) throw ConfigError("bbb_predict: need at least 2 samples");
    TensorT<S> x = detail::chip_tensor<S>(chip, model.cfg);
    std::vector<std::vector<double>> grids(static_cast<size_t>(n_samples));
    parallel_for(n_samples, int64_t{1} << 40, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            ParamBankT<S> bank = sample_weights(*model.posterior, seed + static_cast<uint64_t>(i));
            grids[static_cast<size_t>(i)] = detail::forward_grid(model, x, bank);
        }
    });
    return predictive_moments(grids, chip.side, UqMethod::bbb, model.sensor, seed);
}

// MC-dropout prediction: S forwards with dropout kept active at inference.
template <class S>
UncertaintyField mc_dropout_predict(const ModelT<S>& model, const SensorChip& chip, int n_samples,
                                    double p, uint64_t seed) {
    if (!(p > 0.0) || p >= 1.0) {
        throw ConfigError("degenerate method: mc-dropout requires dropout p in (0,1)");
    }
    if (!(model.dropout_p > 0.0)) {
        throw ConfigError("method mismatch: checkpoint was not trained with dropout");
    }
    if (n_samples < 2) throw ConfigError("mc_dropout_predict: need at least 2 samples");
    TensorT<S> x = detail::chip_tensor<S>(chip, model.cfg);
    const ParamBankT<S> bank = model.eval_bank();
    std::vector<std::vector<double>> grids(static_cast<size_t>(n_samples));
    parallel_for(n_samples, int64_t{1} << 40, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            DropoutSpec drop{p, DropoutMode::infer_stochastic, seed + static_cast<uint64_t>(i)};
            grids[static_cast<size_t>(i)] = detail::forward_grid(model, x, bank, drop);
        }
    });
    return predictive_moments(grids, chip.side, UqMethod::mc_dropout, model.sensor, seed);
}

// Epoch-ensemble prediction: one deterministic forward per snapshot (bayesian
// snapshots contribute their posterior means). The per-snapshot grids are
// reduced in a canonical (sorted) order so member order cannot matter.
template <class S>
UncertaintyField ensemble_predict(const std::vector<ModelT<S>>& snapshots, const SensorChip& chip) {
    if (snapshots.size() < 2) throw ConfigError("ensemble_predict: need at least 2 snapshots");
    std::vector<std::vector<double>> grids(snapshots.size());
    parallel_for(static_cast<int64_t>(snapshots.size()), int64_t{1} << 40, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const ModelT<S>& m = snapshots[static_cast<size_t>(i)];
            TensorT<S> x = detail::chip_tensor<S>(chip, m.cfg);
            grids[static_cast<size_t>(i)] = detail::forward_grid(m, x, m.eval_bank());
        }
    });
    std::sort(grids.begin(), grids.end());
    return predictive_moments(grids, chip.side, UqMethod::epoch_ensemble, snapshots[0].sensor, 0);
}

// ---------------------------------------------------------------------------
// FLOW1 persistence (kind 1: tensors "mean" and "variance")
// ---------------------------------------------------------------------------

inline Flow1File field_to_flow1(const UncertaintyField& f) {
    f.validate();
    Flow1File out;
    out.kind = Flow1File::kField;
    out.method = static_cast<uint8_t>(f.method);
    out.sensor = static_cast<uint8_t>(f.sensor);
    out.samples = static_cast<uint32_t>(f.samples);
    out.seed = f.seed;
    Flow1NamedTensor mean{"mean", {f.side, f.side}, std::vector<float>(f.mean.begin(), f.mean.end())};
    Flow1NamedTensor var{"variance", {f.side, f.side},
                         std::vector<float>(f.variance.begin(), f.variance.end())};
    out.tensors.push_back(std::move(mean));
    out.tensors.push_back(std::move(var));
    return out;
}

inline UncertaintyField field_from_flow1(const Flow1File& file) {
    if (file.kind != Flow1File::kField) throw FormatError("FLOW1: not an uncertainty field");
    const Flow1NamedTensor& mean = file.tensor("mean");
    const Flow1NamedTensor& var = file.tensor("variance");
    if (mean.dims.size() != 2 || mean.dims[0] != mean.dims[1] || var.dims != mean.dims) {
        throw FormatError("FLOW1: field grids must be square and equal-shaped");
    }
    UncertaintyField f;
    f.side = static_cast<int>(mean.dims[0]);
    f.samples = static_cast<int>(file.samples);
    f.method = static_cast<UqMethod>(file.method);
    f.sensor = static_cast<Sensor>(file.sensor);
    f.seed = file.seed;
    f.mean.assign(mean.data.begin(), mean.data.end());
    f.variance.assign(var.data.begin(), var.data.end());
    f.validate();
    return f;
}

inline void save_field(const std::string& path, const UncertaintyField& f) {
    flow1_write(path, field_to_flow1(f));
}

inline UncertaintyField load_field(const std::string& path) {
    return field_from_flow1(flow1_read(path));
}

}  // namespace floe
