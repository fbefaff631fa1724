#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "floe/binio.hpp"
#include "floe/net.hpp"
#include "floe/types.hpp"
#include "floe/variational.hpp"

namespace floe {

// FLOW1: one binary container for everything the pipeline persists.
// Layout (little-endian):
//   magic "FLOW1", u8 kind
//   kind 0 (model):  u8 mode, u8 sensor, f32 dropout_p,
//                    u32 in_channels, chip_side, token_grid, patch_side,
//                    u32 hidden, heads, repeats, u8 residual, u8 layer_norm
//   kind 1 (field):  u8 method, u8 sensor, u32 samples, u64 seed
//   kind 2 (mosaic): u8 method
//   then: u32 n_tensors, each { str name, u32 rank, u32 dims[rank], f32 data[] }
// Payload floats are 32-bit regardless of the in-memory scalar type.

struct Flow1NamedTensor {
    std::string name;
    std::vector<int64_t> dims;
    std::vector<float> data;
};

struct Flow1File {
    static constexpr uint8_t kModel = 0;
    static constexpr uint8_t kField = 1;
    static constexpr uint8_t kMosaic = 2;

    uint8_t kind = kModel;

    // kind 0
    uint8_t mode = 0;
    uint8_t sensor = 0;
    float dropout_p = 0.0f;
    uint32_t in_channels = 0, chip_side = 0, token_grid = 0, patch_side = 0;
    uint32_t hidden = 0, heads = 0, repeats = 0;
    uint8_t residual = 1, layer_norm = 1;

    // kind 1 / 2
    uint8_t method = 0;
    uint32_t samples = 0;
    uint64_t seed = 0;

    std::vector<Flow1NamedTensor> tensors;

    const Flow1NamedTensor& tensor(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return t;
        }
        throw FormatError("FLOW1: missing tensor " + name);
    }

    bool has_tensor(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return true;
        }
        return false;
    }
};

std::vector<uint8_t> flow1_encode(const Flow1File& f);
Flow1File flow1_decode(const std::vector<uint8_t>& bytes, const std::string& what);

void flow1_write(const std::string& path, const Flow1File& f);
Flow1File flow1_read(const std::string& path);

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

// A trained (or initialized) model: geometry, provenance and weights.
// Bayesian models carry the posterior; the others carry plain weights.
template <class S>
struct ModelT {
    NetConfig cfg;
    TrainMode mode = TrainMode::deterministic;
    Sensor sensor = Sensor::sentinel1;
    double dropout_p = 0.0;
    ParamBankT<S> params;               // deterministic / dropout modes
    std::optional<BayesBankT<S>> posterior;  // bayesian mode

    bool bayesian() const { return posterior.has_value(); }

    // Weights used for point predictions: mu for bayesian checkpoints.
    ParamBankT<S> eval_bank() const {
        return bayesian() ? mean_weights(*posterior) : params;
    }
};

namespace detail {

template <class S>
Flow1NamedTensor to_named(const std::string& name, const TensorT<S>& t) {
    Flow1NamedTensor n;
    n.name = name;
    n.dims = t.shape();
    n.data = t.template to_vector<float>();
    return n;
}

template <class S>
TensorT<S> from_named(const Flow1NamedTensor& n, bool requires_grad) {
    std::vector<S> v(n.data.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<S>(n.data[i]);
    return TensorT<S>::from(n.dims, std::move(v), requires_grad);
}

}  // namespace detail

template <class S>
Flow1File model_to_flow1(const ModelT<S>& m) {
    Flow1File f;
    f.kind = Flow1File::kModel;
    f.mode = static_cast<uint8_t>(m.mode);
    f.sensor = static_cast<uint8_t>(m.sensor);
    f.dropout_p = static_cast<float>(m.dropout_p);
    f.in_channels = static_cast<uint32_t>(m.cfg.in_channels);
    f.chip_side = static_cast<uint32_t>(m.cfg.chip_side);
    f.token_grid = static_cast<uint32_t>(m.cfg.token_grid);
    f.patch_side = static_cast<uint32_t>(m.cfg.patch_side);
    f.hidden = static_cast<uint32_t>(m.cfg.hidden);
    f.heads = static_cast<uint32_t>(m.cfg.heads);
    f.repeats = static_cast<uint32_t>(m.cfg.repeats);
    f.residual = m.cfg.residual ? 1 : 0;
    f.layer_norm = m.cfg.layer_norm ? 1 : 0;
    if (m.bayesian()) {
        for (const auto& [name, vp] : m.posterior->items) {
            f.tensors.push_back(detail::to_named(name + ".mu", vp.mu));
            f.tensors.push_back(detail::to_named(name + ".rho", vp.rho));
        }
    } else {
        for (const auto& [name, t] : m.params.items) {
            f.tensors.push_back(detail::to_named(name, t));
        }
    }
    return f;
}

template <class S>
ModelT<S> model_from_flow1(const Flow1File& f) {
    if (f.kind != Flow1File::kModel) throw FormatError("FLOW1: not a model checkpoint");
    ModelT<S> m;
    m.mode = static_cast<TrainMode>(f.mode);
    m.sensor = static_cast<Sensor>(f.sensor);
    m.dropout_p = f.dropout_p;
    m.cfg.in_channels = static_cast<int>(f.in_channels);
    m.cfg.chip_side = static_cast<int>(f.chip_side);
    m.cfg.token_grid = static_cast<int>(f.token_grid);
    m.cfg.patch_side = static_cast<int>(f.patch_side);
    m.cfg.hidden = static_cast<int>(f.hidden);
    m.cfg.heads = static_cast<int>(f.heads);
    m.cfg.repeats = static_cast<int>(f.repeats);
    m.cfg.residual = f.residual != 0;
    m.cfg.layer_norm = f.layer_norm != 0;
    m.cfg.validate();

    if (m.mode == TrainMode::bayesian) {
        BayesBankT<S> bank;
        for (const auto& t : f.tensors) {
            if (t.name.size() > 3 && t.name.substr(t.name.size() - 3) == ".mu") {
                const std::string base = t.name.substr(0, t.name.size() - 3);
                VariationalParamT<S> vp;
                vp.mu = detail::from_named<S>(t, true);
                vp.rho = detail::from_named<S>(f.tensor(base + ".rho"), true);
                if (vp.mu.shape() != vp.rho.shape()) {
                    throw FormatError("FLOW1: mu/rho shape mismatch for " + base);
                }
                bank.items.emplace_back(base, std::move(vp));
            }
        }
        if (bank.items.empty()) throw FormatError("FLOW1: bayesian checkpoint has no mu/rho pairs");
        m.posterior = std::move(bank);
    } else {
        for (const auto& t : f.tensors) {
            m.params.add(t.name, detail::from_named<S>(t, true));
        }
    }
    return m;
}

template <class S>
void save_model(const std::string& path, const ModelT<S>& m) {
    flow1_write(path, model_to_flow1(m));
}

template <class S>
ModelT<S> load_model(const std::string& path) {
    return model_from_flow1<S>(flow1_read(path));
}

}  // namespace floe
