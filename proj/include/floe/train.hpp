#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "floe/flow1.hpp"
#include "floe/net.hpp"
#include "floe/synthetic.hpp"
#include "floe/tensor.hpp"
#include "floe/variational.hpp"

namespace floe {

struct TrainConfig {
    int epochs = 20;
    int batch = 8;
    double lr = 1e-3;
    std::string optimizer = "adam";  // adam | sgd
    uint64_t seed = 1;
    double kl_scale = -1.0;   // negative resolves to 1/N_train; 0 disables the KL term
    double dropout_p = 0.0;
    double sigma_init = 0.05;  // posterior spread at initialization (bayesian mode)
    double w_open_water = 1.0;
    double w_miz = 0.5;
    double w_pack = 1.0;
    int snapshot_stride = 5;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
        if (optimizer != "adam" && optimizer != "sgd") {
            throw ConfigError("train: optimizer must be adam or sgd");
        }
        if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("train: dropout_p must be in [0,1)");
        if (!(w_open_water > 0.0) || !(w_miz > 0.0) || !(w_pack > 0.0)) {
            throw ConfigError("train: class weights must be positive");
        }
        if (snapshot_stride < 1) throw ConfigError("train: snapshot_stride must be >= 1");
        if (!(sigma_init > 0.0)) throw ConfigError("train: sigma_init must be positive");
    }

    double class_weight(ConfClass c) const {
        switch (c) {
            case ConfClass::open_water: return w_open_water;
            case ConfClass::miz: return w_miz;
            case ConfClass::pack: return w_pack;
        }
        throw ConfigError("train: unknown confidence class");
    }
};

// Per-pixel weight grid from confidence classes; the mapping is total and
// every weight is positive.
template <class S>
TensorT<S> geo_weight_mask(const std::vector<uint8_t>& cls, Shape shape, const TrainConfig& cfg) {
    if (static_cast<int64_t>(cls.size()) != shape_numel(shape)) {
        throw ShapeError("geo_weight_mask: class grid does not match shape");
    }
    std::vector<S> w(cls.size());
    for (size_t i = 0; i < cls.size(); ++i) {
        if (cls[i] > 2) throw ConfigError("geo_weight_mask: invalid class code");
        w[i] = static_cast<S>(cfg.class_weight(static_cast<ConfClass>(cls[i])));
    }
    return TensorT<S>::from(std::move(shape), std::move(w));
}

// Geographically weighted L1: mean over pixels and samples of gw * |pred - label|.
template <class S>
TensorT<S> l1_gw_loss(const TensorT<S>& pred, const TensorT<S>& label, const TensorT<S>& gw) {
    if (pred.shape() != label.shape() || pred.shape() != gw.shape()) {
        throw ShapeError("l1_gw_loss: shapes differ, pred " + shape_str(pred.shape()) + ", label " +
                         shape_str(label.shape()) + ", gw " + shape_str(gw.shape()));
    }
    for (int64_t i = 0; i < gw.numel(); ++i) {
        if (!(gw.at(i) > S(0))) throw ConfigError("l1_gw_loss: non-positive weight");
    }
    return mean_all(mul(gw, abs(sub(pred, label))));
}

// L = L1 + kl_scale * KL. With kl_scale = 1 this is the literal sum objective.
template <class S>
TensorT<S> total_loss(const TensorT<S>& l1, const TensorT<S>& kl, double kl_scale) {
    if (l1.numel() != 1 || kl.numel() != 1) throw ShapeError("total_loss: inputs must be scalars");
    return add(l1, scale(kl, kl_scale));
}

// ---------------------------------------------------------------------------
// Optimizers. Parameters are rebound to fresh leaf tensors on every step, so
// snapshots taken earlier keep their values untouched.
// ---------------------------------------------------------------------------

template <class S>
class AdamT {
public:
    explicit AdamT(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<TensorT<S>*>& params) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(static_cast<size_t>(params[i]->numel()), S(0));
                v_[i].assign(static_cast<size_t>(params[i]->numel()), S(0));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            TensorT<S>& p = *params[i];
            const std::vector<S>& g = p.grad();
            std::vector<S> next(p.vec());
            for (size_t j = 0; j < next.size(); ++j) {
                m_[i][j] = static_cast<S>(b1_ * m_[i][j] + (1.0 - b1_) * g[j]);
                v_[i][j] = static_cast<S>(b2_ * v_[i][j] + (1.0 - b2_) * g[j] * g[j]);
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                next[j] = static_cast<S>(next[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
            p = TensorT<S>::from(p.shape(), std::move(next), true);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

template <class S>
class SgdT {
public:
    explicit SgdT(double lr) : lr_(lr) {}

    void step(const std::vector<TensorT<S>*>& params) {
        for (TensorT<S>* pp : params) {
            TensorT<S>& p = *pp;
            const std::vector<S>& g = p.grad();
            std::vector<S> next(p.vec());
            for (size_t j = 0; j < next.size(); ++j) {
                next[j] = static_cast<S>(next[j] - lr_ * g[j]);
            }
            p = TensorT<S>::from(p.shape(), std::move(next), true);
        }
    }

private:
    double lr_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

// One supervised sample, already standardized.
struct TrainSample {
    std::vector<float> channels;  // C * side * side
    std::vector<float> weak;      // side * side
    std::vector<uint8_t> cls;     // side * side
};

inline TrainSample to_sample(const ChipRecord& rec) {
    TrainSample s;
    s.channels.reserve(rec.chip.ch0.size() * 2);
    s.channels.insert(s.channels.end(), rec.chip.ch0.begin(), rec.chip.ch0.end());
    s.channels.insert(s.channels.end(), rec.chip.ch1.begin(), rec.chip.ch1.end());
    s.weak = rec.weak;
    s.cls = rec.cls;
    return s;
}

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_l1 = 0.0;
    double train_kl = 0.0;
    double val_l1 = 0.0;
};

template <class S>
struct EpochSnapshotT {
    int epoch = 0;
    ModelT<S> model;
    double val_l1 = 0.0;
};

template <class S>
struct TrainResultT {
    ModelT<S> best;
    int best_epoch = 0;
    double best_val_l1 = 0.0;
    std::vector<EpochStats> curve;
    std::vector<EpochSnapshotT<S>> snapshots;
};

std::string loss_curve_csv(const std::vector<EpochStats>& curve);

namespace detail {

template <class S>
TensorT<S> batch_input(const std::vector<TrainSample>& samples, const std::vector<int>& idx,
                       int64_t lo, int64_t hi, const NetConfig& cfg) {
    const int64_t B = hi - lo;
    const int64_t per = static_cast<int64_t>(cfg.in_channels) * cfg.chip_side * cfg.chip_side;
    std::vector<S> x(static_cast<size_t>(B * per));
    for (int64_t b = 0; b < B; ++b) {
        const TrainSample& s = samples[static_cast<size_t>(idx[static_cast<size_t>(lo + b)])];
        for (int64_t i = 0; i < per; ++i) x[b * per + i] = static_cast<S>(s.channels[static_cast<size_t>(i)]);
    }
    return TensorT<S>::from({B, cfg.in_channels, cfg.chip_side, cfg.chip_side}, std::move(x));
}

template <class S>
TensorT<S> batch_labels(const std::vector<TrainSample>& samples, const std::vector<int>& idx,
                        int64_t lo, int64_t hi, const NetConfig& cfg) {
    const int64_t B = hi - lo;
    const int64_t per = static_cast<int64_t>(cfg.chip_side) * cfg.chip_side;
    std::vector<S> y(static_cast<size_t>(B * per));
    for (int64_t b = 0; b < B; ++b) {
        const TrainSample& s = samples[static_cast<size_t>(idx[static_cast<size_t>(lo + b)])];
        for (int64_t i = 0; i < per; ++i) y[b * per + i] = static_cast<S>(s.weak[static_cast<size_t>(i)]);
    }
    return TensorT<S>::from({B, 1, cfg.chip_side, cfg.chip_side}, std::move(y));
}

template <class S>
TensorT<S> batch_gw(const std::vector<TrainSample>& samples, const std::vector<int>& idx,
                    int64_t lo, int64_t hi, const NetConfig& cfg, const TrainConfig& tc) {
    const int64_t B = hi - lo;
    std::vector<uint8_t> cls;
    cls.reserve(static_cast<size_t>(B) * samples[0].cls.size());
    for (int64_t b = lo; b < hi; ++b) {
        const TrainSample& s = samples[static_cast<size_t>(idx[static_cast<size_t>(b)])];
        cls.insert(cls.end(), s.cls.begin(), s.cls.end());
    }
    return geo_weight_mask<S>(cls, {B, 1, cfg.chip_side, cfg.chip_side}, tc);
}

// Plain (unweighted) mean absolute error of point predictions on a sample set.
template <class S>
double eval_l1(const std::vector<TrainSample>& samples, const NetConfig& cfg,
               const ParamBankT<S>& bank) {
    if (samples.empty()) throw ConfigError("train: empty evaluation split");
    std::vector<int> idx(samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    double acc = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        TensorT<S> x = batch_input<S>(samples, idx, static_cast<int64_t>(i), static_cast<int64_t>(i) + 1, cfg);
        NetOutputT<S> out = net_forward(x, cfg, bank);
        const TrainSample& s = samples[i];
        for (int64_t j = 0; j < out.sic.numel(); ++j) {
            acc += std::fabs(static_cast<double>(out.sic.at(j)) - static_cast<double>(s.weak[static_cast<size_t>(j)]));
        }
        count += out.sic.numel();
    }
    return acc / static_cast<double>(count);
}

}  // namespace detail

// Trains a model of the requested mode on the given splits. Per epoch:
// seeded shuffle, minibatch forward (one posterior sample per batch in
// bayesian mode), backward, optimizer step; validation with mean weights and
// dropout off; best epoch by lowest validation L1; snapshots at the stride.
template <class S>
TrainResultT<S> train(const NetConfig& net_cfg, const TrainConfig& tc, TrainMode mode,
                      Sensor sensor, const std::vector<TrainSample>& train_set,
                      const std::vector<TrainSample>& val_set) {
    net_cfg.validate();
    tc.validate();
    if (train_set.empty()) throw ConfigError("train: empty training split");
    if (val_set.empty()) throw ConfigError("train: empty validation split");

    const double kl_scale = tc.kl_scale >= 0.0 ? tc.kl_scale
                                               : 1.0 / static_cast<double>(train_set.size());
    const double dropout_p = mode == TrainMode::dropout && tc.dropout_p == 0.0 ? 0.1 : tc.dropout_p;

    ParamBankT<S> params = init_params<S>(net_cfg, seed_stream(tc.seed, "init"));
    std::optional<BayesBankT<S>> posterior;
    if (mode == TrainMode::bayesian) {
        posterior = bayesianize(params, tc.sigma_init);
        params.items.clear();
    }

    std::vector<TensorT<S>*> leaves;
    if (posterior) {
        for (auto& [name, vp] : posterior->items) {
            leaves.push_back(&vp.mu);
            leaves.push_back(&vp.rho);
        }
    } else {
        for (auto& [name, t] : params.items) leaves.push_back(&t);
    }

    std::optional<AdamT<S>> adam;
    std::optional<SgdT<S>> sgd;
    if (tc.optimizer == "adam") {
        adam.emplace(tc.lr);
    } else {
        sgd.emplace(tc.lr);
    }

    auto current_model = [&]() {
        ModelT<S> m;
        m.cfg = net_cfg;
        m.mode = mode;
        m.sensor = sensor;
        m.dropout_p = dropout_p;
        if (posterior) {
            m.posterior = *posterior;  // tensor handles; rebinding keeps copies intact
        } else {
            m.params = params;
        }
        return m;
    };

    TrainResultT<S> result;
    result.best_val_l1 = std::numeric_limits<double>::infinity();

    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    const uint64_t shuffle_seed = seed_stream(tc.seed, "shuffle");
    const uint64_t eps_seed = seed_stream(tc.seed, "eps");
    const uint64_t drop_seed = seed_stream(tc.seed, "dropmask");

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        // seeded Fisher-Yates, independent of mode
        const uint64_t es = mix(shuffle_seed, static_cast<uint64_t>(epoch));
        for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i) {
            const int64_t j = static_cast<int64_t>(uniform01(es, static_cast<uint64_t>(i)) * static_cast<double>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        double l1_acc = 0.0, kl_acc = 0.0;
        int64_t item_acc = 0;
        int batch_index = 0;
        for (int64_t lo = 0; lo < static_cast<int64_t>(order.size()); lo += tc.batch, ++batch_index) {
            const int64_t hi = std::min<int64_t>(lo + tc.batch, static_cast<int64_t>(order.size()));
            try {
                TapeT<S> tape;
                TapeScopeT<S> scope(tape);
                TensorT<S> x = detail::batch_input<S>(train_set, order, lo, hi, net_cfg);
                TensorT<S> y = detail::batch_labels<S>(train_set, order, lo, hi, net_cfg);
                TensorT<S> gw = detail::batch_gw<S>(train_set, order, lo, hi, net_cfg, tc);

                ParamBankT<S> bank = posterior
                                         ? sample_weights(*posterior, mix(eps_seed, static_cast<uint64_t>(epoch),
                                                                          static_cast<uint64_t>(batch_index)))
                                         : params;
                DropoutSpec drop;
                if (dropout_p > 0.0) {
                    drop = {dropout_p, DropoutMode::train,
                            mix(drop_seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(batch_index))};
                }
                NetOutputT<S> out = net_forward(x, net_cfg, bank, drop);
                TensorT<S> l1 = l1_gw_loss(out.sic, y, gw);
                TensorT<S> loss = l1;
                double kl_val = 0.0;
                if (posterior) {
                    TensorT<S> kl = kl_total(*posterior);
                    kl_val = static_cast<double>(kl.item());
                    loss = total_loss(l1, kl, kl_scale);
                }
                l1_acc += static_cast<double>(l1.item()) * static_cast<double>(hi - lo);
                kl_acc += kl_val * static_cast<double>(hi - lo);
                item_acc += hi - lo;

                tape.backward(loss);
                if (adam) {
                    adam->step(leaves);
                } else {
                    sgd->step(leaves);
                }
                for (TensorT<S>* p : leaves) p->clear_grad();
            } catch (const NumericError& e) {
                throw NumericError("training aborted at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
        }

        const ParamBankT<S> eval_bank = posterior ? mean_weights(*posterior) : params;
        const double val_l1 = detail::eval_l1(val_set, net_cfg, eval_bank);

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_l1 = l1_acc / static_cast<double>(item_acc);
        stats.train_kl = posterior ? kl_acc / static_cast<double>(item_acc) : 0.0;
        stats.val_l1 = val_l1;
        result.curve.push_back(stats);

        if (val_l1 < result.best_val_l1) {
            result.best_val_l1 = val_l1;
            result.best_epoch = epoch;
            result.best = current_model();
        }
        if (epoch % tc.snapshot_stride == 0) {
            result.snapshots.push_back({epoch, current_model(), val_l1});
        }
    }
    return result;
}

}  // namespace floe
