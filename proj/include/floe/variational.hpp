#pragma once

#include <string>
#include <utility>
#include <vector>

#include "floe/net.hpp"
#include "floe/tensor.hpp"

namespace floe {

// Diagonal-Gaussian posterior over one parameter tensor. sigma = softplus(rho)
// keeps the spread positive without constraining the optimizer.
template <class S>
struct VariationalParamT {
    TensorT<S> mu;
    TensorT<S> rho;
};

template <class S>
struct BayesBankT {
    std::vector<std::pair<std::string, VariationalParamT<S>>> items;

    const VariationalParamT<S>& at(const std::string& name) const {
        for (const auto& [n, vp] : items) {
            if (n == name) return vp;
        }
        throw ConfigError("posterior: missing name " + name);
    }

    int64_t count() const {
        int64_t n = 0;
        for (const auto& [name, vp] : items) n += vp.mu.numel() + vp.rho.numel();
        return n;
    }
};

// rho giving softplus(rho) = sigma.
inline double rho_for_sigma(double sigma) { return std::log(std::expm1(sigma)); }

// Model precision of the Gaussian observation model. Stored and reported for
// completeness; the training objective is L1-based and does not consume it.
struct Precision {
    double tau = 1.0;

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("precision: tau must be positive");
    }
};

template <class S>
struct WeightSampleT {
    TensorT<S> epsilon;  // the standard-normal draw
    TensorT<S> w;        // mu + softplus(rho) * epsilon, differentiable in mu/rho
    uint64_t seed = 0;
};

// Reparameterized draw with eps a pure function of (seed, element index);
// identical seeds give bit-identical samples.
template <class S>
WeightSampleT<S> sample(const VariationalParamT<S>& vp, uint64_t seed) {
    std::vector<S> eps(static_cast<size_t>(vp.mu.numel()));
    for (size_t i = 0; i < eps.size(); ++i) {
        eps[i] = static_cast<S>(gaussian(seed, static_cast<uint64_t>(i)));
    }
    TensorT<S> noise = TensorT<S>::from(vp.mu.shape(), std::move(eps));
    return {noise, add(vp.mu, mul(softplus(vp.rho), noise)), seed};
}

// Closed-form KL(q || N(0,I)) for a diagonal Gaussian:
// sum over elements of 0.5 * (mu^2 + sigma^2 - ln sigma^2 - 1).
template <class S>
TensorT<S> kl_to_standard_normal(const VariationalParamT<S>& vp) {
    TensorT<S> sigma = softplus(vp.rho);
    TensorT<S> inner = sub(add(mul(vp.mu, vp.mu), mul(sigma, sigma)), scale(log(sigma), 2.0));
    return scale(sum_all(add_scalar(inner, -1.0)), 0.5);
}

// Replaces every projection weight and bias with a variational parameter:
// mu keeps the deterministic initialization, rho starts at softplus^-1(sigma).
template <class S>
BayesBankT<S> bayesianize(const ParamBankT<S>& det, double sigma_init = 0.05) {
    if (!(sigma_init > 0.0)) throw ConfigError("bayesianize: sigma_init must be positive");
    const S rho0 = static_cast<S>(rho_for_sigma(sigma_init));
    BayesBankT<S> bank;
    for (const auto& [name, t] : det.items) {
        VariationalParamT<S> vp;
        vp.mu = TensorT<S>::from(t.shape(), t.vec(), true);
        vp.rho = TensorT<S>::full(t.shape(), rho0, true);
        bank.items.emplace_back(name, std::move(vp));
    }
    return bank;
}

// One shared eps draw per parameter tensor per forward pass; every use of a
// weight within the pass sees the same sample.
template <class S>
ParamBankT<S> sample_weights(const BayesBankT<S>& bank, uint64_t seed) {
    ParamBankT<S> out;
    uint64_t k = 0;
    for (const auto& [name, vp] : bank.items) {
        out.add(name, sample(vp, mix(seed, ++k)).w);
    }
    return out;
}

// Posterior means as a plain weight bank (validation / ensemble members).
template <class S>
ParamBankT<S> mean_weights(const BayesBankT<S>& bank) {
    ParamBankT<S> out;
    for (const auto& [name, vp] : bank.items) out.add(name, vp.mu);
    return out;
}

// Total KL over every variational parameter.
template <class S>
TensorT<S> kl_total(const BayesBankT<S>& bank) {
    TensorT<S> acc;
    for (const auto& [name, vp] : bank.items) {
        TensorT<S> term = kl_to_standard_normal(vp);
        acc = acc.defined() ? add(acc, term) : term;
    }
    if (!acc.defined()) throw ConfigError("kl_total: empty posterior");
    return acc;
}

}  // namespace floe
