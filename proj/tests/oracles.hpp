#pragma once

// Test-only reference implementations. Everything here is independent of the
// library's compute paths: plain loops, quadrature and finite differences.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "floe/tensor.hpp"

namespace oracle {

// Plain triple-loop matrix product.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int64_t m, int64_t k, int64_t n) {
    std::vector<double> c(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            for (int64_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
    return c;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    std::vector<double> e(x.size());
    double sum = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        e[i] = std::exp(x[i] - mx);
        sum += e[i];
    }
    for (double& v : e) v /= sum;
    return e;
}

// Bilinear interpolation, align-corners = false, replicated edges.
inline std::vector<double> bilinear(const std::vector<double>& src, int64_t h, int64_t w,
                                    int64_t oh, int64_t ow) {
    std::vector<double> dst(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y) {
        for (int64_t x = 0; x < ow; ++x) {
            double fy = (y + 0.5) * static_cast<double>(h) / oh - 0.5;
            double fx = (x + 0.5) * static_cast<double>(w) / ow - 0.5;
            if (fy < 0) fy = 0;
            if (fx < 0) fx = 0;
            int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), h - 1);
            int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), w - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
            const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
            const double wy = fy - y0, wx = fx - x0;
            const double top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
            const double bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
            dst[y * ow + x] = top * (1 - wy) + bot * wy;
        }
    }
    return dst;
}

// KL(N(mu, sigma^2) || N(0,1)) by composite-Simpson quadrature of the
// defining integral q(w) * ln(q(w)/p(w)).
inline double kl_quadrature(double mu, double sigma, int intervals = 40000) {
    const double lo = mu - 14.0 * sigma;
    const double hi = mu + 14.0 * sigma;
    const double dx = (hi - lo) / intervals;
    auto integrand = [&](double w) {
        const double z = (w - mu) / sigma;
        const double q = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
        // ln(q/p) expanded analytically to stay finite in the far tails
        const double log_ratio = -std::log(sigma) - 0.5 * z * z + 0.5 * w * w;
        return q * log_ratio;
    };
    double acc = integrand(lo) + integrand(hi);
    for (int i = 1; i < intervals; ++i) {
        acc += integrand(lo + i * dx) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * dx / 3.0;
}

// Central finite difference of f at x[i].
inline double fd(const std::function<double(const std::vector<double>&)>& f,
                 std::vector<double> x, size_t i, double h) {
    x[i] += h;
    const double fp = f(x);
    x[i] -= 2 * h;
    const double fm = f(x);
    return (fp - fm) / (2 * h);
}

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Sum of squared forward differences: a high-frequency energy proxy.
inline double gradient_energy(const std::vector<float>& g, int side) {
    double acc = 0.0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x + 1 < side; ++x) {
            const double d = g[static_cast<size_t>(y) * side + x + 1] - g[static_cast<size_t>(y) * side + x];
            acc += d * d;
        }
    for (int y = 0; y + 1 < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double d = g[static_cast<size_t>(y + 1) * side + x] - g[static_cast<size_t>(y) * side + x];
            acc += d * d;
        }
    return acc;
}

// Amplitude of the per-row-mean profile at a given period (single-bin DFT).
inline double row_periodic_amplitude(const std::vector<float>& g, int side, double period) {
    double re = 0.0, im = 0.0;
    for (int y = 0; y < side; ++y) {
        double mean = 0.0;
        for (int x = 0; x < side; ++x) mean += g[static_cast<size_t>(y) * side + x];
        mean /= side;
        const double phase = 2.0 * M_PI * y / period;
        re += mean * std::cos(phase);
        im += mean * std::sin(phase);
    }
    return std::sqrt(re * re + im * im) / side;
}

inline double pearson(const std::vector<float>& a, const std::vector<float>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Generic gradient checker: builds leaves from the given shapes, evaluates
// loss = sum(w .* op(inputs)) with fixed projection weights, and compares
// every analytic leaf gradient against central finite differences.
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

template <class S>
GradCheckResult check_gradients(
    const std::vector<floe::Shape>& shapes,
    const std::function<floe::TensorT<S>(const std::vector<floe::TensorT<S>>&)>& op,
    uint64_t seed, double h = 1e-5, double input_scale = 1.0) {
    using floe::TensorT;

    std::vector<std::vector<double>> values;
    for (size_t i = 0; i < shapes.size(); ++i) {
        std::vector<double> v(static_cast<size_t>(floe::shape_numel(shapes[i])));
        for (size_t j = 0; j < v.size(); ++j) {
            v[j] = input_scale * floe::gaussian(floe::mix(seed, i + 1), j);
        }
        values.push_back(std::move(v));
    }

    auto make_inputs = [&](const std::vector<std::vector<double>>& vals) {
        std::vector<TensorT<S>> ins;
        for (size_t i = 0; i < shapes.size(); ++i) {
            std::vector<S> cast(vals[i].begin(), vals[i].end());
            ins.push_back(TensorT<S>::from(shapes[i], std::move(cast), true));
        }
        return ins;
    };

    // fixed projection so every output element participates
    std::vector<double> proj;
    auto loss_value = [&](const std::vector<std::vector<double>>& vals) {
        auto ins = make_inputs(vals);
        TensorT<S> out = op(ins);
        if (proj.empty()) {
            proj.resize(static_cast<size_t>(out.numel()));
            for (size_t j = 0; j < proj.size(); ++j) proj[j] = floe::gaussian(floe::mix(seed, 999), j);
        }
        double acc = 0.0;
        for (int64_t j = 0; j < out.numel(); ++j) acc += proj[static_cast<size_t>(j)] * static_cast<double>(out.at(j));
        return acc;
    };

    // analytic gradients
    auto ins = make_inputs(values);
    floe::TapeT<S> tape;
    std::vector<std::vector<S>> analytic;
    {
        floe::TapeScopeT<S> scope(tape);
        TensorT<S> out = op(ins);
        if (proj.empty()) {
            proj.resize(static_cast<size_t>(out.numel()));
            for (size_t j = 0; j < proj.size(); ++j) proj[j] = floe::gaussian(floe::mix(seed, 999), j);
        }
        std::vector<S> pv(proj.begin(), proj.end());
        TensorT<S> w = TensorT<S>::from(out.shape(), std::move(pv));
        TensorT<S> loss = floe::sum_all(floe::mul(out, w));
        tape.backward(loss);
    }
    for (auto& t : ins) analytic.push_back(t.grad());

    GradCheckResult res;
    for (size_t i = 0; i < shapes.size(); ++i) {
        for (size_t j = 0; j < values[i].size(); ++j) {
            auto vals = values;
            vals[i][j] += h;
            const double fp = loss_value(vals);
            vals[i][j] -= 2 * h;
            const double fm = loss_value(vals);
            const double numeric = (fp - fm) / (2 * h);
            const double err = rel_err(static_cast<double>(analytic[i][j]), numeric);
            res.max_rel_err = std::max(res.max_rel_err, err);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace oracle
