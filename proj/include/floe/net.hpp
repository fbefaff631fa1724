#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "floe/tensor.hpp"
#include "floe/types.hpp"

namespace floe {

// Geometry and toggles of the two-scale attention regressor. A chip of side
// `chip_side` tiles into token_grid x token_grid tokens; each token tiles into
// patch_per_side x patch_per_side patches of side patch_side pixels.
struct NetConfig {
    int in_channels = 2;
    int chip_side = 64;   // square chips
    int token_grid = 4;   // tokens per side, T = token_grid^2
    int patch_side = 4;   // pixels per patch side
    int hidden = 16;      // per-patch feature width F
    int heads = 4;
    int repeats = 4;      // sequential global/local stages
    bool residual = true;
    bool layer_norm = true;

    int tokens() const { return token_grid * token_grid; }
    int token_px() const { return chip_side / token_grid; }
    int patch_per_side() const { return token_px() / patch_side; }    // H (= W)
    int patch_positions() const { return patch_per_side() * patch_per_side(); }
    int token_dim() const { return hidden * patch_positions(); }      // F*H*W
    int coarse_side() const { return token_grid * patch_per_side(); } // chip_side / patch_side
    int glo_key_dim() const { return token_dim() / heads; }
    int lo_key_dim() const { return hidden / heads; }

    void validate() const {
        if (in_channels < 1) throw ConfigError("net: in_channels must be >= 1");
        if (repeats < 1) throw ConfigError("net: repeats must be >= 1");
        if (token_grid < 1 || patch_side < 1 || hidden < 1 || heads < 1) {
            throw ConfigError("net: token_grid, patch_side, hidden and heads must be positive");
        }
        if (chip_side % (token_grid * patch_side) != 0) {
            throw ConfigError("net: chip side " + std::to_string(chip_side) +
                              " is not divisible by token_grid*patch_side = " +
                              std::to_string(token_grid * patch_side));
        }
        if (token_dim() % heads != 0) {
            throw ConfigError("net: token dim " + std::to_string(token_dim()) +
                              " not divisible by heads = " + std::to_string(heads));
        }
        if (hidden % heads != 0) {
            throw ConfigError("net: hidden dim " + std::to_string(hidden) +
                              " not divisible by heads = " + std::to_string(heads));
        }
    }
};

// Ordered, named parameter store. Order is the checkpoint and optimizer order.
template <class S>
struct ParamBankT {
    std::vector<std::pair<std::string, TensorT<S>>> items;

    void add(const std::string& name, TensorT<S> t) {
        if (has(name)) throw ConfigError("params: duplicate name " + name);
        items.emplace_back(name, std::move(t));
    }

    bool has(const std::string& name) const {
        for (const auto& [n, t] : items) {
            if (n == name) return true;
        }
        return false;
    }

    const TensorT<S>& at(const std::string& name) const {
        for (const auto& [n, t] : items) {
            if (n == name) return t;
        }
        throw ConfigError("params: missing name " + name);
    }

    TensorT<S>& at(const std::string& name) {
        for (auto& [n, t] : items) {
            if (n == name) return t;
        }
        throw ConfigError("params: missing name " + name);
    }

    int64_t count() const {
        int64_t n = 0;
        for (const auto& [name, t] : items) n += t.numel();
        return n;
    }
};

namespace detail {

inline double glorot_std(int64_t fan_in, int64_t fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace detail

// Fresh deterministic parameter set: Glorot-normal weights, zero biases.
// Block layer norms are non-affine, so every entry here is a projection
// weight or bias.
template <class S>
ParamBankT<S> init_params(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParamBankT<S> bank;
    uint64_t k = 0;
    auto weight = [&](const std::string& name, int64_t rows, int64_t cols) {
        bank.add(name, TensorT<S>::randn({rows, cols}, mix(seed, ++k),
                                         detail::glorot_std(rows, cols), true));
    };
    auto bias = [&](const std::string& name, int64_t n) {
        ++k;
        bank.add(name, TensorT<S>::zeros({n}, true));
    };

    const int64_t patch_in = static_cast<int64_t>(cfg.in_channels) * cfg.patch_side * cfg.patch_side;
    weight("patch_proj.w", patch_in, cfg.hidden);
    bias("patch_proj.b", cfg.hidden);
    for (int r = 0; r < cfg.repeats; ++r) {
        const std::string g = "stage" + std::to_string(r) + ".glo.";
        const std::string l = "stage" + std::to_string(r) + ".lo.";
        const int64_t dg = cfg.token_dim();
        const int64_t dl = cfg.hidden;
        for (const char* w : {"wq", "wk", "wv", "wo"}) weight(g + w, dg, dg);
        bias(g + "bo", dg);
        for (const char* w : {"wq", "wk", "wv", "wo"}) weight(l + w, dl, dl);
        bias(l + "bo", dl);
    }
    weight("head.w", static_cast<int64_t>(cfg.repeats) * cfg.hidden, 1);
    bias("head.b", 1);
    return bank;
}

// ---------------------------------------------------------------------------
// Index maps. Each builder returns the source index for every element of the
// destination tensor; they are the single place where the tiling conventions
// live (token-major, patch-position-middle, feature-minor).
// ---------------------------------------------------------------------------

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

// (B,C,H0,W0) -> patch matrix (B*T*HW, C*ps*ps)
inline IndexMap patch_index(const NetConfig& cfg, int64_t B) {
    const int64_t T = cfg.tokens(), H = cfg.patch_per_side(), HW = cfg.patch_positions();
    const int64_t ps = cfg.patch_side, C = cfg.in_channels, side = cfg.chip_side;
    const int64_t tile = cfg.token_px();
    auto idx = std::make_shared<std::vector<int64_t>>(
        static_cast<size_t>(B * T * HW * C * ps * ps));
    int64_t o = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            const int64_t tr = t / cfg.token_grid, tc = t % cfg.token_grid;
            for (int64_t p = 0; p < HW; ++p) {
                const int64_t pr = p / H, pc = p % H;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t i = 0; i < ps; ++i)
                        for (int64_t j = 0; j < ps; ++j) {
                            const int64_t row = tr * tile + pr * ps + i;
                            const int64_t col = tc * tile + pc * ps + j;
                            (*idx)[static_cast<size_t>(o++)] = ((b * C + c) * side + row) * side + col;
                        }
            }
        }
    return idx;
}

// flat projection (N*L, D) -> per-head layout (N*h, L, dk)
inline IndexMap heads_split_index(int64_t N, int64_t L, int64_t D, int64_t h) {
    const int64_t dk = D / h;
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * L * D));
    int64_t o = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t hd = 0; hd < h; ++hd)
            for (int64_t l = 0; l < L; ++l)
                for (int64_t j = 0; j < dk; ++j)
                    (*idx)[static_cast<size_t>(o++)] = (n * L + l) * D + hd * dk + j;
    return idx;
}

// per-head layout (N*h, L, dk) -> concatenated heads (N*L, D)
inline IndexMap heads_merge_index(int64_t N, int64_t L, int64_t D, int64_t h) {
    const int64_t dk = D / h;
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * L * D));
    int64_t o = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t l = 0; l < L; ++l)
            for (int64_t hd = 0; hd < h; ++hd)
                for (int64_t j = 0; j < dk; ++j)
                    (*idx)[static_cast<size_t>(o++)] = ((n * h + hd) * L + l) * dk + j;
    return idx;
}

// per-patch scalars (B, T*HW) -> coarse grid (B, 1, coarse, coarse)
inline IndexMap coarse_grid_index(const NetConfig& cfg, int64_t B) {
    const int64_t H = cfg.patch_per_side(), coarse = cfg.coarse_side(), HW = cfg.patch_positions();
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * coarse * coarse));
    int64_t o = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t row = 0; row < coarse; ++row)
            for (int64_t col = 0; col < coarse; ++col) {
                const int64_t tr = row / H, pr = row % H;
                const int64_t tc = col / H, pc = col % H;
                const int64_t t = tr * cfg.token_grid + tc;
                (*idx)[static_cast<size_t>(o++)] = b * cfg.tokens() * HW + t * HW + pr * H + pc;
            }
    return idx;
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

struct DropoutSpec {
    double p = 0.0;
    DropoutMode mode = DropoutMode::infer_off;
    uint64_t seed = 0;
};

template <class S>
struct AttnTraceT {
    std::vector<TensorT<S>> glo;  // per stage: (B*h, T, T)
    std::vector<TensorT<S>> lo;   // per stage: (B*T*h, HW, HW)
};

namespace detail {

template <class S>
struct AttnParams {
    const TensorT<S>*wq, *wk, *wv, *wo, *bo;
};

// Pre-norm multi-head self-attention over x: (N, L, D). Row-stochastic
// attention per head; heads concatenated and projected back to D.
template <class S>
TensorT<S> attention_block(const TensorT<S>& x, int heads, const AttnParams<S>& p,
                           bool use_norm, bool use_residual, const DropoutSpec& drop,
                           uint64_t drop_salt, std::vector<TensorT<S>>* attn_out) {
    const int64_t N = x.dim(0), L = x.dim(1), D = x.dim(2);
    if (p.wq->dim(0) != D) {
        throw ShapeError("attention: input dim " + std::to_string(D) + " does not match weights " +
                         shape_str(p.wq->shape()));
    }
    const int64_t dk = D / heads;

    TensorT<S> h = use_norm ? layer_norm(x) : x;
    TensorT<S> flat = reshape(h, {N * L, D});
    TensorT<S> q = matmul(flat, *p.wq);
    TensorT<S> k = matmul(flat, *p.wk);
    TensorT<S> v = matmul(flat, *p.wv);

    IndexMap split = heads_split_index(N, L, D, heads);
    TensorT<S> qh = gather(q, {N * heads, L, dk}, split);
    TensorT<S> kh = gather(k, {N * heads, L, dk}, split);
    TensorT<S> vh = gather(v, {N * heads, L, dk}, split);

    TensorT<S> scores = scale(matmul(qh, transpose_last2(kh)), 1.0 / std::sqrt(static_cast<double>(dk)));
    TensorT<S> attn = softmax_lastdim(scores);
    if (attn_out) attn_out->push_back(attn);

    TensorT<S> ctx = matmul(attn, vh);
    TensorT<S> merged = gather(ctx, {N * L, D}, heads_merge_index(N, L, D, heads));
    TensorT<S> o = add_bias_lastdim(matmul(merged, *p.wo), *p.bo);
    if (drop.p > 0.0 && drop.mode != DropoutMode::infer_off) {
        o = dropout(o, drop.p, drop.mode, mix(drop.seed, drop_salt));
    }
    TensorT<S> o3 = reshape(o, {N, L, D});
    return use_residual ? add(x, o3) : o3;
}

template <class S>
AttnParams<S> stage_params(const ParamBankT<S>& bank, int stage, const char* block) {
    const std::string base = "stage" + std::to_string(stage) + "." + block + ".";
    return {&bank.at(base + "wq"), &bank.at(base + "wk"), &bank.at(base + "wv"),
            &bank.at(base + "wo"), &bank.at(base + "bo")};
}

}  // namespace detail

// Chip batch (B,C,H0,W0) -> patch tokens (B, T, F*H*W). Every patch is
// projected through one shared linear map; token vectors are laid out
// patch-position-major, feature-minor.
template <class S>
TensorT<S> patch_merge(const TensorT<S>& x, const NetConfig& cfg, const TensorT<S>& w,
                       const TensorT<S>& b) {
    if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.chip_side ||
        x.dim(3) != cfg.chip_side) {
        throw ShapeError("patch_merge: input " + shape_str(x.shape()) + " does not match config");
    }
    const int64_t B = x.dim(0), T = cfg.tokens(), HW = cfg.patch_positions();
    const int64_t pin = static_cast<int64_t>(cfg.in_channels) * cfg.patch_side * cfg.patch_side;
    TensorT<S> patches = gather(x, {B * T * HW, pin}, patch_index(cfg, B));
    TensorT<S> feats = add_bias_lastdim(matmul(patches, w), b);
    return reshape(feats, {B, T, static_cast<int64_t>(HW) * cfg.hidden});
}

// Among-token attention over (B, T, F*H*W).
template <class S>
TensorT<S> gloformer_block(const TensorT<S>& g, const NetConfig& cfg, const ParamBankT<S>& bank,
                           int stage, const DropoutSpec& drop = {},
                           std::vector<TensorT<S>>* attn_out = nullptr) {
    if (g.rank() != 3 || g.dim(1) != cfg.tokens() || g.dim(2) != cfg.token_dim()) {
        throw ShapeError("gloformer: input " + shape_str(g.shape()) + " does not match config");
    }
    return detail::attention_block(g, cfg.heads, detail::stage_params(bank, stage, "glo"),
                                   cfg.layer_norm, cfg.residual, drop,
                                   mix(1, static_cast<uint64_t>(stage)), attn_out);
}

// Within-token attention over (B*T, H*W, F); tokens are independent batch rows.
template <class S>
TensorT<S> loformer_block(const TensorT<S>& l, const NetConfig& cfg, const ParamBankT<S>& bank,
                          int stage, const DropoutSpec& drop = {},
                          std::vector<TensorT<S>>* attn_out = nullptr) {
    if (l.rank() != 3 || l.dim(1) != cfg.patch_positions() || l.dim(2) != cfg.hidden) {
        throw ShapeError("loformer: input " + shape_str(l.shape()) + " does not match config");
    }
    return detail::attention_block(l, cfg.heads, detail::stage_params(bank, stage, "lo"),
                                   cfg.layer_norm, cfg.residual, drop,
                                   mix(2, static_cast<uint64_t>(stage)), attn_out);
}

// (B, T, F*H*W) -> (B*T, H*W, F); pure reshape, invertible.
template <class S>
TensorT<S> to_local(const TensorT<S>& g, const NetConfig& cfg) {
    const int64_t B = g.dim(0);
    return reshape(g, {B * cfg.tokens(), static_cast<int64_t>(cfg.patch_positions()), static_cast<int64_t>(cfg.hidden)});
}

template <class S>
TensorT<S> to_global(const TensorT<S>& l, const NetConfig& cfg) {
    const int64_t B = l.dim(0) / cfg.tokens();
    return reshape(l, {B, static_cast<int64_t>(cfg.tokens()), static_cast<int64_t>(cfg.token_dim())});
}

// Stage stack (R, B, T, F*H*W) -> SIC map (B, 1, H0, W0). Per patch position,
// the R stage feature vectors are concatenated and projected to one scalar;
// the coarse grid is bilinearly upsampled and squashed to [0,1].
template <class S>
TensorT<S> interpolation_head(const TensorT<S>& z, const NetConfig& cfg, const TensorT<S>& w,
                              const TensorT<S>& b) {
    if (z.rank() != 4 || z.dim(0) != cfg.repeats || z.dim(2) != cfg.tokens() ||
        z.dim(3) != cfg.token_dim()) {
        throw ShapeError("interpolation_head: input " + shape_str(z.shape()) +
                         " does not match config");
    }
    const int64_t B = z.dim(1), T = cfg.tokens(), HW = cfg.patch_positions(), F = cfg.hidden;
    std::vector<TensorT<S>> per_stage;
    per_stage.reserve(static_cast<size_t>(cfg.repeats));
    for (int r = 0; r < cfg.repeats; ++r) {
        per_stage.push_back(reshape(slice_first(z, r), {B * T * HW, F}));
    }
    TensorT<S> cat = concat_lastdim(per_stage);                       // (B*T*HW, R*F)
    TensorT<S> scalars = add_bias_lastdim(matmul(cat, w), b);         // (B*T*HW, 1)
    TensorT<S> coarse = gather(reshape(scalars, {B, T * HW}),
                               {B, 1, static_cast<int64_t>(cfg.coarse_side()), static_cast<int64_t>(cfg.coarse_side())},
                               coarse_grid_index(cfg, B));
    TensorT<S> up = bilinear_upsample(coarse, cfg.chip_side, cfg.chip_side);
    return hard_sigmoid(up);
}

template <class S>
struct NetOutputT {
    TensorT<S> sic;      // (B, 1, H0, W0), values in [0,1]
    TensorT<S> stacked;  // (R, B, T, F*H*W)
};

// Full forward pass: R sequential global/local stages, stage outputs stacked,
// interpolation head on top.
template <class S>
NetOutputT<S> net_forward(const TensorT<S>& x, const NetConfig& cfg, const ParamBankT<S>& bank,
                          const DropoutSpec& drop = {}, AttnTraceT<S>* trace = nullptr) {
    cfg.validate();
    TensorT<S> g = patch_merge(x, cfg, bank.at("patch_proj.w"), bank.at("patch_proj.b"));
    std::vector<TensorT<S>> stages;
    stages.reserve(static_cast<size_t>(cfg.repeats));
    for (int r = 0; r < cfg.repeats; ++r) {
        g = gloformer_block(g, cfg, bank, r, drop, trace ? &trace->glo : nullptr);
        TensorT<S> l = to_local(g, cfg);
        l = loformer_block(l, cfg, bank, r, drop, trace ? &trace->lo : nullptr);
        g = to_global(l, cfg);
        stages.push_back(g);
    }
    TensorT<S> z = stack_first(stages);
    TensorT<S> sic = interpolation_head(z, cfg, bank.at("head.w"), bank.at("head.b"));
    return {sic, z};
}

}  // namespace floe
