#pragma once

// Small deterministic pre-norm transformer with rotary position encoding,
// a position-keyed append-only KV cache, and an analytic backward pass for
// uncached forwards.

#include "smdm/masks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace smdm {

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 2;
    int d_model = 32;
    int d_ff = 64;
    Vocabulary vocab = Vocabulary::with_specials(16);
    double rope_base = 10000.0;
    int max_position = 256;
    std::uint64_t seed = 0;

    int d_head() const { return d_model / n_heads; }

    void validate() const {
        vocab.validate();
        require(n_layers >= 1, "model config: n_layers must be >= 1");
        require(n_heads >= 1 && d_model >= 1 && d_ff >= 1, "model config: dimensions must be positive");
        require(d_model % n_heads == 0, "model config: d_model must be divisible by n_heads");
        require(d_head() % 2 == 0, "model config: rotary encoding needs an even head dimension");
        require(max_position >= 1, "model config: max_position must be positive");
        require(rope_base > 1.0, "model config: rope_base must exceed 1");
    }
};

template <typename T>
struct LayerParams {
    Matrix<T> attn_norm;  // 1 x d
    Matrix<T> wq, wk, wv, wo;
    Matrix<T> ffn_norm;   // 1 x d
    Matrix<T> w1;         // d x d_ff
    Matrix<T> w2;         // d_ff x d
};

template <typename T>
struct Params {
    Matrix<T> embed;       // table_size x d, tied with the output head
    std::vector<LayerParams<T>> layers;
    Matrix<T> final_norm;  // 1 x d

    template <typename F>
    void for_each(F&& f) {
        f(std::string("embed"), embed);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layers." + std::to_string(l) + ".";
            auto& L = layers[l];
            f(p + "attn_norm", L.attn_norm);
            f(p + "wq", L.wq);
            f(p + "wk", L.wk);
            f(p + "wv", L.wv);
            f(p + "wo", L.wo);
            f(p + "ffn_norm", L.ffn_norm);
            f(p + "w1", L.w1);
            f(p + "w2", L.w2);
        }
        f(std::string("final_norm"), final_norm);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<Params*>(this)->for_each([&](const std::string& n, Matrix<T>& m) { f(n, static_cast<const Matrix<T>&>(m)); });
    }

    static Params zeros_like(const Params& o) {
        Params z = o;
        z.for_each([](const std::string&, Matrix<T>& m) { m.setZero(); });
        return z;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for_each([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }
};

template <typename T>
class Model {
public:
    Model() = default;

    explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        const int d = cfg_.d_model;
        auto uniform = [&](int r, int c, double a) {
            Matrix<T> m(r, c);
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * a);
            }
            return m;
        };
        const double a_in = 1.0 / std::sqrt(static_cast<double>(d));
        params_.embed = uniform(cfg_.vocab.table_size(), d, a_in);
        for (int l = 0; l < cfg_.n_layers; ++l) {
            LayerParams<T> L;
            L.attn_norm = Matrix<T>::Ones(1, d);
            L.wq = uniform(d, d, a_in);
            L.wk = uniform(d, d, a_in);
            L.wv = uniform(d, d, a_in);
            L.wo = uniform(d, d, a_in);
            L.ffn_norm = Matrix<T>::Ones(1, d);
            L.w1 = uniform(d, cfg_.d_ff, a_in);
            L.w2 = uniform(cfg_.d_ff, d, 1.0 / std::sqrt(static_cast<double>(cfg_.d_ff)));
            params_.layers.push_back(std::move(L));
        }
        params_.final_norm = Matrix<T>::Ones(1, d);
        build_rope_table();
    }

    Model(const ModelConfig& cfg, Params<T> params) : cfg_(cfg), params_(std::move(params)) {
        cfg_.validate();
        require(params_.layers.size() == static_cast<std::size_t>(cfg_.n_layers), "model: layer count mismatch");
        require(params_.embed.rows() == cfg_.vocab.table_size() && params_.embed.cols() == cfg_.d_model,
                "model: embedding shape mismatch");
        build_rope_table();
    }

    const ModelConfig& config() const { return cfg_; }
    const Params<T>& params() const { return params_; }
    Params<T>& mutable_params() { return params_; }

    // Same parameters in another precision (float64 verification mode).
    template <typename U>
    Model<U> cast() const {
        Params<U> p;
        p.embed = params_.embed.template cast<U>();
        for (const auto& L : params_.layers) {
            p.layers.push_back({L.attn_norm.template cast<U>(), L.wq.template cast<U>(), L.wk.template cast<U>(),
                                L.wv.template cast<U>(), L.wo.template cast<U>(), L.ffn_norm.template cast<U>(),
                                L.w1.template cast<U>(), L.w2.template cast<U>()});
        }
        p.final_norm = params_.final_norm.template cast<U>();
        return Model<U>(cfg_, std::move(p));
    }

    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        params_.for_each([&](const std::string&, const Matrix<T>& m) {
            h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(T), h);
        });
        return h;
    }

    // Rotate pairs (2i, 2i+1) inside every head of each row by angle
    // position * base^(-2i/d_head). inverse=true applies the transpose.
    void apply_rope(Matrix<T>& x, const std::vector<Position>& positions, bool inverse = false) const {
        const int dh = cfg_.d_head();
        const int half = dh / 2;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const auto pos = positions[static_cast<std::size_t>(r)];
            const T* cs = &rope_cos_[static_cast<std::size_t>(pos) * static_cast<std::size_t>(half)];
            const T* sn = &rope_sin_[static_cast<std::size_t>(pos) * static_cast<std::size_t>(half)];
            for (int h = 0; h < cfg_.n_heads; ++h) {
                for (int i = 0; i < half; ++i) {
                    const Eigen::Index c = h * dh + 2 * i;
                    const T a = x(r, c);
                    const T b = x(r, c + 1);
                    const T s = inverse ? -sn[i] : sn[i];
                    x(r, c) = a * cs[i] - b * s;
                    x(r, c + 1) = a * s + b * cs[i];
                }
            }
        }
    }

    void check_position(Position p) const {
        require(p >= 0 && p < cfg_.max_position, "model: position id outside [0, max_position)");
    }

private:
    void build_rope_table() {
        const int half = cfg_.d_head() / 2;
        rope_cos_.resize(static_cast<std::size_t>(cfg_.max_position) * static_cast<std::size_t>(half));
        rope_sin_.resize(rope_cos_.size());
        for (int p = 0; p < cfg_.max_position; ++p) {
            for (int i = 0; i < half; ++i) {
                const double theta = std::pow(cfg_.rope_base, -2.0 * i / cfg_.d_head());
                const double ang = p * theta;
                rope_cos_[static_cast<std::size_t>(p * half + i)] = static_cast<T>(std::cos(ang));
                rope_sin_[static_cast<std::size_t>(p * half + i)] = static_cast<T>(std::sin(ang));
            }
        }
    }

    ModelConfig cfg_;
    Params<T> params_;
    std::vector<T> rope_cos_;
    std::vector<T> rope_sin_;
};

template <typename T>
Model<T> init_model(const ModelConfig& cfg) {
    return Model<T>(cfg);
}

// Per-layer keys (post-rotary) and values of already processed tokens, keyed
// by absolute position. Entries are only ever appended.
template <typename T>
class KVCache {
public:
    KVCache() = default;
    explicit KVCache(const ModelConfig& cfg)
        : keys_(static_cast<std::size_t>(cfg.n_layers), Matrix<T>(0, cfg.d_model)),
          values_(static_cast<std::size_t>(cfg.n_layers), Matrix<T>(0, cfg.d_model)) {}

    std::size_t size() const { return positions_.size(); }
    std::size_t num_layers() const { return keys_.size(); }
    const std::vector<Position>& positions() const { return positions_; }
    const std::vector<TokenId>& tokens() const { return tokens_; }
    const Matrix<T>& keys(std::size_t layer) const { return keys_[layer]; }
    const Matrix<T>& values(std::size_t layer) const { return values_[layer]; }

    bool contains(Position p) const { return std::find(positions_.begin(), positions_.end(), p) != positions_.end(); }

    // Checksum of entries [0, upto); later appends never change it.
    std::uint64_t checksum(std::size_t upto) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::size_t l = 0; l < keys_.size(); ++l) {
            const auto bytes = upto * static_cast<std::size_t>(keys_[l].cols()) * sizeof(T);
            h = fnv1a(keys_[l].data(), bytes, h);
            h = fnv1a(values_[l].data(), bytes, h);
        }
        return h;
    }
    std::uint64_t checksum() const { return checksum(size()); }

    void append(std::size_t layer, const Matrix<T>& k, const Matrix<T>& v, Eigen::Index first, Eigen::Index count) {
        auto& K = keys_[layer];
        auto& V = values_[layer];
        const Eigen::Index old = K.rows();
        K.conservativeResize(old + count, Eigen::NoChange);
        V.conservativeResize(old + count, Eigen::NoChange);
        K.middleRows(old, count) = k.middleRows(first, count);
        V.middleRows(old, count) = v.middleRows(first, count);
    }

    void append_positions(const std::vector<Position>& pos, const std::vector<TokenId>& toks) {
        positions_.insert(positions_.end(), pos.begin(), pos.end());
        tokens_.insert(tokens_.end(), toks.begin(), toks.end());
    }

private:
    std::vector<Position> positions_;
    std::vector<TokenId> tokens_;
    std::vector<Matrix<T>> keys_;
    std::vector<Matrix<T>> values_;
};

namespace detail {

constexpr double kNormEps = 1e-5;

template <typename T>
void rms_norm(const Matrix<T>& x, const Matrix<T>& gain, Matrix<T>& out, std::vector<T>* inv_rms = nullptr) {
    out.resize(x.rows(), x.cols());
    if (inv_rms) {
        inv_rms->resize(static_cast<std::size_t>(x.rows()));
    }
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T ms = x.row(r).squaredNorm() / static_cast<T>(x.cols());
        const T inv = T(1) / std::sqrt(ms + static_cast<T>(kNormEps));
        out.row(r) = (x.row(r) * inv).cwiseProduct(gain);
        if (inv_rms) {
            (*inv_rms)[static_cast<std::size_t>(r)] = inv;
        }
    }
}

template <typename T>
T silu(T x) {
    return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_grad(T x) {
    const T s = T(1) / (T(1) + std::exp(-x));
    return s * (T(1) + x * (T(1) - s));
}

// Activations kept for the backward pass of one layer.
template <typename T>
struct LayerTape {
    Matrix<T> x_in, a, q, k, v, attn_out, x_mid, b, h, g;
    std::vector<T> inv1, inv2;
    std::vector<Matrix<T>> probs;  // per head, rows x keys
};

}  // namespace detail

template <typename T>
struct ForwardTape {
    std::vector<TokenId> tokens;
    std::vector<Position> positions;
    std::vector<detail::LayerTape<T>> layers;
    Matrix<T> x_final, f;
    std::vector<T> inv_final;
};

// Core transformer pass over `live` tokens, optionally attending to cached
// entries first. Mask rows index live tokens; mask columns index cache
// entries followed by live tokens. The first `commit` live rows are appended
// to the cache after the pass. Returns the final hidden states of all live
// rows (pre head). `tape`, when given, records activations (cache must be
// empty).
template <typename T, typename MaskT>
Matrix<T> forward_hidden(const Model<T>& model, KVCache<T>* cache, const std::vector<TokenId>& tokens,
                         const std::vector<Position>& positions, const MaskT& mask, std::size_t commit,
                         ForwardTape<T>* tape = nullptr) {
    const auto& cfg = model.config();
    const auto& P = model.params();
    const std::size_t n = tokens.size();
    const std::size_t n_cache = cache ? cache->size() : 0;
    require(positions.size() == n, "forward: tokens/positions length mismatch");
    require(mask.rows() == n && mask.cols() == n_cache + n, "forward: mask shape does not match inputs");
    require(commit <= n, "forward: commit count exceeds live tokens");
    require(!tape || n_cache == 0, "forward: tape requires an uncached pass");
    for (std::size_t i = 0; i < n; ++i) {
        require(tokens[i] >= 0 && tokens[i] < cfg.vocab.table_size(), "forward: token id outside vocabulary");
        model.check_position(positions[i]);
    }

    const int d = cfg.d_model;
    const int dh = cfg.d_head();
    const auto N = static_cast<Eigen::Index>(n);
    const auto NK = static_cast<Eigen::Index>(n_cache + n);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Matrix<T> x(N, d);
    for (Eigen::Index i = 0; i < N; ++i) {
        x.row(i) = P.embed.row(tokens[static_cast<std::size_t>(i)]);
    }
    if (tape) {
        tape->tokens = tokens;
        tape->positions = positions;
        tape->layers.clear();
    }

    // Mask as an additive bias, shared across heads and layers.
    Matrix<T> bias(N, NK);
    for (Eigen::Index q = 0; q < N; ++q) {
        for (Eigen::Index k = 0; k < NK; ++k) {
            bias(q, k) = mask.allowed(static_cast<std::size_t>(q), static_cast<std::size_t>(k))
                             ? T(0)
                             : -std::numeric_limits<T>::infinity();
        }
    }

    Matrix<T> a, q, k, v, keys, values, scores, attn, b, h, g;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& L = P.layers[static_cast<std::size_t>(l)];
        detail::LayerTape<T>* lt = nullptr;
        if (tape) {
            tape->layers.emplace_back();
            lt = &tape->layers.back();
            lt->x_in = x;
        }
        detail::rms_norm(x, L.attn_norm, a, lt ? &lt->inv1 : nullptr);
        q.noalias() = a * L.wq;
        k.noalias() = a * L.wk;
        v.noalias() = a * L.wv;
        model.apply_rope(q, positions);
        model.apply_rope(k, positions);

        if (n_cache > 0) {
            keys.resize(NK, d);
            values.resize(NK, d);
            keys.topRows(static_cast<Eigen::Index>(n_cache)) = cache->keys(static_cast<std::size_t>(l));
            values.topRows(static_cast<Eigen::Index>(n_cache)) = cache->values(static_cast<std::size_t>(l));
            keys.bottomRows(N) = k;
            values.bottomRows(N) = v;
        }
        const Matrix<T>& K = n_cache > 0 ? keys : k;
        const Matrix<T>& V = n_cache > 0 ? values : v;

        attn.resize(N, d);
        if (lt) {
            lt->probs.assign(static_cast<std::size_t>(cfg.n_heads), Matrix<T>());
        }
        for (int hd = 0; hd < cfg.n_heads; ++hd) {
            scores.noalias() = q.middleCols(hd * dh, dh) * K.middleCols(hd * dh, dh).transpose();
            scores *= scale;
            scores += bias;
            for (Eigen::Index r = 0; r < N; ++r) {
                const T mx = scores.row(r).maxCoeff();
                if (!std::isfinite(mx)) {
                    scores.row(r).setZero();
                    continue;
                }
                scores.row(r) = (scores.row(r).array() - mx).exp();
                scores.row(r) /= scores.row(r).sum();
            }
            attn.middleCols(hd * dh, dh).noalias() = scores * V.middleCols(hd * dh, dh);
            if (lt) {
                lt->probs[static_cast<std::size_t>(hd)] = scores;
            }
        }
        if (cache && commit > 0) {
            cache->append(static_cast<std::size_t>(l), k, v, 0, static_cast<Eigen::Index>(commit));
        }
        x.noalias() += attn * L.wo;
        if (lt) {
            lt->a = a;
            lt->q = q;
            lt->k = k;
            lt->v = v;
            lt->attn_out = attn;
            lt->x_mid = x;
        }

        detail::rms_norm(x, L.ffn_norm, b, lt ? &lt->inv2 : nullptr);
        h.noalias() = b * L.w1;
        g = h.unaryExpr([](T z) { return detail::silu(z); });
        x.noalias() += g * L.w2;
        if (lt) {
            lt->b = b;
            lt->h = h;
            lt->g = g;
        }
    }
    if (cache && commit > 0) {
        cache->append_positions(std::vector<Position>(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(commit)),
                                std::vector<TokenId>(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(commit)));
    }
    Matrix<T> f;
    detail::rms_norm(x, P.final_norm, f, tape ? &tape->inv_final : nullptr);
    if (tape) {
        tape->x_final = x;
        tape->f = f;
    }
    return f;
}

// Vocabulary logits (ordinary ids only) for selected rows of final hidden
// states.
template <typename T>
Matrix<T> head_logits(const Model<T>& model, const Matrix<T>& hidden, const std::vector<std::size_t>& rows) {
    const int V = model.config().vocab.size;
    Matrix<T> sel(static_cast<Eigen::Index>(rows.size()), hidden.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sel.row(static_cast<Eigen::Index>(i)) = hidden.row(static_cast<Eigen::Index>(rows[i]));
    }
    return sel * model.params().embed.topRows(V).transpose();
}

// Materialized (uncached) forward returning logits for every row.
template <typename T, typename MaskT>
Matrix<T> forward_full(const Model<T>& model, const std::vector<TokenId>& tokens,
                       const std::vector<Position>& positions, const MaskT& mask, ForwardTape<T>* tape = nullptr) {
    require(tokens.size() == positions.size(), "forward_full: tokens/positions length mismatch");
    require(mask.rows() == tokens.size() && mask.cols() == tokens.size(), "forward_full: mask must be square over the input");
    const auto hidden = forward_hidden<T>(model, nullptr, tokens, positions, mask, 0, tape);
    const int V = model.config().vocab.size;
    return hidden * model.params().embed.topRows(V).transpose();
}

// Full attention without a mask.
struct FullMask {
    std::size_t n = 0;
    std::size_t rows() const { return n; }
    std::size_t cols() const { return n; }
    bool allowed(std::size_t, std::size_t) const { return true; }
};

struct Segment {
    std::vector<TokenId> tokens;
    std::vector<Position> positions;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
    void push(TokenId t, Position p) {
        tokens.push_back(t);
        positions.push_back(p);
    }
};

// Observer hook, called with the live input of every model call.
struct StepInput {
    const std::vector<Position>* cache_positions = nullptr;
    const std::vector<TokenId>* cache_tokens = nullptr;
    const Segment* new_cache = nullptr;
    const Segment* decode = nullptr;
    const Segment* regs = nullptr;
};
using StepObserver = std::function<void(const StepInput&)>;

// One sparse inference step. new_cache rows are processed and appended to
// the cache; decode ([M]) and register ([reg]) rows are never cached. A call
// with no decode and no register rows is a cache commit (e.g. prompt
// prefill). Returns logits for the decode rows.
template <typename T>
Matrix<T> forward_step(const Model<T>& model, KVCache<T>& cache, const Segment& new_cache, const Segment& decode,
                       const Segment& regs, const StepObserver& observer = {}) {
    const auto& vocab = model.config().vocab;
    require(new_cache.tokens.size() == new_cache.positions.size() && decode.tokens.size() == decode.positions.size() &&
                regs.tokens.size() == regs.positions.size(),
            "forward_step: tokens/positions length mismatch");
    require(!(decode.empty() && !regs.empty()), "forward_step: empty decode set outside a cache commit");
    require(!(decode.empty() && new_cache.empty()), "forward_step: nothing to process");
    for (auto t : decode.tokens) {
        require(t == vocab.mask_id, "forward_step: decode tokens must be [M]");
    }
    for (auto t : regs.tokens) {
        require(t == vocab.reg_id, "forward_step: register tokens must be [reg]");
    }
    std::vector<Position> seen = cache.positions();
    for (const auto* s : {&new_cache, &decode, &regs}) {
        seen.insert(seen.end(), s->positions.begin(), s->positions.end());
    }
    std::sort(seen.begin(), seen.end());
    require(std::adjacent_find(seen.begin(), seen.end()) == seen.end(), "forward_step: position collides with cache or another input");

    if (observer) {
        StepInput in;
        in.cache_positions = &cache.positions();
        in.cache_tokens = &cache.tokens();
        in.new_cache = &new_cache;
        in.decode = &decode;
        in.regs = &regs;
        observer(in);
    }

    Segment live;
    for (const auto* s : {&new_cache, &decode, &regs}) {
        live.tokens.insert(live.tokens.end(), s->tokens.begin(), s->tokens.end());
        live.positions.insert(live.positions.end(), s->positions.begin(), s->positions.end());
    }
    const auto mask = build_inference_mask(cache.size(), new_cache.size(), decode.size(), regs.size());
    const auto hidden = forward_hidden<T>(model, &cache, live.tokens, live.positions, mask, new_cache.size());
    std::vector<std::size_t> rows(decode.size());
    std::iota(rows.begin(), rows.end(), new_cache.size());
    return head_logits(model, hidden, rows);
}

// Gradient of a scalar objective w.r.t. all parameters, given d objective /
// d logits for every row of a taped forward_full.
template <typename T>
Params<T> backward(const Model<T>& model, const ForwardTape<T>& tape, const Matrix<T>& dlogits) {
    const auto& cfg = model.config();
    const auto& P = model.params();
    const int V = cfg.vocab.size;
    const int d = cfg.d_model;
    const int dh = cfg.d_head();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Params<T> G = Params<T>::zeros_like(P);

    auto norm_backward = [&](const Matrix<T>& x, const std::vector<T>& inv, const Matrix<T>& gain, const Matrix<T>& dy,
                             Matrix<T>& dgain) {
        Matrix<T> dx(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const T ir = inv[static_cast<std::size_t>(r)];
            const auto dyg = dy.row(r).cwiseProduct(gain);
            dgain += dy.row(r).cwiseProduct(x.row(r)) * ir;
            const T dot = dyg.dot(x.row(r));
            dx.row(r) = dyg * ir - x.row(r) * (ir * ir * ir * dot / static_cast<T>(d));
        }
        return dx;
    };

    // Head: logits = f * E_ord^T.
    const auto E = P.embed.topRows(V);
    G.embed.topRows(V).noalias() += dlogits.transpose() * tape.f;
    Matrix<T> df = dlogits * E;
    Matrix<T> dx = norm_backward(tape.x_final, tape.inv_final, P.final_norm, df, G.final_norm);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& L = P.layers[static_cast<std::size_t>(l)];
        auto& GL = G.layers[static_cast<std::size_t>(l)];
        const auto& t = tape.layers[static_cast<std::size_t>(l)];

        // FFN: x_out = x_mid + silu(norm(x_mid) w1) w2.
        GL.w2.noalias() += t.g.transpose() * dx;
        Matrix<T> dg = dx * L.w2.transpose();
        Matrix<T> dh_pre = dg.cwiseProduct(t.h.unaryExpr([](T z) { return detail::silu_grad(z); }));
        GL.w1.noalias() += t.b.transpose() * dh_pre;
        Matrix<T> db = dh_pre * L.w1.transpose();
        dx += norm_backward(t.x_mid, t.inv2, L.ffn_norm, db, GL.ffn_norm);

        // Attention: x_mid = x_in + attn(norm(x_in)) wo.
        GL.wo.noalias() += t.attn_out.transpose() * dx;
        Matrix<T> dattn = dx * L.wo.transpose();
        Matrix<T> dq = Matrix<T>::Zero(t.q.rows(), d);
        Matrix<T> dk = Matrix<T>::Zero(t.k.rows(), d);
        Matrix<T> dv = Matrix<T>::Zero(t.v.rows(), d);
        for (int hd = 0; hd < cfg.n_heads; ++hd) {
            const auto& Pm = t.probs[static_cast<std::size_t>(hd)];
            const auto dO = dattn.middleCols(hd * dh, dh);
            dv.middleCols(hd * dh, dh).noalias() += Pm.transpose() * dO;
            Matrix<T> dP = dO * t.v.middleCols(hd * dh, dh).transpose();
            Matrix<T> dS(Pm.rows(), Pm.cols());
            for (Eigen::Index r = 0; r < Pm.rows(); ++r) {
                const T dot = dP.row(r).dot(Pm.row(r));
                dS.row(r) = Pm.row(r).cwiseProduct((dP.row(r).array() - dot).matrix());
            }
            dS *= scale;
            dq.middleCols(hd * dh, dh).noalias() += dS * t.k.middleCols(hd * dh, dh);
            dk.middleCols(hd * dh, dh).noalias() += dS.transpose() * t.q.middleCols(hd * dh, dh);
        }
        model.apply_rope(dq, tape.positions, true);
        model.apply_rope(dk, tape.positions, true);
        GL.wq.noalias() += t.a.transpose() * dq;
        GL.wk.noalias() += t.a.transpose() * dk;
        GL.wv.noalias() += t.a.transpose() * dv;
        Matrix<T> da = dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
        dx += norm_backward(t.x_in, t.inv1, L.attn_norm, da, GL.attn_norm);
    }

    for (std::size_t i = 0; i < tape.tokens.size(); ++i) {
        G.embed.row(tape.tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
    }
    return G;
}

}  // namespace smdm
