#pragma once

// Verification suites, the cache/truncation ablation engine with exact
// token accounting, and the golden merged-mask fixture.

#include "smdm/oracles.hpp"
#include "smdm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace smdm {

// ---------------------------------------------------------------------------
// Golden fixture: prompt P0..P2, response X0..X5, steps {X1,X3}, {X0},
// {X2,X5}, {X4}; two clean blocks, two masked blocks, one register each.

inline BlockAssignment golden_assignment() {
    return partition_from_steps({{1, 3}, {0}, {2, 5}, {4}}, 3, 6, 2).with_registers(1);
}

// Merged sequence sorted by block: P0 P1 P2 X1 X3 X0 M2 M5 R3 M4 R4.
inline AttentionMask golden_merged_mask() {
    const auto a = golden_assignment();
    const auto tokens = layout_tokens(a);
    std::vector<LayoutToken> sorted;
    for (int i : block_sorted_order(tokens)) {
        sorted.push_back(tokens[static_cast<std::size_t>(i)]);
    }
    return step_causal_mask(sorted, a.M, a.N);
}

inline const std::vector<std::string>& golden_merged_rows() {
    static const std::vector<std::string> rows = {
        "11100000000",  // P0
        "11100000000",  // P1
        "11100000000",  // P2
        "11111000000",  // X1
        "11111000000",  // X3
        "11111100000",  // X0
        "11111111100",  // M2
        "11111111100",  // M5
        "11111111100",  // R3
        "11111100011",  // M4
        "11111100011",  // R4
    };
    return rows;
}

inline AttentionMask mask_from_rows(const std::vector<std::string>& rows) {
    AttentionMask m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t q = 0; q < rows.size(); ++q) {
        require(rows[q].size() == m.cols(), "mask_from_rows: ragged rows");
        for (std::size_t k = 0; k < m.cols(); ++k) {
            m.set(q, k, rows[q][k] == '1');
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Ablation engine

struct AblationToggle {
    bool cache_prompt = true;
    bool cache_response = true;
    bool truncate_response = true;

    std::string str() const {
        return std::string(cache_prompt ? "P" : "-") + (cache_response ? "R" : "-") + (truncate_response ? "T" : "-");
    }

    // All eight combinations, all-off first and all-on last.
    static std::vector<AblationToggle> grid() {
        std::vector<AblationToggle> out;
        for (int bits = 0; bits < 8; ++bits) {
            out.push_back({(bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0});
        }
        return out;
    }
};

struct TokenCounts {
    std::size_t prompt = 0;
    std::size_t response = 0;  // decoded tokens fed again (new-cache or recomputed)
    std::size_t masked = 0;    // [M] and [reg] rows
    std::size_t total() const { return prompt + response + masked; }
};

// Closed-form token-forwards for a run with the given per-step sizes.
// Registers are only fed with truncation on. With cache_response the final
// commit of C_K re-feeds an uncached prompt as context.
inline TokenCounts analytic_token_forwards(int S, const std::vector<int>& step_sizes, int m, AblationToggle tg) {
    const auto K = step_sizes.size();
    std::size_t L = 0;
    for (int s : step_sizes) {
        L += static_cast<std::size_t>(s);
    }
    TokenCounts c;
    const std::size_t prompt_feeds = tg.cache_prompt ? 1 : K + (tg.cache_response && K > 0 ? 1 : 0);
    c.prompt = prompt_feeds * static_cast<std::size_t>(S);
    std::size_t decoded = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (!tg.cache_response) {
            c.response += decoded;
        }
        c.masked += tg.truncate_response ? static_cast<std::size_t>(step_sizes[k] + m) : L - decoded;
        decoded += static_cast<std::size_t>(step_sizes[k]);
    }
    if (tg.cache_response) {
        c.response = L;  // each C_k enters the cache once, C_K by the final commit
    }
    return c;
}

struct ToggledRun {
    MaskedSequence response;
    std::vector<Matrix<double>> decode_logits;  // per step, rows in ascending position
    std::size_t token_forwards = 0;
};

// Greedy pre-generated-order decoding under any toggle combination. Cached
// and recomputed tokens see the same step-causal context, so decode logits
// depend only on truncate_response.
template <typename T>
ToggledRun run_toggled(const Model<T>& model, const std::vector<TokenId>& prompt, int response_len,
                       const DecodeOrder& order, int reg_count, AblationToggle tg, bool keep_logits = false) {
    const auto& vocab = model.config().vocab;
    order.validate(response_len);
    require(reg_count >= 0, "run_toggled: negative register count");
    detail::check_prompt(prompt, vocab);
    const int S = static_cast<int>(prompt.size());
    const int K = order.num_steps();
    const int m = tg.truncate_response ? reg_count : 0;

    ToggledRun out;
    out.response.tokens.assign(static_cast<std::size_t>(response_len), vocab.mask_id);
    std::vector<int> step_of(static_cast<std::size_t>(response_len), 0);
    for (int k = 1; k <= K; ++k) {
        for (int r : order.steps[static_cast<std::size_t>(k - 1)]) {
            step_of[static_cast<std::size_t>(r)] = k;
        }
    }

    KVCache<T> cache(model.config());
    std::vector<int> cache_blocks;

    struct Row {
        TokenId token;
        Position position;
        int block;
    };
    auto run = [&](const std::vector<Row>& rows, std::size_t commit, int M, int N) {
        std::vector<TokenId> toks;
        std::vector<Position> pos;
        BlockPredicateMask mask;
        mask.M = M;
        mask.N = N;
        mask.key_blocks = cache_blocks;
        for (const auto& r : rows) {
            toks.push_back(r.token);
            pos.push_back(r.position);
            mask.query_blocks.push_back(r.block);
            mask.key_blocks.push_back(r.block);
        }
        out.token_forwards += rows.size();
        auto hidden = forward_hidden<T>(model, &cache, toks, pos, mask, commit);
        for (std::size_t i = 0; i < commit; ++i) {
            cache_blocks.push_back(rows[i].block);
        }
        return hidden;
    };

    if (tg.cache_prompt && S > 0) {
        std::vector<Row> rows;
        for (int i = 0; i < S; ++i) {
            rows.push_back({prompt[static_cast<std::size_t>(i)], i, 0});
        }
        run(rows, rows.size(), 0, 0);
    }

    for (int k = 1; k <= K; ++k) {
        std::vector<Row> rows;
        std::size_t commit = 0;
        if (tg.cache_response && k > 1) {
            for (int r : order.steps[static_cast<std::size_t>(k - 2)]) {
                rows.push_back({out.response.tokens[static_cast<std::size_t>(r)], S + r, k - 1});
            }
            commit = rows.size();
        }
        if (!tg.cache_prompt) {
            for (int i = 0; i < S; ++i) {
                rows.push_back({prompt[static_cast<std::size_t>(i)], i, 0});
            }
        }
        if (!tg.cache_response) {
            for (int r = 0; r < response_len; ++r) {
                const int s = step_of[static_cast<std::size_t>(r)];
                if (s < k) {
                    rows.push_back({out.response.tokens[static_cast<std::size_t>(r)], S + r, s});
                }
            }
        }
        const std::size_t first_decode = rows.size();
        const auto& decode = order.steps[static_cast<std::size_t>(k - 1)];
        std::vector<int> sorted_decode = decode;
        std::sort(sorted_decode.begin(), sorted_decode.end());
        for (int r : sorted_decode) {
            rows.push_back({vocab.mask_id, S + r, k});
        }
        if (!tg.truncate_response) {
            for (int r = 0; r < response_len; ++r) {
                if (step_of[static_cast<std::size_t>(r)] > k) {
                    rows.push_back({vocab.mask_id, S + r, k});
                }
            }
        }
        for (Position p : register_positions(S, response_len, m)) {
            rows.push_back({vocab.reg_id, p, k});
        }
        const auto hidden = run(rows, commit, k - 1, 1);
        std::vector<std::size_t> sel(sorted_decode.size());
        std::iota(sel.begin(), sel.end(), first_decode);
        const auto logits = head_logits(model, hidden, sel);
        for (std::size_t i = 0; i < sorted_decode.size(); ++i) {
            out.response.tokens[static_cast<std::size_t>(sorted_decode[i])] =
                detail::argmax_row(logits.row(static_cast<Eigen::Index>(i)));
        }
        if (keep_logits) {
            out.decode_logits.push_back(logits.template cast<double>());
        }
    }

    if (tg.cache_response && K > 0) {
        std::vector<Row> rows;
        for (int r : order.steps[static_cast<std::size_t>(K - 1)]) {
            rows.push_back({out.response.tokens[static_cast<std::size_t>(r)], S + r, K});
        }
        const std::size_t commit = rows.size();
        if (!tg.cache_prompt) {
            for (int i = 0; i < S; ++i) {
                rows.push_back({prompt[static_cast<std::size_t>(i)], i, 0});
            }
        }
        run(rows, commit, K, 0);
    }
    return out;
}

struct BenchConfig {
    int L = 1024;
    int S = 128;
    int K = 64;
    int m = 64;
    int repeats = 5;
    std::uint64_t seed = 0;
    ModelConfig model;  // max_position is raised to S+L+m if needed
};

struct BenchRow {
    AblationToggle toggle;
    std::size_t analytic = 0;
    std::size_t instrumented = 0;
    double wall_ms = 0.0;  // median over repeats
    double token_speedup = 0.0;
    double wall_speedup = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::size_t dense_tokens = 0;
    double dense_wall_ms = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs each toggle combination `repeats` times sequentially. Speedups are
// relative to the all-off row, which is measured even when not requested.
inline BenchReport bench(const BenchConfig& cfg, const std::vector<AblationToggle>& toggles) {
    require(cfg.L >= 1 && cfg.S >= 0 && cfg.m >= 0, "bench: bad sizes");
    require(cfg.K >= 1 && cfg.K <= cfg.L, "bench: need 1 <= K <= L");
    require(cfg.repeats >= 1, "bench: repeats must be >= 1");
    auto mc = cfg.model;
    mc.max_position = std::max(mc.max_position, cfg.S + cfg.L + cfg.m);
    mc.seed = cfg.seed;
    const Model<float> model(mc);
    Rng rng(cfg.seed);
    std::vector<TokenId> prompt;
    for (int i = 0; i < cfg.S; ++i) {
        prompt.push_back(static_cast<TokenId>(uniform_below(rng, static_cast<std::size_t>(mc.vocab.size))));
    }
    const auto order = random_order(cfg.L, cfg.K, rng());
    std::vector<int> sizes;
    for (const auto& s : order.steps) {
        sizes.push_back(static_cast<int>(s.size()));
    }

    auto measure = [&](AblationToggle tg) {
        BenchRow row;
        row.toggle = tg;
        row.analytic = analytic_token_forwards(cfg.S, sizes, cfg.m, tg).total();
        std::vector<double> times;
        for (int r = 0; r < cfg.repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto run = run_toggled(model, prompt, cfg.L, order, cfg.m, tg);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            row.instrumented = run.token_forwards;
        }
        row.wall_ms = median(times);
        return row;
    };

    BenchReport rep;
    const AblationToggle off{false, false, false};
    std::optional<BenchRow> dense;
    for (const auto& tg : toggles) {
        auto row = measure(tg);
        if (!tg.cache_prompt && !tg.cache_response && !tg.truncate_response) {
            dense = row;
        }
        rep.rows.push_back(row);
    }
    if (!dense) {
        dense = measure(off);
    }
    rep.dense_tokens = dense->analytic;
    rep.dense_wall_ms = dense->wall_ms;
    for (auto& row : rep.rows) {
        row.token_speedup = static_cast<double>(rep.dense_tokens) / static_cast<double>(row.analytic);
        row.wall_speedup = row.wall_ms > 0.0 ? rep.dense_wall_ms / row.wall_ms : 0.0;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Verification suites

struct SuiteResult {
    std::string name;
    bool passed = true;
    std::size_t checks = 0;
    std::vector<std::string> failures;
    double max_error = 0.0;

    void fail(std::string msg) {
        passed = false;
        if (failures.size() < 10) {
            failures.push_back(std::move(msg));
        }
    }
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    int trials = 100;
    bool inject_fault = false;  // corrupt one mask cell before comparing
};

struct VerifyReport {
    std::vector<SuiteResult> suites;
    bool vacuous = false;
    bool passed() const {
        return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
    }
};

namespace detail {

inline BlockAssignment random_assignment(Rng& rng, int max_blocks, int max_len, int max_regs) {
    const int M = uniform_int(rng, 0, max_blocks);
    const int N = uniform_int(rng, 1, max_blocks);
    const int S = uniform_int(rng, 0, std::min(8, max_len / 2));
    const int L = uniform_int(rng, 1, max_len - S);
    BlockAssignment a;
    a.prompt_len = S;
    a.M = M;
    a.N = N;
    a.block_of.assign(static_cast<std::size_t>(S), 0);
    for (int i = 0; i < L; ++i) {
        a.block_of.push_back(uniform_int(rng, 1, M + N));
    }
    return a.with_registers(uniform_int(rng, 0, max_regs));
}

inline ModelConfig random_model_config(Rng& rng, int max_position) {
    ModelConfig c;
    c.n_layers = uniform_int(rng, 1, 2);
    c.n_heads = uniform_int(rng, 1, 2);
    c.d_model = 8 * c.n_heads;
    c.d_ff = 16;
    c.vocab = Vocabulary::with_specials(uniform_int(rng, 4, 24));
    c.max_position = max_position;
    c.seed = rng();
    return c;
}

struct RandomInstance {
    ModelConfig cfg;
    std::vector<TokenId> prompt;
    int L = 0;
    int m = 0;
    DecodeOrder order;
};

inline RandomInstance random_instance(Rng& rng) {
    static const int regs[] = {0, 1, 4, 8};
    RandomInstance in;
    const int S = uniform_int(rng, 0, 16);
    in.L = uniform_int(rng, 1, 64);
    in.m = regs[uniform_below(rng, 4)];
    const int K = uniform_int(rng, 1, std::min(8, in.L));
    in.cfg = random_model_config(rng, S + in.L + in.m);
    for (int i = 0; i < S; ++i) {
        in.prompt.push_back(static_cast<TokenId>(uniform_below(rng, static_cast<std::size_t>(in.cfg.vocab.size))));
    }
    in.order = random_order(in.L, K, rng());
    return in;
}

// Steps through the sparse cached path and, at every step, the uncached
// materialized forward over the same path; returns the max-abs logit gap.
template <typename T>
double cache_equivalence_gap(const Model<T>& model, const RandomInstance& in) {
    const auto& vocab = model.config().vocab;
    const int S = static_cast<int>(in.prompt.size());
    KVCache<T> cache(model.config());
    const Segment none;
    if (S > 0) {
        Segment pre;
        for (int i = 0; i < S; ++i) {
            pre.push(in.prompt[static_cast<std::size_t>(i)], i);
        }
        forward_step(model, cache, pre, none, none);
    }
    const Segment regs = register_segment(vocab, S, in.L, in.m);
    MaskedSequence response;
    response.tokens.assign(static_cast<std::size_t>(in.L), vocab.mask_id);
    Segment prev;
    double gap = 0.0;
    for (int k = 1; k <= in.order.num_steps(); ++k) {
        Segment decode;
        for (int r : in.order.steps[static_cast<std::size_t>(k - 1)]) {
            decode.push(vocab.mask_id, S + r);
        }
        const auto sparse = forward_step(model, cache, prev, decode, regs);

        const auto a = partition_from_steps(in.order.steps, S, in.L, k - 1).with_registers(in.m);
        const auto path = materialize_path(a, k, in.prompt, response, vocab);
        const auto dense = forward_full(model, path.tokens, path.positions, path_square_mask(a, k));
        for (std::size_t i = 0; i < path.decode_rows.size(); ++i) {
            const auto diff = (sparse.row(static_cast<Eigen::Index>(i)) -
                               dense.row(static_cast<Eigen::Index>(path.decode_rows[i])))
                                  .cwiseAbs()
                                  .maxCoeff();
            gap = std::max(gap, static_cast<double>(diff));
        }
        Segment next;
        for (std::size_t i = 0; i < decode.size(); ++i) {
            const TokenId tok = argmax_row(sparse.row(static_cast<Eigen::Index>(i)));
            response.tokens[static_cast<std::size_t>(decode.positions[i] - S)] = tok;
            next.push(tok, decode.positions[i]);
        }
        prev = std::move(next);
    }
    return gap;
}

}  // namespace detail

inline SuiteResult verify_cache_equivalence(const VerifyOptions& opt) {
    SuiteResult r;
    r.name = "cache-equivalence";
    Rng rng(opt.seed ^ 0xcace0001ULL);
    for (int t = 0; t < opt.trials; ++t) {
        const auto in = detail::random_instance(rng);
        const Model<float> mf(in.cfg);
        const auto mdl = mf.template cast<double>();
        const double gf = detail::cache_equivalence_gap(mf, in);
        const double gd = detail::cache_equivalence_gap(mdl, in);
        r.checks += 2;
        r.max_error = std::max(r.max_error, gf);
        if (!(gf <= 1e-4)) {
            r.fail("trial " + std::to_string(t) + ": float32 gap " + std::to_string(gf));
        }
        if (!(gd <= 1e-10)) {
            r.fail("trial " + std::to_string(t) + ": float64 gap " + std::to_string(gd));
        }
    }
    return r;
}

inline SuiteResult verify_mask_oracle(const VerifyOptions& opt) {
    SuiteResult r;
    r.name = "mask-oracle";
    Rng rng(opt.seed ^ 0x3a5c0002ULL);
    const int n = opt.trials > 0 ? std::max(opt.trials, 200) : 0;
    for (int t = 0; t < n; ++t) {
        const auto a = detail::random_assignment(rng, 6, 64, 3);
        const auto tokens = layout_tokens(a);
        auto got = step_causal_mask(a);
        if (opt.inject_fault && t == 0) {
            got.set(0, got.cols() - 1, !got.allowed(0, got.cols() - 1));
        }
        const auto want = oracle::step_causal_mask(tokens, a.M, a.N);
        ++r.checks;
        if (!got.same_pattern(want)) {
            r.fail("step-causal trial " + std::to_string(t) + ": " + oracle::describe_mismatch(got, want));
        }

        const auto nc = uniform_below(rng, 6);
        const auto nn = uniform_below(rng, 4);
        const auto nd = 1 + uniform_below(rng, 4);
        const auto nr = uniform_below(rng, 4);
        auto inf = build_inference_mask(nc, nn, nd, nr);
        if (opt.inject_fault && t == 0) {
            inf.set(0, inf.cols() - 1, !inf.allowed(0, inf.cols() - 1));
        }
        ++r.checks;
        const auto want_inf = oracle::inference_mask(oracle::kinds(nc, nn, nd, nr));
        if (!inf.same_pattern(want_inf)) {
            r.fail("inference trial " + std::to_string(t) + ": " + oracle::describe_mismatch(inf, want_inf));
        }
    }
    return r;
}

inline SuiteResult verify_path_extraction(const VerifyOptions& opt) {
    SuiteResult r;
    r.name = "path-extraction";
    Rng rng(opt.seed ^ 0x9a770003ULL);
    auto check = [&](const BlockAssignment& a, const std::string& tag) {
        for (int b = a.M + 1; b <= a.M + a.N; ++b) {
            const auto p = path_tokens(a, b);
            if (p.decode.empty() && p.new_cache.empty()) {
                continue;  // no live query: not an inference step
            }
            const auto got = extract_path_mask(a, b);
            const auto want = build_inference_mask(p.cached.size(), p.new_cache.size(), p.decode.size(), p.regs.size());
            ++r.checks;
            if (!got.same_pattern(want)) {
                r.fail(tag + " block " + std::to_string(b) + ": " + oracle::describe_mismatch(got, want));
            }
        }
    };
    for (int t = 0; t < opt.trials; ++t) {
        check(detail::random_assignment(rng, 5, 40, 3), "trial " + std::to_string(t));
    }
    if (opt.trials > 0) {
        check(golden_assignment(), "golden");
        ++r.checks;
        const auto golden = mask_from_rows(golden_merged_rows());
        const auto got = golden_merged_mask();
        if (!got.same_pattern(golden)) {
            r.fail("golden merged mask: " + oracle::describe_mismatch(got, golden));
        }
    }
    return r;
}

inline SuiteResult verify_roundtrip(const VerifyOptions& opt) {
    SuiteResult r;
    r.name = "roundtrip";
    Rng rng(opt.seed ^ 0x70d40004ULL);
    const int n = opt.trials > 0 ? std::max(opt.trials, 1000) : 0;
    for (int t = 0; t < n; ++t) {
        const auto vocab = Vocabulary::with_specials(uniform_int(rng, 1, 32));
        const int L = uniform_int(rng, 0, 64);
        const double p = uniform01(rng);
        MaskedSequence x;
        for (int i = 0; i < L; ++i) {
            x.tokens.push_back(uniform01(rng) < p ? vocab.mask_id
                                                  : static_cast<TokenId>(uniform_below(rng, static_cast<std::size_t>(vocab.size))));
        }
        ++r.checks;
        if (!(to_dense(to_sparse(x, vocab, uniform_int(rng, 0, 8)), vocab) == x)) {
            r.fail("trial " + std::to_string(t) + ": roundtrip changed the sequence");
        }
    }
    return r;
}

// Decoded tokens stay fixed: identical in every later model input and in the
// output; plus greedy token match against the dense reference.
inline SuiteResult verify_conservation(const VerifyOptions& opt) {
    SuiteResult r;
    r.name = "conservation";
    Rng rng(opt.seed ^ 0xc0a50005ULL);
    for (int t = 0; t < opt.trials; ++t) {
        const auto in = detail::random_instance(rng);
        const Model<float> model(in.cfg);
        const int S = static_cast<int>(in.prompt.size());
        std::vector<std::pair<std::vector<Position>, std::vector<TokenId>>> seen;
        auto observer = [&](const StepInput& s) {
            std::vector<Position> pos = *s.cache_positions;
            std::vector<TokenId> tok = *s.cache_tokens;
            pos.insert(pos.end(), s.new_cache->positions.begin(), s.new_cache->positions.end());
            tok.insert(tok.end(), s.new_cache->tokens.begin(), s.new_cache->tokens.end());
            seen.emplace_back(std::move(pos), std::move(tok));
        };
        Rng srng(rng());
        const auto sparse = sample_pregen(model, in.prompt, in.L, in.order, discretize_schedule(in.order.num_steps()),
                                          in.m, srng, DecodeRule::greedy, observer);
        ++r.checks;
        bool ok = sparse.response.count_masked(in.cfg.vocab) == 0;
        for (const auto& [pos, tok] : seen) {
            for (std::size_t i = 0; i < pos.size(); ++i) {
                const TokenId want = pos[i] < S ? in.prompt[static_cast<std::size_t>(pos[i])]
                                                : sparse.response.tokens[static_cast<std::size_t>(pos[i] - S)];
                ok = ok && tok[i] == want;
            }
        }
        if (!ok) {
            r.fail("trial " + std::to_string(t) + ": a decoded token changed after its step");
        }
        Rng drng(rng());
        const auto dense = sample_dense_reference(model, in.prompt, in.L, in.order,
                                                  discretize_schedule(in.order.num_steps()), in.m, drng);
        ++r.checks;
        if (!(dense.response == sparse.response)) {
            r.fail("trial " + std::to_string(t) + ": sparse and dense greedy trajectories differ");
        }
    }
    return r;
}

inline VerifyReport verify(const VerifyOptions& opt) {
    require(opt.trials >= 0, "verify: trials must be >= 0");
    VerifyReport rep;
    rep.vacuous = opt.trials == 0;
    rep.suites.push_back(verify_cache_equivalence(opt));
    rep.suites.push_back(verify_mask_oracle(opt));
    rep.suites.push_back(verify_path_extraction(opt));
    rep.suites.push_back(verify_roundtrip(opt));
    rep.suites.push_back(verify_conservation(opt));
    return rep;
}

}  // namespace smdm
