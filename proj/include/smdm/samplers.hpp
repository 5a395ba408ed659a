#pragma once

// Decoding loops: pre-generated order with the sparse cached path, the
// confidence-driven semi-autoregressive block sampler, and the dense
// materialized reference used as the equivalence oracle.

#include "smdm/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace smdm {

// Response indices (0-based, relative to the response) decoded at each step.
struct DecodeOrder {
    std::vector<std::vector<int>> steps;

    int num_steps() const { return static_cast<int>(steps.size()); }

    void validate(int response_len) const {
        std::vector<char> seen(static_cast<std::size_t>(response_len), 0);
        for (const auto& s : steps) {
            require(!s.empty(), "decode order: empty step");
            for (int r : s) {
                require(r >= 0 && r < response_len, "decode order: index out of range");
                require(!seen[static_cast<std::size_t>(r)], "decode order: index decoded twice");
                seen[static_cast<std::size_t>(r)] = 1;
            }
        }
        require(std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }),
                "decode order: does not cover the response");
    }
};

// Stratified pre-generated order over an H x W grid (row-major indices).
// The grid is cut into s x s coarse cells with s = floor(sqrt(K)); each cell
// is shuffled and its members interleaved by relative rank, so every step
// draws from every cell in proportion to the cell's size.
inline DecodeOrder pregen_order_2d(int H, int W, int K, std::uint64_t seed) {
    require(H >= 1 && W >= 1, "pregen_order_2d: grid dimensions must be positive");
    require(K >= 1, "pregen_order_2d: K must be >= 1");
    require(K <= H * W, "pregen_order_2d: more steps than grid cells");
    Rng rng(seed);
    const int s = std::min({static_cast<int>(std::floor(std::sqrt(static_cast<double>(K)))), H, W});
    const int cell_h = (H + s - 1) / s;
    const int cell_w = (W + s - 1) / s;
    const int cells_w = (W + cell_w - 1) / cell_w;
    const int cells = ((H + cell_h - 1) / cell_h) * cells_w;

    std::vector<std::vector<int>> strata(static_cast<std::size_t>(cells));
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            strata[static_cast<std::size_t>((i / cell_h) * cells_w + j / cell_w)].push_back(i * W + j);
        }
    }
    for (auto& st : strata) {
        shuffle(st.begin(), st.end(), rng);
    }
    std::vector<int> tie(static_cast<std::size_t>(cells));
    std::iota(tie.begin(), tie.end(), 0);
    shuffle(tie.begin(), tie.end(), rng);

    struct Entry {
        int index, rank, size, tie;
    };
    std::vector<Entry> entries;
    for (int c = 0; c < cells; ++c) {
        const auto& st = strata[static_cast<std::size_t>(c)];
        for (int r = 0; r < static_cast<int>(st.size()); ++r) {
            entries.push_back({st[static_cast<std::size_t>(r)], r, static_cast<int>(st.size()), tie[static_cast<std::size_t>(c)]});
        }
    }
    // Relative rank (r + 1/2) / size, compared exactly.
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        const long lhs = static_cast<long>(2 * a.rank + 1) * b.size;
        const long rhs = static_cast<long>(2 * b.rank + 1) * a.size;
        return lhs != rhs ? lhs < rhs : a.tie < b.tie;
    });

    const auto sizes = step_sizes_from_schedule(discretize_schedule(K), H * W);
    DecodeOrder order;
    std::size_t cursor = 0;
    for (int n : sizes) {
        std::vector<int> step;
        for (int i = 0; i < n; ++i) {
            step.push_back(entries[cursor++].index);
        }
        std::sort(step.begin(), step.end());
        order.steps.push_back(std::move(step));
    }
    return order;
}

// Order that decodes contiguous near-equal chunks of a random permutation.
inline DecodeOrder random_order(int response_len, int K, std::uint64_t seed) {
    require(K >= 1 && K <= response_len, "random_order: need 1 <= K <= L");
    Rng rng(seed);
    std::vector<int> perm(static_cast<std::size_t>(response_len));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    DecodeOrder order;
    std::size_t cursor = 0;
    for (int n : step_sizes_from_schedule(discretize_schedule(K), response_len)) {
        std::vector<int> step(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                              perm.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(n)));
        cursor += static_cast<std::size_t>(n);
        std::sort(step.begin(), step.end());
        order.steps.push_back(std::move(step));
    }
    return order;
}

enum class DecodeRule { greedy, categorical };

struct StepRecord {
    int step = 0;
    std::vector<Position> new_cache;   // absolute positions fed as new-cache
    std::vector<Position> fed_masks;   // absolute positions fed as [M]
    std::vector<Position> decoded;     // absolute positions resolved this step
    std::vector<TokenId> decoded_tokens;
    std::size_t input_tokens = 0;
};

struct SampleResult {
    MaskedSequence response;
    std::vector<StepRecord> trace;
    std::size_t token_forwards = 0;  // tokens processed over all model calls
};

namespace detail {

// Lowest index wins ties.
template <typename Derived>
TokenId argmax_row(const Eigen::MatrixBase<Derived>& row) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < row.size(); ++c) {
        if (row(c) > row(best)) {
            best = c;
        }
    }
    return static_cast<TokenId>(best);
}

// Resolve a scheduled position: its posterior uses s = 0, so it always
// unmasks.
template <typename Derived>
TokenId decode_scheduled(const Eigen::MatrixBase<Derived>& row, DecodeRule rule, double t, const Vocabulary& vocab,
                         Rng& rng) {
    if (rule == DecodeRule::greedy) {
        return argmax_row(row);
    }
    const auto dist = posterior_unmask_dist(softmax_row(row), t, 0.0);
    return reverse_step_token(vocab.mask_id, dist, vocab, rng);
}

inline Segment register_segment(const Vocabulary& vocab, int prompt_len, int response_len, int reg_count) {
    Segment regs;
    for (Position p : register_positions(prompt_len, response_len, reg_count)) {
        regs.push(vocab.reg_id, p);
    }
    return regs;
}

inline void check_prompt(const std::vector<TokenId>& prompt, const Vocabulary& vocab) {
    for (auto t : prompt) {
        require(vocab.is_ordinary(t), "sampler: prompt must hold ordinary tokens");
    }
}

}  // namespace detail

// Sparse cached sampling along a pre-generated order: prefill the prompt,
// then at step k feed C_{k-1} (new cache) + C_k ([M]) + registers, and
// finally commit C_K so the cache ends holding the full sequence.
template <typename T>
SampleResult sample_pregen(const Model<T>& model, const std::vector<TokenId>& prompt, int response_len,
                           const DecodeOrder& order, const DiffusionSchedule& schedule, int reg_count, Rng& rng,
                           DecodeRule rule = DecodeRule::greedy, const StepObserver& observer = {}) {
    const auto& vocab = model.config().vocab;
    order.validate(response_len);
    schedule.validate();
    require(schedule.num_steps() == order.num_steps(), "sample_pregen: schedule and order step counts differ");
    require(reg_count >= 0, "sample_pregen: negative register count");
    detail::check_prompt(prompt, vocab);
    const int S = static_cast<int>(prompt.size());

    SampleResult out;
    out.response.tokens.assign(static_cast<std::size_t>(response_len), vocab.mask_id);
    KVCache<T> cache(model.config());
    const Segment none;
    if (S > 0) {
        Segment pre;
        for (int i = 0; i < S; ++i) {
            pre.push(prompt[static_cast<std::size_t>(i)], i);
        }
        forward_step(model, cache, pre, none, none, observer);
        out.token_forwards += pre.size();
    }
    const Segment regs = detail::register_segment(vocab, S, response_len, reg_count);

    Segment prev;
    for (int k = 1; k <= order.num_steps(); ++k) {
        Segment decode;
        for (int r : order.steps[static_cast<std::size_t>(k - 1)]) {
            decode.push(vocab.mask_id, S + r);
        }
        const auto logits = forward_step(model, cache, prev, decode, regs, observer);
        StepRecord rec;
        rec.step = k;
        rec.new_cache = prev.positions;
        rec.fed_masks = decode.positions;
        rec.input_tokens = prev.size() + decode.size() + regs.size();
        out.token_forwards += rec.input_tokens;

        const double t = schedule.steps[static_cast<std::size_t>(k - 1)];
        Segment next;
        for (std::size_t i = 0; i < decode.size(); ++i) {
            const TokenId tok = detail::decode_scheduled(logits.row(static_cast<Eigen::Index>(i)), rule, t, vocab, rng);
            out.response.tokens[static_cast<std::size_t>(decode.positions[i] - S)] = tok;
            next.push(tok, decode.positions[i]);
        }
        rec.decoded = next.positions;
        rec.decoded_tokens = next.tokens;
        out.trace.push_back(std::move(rec));
        prev = std::move(next);
    }
    if (!prev.empty()) {
        forward_step(model, cache, prev, none, none, observer);
        out.token_forwards += prev.size();
    }
    return out;
}

// Materialized input for path 0 -> 1 -> ... -> M -> b of an assignment:
// prompt and decoded tokens take their values, block-b positions are [M],
// registers are [reg]. Rows are in cache/new-cache/decode/register order.
struct PathInput {
    std::vector<TokenId> tokens;
    std::vector<Position> positions;
    std::vector<std::size_t> decode_rows;
};

inline PathInput materialize_path(const BlockAssignment& a, int masked_block, const std::vector<TokenId>& prompt,
                                  const MaskedSequence& response, const Vocabulary& vocab) {
    const auto layout = layout_tokens(a);
    const auto path = path_tokens(a, masked_block);
    const int S = static_cast<int>(prompt.size());
    PathInput in;
    for (int i : path.all()) {
        const auto& lt = layout[static_cast<std::size_t>(i)];
        in.positions.push_back(lt.position);
        if (lt.kind == TokenKind::reg) {
            in.tokens.push_back(vocab.reg_id);
        } else if (lt.kind == TokenKind::masked) {
            in.tokens.push_back(vocab.mask_id);
        } else if (lt.position < S) {
            in.tokens.push_back(prompt[static_cast<std::size_t>(lt.position)]);
        } else {
            const TokenId t = response.tokens[static_cast<std::size_t>(lt.position - S)];
            require(t != vocab.mask_id, "materialize_path: clean-history position is still masked");
            in.tokens.push_back(t);
        }
    }
    const std::size_t first = path.cached.size() + path.new_cache.size();
    for (std::size_t i = 0; i < path.decode.size(); ++i) {
        in.decode_rows.push_back(first + i);
    }
    return in;
}

enum class DenseVariant { step_causal, full_attention };

// Same trajectory as sample_pregen with nothing cached: every step
// materializes prompt, all decoded tokens, the current [M] set and the
// registers, under the step-causal mask of path 0 -> 1 -> ... -> k. The
// full-attention variant is a vanilla masked-diffusion pass over all S+L
// tokens and is not expected to match the sparse path.
template <typename T>
SampleResult sample_dense_reference(const Model<T>& model, const std::vector<TokenId>& prompt, int response_len,
                                    const DecodeOrder& order, const DiffusionSchedule& schedule, int reg_count,
                                    Rng& rng, DecodeRule rule = DecodeRule::greedy,
                                    DenseVariant variant = DenseVariant::step_causal) {
    const auto& vocab = model.config().vocab;
    order.validate(response_len);
    schedule.validate();
    require(schedule.num_steps() == order.num_steps(), "sample_dense_reference: schedule and order step counts differ");
    detail::check_prompt(prompt, vocab);
    const int S = static_cast<int>(prompt.size());

    SampleResult out;
    out.response.tokens.assign(static_cast<std::size_t>(response_len), vocab.mask_id);
    auto token_at = [&](Position p) {
        return p < S ? prompt[static_cast<std::size_t>(p)] : out.response.tokens[static_cast<std::size_t>(p - S)];
    };

    for (int k = 1; k <= order.num_steps(); ++k) {
        std::vector<TokenId> tokens;
        std::vector<Position> positions;
        std::vector<std::size_t> decode_rows;
        Matrix<T> logits;
        if (variant == DenseVariant::step_causal) {
            const auto a = partition_from_steps(order.steps, S, response_len, k - 1).with_registers(reg_count);
            auto in = materialize_path(a, k, prompt, out.response, vocab);
            tokens = std::move(in.tokens);
            positions = std::move(in.positions);
            decode_rows = std::move(in.decode_rows);
            logits = forward_full(model, tokens, positions, path_square_mask(a, k));
        } else {
            for (Position p = 0; p < S + response_len; ++p) {
                tokens.push_back(token_at(p));
                positions.push_back(p);
            }
            for (int r : order.steps[static_cast<std::size_t>(k - 1)]) {
                decode_rows.push_back(static_cast<std::size_t>(S + r));
            }
            logits = forward_full(model, tokens, positions, FullMask{tokens.size()});
        }
        out.token_forwards += tokens.size();

        StepRecord rec;
        rec.step = k;
        rec.input_tokens = tokens.size();
        const double t = schedule.steps[static_cast<std::size_t>(k - 1)];
        for (std::size_t row : decode_rows) {
            const Position p = positions[row];
            const TokenId tok = detail::decode_scheduled(logits.row(static_cast<Eigen::Index>(row)), rule, t, vocab, rng);
            rec.fed_masks.push_back(p);
            rec.decoded.push_back(p);
            rec.decoded_tokens.push_back(tok);
        }
        for (std::size_t i = 0; i < rec.decoded.size(); ++i) {
            out.response.tokens[static_cast<std::size_t>(rec.decoded[i] - S)] = rec.decoded_tokens[i];
        }
        out.trace.push_back(std::move(rec));
    }
    return out;
}

enum class Confidence { max_prob };

struct SemiARConfig {
    int block_size = 8;
    std::vector<int> block_order;  // empty: left to right
    int steps_per_block = 4;
    Confidence confidence = Confidence::max_prob;
    DecodeRule rule = DecodeRule::greedy;

    int num_blocks(int response_len) const { return (response_len + block_size - 1) / block_size; }

    void validate(int response_len) const {
        require(block_size >= 1, "semi-ar: block_size must be >= 1");
        require(steps_per_block >= 1, "semi-ar: steps_per_block must be >= 1");
        if (!block_order.empty()) {
            std::vector<int> sorted = block_order;
            std::sort(sorted.begin(), sorted.end());
            std::vector<int> expect(static_cast<std::size_t>(num_blocks(response_len)));
            std::iota(expect.begin(), expect.end(), 0);
            require(sorted == expect, "semi-ar: block_order must be a permutation of the blocks");
        }
    }
};

// Block-wise sampling: inside the active block every still-masked position
// is fed each step and the n = ceil(remaining / steps_left) most confident
// are resolved; masked positions of other blocks are never fed.
template <typename T>
SampleResult sample_semi_ar(const Model<T>& model, const std::vector<TokenId>& prompt, int response_len,
                            const SemiARConfig& cfg, int reg_count, Rng& rng, const StepObserver& observer = {}) {
    const auto& vocab = model.config().vocab;
    cfg.validate(response_len);
    require(reg_count >= 0, "sample_semi_ar: negative register count");
    detail::check_prompt(prompt, vocab);
    const int S = static_cast<int>(prompt.size());
    const int n_blocks = cfg.num_blocks(response_len);
    std::vector<int> blocks = cfg.block_order;
    if (blocks.empty()) {
        blocks.resize(static_cast<std::size_t>(n_blocks));
        std::iota(blocks.begin(), blocks.end(), 0);
    }

    SampleResult out;
    out.response.tokens.assign(static_cast<std::size_t>(response_len), vocab.mask_id);
    KVCache<T> cache(model.config());
    const Segment none;
    if (S > 0) {
        Segment pre;
        for (int i = 0; i < S; ++i) {
            pre.push(prompt[static_cast<std::size_t>(i)], i);
        }
        forward_step(model, cache, pre, none, none, observer);
        out.token_forwards += pre.size();
    }
    const Segment regs = detail::register_segment(vocab, S, response_len, reg_count);

    Segment prev;
    int k = 0;
    for (int b : blocks) {
        std::vector<Position> remaining;
        for (int r = b * cfg.block_size; r < std::min(response_len, (b + 1) * cfg.block_size); ++r) {
            remaining.push_back(S + r);
        }
        for (int s = 0; s < cfg.steps_per_block && !remaining.empty(); ++s) {
            Segment decode;
            for (Position p : remaining) {
                decode.push(vocab.mask_id, p);
            }
            const auto logits = forward_step(model, cache, prev, decode, regs, observer);
            StepRecord rec;
            rec.step = ++k;
            rec.new_cache = prev.positions;
            rec.fed_masks = remaining;
            rec.input_tokens = prev.size() + decode.size() + regs.size();
            out.token_forwards += rec.input_tokens;

            std::vector<double> conf(remaining.size());
            for (std::size_t i = 0; i < remaining.size(); ++i) {
                const auto p = softmax_row(logits.row(static_cast<Eigen::Index>(i)));
                conf[i] = *std::max_element(p.begin(), p.end());
            }
            const int steps_left = cfg.steps_per_block - s;
            const auto n = static_cast<std::size_t>((static_cast<int>(remaining.size()) + steps_left - 1) / steps_left);
            std::vector<std::size_t> idx(remaining.size());
            std::iota(idx.begin(), idx.end(), 0);
            // remaining is position-sorted, so a stable sort breaks ties by lowest position.
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return conf[x] > conf[y]; });
            idx.resize(n);
            std::sort(idx.begin(), idx.end());

            Segment next;
            for (std::size_t i : idx) {
                const auto row = logits.row(static_cast<Eigen::Index>(i));
                const TokenId tok = cfg.rule == DecodeRule::greedy
                                        ? detail::argmax_row(row)
                                        : reverse_step_token(vocab.mask_id, posterior_unmask_dist(softmax_row(row), 1.0, 0.0), vocab, rng);
                next.push(tok, remaining[i]);
                out.response.tokens[static_cast<std::size_t>(remaining[i] - S)] = tok;
            }
            std::vector<Position> rest;
            for (std::size_t i = 0, j = 0; i < remaining.size(); ++i) {
                if (j < idx.size() && idx[j] == i) {
                    ++j;
                } else {
                    rest.push_back(remaining[i]);
                }
            }
            remaining = std::move(rest);
            rec.decoded = next.positions;
            rec.decoded_tokens = next.tokens;
            out.trace.push_back(std::move(rec));
            prev = std::move(next);
        }
    }
    if (!prev.empty()) {
        forward_step(model, cache, prev, none, none, observer);
        out.token_forwards += prev.size();
    }
    return out;
}

}  // namespace smdm
