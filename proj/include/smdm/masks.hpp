#pragma once

// Attention masks: the per-step inference mask over cache / new-cache /
// decode / register tokens, and the training-time step-causal mask over
// block-assigned sequences.

#include "smdm/sparse_seq.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace smdm {

enum class Role { prompt, clean, masked, reg, cached, new_cache, decode, reg_live };

struct Label {
    Role role = Role::prompt;
    int block = -1;           // training roles only
    Position position = -1;   // -1 when the builder only knows counts

    std::string str() const {
        std::string s;
        switch (role) {
            case Role::prompt: s = "prompt"; break;
            case Role::clean: s = "clean-" + std::to_string(block); break;
            case Role::masked: s = "masked-" + std::to_string(block); break;
            case Role::reg: s = "register-" + std::to_string(block); break;
            case Role::cached: s = "cached"; break;
            case Role::new_cache: s = "new-cache"; break;
            case Role::decode: s = "decode"; break;
            case Role::reg_live: s = "register"; break;
        }
        if (position >= 0) {
            s += "@" + std::to_string(position);
        }
        return s;
    }

    bool operator==(const Label&) const = default;
};

class AttentionMask {
public:
    AttentionMask() = default;
    AttentionMask(std::size_t rows, std::size_t cols, bool fill = false)
        : rows_(rows), cols_(cols), allow_(rows * cols, fill ? 1 : 0), row_labels_(rows), col_labels_(cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    bool allowed(std::size_t q, std::size_t k) const { return allow_[q * cols_ + k] != 0; }
    void set(std::size_t q, std::size_t k, bool v) { allow_[q * cols_ + k] = v ? 1 : 0; }

    const std::vector<Label>& row_labels() const { return row_labels_; }
    const std::vector<Label>& col_labels() const { return col_labels_; }
    std::vector<Label>& row_labels() { return row_labels_; }
    std::vector<Label>& col_labels() { return col_labels_; }

    // Cell-wise equality of the boolean pattern; labels are descriptive only.
    bool same_pattern(const AttentionMask& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && allow_ == o.allow_;
    }

    std::optional<std::pair<std::size_t, std::size_t>> first_mismatch(const AttentionMask& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            return std::pair<std::size_t, std::size_t>{rows_, cols_};
        }
        for (std::size_t i = 0; i < allow_.size(); ++i) {
            if (allow_[i] != o.allow_[i]) {
                return std::pair<std::size_t, std::size_t>{i / cols_, i % cols_};
            }
        }
        return std::nullopt;
    }

    std::size_t count_allowed() const {
        std::size_t n = 0;
        for (auto v : allow_) {
            n += v;
        }
        return n;
    }

    // Reorder a square mask: new index i refers to old index order[i].
    AttentionMask permuted(const std::vector<int>& order) const {
        require(rows_ == cols_ && order.size() == rows_, "permuted: needs a square mask and a full permutation");
        AttentionMask out(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i) {
            const auto oi = static_cast<std::size_t>(order[i]);
            out.row_labels_[i] = row_labels_[oi];
            out.col_labels_[i] = col_labels_[oi];
            for (std::size_t j = 0; j < cols_; ++j) {
                out.set(i, j, allowed(oi, static_cast<std::size_t>(order[j])));
            }
        }
        return out;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> allow_;
    std::vector<Label> row_labels_;
    std::vector<Label> col_labels_;
};

// ---------------------------------------------------------------------------
// Inference mask

// Queries: new-cache, decode, registers. Keys: cache, new-cache, decode,
// registers. New-cache queries see only cache and new-cache keys; decode and
// register queries see every key.
inline AttentionMask build_inference_mask(std::size_t n_cache, std::size_t n_new, std::size_t n_decode,
                                          std::size_t n_reg) {
    require(n_cache + n_new + n_decode + n_reg > 0, "build_inference_mask: all counts are zero");
    require(n_new + n_decode > 0, "build_inference_mask: no live query tokens");
    const std::size_t rows = n_new + n_decode + n_reg;
    const std::size_t cols = n_cache + rows;
    AttentionMask mask(rows, cols, true);
    for (std::size_t q = 0; q < n_new; ++q) {
        for (std::size_t k = n_cache + n_new; k < cols; ++k) {
            mask.set(q, k, false);
        }
    }
    for (std::size_t k = 0; k < cols; ++k) {
        Role r = Role::cached;
        if (k >= n_cache + n_new + n_decode) {
            r = Role::reg_live;
        } else if (k >= n_cache + n_new) {
            r = Role::decode;
        } else if (k >= n_cache) {
            r = Role::new_cache;
        }
        mask.col_labels()[k] = {r, -1, -1};
        if (k >= n_cache) {
            mask.row_labels()[k - n_cache] = {r, -1, -1};
        }
    }
    return mask;
}

inline AttentionMask build_inference_mask(const StepLayout& layout) {
    layout.validate();
    auto mask = build_inference_mask(layout.cached_positions.size(), layout.new_cache_positions.size(),
                                     layout.decode_positions.size(), layout.reg_positions.size());
    std::vector<Position> cols;
    for (const auto* g : {&layout.cached_positions, &layout.new_cache_positions, &layout.decode_positions,
                          &layout.reg_positions}) {
        cols.insert(cols.end(), g->begin(), g->end());
    }
    const std::size_t n_cache = layout.cached_positions.size();
    for (std::size_t k = 0; k < cols.size(); ++k) {
        mask.col_labels()[k].position = cols[k];
        if (k >= n_cache) {
            mask.row_labels()[k - n_cache].position = cols[k];
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Step-causal mask

// Prompt (block 0) sees the prompt; clean block i sees blocks <= i; masked
// block i sees blocks <= M and itself.
inline bool step_causal_allowed(int query_block, int key_block, int M, int N) {
    if (query_block == 0) {
        return key_block <= 0;
    }
    if (query_block >= 1 && query_block <= M) {
        return key_block <= query_block;
    }
    if (query_block >= M + 1 && query_block <= M + N) {
        return key_block <= M || key_block == query_block;
    }
    return false;
}

inline Label training_label(const LayoutToken& t) {
    switch (t.kind) {
        case TokenKind::prompt: return {Role::prompt, t.block, t.position};
        case TokenKind::clean: return {Role::clean, t.block, t.position};
        case TokenKind::masked: return {Role::masked, t.block, t.position};
        case TokenKind::reg: return {Role::reg, t.block, t.position};
    }
    return {};
}

// Square mask over an explicit token list (any order).
inline AttentionMask step_causal_mask(const std::vector<LayoutToken>& tokens, int M, int N) {
    const std::size_t n = tokens.size();
    AttentionMask mask(n, n);
    for (std::size_t q = 0; q < n; ++q) {
        const int qb = tokens[q].block;
        require(qb >= 0 && qb <= M + N, "step_causal_mask: block id outside [0, M+N]");
        mask.row_labels()[q] = training_label(tokens[q]);
        mask.col_labels()[q] = training_label(tokens[q]);
        for (std::size_t k = 0; k < n; ++k) {
            mask.set(q, k, step_causal_allowed(qb, tokens[k].block, M, N));
        }
    }
    return mask;
}

// Natural layout order: prompt, response, register duplicates.
inline AttentionMask step_causal_mask(const BlockAssignment& a) {
    require(a.M >= 0 && a.N >= 0, "step_causal_mask: negative block count");
    for (int b : a.block_of) {
        require(b >= 0 && b <= a.M + a.N, "step_causal_mask: block id outside [0, M+N]");
    }
    a.validate();
    return step_causal_mask(layout_tokens(a), a.M, a.N);
}

// Implicit form of the step-causal mask for attention inner loops; avoids
// materializing (S+L)^2 cells.
struct BlockPredicateMask {
    std::vector<int> query_blocks;
    std::vector<int> key_blocks;
    int M = 0;
    int N = 0;

    std::size_t rows() const { return query_blocks.size(); }
    std::size_t cols() const { return key_blocks.size(); }
    bool allowed(std::size_t q, std::size_t k) const {
        return step_causal_allowed(query_blocks[q], key_blocks[k], M, N);
    }
};

// ---------------------------------------------------------------------------
// Path extraction

// Layout indices of the tokens on path 0 -> 1 -> ... -> M -> b, grouped the
// way one inference step sees them.
struct PathTokens {
    std::vector<int> cached;
    std::vector<int> new_cache;
    std::vector<int> decode;
    std::vector<int> regs;

    std::vector<int> all() const {
        std::vector<int> out = cached;
        out.insert(out.end(), new_cache.begin(), new_cache.end());
        out.insert(out.end(), decode.begin(), decode.end());
        out.insert(out.end(), regs.begin(), regs.end());
        return out;
    }
};

// With M = 0 the prompt plays the cache role (it is prefilled before the first
// step) and the new-cache group is empty.
inline PathTokens path_tokens(const BlockAssignment& a, int masked_block) {
    a.validate();
    require(a.is_masked_block(masked_block), "extract_path_mask: block is not a masked block");
    const auto tokens = layout_tokens(a);
    PathTokens p;
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
        const auto& t = tokens[static_cast<std::size_t>(i)];
        if (t.block == masked_block) {
            (t.kind == TokenKind::reg ? p.regs : p.decode).push_back(i);
        } else if (t.block <= a.M) {
            (a.M >= 1 && t.block == a.M ? p.new_cache : p.cached).push_back(i);
        }
    }
    return p;
}

// Square step-causal mask over the path tokens in cache/new/decode/register
// order: the mask a fully materialized forward over the path would use.
inline AttentionMask path_square_mask(const BlockAssignment& a, int masked_block) {
    const auto p = path_tokens(a, masked_block);
    const auto tokens = layout_tokens(a);
    std::vector<LayoutToken> sub;
    for (int i : p.all()) {
        sub.push_back(tokens[static_cast<std::size_t>(i)]);
    }
    return step_causal_mask(sub, a.M, a.N);
}

// Live-query rows of the path's step-causal mask, relabeled with inference
// roles; equals build_inference_mask for the matching step.
inline AttentionMask extract_path_mask(const BlockAssignment& a, int masked_block) {
    const auto p = path_tokens(a, masked_block);
    const auto square = path_square_mask(a, masked_block);
    const auto tokens = layout_tokens(a);
    const std::size_t n_cache = p.cached.size();
    const std::size_t rows = square.rows() - n_cache;
    AttentionMask out(rows, square.cols());
    const auto all = p.all();
    for (std::size_t k = 0; k < all.size(); ++k) {
        Role r = Role::cached;
        if (k >= n_cache + p.new_cache.size() + p.decode.size()) {
            r = Role::reg_live;
        } else if (k >= n_cache + p.new_cache.size()) {
            r = Role::decode;
        } else if (k >= n_cache) {
            r = Role::new_cache;
        }
        out.col_labels()[k] = {r, -1, tokens[static_cast<std::size_t>(all[k])].position};
        if (k >= n_cache) {
            out.row_labels()[k - n_cache] = out.col_labels()[k];
        }
    }
    for (std::size_t q = 0; q < rows; ++q) {
        for (std::size_t k = 0; k < square.cols(); ++k) {
            out.set(q, k, square.allowed(q + n_cache, k));
        }
    }
    return out;
}

}  // namespace smdm
