#pragma once

// Sparse representation of partially masked sequences and the block
// structure (C_0 .. C_{M+N}) that ties sampling steps to attention masks.

#include "smdm/diffusion.hpp"

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

namespace smdm {

// Clean tokens with explicit positions plus the total length; masked
// positions are implied by absence.
struct SparseSequence {
    std::vector<std::pair<Position, TokenId>> clean;
    int total_len = 0;
    int reg_count = 0;

    bool operator==(const SparseSequence&) const = default;

    void validate(const Vocabulary& vocab) const {
        require(total_len >= 0 && reg_count >= 0, "sparse sequence: negative length or register count");
        Position prev = -1;
        for (const auto& [pos, tok] : clean) {
            require(pos > prev, "sparse sequence: positions must strictly increase");
            require(pos < total_len, "sparse sequence: position beyond total length");
            require(tok != vocab.mask_id, "sparse sequence: clean entry holds the mask token");
            prev = pos;
        }
    }

    std::vector<Position> masked_positions() const {
        std::vector<Position> out;
        std::size_t j = 0;
        for (Position p = 0; p < total_len; ++p) {
            if (j < clean.size() && clean[j].first == p) {
                ++j;
            } else {
                out.push_back(p);
            }
        }
        return out;
    }
};

inline SparseSequence to_sparse(const MaskedSequence& xt, const Vocabulary& vocab, int reg_count = 0) {
    require(reg_count >= 0, "to_sparse: negative register count");
    SparseSequence sp;
    sp.total_len = static_cast<int>(xt.size());
    sp.reg_count = reg_count;
    for (std::size_t i = 0; i < xt.size(); ++i) {
        if (xt.tokens[i] != vocab.mask_id) {
            sp.clean.emplace_back(static_cast<Position>(i), xt.tokens[i]);
        }
    }
    return sp;
}

inline MaskedSequence to_dense(const SparseSequence& sp, const Vocabulary& vocab) {
    sp.validate(vocab);
    MaskedSequence x;
    x.tokens.assign(static_cast<std::size_t>(sp.total_len), vocab.mask_id);
    for (const auto& [pos, tok] : sp.clean) {
        x.tokens[static_cast<std::size_t>(pos)] = tok;
    }
    return x;
}

// 0-based register positions S+L .. S+L+m-1, shared by every step of one
// generation.
inline std::vector<Position> register_positions(int prompt_len, int response_len, int reg_count) {
    require(prompt_len >= 0 && response_len >= 0, "register_positions: negative length");
    require(reg_count >= 0, "register_positions: negative register count");
    std::vector<Position> out(static_cast<std::size_t>(reg_count));
    std::iota(out.begin(), out.end(), static_cast<Position>(prompt_len + response_len));
    return out;
}

enum class TokenKind { prompt, clean, masked, reg };

// Block ids for prompt+response positions. Prompt is block 0, clean blocks
// are 1..M and masked blocks are M+1..M+N. Register duplicates (one set per
// masked block in training layouts) are listed separately and follow the
// response in layout order.
struct BlockAssignment {
    std::vector<int> block_of;
    std::vector<int> reg_blocks;
    int prompt_len = 0;
    int M = 0;
    int N = 0;

    int response_len() const { return static_cast<int>(block_of.size()) - prompt_len; }
    int num_tokens() const { return static_cast<int>(block_of.size() + reg_blocks.size()); }
    bool is_masked_block(int b) const { return b >= M + 1 && b <= M + N; }

    void validate() const {
        require(M >= 0 && N >= 0, "block assignment: negative block count");
        require(prompt_len >= 0 && prompt_len <= static_cast<int>(block_of.size()),
                "block assignment: prompt length out of range");
        for (int i = 0; i < static_cast<int>(block_of.size()); ++i) {
            const int b = block_of[static_cast<std::size_t>(i)];
            if (i < prompt_len) {
                require(b == 0, "block assignment: prompt position outside block 0");
            } else {
                require(b >= 1 && b <= M + N, "block assignment: response block id outside [1, M+N]");
            }
        }
        for (int b : reg_blocks) {
            require(is_masked_block(b), "block assignment: register duplicate outside a masked block");
        }
    }

    // Re-split the same block ids into M clean and (max id - M) masked blocks.
    BlockAssignment with_split(int clean_blocks) const {
        BlockAssignment a = *this;
        const int total = M + N;
        require(clean_blocks >= 0 && clean_blocks <= total, "with_split: clean block count out of range");
        a.M = clean_blocks;
        a.N = total - clean_blocks;
        a.reg_blocks.clear();
        return a;
    }

    // Append reg_count register duplicates for every masked block.
    BlockAssignment with_registers(int reg_count) const {
        require(reg_count >= 0, "with_registers: negative register count");
        BlockAssignment a = *this;
        a.reg_blocks.clear();
        for (int b = M + 1; b <= M + N; ++b) {
            for (int j = 0; j < reg_count; ++j) {
                a.reg_blocks.push_back(b);
            }
        }
        return a;
    }
};

struct LayoutToken {
    Position position = 0;
    int block = 0;
    TokenKind kind = TokenKind::prompt;
};

// Tokens of an assignment in natural order: prompt, response, registers.
// Register duplicates of the same block occupy consecutive register
// positions, and every block reuses the same positions.
inline std::vector<LayoutToken> layout_tokens(const BlockAssignment& a) {
    std::vector<LayoutToken> out;
    out.reserve(static_cast<std::size_t>(a.num_tokens()));
    for (int i = 0; i < static_cast<int>(a.block_of.size()); ++i) {
        const int b = a.block_of[static_cast<std::size_t>(i)];
        TokenKind kind = TokenKind::prompt;
        if (i >= a.prompt_len) {
            kind = a.is_masked_block(b) ? TokenKind::masked : TokenKind::clean;
        }
        out.push_back({i, b, kind});
    }
    const Position base = static_cast<Position>(a.block_of.size());
    int prev_block = -1;
    Position offset = 0;
    for (int b : a.reg_blocks) {
        offset = b == prev_block ? offset + 1 : 0;
        prev_block = b;
        out.push_back({base + offset, b, TokenKind::reg});
    }
    return out;
}

// Stable permutation of layout indices sorted by block; registers trail the
// ordinary tokens of their block.
inline std::vector<int> block_sorted_order(const std::vector<LayoutToken>& tokens) {
    std::vector<int> idx(tokens.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
        const auto& a = tokens[static_cast<std::size_t>(x)];
        const auto& b = tokens[static_cast<std::size_t>(y)];
        if (a.block != b.block) {
            return a.block < b.block;
        }
        return (a.kind == TokenKind::reg) < (b.kind == TokenKind::reg);
    });
    return idx;
}

// Steps given as lists of response indices (0-based, relative to the
// response). Step i (1-based) becomes block i. clean_blocks < 0 treats every
// step as clean history.
inline BlockAssignment partition_from_steps(const std::vector<std::vector<int>>& steps, int prompt_len,
                                            int response_len, int clean_blocks = -1) {
    require(prompt_len >= 0 && response_len >= 0, "partition: negative length");
    BlockAssignment a;
    a.prompt_len = prompt_len;
    a.block_of.assign(static_cast<std::size_t>(prompt_len + response_len), -1);
    std::fill_n(a.block_of.begin(), prompt_len, 0);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        for (int r : steps[k]) {
            require(r >= 0 && r < response_len, "partition: response index out of range");
            auto& slot = a.block_of[static_cast<std::size_t>(prompt_len + r)];
            require(slot == -1, "partition: response index decoded twice");
            slot = static_cast<int>(k) + 1;
        }
    }
    for (int r = 0; r < response_len; ++r) {
        require(a.block_of[static_cast<std::size_t>(prompt_len + r)] != -1, "partition: response index never decoded");
    }
    const int total = static_cast<int>(steps.size());
    a.M = clean_blocks < 0 ? total : clean_blocks;
    require(a.M <= total, "partition: more clean blocks than steps");
    a.N = total - a.M;
    return a;
}

// order: permutation of response indices; step_sizes: how many of them each
// step decodes, in order.
inline BlockAssignment partition_from_order(const std::vector<int>& order, const std::vector<int>& step_sizes,
                                            int prompt_len, int clean_blocks = -1) {
    const int response_len = static_cast<int>(order.size());
    int sum = 0;
    for (int s : step_sizes) {
        require(s >= 0, "partition_from_order: negative step size");
        sum += s;
    }
    require(sum == response_len, "partition_from_order: step sizes do not sum to L");
    std::vector<std::vector<int>> steps;
    std::size_t cursor = 0;
    for (int s : step_sizes) {
        steps.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                           order.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(s)));
        cursor += static_cast<std::size_t>(s);
    }
    return partition_from_steps(steps, prompt_len, response_len, clean_blocks);
}

// Role of every token at one inference step.
struct StepLayout {
    std::vector<Position> cached_positions;
    std::vector<Position> new_cache_positions;
    std::vector<Position> decode_positions;
    std::vector<Position> reg_positions;

    void validate() const {
        std::vector<Position> all;
        for (const auto* g : {&cached_positions, &new_cache_positions, &decode_positions, &reg_positions}) {
            all.insert(all.end(), g->begin(), g->end());
        }
        std::sort(all.begin(), all.end());
        require(std::adjacent_find(all.begin(), all.end()) == all.end(), "step layout: groups overlap");
    }

    // Tokens the model processes in this step (cache entries are reused).
    std::size_t input_tokens() const {
        return new_cache_positions.size() + decode_positions.size() + reg_positions.size();
    }
};

}  // namespace smdm
