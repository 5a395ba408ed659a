#pragma once

// Brute-force reference predicates for both mask builders. Written from the
// rule text, sharing no code with masks.hpp beyond the data types.

#include "smdm/masks.hpp"

#include <set>
#include <string>
#include <vector>

namespace smdm::oracle {

// Key blocks visible to a query block, enumerated explicitly.
inline std::set<int> visible_blocks(int query_block, int M, int N) {
    std::set<int> out;
    if (query_block == 0) {
        out.insert(0);
    } else if (query_block <= M) {
        for (int b = 0; b <= query_block; ++b) {
            out.insert(b);
        }
    } else if (query_block <= M + N) {
        for (int b = 0; b <= M; ++b) {
            out.insert(b);
        }
        out.insert(query_block);
    }
    return out;
}

inline bool step_causal(int query_block, int key_block, int M, int N) {
    return visible_blocks(query_block, M, N).count(key_block) > 0;
}

inline AttentionMask step_causal_mask(const std::vector<LayoutToken>& tokens, int M, int N) {
    AttentionMask m(tokens.size(), tokens.size());
    for (std::size_t q = 0; q < tokens.size(); ++q) {
        const auto vis = visible_blocks(tokens[q].block, M, N);
        for (std::size_t k = 0; k < tokens.size(); ++k) {
            m.set(q, k, vis.count(tokens[k].block) > 0);
        }
    }
    return m;
}

enum class Kind { cache, new_cache, decode, reg };

// The four inference rules.
inline bool inference(Kind query, Kind key) {
    if (query == Kind::cache) {
        return false;  // cached tokens are never queries
    }
    if (query == Kind::new_cache) {
        return key == Kind::cache || key == Kind::new_cache;
    }
    return true;  // decode and register queries see every key
}

inline AttentionMask inference_mask(const std::vector<Kind>& keys) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i] != Kind::cache) {
            live.push_back(i);
        }
    }
    AttentionMask m(live.size(), keys.size());
    for (std::size_t r = 0; r < live.size(); ++r) {
        for (std::size_t k = 0; k < keys.size(); ++k) {
            m.set(r, k, inference(keys[live[r]], keys[k]));
        }
    }
    return m;
}

inline std::vector<Kind> kinds(std::size_t n_cache, std::size_t n_new, std::size_t n_decode, std::size_t n_reg) {
    std::vector<Kind> out(n_cache, Kind::cache);
    out.insert(out.end(), n_new, Kind::new_cache);
    out.insert(out.end(), n_decode, Kind::decode);
    out.insert(out.end(), n_reg, Kind::reg);
    return out;
}

// First differing cell, formatted with labels from `got`; empty when equal.
inline std::string describe_mismatch(const AttentionMask& got, const AttentionMask& want) {
    const auto cell = got.first_mismatch(want);
    if (!cell) {
        return {};
    }
    const auto [q, k] = *cell;
    if (got.rows() != want.rows() || got.cols() != want.cols()) {
        return "shape " + std::to_string(got.rows()) + "x" + std::to_string(got.cols()) + " vs " +
               std::to_string(want.rows()) + "x" + std::to_string(want.cols());
    }
    return "cell (" + std::to_string(q) + "," + std::to_string(k) + ") query " + got.row_labels()[q].str() + " key " +
           got.col_labels()[k].str() + ": got " + (got.allowed(q, k) ? "1" : "0") + " want " +
           (want.allowed(q, k) ? "1" : "0");
}

}  // namespace smdm::oracle
