#include "smdm/harness.hpp"
#include "smdm/oracles.hpp"

#include <gtest/gtest.h>

using namespace smdm;

namespace {

// Column index whose label carries the given position.
std::size_t col_of(const AttentionMask& m, Position p) {
    for (std::size_t k = 0; k < m.cols(); ++k) {
        if (m.col_labels()[k].position == p) {
            return k;
        }
    }
    ADD_FAILURE() << "no column at position " << p;
    return 0;
}

std::size_t row_of(const AttentionMask& m, Position p) {
    for (std::size_t q = 0; q < m.rows(); ++q) {
        if (m.row_labels()[q].position == p) {
            return q;
        }
    }
    ADD_FAILURE() << "no row at position " << p;
    return 0;
}

}  // namespace

TEST(InferenceMask, ThreeBLayout) {
    StepLayout s{{0, 3, 4, 5, 6, 8, 9}, {2, 7}, {1}, {10}};
    const auto m = build_inference_mask(s);
    ASSERT_EQ(m.rows(), 4u);
    ASSERT_EQ(m.cols(), 11u);
    const auto q = row_of(m, 2);
    EXPECT_FALSE(m.allowed(q, col_of(m, 1)));
    EXPECT_FALSE(m.allowed(q, col_of(m, 10)));
    EXPECT_TRUE(m.allowed(q, col_of(m, 7)));
    EXPECT_TRUE(m.allowed(q, col_of(m, 2)));
    for (Position c : s.cached_positions) {
        EXPECT_TRUE(m.allowed(q, col_of(m, c)));
    }
    EXPECT_EQ(m.row_labels()[q].role, Role::new_cache);
    EXPECT_EQ(m.col_labels()[col_of(m, 10)].role, Role::reg_live);
}

TEST(InferenceMask, FirstStepIsFullAttention) {
    const auto m = build_inference_mask(4, 0, 3, 2);
    EXPECT_EQ(m.count_allowed(), m.rows() * m.cols());
}

TEST(InferenceMask, Errors) {
    EXPECT_THROW(build_inference_mask(0, 0, 0, 0), InvalidArgument);
    EXPECT_THROW(build_inference_mask(3, 0, 0, 2), InvalidArgument);
    EXPECT_THROW(build_inference_mask(StepLayout{{0, 1}, {1}, {2}, {}}), InvalidArgument);
}

TEST(InferenceMask, MatchesRuleOracle) {
    const auto m = build_inference_mask(5, 2, 3, 2);
    const auto want = oracle::inference_mask(oracle::kinds(5, 2, 3, 2));
    EXPECT_TRUE(m.same_pattern(want)) << oracle::describe_mismatch(m, want);
}

TEST(InferenceMaskProperty, MatchesRuleOracleOnAllSmallCounts) {
    for (std::size_t c = 0; c <= 4; ++c) {
        for (std::size_t n = 0; n <= 4; ++n) {
            for (std::size_t d = 0; d <= 4; ++d) {
                for (std::size_t r = 0; r <= 4; ++r) {
                    if (n + d == 0) {
                        continue;
                    }
                    const auto m = build_inference_mask(c, n, d, r);
                    const auto want = oracle::inference_mask(oracle::kinds(c, n, d, r));
                    ASSERT_TRUE(m.same_pattern(want)) << oracle::describe_mismatch(m, want);
                    for (std::size_t q = 0; q < m.rows(); ++q) {
                        bool any = false;
                        for (std::size_t k = 0; k < m.cols(); ++k) {
                            any = any || m.allowed(q, k);
                        }
                        ASSERT_TRUE(any);
                    }
                }
            }
        }
    }
}

TEST(StepCausalMask, GoldenAssignmentRows) {
    const auto m = golden_merged_mask();
    ASSERT_EQ(m.rows(), 11u);
    // X0 is row 5 (block 2); M4 is row 9 (block 4).
    const std::vector<int> blocks{0, 0, 0, 1, 1, 2, 3, 3, 3, 4, 4};
    for (std::size_t k = 0; k < 11; ++k) {
        EXPECT_EQ(m.allowed(5, k), blocks[k] <= 2) << "X0 key " << k;
        EXPECT_EQ(m.allowed(9, k), blocks[k] <= 2 || blocks[k] == 4) << "M4 key " << k;
    }
}

TEST(StepCausalMask, GoldenAssignmentMatchesFixture) {
    const auto m = golden_merged_mask();
    const auto golden = mask_from_rows(golden_merged_rows());
    EXPECT_TRUE(m.same_pattern(golden)) << oracle::describe_mismatch(m, golden);
}

TEST(StepCausalMask, PromptOnlyIsFull) {
    BlockAssignment a{{0, 0, 0, 0}, {}, 4, 0, 0};
    EXPECT_EQ(step_causal_mask(a).count_allowed(), 16u);
}

TEST(StepCausalMask, RejectsOutOfRangeBlock) {
    BlockAssignment a{{0, 1, 5}, {}, 1, 1, 1};
    EXPECT_THROW(step_causal_mask(a), InvalidArgument);
    std::vector<LayoutToken> t{{0, 0, TokenKind::prompt}, {1, 3, TokenKind::masked}};
    EXPECT_THROW(step_causal_mask(t, 1, 1), InvalidArgument);
}

TEST(StepCausalMaskProperty, MatchesOracleOnRandomAssignments) {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const auto a = detail::random_assignment(rng, 6, 64, 3);
        const auto m = step_causal_mask(a);
        const auto want = oracle::step_causal_mask(layout_tokens(a), a.M, a.N);
        ASSERT_TRUE(m.same_pattern(want)) << oracle::describe_mismatch(m, want);
    }
}

TEST(StepCausalMaskProperty, MaskedBlocksAreIsolated) {
    Rng rng(32);
    for (int i = 0; i < 200; ++i) {
        const auto a = detail::random_assignment(rng, 6, 40, 2);
        const auto t = layout_tokens(a);
        const auto m = step_causal_mask(a);
        for (std::size_t q = 0; q < t.size(); ++q) {
            for (std::size_t k = 0; k < t.size(); ++k) {
                if (a.is_masked_block(t[q].block) && a.is_masked_block(t[k].block) && t[q].block != t[k].block) {
                    ASSERT_FALSE(m.allowed(q, k));
                }
                if (t[k].kind == TokenKind::reg && !a.is_masked_block(t[q].block)) {
                    ASSERT_FALSE(m.allowed(q, k));
                }
            }
        }
    }
}

TEST(StepCausalMaskProperty, CleanHistoryIsMonotone) {
    for (int M = 1; M <= 6; ++M) {
        for (int N = 0; N <= 3; ++N) {
            for (int i = 1; i <= M; ++i) {
                for (int j = i + 1; j <= M; ++j) {
                    for (int key = 0; key <= M; ++key) {
                        if (step_causal_allowed(i, key, M, N)) {
                            ASSERT_TRUE(step_causal_allowed(j, key, M, N));
                        }
                    }
                }
            }
        }
    }
}

TEST(InferenceMaskProperty, RegistersHiddenFromNewCache) {
    const auto m = build_inference_mask(3, 4, 2, 3);
    for (std::size_t q = 0; q < 4; ++q) {
        for (std::size_t k = 3 + 4 + 2; k < m.cols(); ++k) {
            EXPECT_FALSE(m.allowed(q, k));
        }
    }
}

TEST(PathMask, GoldenAssignmentBothProcesses) {
    const auto a = golden_assignment();
    // cache = {P, C1}, new-cache = C2, decode = the masked block, registers.
    for (int b : {3, 4}) {
        const auto got = extract_path_mask(a, b);
        const std::size_t n_decode = b == 3 ? 2 : 1;
        const auto want = build_inference_mask(5, 1, n_decode, 1);
        EXPECT_TRUE(got.same_pattern(want)) << "block " << b << ": " << oracle::describe_mismatch(got, want);
    }
}

TEST(PathMask, RejectsCleanBlock) {
    EXPECT_THROW(extract_path_mask(golden_assignment(), 2), InvalidArgument);
    EXPECT_THROW(extract_path_mask(golden_assignment(), 5), InvalidArgument);
}

TEST(PathMaskProperty, EqualsInferenceMaskEverywhere) {
    Rng rng(33);
    for (int i = 0; i < 300; ++i) {
        const auto a = detail::random_assignment(rng, 6, 40, 3);
        for (int b = a.M + 1; b <= a.M + a.N; ++b) {
            const auto p = path_tokens(a, b);
            if (p.new_cache.empty() && p.decode.empty()) {
                continue;
            }
            const auto got = extract_path_mask(a, b);
            const auto want = build_inference_mask(p.cached.size(), p.new_cache.size(), p.decode.size(), p.regs.size());
            ASSERT_TRUE(got.same_pattern(want)) << oracle::describe_mismatch(got, want);
        }
    }
}

TEST(AttentionMask, PermutedAndLabels) {
    const auto m = build_inference_mask(0, 1, 1, 0);
    const auto p = m.permuted({1, 0});
    EXPECT_TRUE(p.allowed(0, 0));
    EXPECT_FALSE(p.allowed(1, 0));
    EXPECT_EQ(p.row_labels()[0].role, Role::decode);
    EXPECT_EQ((Label{Role::masked, 3, 7}).str(), "masked-3@7");
    EXPECT_EQ((Label{Role::cached, -1, -1}).str(), "cached");
}
