#include "smdm/sparse_seq.hpp"

#include <gtest/gtest.h>

using namespace smdm;

namespace {

// "I have [M] dog [M] [M] [M]" with I=0, have=1, dog=2.
const Vocabulary kVocab = Vocabulary::with_specials(3);
const TokenId M = kVocab.mask_id;

}  // namespace

TEST(ToSparse, SevenTokenSentence) {
    const MaskedSequence x{{0, 1, M, 2, M, M, M}};
    const auto sp = to_sparse(x, kVocab, 0);
    using P = std::pair<Position, TokenId>;
    EXPECT_EQ(sp.clean, (std::vector<P>{{0, 0}, {1, 1}, {3, 2}}));
    EXPECT_EQ(sp.total_len, 7);
    EXPECT_EQ(sp.reg_count, 0);
    EXPECT_EQ(sp.masked_positions(), (std::vector<Position>{2, 4, 5, 6}));
}

TEST(ToSparse, AllCleanAndAllMasked) {
    const MaskedSequence clean{{2, 1, 0}};
    EXPECT_EQ(to_sparse(clean, kVocab).clean.size(), 3u);
    const MaskedSequence masked{{M, M, M, M, M}};
    const auto sp = to_sparse(masked, kVocab);
    EXPECT_TRUE(sp.clean.empty());
    EXPECT_EQ(sp.total_len, 5);
}

TEST(ToDense, InvertsTheSentence) {
    SparseSequence sp{{{0, 0}, {1, 1}, {3, 2}}, 7, 0};
    EXPECT_EQ(to_dense(sp, kVocab), (MaskedSequence{{0, 1, M, 2, M, M, M}}));
    SparseSequence empty{{}, 3, 0};
    EXPECT_EQ(to_dense(empty, kVocab), (MaskedSequence{{M, M, M}}));
}

TEST(ToDense, RejectsInvalid) {
    EXPECT_THROW(to_dense(SparseSequence{{{7, 0}}, 7, 0}, kVocab), InvalidArgument);
    EXPECT_THROW(to_dense(SparseSequence{{{2, 0}, {1, 0}}, 7, 0}, kVocab), InvalidArgument);
    EXPECT_THROW(to_dense(SparseSequence{{{1, M}}, 7, 0}, kVocab), InvalidArgument);
}

TEST(SparseProperty, RoundTrip) {
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        MaskedSequence x;
        const int L = static_cast<int>(uniform_below(rng, 50));
        for (int p = 0; p < L; ++p) {
            x.tokens.push_back(uniform01(rng) < 0.5 ? M : static_cast<TokenId>(uniform_below(rng, 3)));
        }
        ASSERT_EQ(to_dense(to_sparse(x, kVocab, 2), kVocab), x);
    }
}

TEST(RegisterPositions, Formula) {
    EXPECT_EQ(register_positions(0, 7, 3), (std::vector<Position>{7, 8, 9}));
    EXPECT_TRUE(register_positions(3, 7, 0).empty());
    EXPECT_EQ(register_positions(4, 8, 2), (std::vector<Position>{12, 13}));
    EXPECT_THROW(register_positions(0, 7, -1), InvalidArgument);
}

TEST(Partition, GoldenAssignmentPartition) {
    // Response X0..X5; steps {X1,X3}, {X0}, {X2,X5}, {X4}.
    const auto a = partition_from_steps({{1, 3}, {0}, {2, 5}, {4}}, 3, 6);
    EXPECT_EQ(a.block_of, (std::vector<int>{0, 0, 0, 2, 1, 3, 1, 4, 3}));
    EXPECT_EQ(a.M, 4);
    EXPECT_EQ(a.N, 0);
    const auto b = partition_from_order({1, 3, 0, 2, 5, 4}, {2, 1, 2, 1}, 3, 2);
    EXPECT_EQ(b.block_of, a.block_of);
    EXPECT_EQ(b.M, 2);
    EXPECT_EQ(b.N, 2);
}

TEST(Partition, SingleStepAndPerTokenSteps) {
    const auto one = partition_from_order({3, 1, 0, 2}, {4}, 0);
    EXPECT_EQ(one.block_of, (std::vector<int>{1, 1, 1, 1}));
    const auto each = partition_from_order({3, 1, 0, 2}, {1, 1, 1, 1}, 0);
    EXPECT_EQ(each.block_of, (std::vector<int>{3, 2, 4, 1}));
}

TEST(Partition, Errors) {
    EXPECT_THROW(partition_from_order({0, 1, 2}, {1, 1}, 0), InvalidArgument);
    EXPECT_THROW(partition_from_order({0, 0, 2}, {1, 2}, 0), InvalidArgument);
    EXPECT_THROW(partition_from_steps({{0}, {1}}, 0, 3), InvalidArgument);
    EXPECT_THROW(partition_from_steps({{0}, {5}}, 0, 2), InvalidArgument);
}

TEST(PartitionProperty, EveryPositionAssignedOnce) {
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        const int L = 1 + static_cast<int>(uniform_below(rng, 40));
        std::vector<int> order(static_cast<std::size_t>(L));
        std::iota(order.begin(), order.end(), 0);
        shuffle(order.begin(), order.end(), rng);
        const int K = 1 + static_cast<int>(uniform_below(rng, static_cast<std::size_t>(L)));
        const auto sizes = step_sizes_from_schedule(discretize_schedule(K), L);
        const auto a = partition_from_order(order, sizes, 2);
        a.validate();
        for (int k = 1; k <= K; ++k) {
            const auto n = std::count(a.block_of.begin(), a.block_of.end(), k);
            ASSERT_EQ(n, sizes[static_cast<std::size_t>(k - 1)]);
        }
    }
}

TEST(BlockAssignment, ValidationRules) {
    BlockAssignment a{{0, 1, 3}, {}, 1, 1, 1};
    EXPECT_THROW(a.validate(), InvalidArgument);
    BlockAssignment b{{1, 1}, {}, 1, 1, 0};
    EXPECT_THROW(b.validate(), InvalidArgument);
    BlockAssignment c{{0, 1, 2}, {1}, 1, 1, 1};
    EXPECT_THROW(c.validate(), InvalidArgument);
    BlockAssignment ok{{0, 2, 1}, {2, 2}, 1, 1, 1};
    EXPECT_NO_THROW(ok.validate());
}

TEST(Layout, RegistersShareOnePositionSet) {
    const auto a = partition_from_steps({{1, 3}, {0}, {2, 5}, {4}}, 3, 6, 2).with_registers(2);
    const auto t = layout_tokens(a);
    ASSERT_EQ(t.size(), 13u);
    // two duplicates per masked block, both blocks at positions 9 and 10
    EXPECT_EQ(t[9].position, 9);
    EXPECT_EQ(t[10].position, 10);
    EXPECT_EQ(t[11].position, 9);
    EXPECT_EQ(t[12].position, 10);
    EXPECT_EQ(t[9].block, 3);
    EXPECT_EQ(t[11].block, 4);
    for (std::size_t i = 9; i < 13; ++i) {
        EXPECT_EQ(t[i].kind, TokenKind::reg);
    }
}

TEST(Layout, BlockSortedOrderMatchesGolden) {
    const auto a = partition_from_steps({{1, 3}, {0}, {2, 5}, {4}}, 3, 6, 2).with_registers(1);
    const auto t = layout_tokens(a);
    std::vector<Position> pos;
    for (int i : block_sorted_order(t)) {
        pos.push_back(t[static_cast<std::size_t>(i)].position);
    }
    // P0 P1 P2 X1 X3 X0 X2 X5 R X4 R
    EXPECT_EQ(pos, (std::vector<Position>{0, 1, 2, 4, 6, 3, 5, 8, 9, 7, 9}));
}

TEST(StepLayout, InputTokensAndOverlap) {
    StepLayout s{{0, 1}, {2}, {3, 4}, {5, 6}};
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.input_tokens(), 5u);
    StepLayout bad{{0, 1}, {1}, {3}, {}};
    EXPECT_THROW(bad.validate(), InvalidArgument);
}
