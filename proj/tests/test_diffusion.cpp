#include "smdm/diffusion.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace smdm;

namespace {

const Vocabulary kVocab = Vocabulary::with_specials(10);

MaskedSequence clean_sequence(int n, Rng& rng) {
    MaskedSequence x;
    for (int i = 0; i < n; ++i) {
        x.tokens.push_back(static_cast<TokenId>(uniform_below(rng, 10)));
    }
    return x;
}

}  // namespace

TEST(Vocabulary, SpecialsFollowOrdinaryIds) {
    const auto v = Vocabulary::with_specials(5);
    EXPECT_EQ(v.mask_id, 5);
    EXPECT_EQ(v.reg_id, 6);
    EXPECT_TRUE(v.is_ordinary(4));
    EXPECT_FALSE(v.is_ordinary(v.mask_id));
    EXPECT_EQ(v.table_size(), 7);
}

TEST(Vocabulary, RejectsCollisions) {
    EXPECT_THROW((Vocabulary{5, 3, 6}.validate()), InvalidArgument);
    EXPECT_THROW((Vocabulary{5, 6, 6}.validate()), InvalidArgument);
    EXPECT_THROW(Vocabulary::with_specials(0), InvalidArgument);
}

TEST(Schedule, LinearGrids) {
    EXPECT_EQ(discretize_schedule(1).steps, (std::vector<double>{1.0, 0.0}));
    EXPECT_EQ(discretize_schedule(2).steps, (std::vector<double>{1.0, 0.5, 0.0}));
    EXPECT_EQ(discretize_schedule(4).steps, (std::vector<double>{1.0, 0.75, 0.5, 0.25, 0.0}));
    EXPECT_THROW(discretize_schedule(0), InvalidArgument);
}

TEST(Schedule, StepSizesCoverLength) {
    EXPECT_EQ(step_sizes_from_schedule(discretize_schedule(64), 1024), std::vector<int>(64, 16));
    const auto sizes = step_sizes_from_schedule(discretize_schedule(3), 10);
    EXPECT_EQ(sizes.size(), 3u);
    EXPECT_EQ(sizes[0] + sizes[1] + sizes[2], 10);
}

TEST(ForwardMask, Boundaries) {
    Rng rng(1);
    const auto x0 = clean_sequence(50, rng);
    EXPECT_EQ(forward_mask(x0, 1.0, kVocab, rng).count_masked(kVocab), 50u);
    EXPECT_EQ(forward_mask(x0, 0.0, kVocab, rng), x0);
}

TEST(ForwardMask, RejectsBadInput) {
    Rng rng(1);
    const auto x0 = clean_sequence(4, rng);
    EXPECT_THROW(forward_mask(x0, 1.5, kVocab, rng), InvalidArgument);
    EXPECT_THROW(forward_mask(x0, -0.1, kVocab, rng), InvalidArgument);
    MaskedSequence masked{{1, kVocab.mask_id}};
    EXPECT_THROW(forward_mask(masked, 0.5, kVocab, rng), InvalidArgument);
}

TEST(ForwardMask, HalfRateOnLongSequence) {
    Rng rng(7);
    const auto x0 = clean_sequence(10000, rng);
    const double frac = static_cast<double>(forward_mask(x0, 0.5, kVocab, rng).count_masked(kVocab)) / 10000.0;
    EXPECT_GE(frac, 0.48);
    EXPECT_LE(frac, 0.52);
}

TEST(ForwardMask, DeterministicGivenSeed) {
    Rng a(3), b(3), c(4);
    Rng g(0);
    const auto x0 = clean_sequence(100, g);
    EXPECT_EQ(forward_mask(x0, 0.3, kVocab, a), forward_mask(x0, 0.3, kVocab, b));
    EXPECT_NE(forward_mask(x0, 0.3, kVocab, a), forward_mask(x0, 0.3, kVocab, c));
}

TEST(ForwardMaskProperty, MarginalWithinFourSigma) {
    const int n = 10000;
    Rng rng(11);
    MaskedSequence x0{{1, 2, 3, 4, 5}};
    for (double t : {0.1, 0.37, 0.5, 0.9}) {
        std::vector<int> hits(x0.size(), 0);
        for (int i = 0; i < n; ++i) {
            const auto xt = forward_mask(x0, t, kVocab, rng);
            for (std::size_t p = 0; p < xt.size(); ++p) {
                hits[p] += xt.tokens[p] == kVocab.mask_id;
            }
        }
        const double bound = 4.0 * std::sqrt(t * (1.0 - t) / n);
        for (int h : hits) {
            EXPECT_LT(std::abs(static_cast<double>(h) / n - t), bound) << "t=" << t;
        }
    }
}

TEST(Posterior, FinalStepUnmasks) {
    const std::vector<double> q{0.2, 0.3, 0.5};
    for (double t : {1.0, 0.5, 0.01}) {
        const auto d = posterior_unmask_dist(q, t, 0.0);
        EXPECT_EQ(d.mask_prob, 0.0);
        for (std::size_t i = 0; i < q.size(); ++i) {
            EXPECT_DOUBLE_EQ(d.token_probs[i], q[i]);
        }
    }
}

TEST(Posterior, HandEvaluations) {
    const auto u = posterior_unmask_dist({0.25, 0.25, 0.25, 0.25}, 0.5, 0.25);
    for (double p : u.token_probs) {
        EXPECT_NEAR(p, 0.125, 1e-15);
    }
    EXPECT_NEAR(u.mask_prob, 0.5, 1e-15);

    const auto o = posterior_unmask_dist({1.0, 0.0, 0.0}, 0.8, 0.4);
    EXPECT_NEAR(o.token_probs[0], 0.5, 1e-15);
    EXPECT_EQ(o.token_probs[1], 0.0);
    EXPECT_NEAR(o.mask_prob, 0.5, 1e-15);
}

TEST(Posterior, RejectsBadTimes) {
    EXPECT_THROW(posterior_unmask_dist({1.0}, 0.5, 0.5), InvalidArgument);
    EXPECT_THROW(posterior_unmask_dist({1.0}, 0.5, 0.7), InvalidArgument);
    EXPECT_THROW(posterior_unmask_dist({1.0}, 0.0, 0.0), InvalidArgument);
}

TEST(PosteriorProperty, Normalizes) {
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> pred(1 + uniform_below(rng, 40));
        double z = 0.0;
        for (auto& p : pred) {
            p = uniform01(rng);
            z += p;
        }
        for (auto& p : pred) {
            p /= z;
        }
        const double t = 1e-3 + (1.0 - 1e-3) * uniform01(rng);
        const double s = t * uniform01(rng);
        EXPECT_NEAR(posterior_unmask_dist(pred, t, s).total(), 1.0, 1e-9);
    }
}

TEST(ReverseStep, CleanTokensAbsorb) {
    Rng rng(0);
    UnmaskDistribution d{{0.0, 1.0}, 0.0};
    EXPECT_EQ(reverse_step_token(7, d, kVocab, rng), 7);
    UnmaskDistribution stay{{0.0, 0.0}, 1.0};
    EXPECT_EQ(reverse_step_token(kVocab.mask_id, stay, kVocab, rng), kVocab.mask_id);
    UnmaskDistribution onehot{{0.0, 0.0, 0.0, 1.0}, 0.0};
    EXPECT_EQ(reverse_step_token(kVocab.mask_id, onehot, kVocab, rng), 3);
}

TEST(ReverseStepProperty, AbsorbingOverTrajectories) {
    Rng rng(21);
    for (int traj = 0; traj < 1000; ++traj) {
        const int L = 1 + static_cast<int>(uniform_below(rng, 24));
        const int K = 1 + static_cast<int>(uniform_below(rng, 8));
        const auto sched = discretize_schedule(K);
        MaskedSequence x;
        x.tokens.assign(static_cast<std::size_t>(L), kVocab.mask_id);
        for (int k = 0; k < K; ++k) {
            const auto prev = x;
            for (auto& tok : x.tokens) {
                std::vector<double> pred(10);
                double z = 0.0;
                for (auto& p : pred) {
                    p = uniform01(rng);
                    z += p;
                }
                for (auto& p : pred) {
                    p /= z;
                }
                tok = reverse_step_token(tok, posterior_unmask_dist(pred, sched.steps[k], sched.steps[k + 1]), kVocab,
                                         rng);
            }
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (prev.tokens[i] != kVocab.mask_id) {
                    ASSERT_EQ(x.tokens[i], prev.tokens[i]);
                }
            }
        }
        ASSERT_EQ(x.count_masked(kVocab), 0u);
    }
}

TEST(Loss, PerfectPrediction) {
    Matrix<double> logits = Matrix<double>::Zero(1, 4);
    logits(0, 2) = 100.0;
    EXPECT_LE(mdm_loss(logits, {2}, 1.0).value, 1e-6);
}

TEST(Loss, HandValue) {
    // softmax prob of the target is e^-2: logit gap chosen accordingly.
    Matrix<double> logits(1, 2);
    const double p = std::exp(-2.0);
    logits(0, 0) = std::log(p);
    logits(0, 1) = std::log(1.0 - p);
    EXPECT_NEAR(mdm_loss(logits, {0}, 0.5).value, 4.0, 1e-12);
}

TEST(Loss, EmptyAndInvalid) {
    Matrix<double> none(0, 3);
    const auto r = mdm_loss(none, {}, 0.5);
    EXPECT_TRUE(r.empty);
    EXPECT_EQ(r.value, 0.0);
    Matrix<double> one = Matrix<double>::Zero(1, 3);
    EXPECT_THROW(mdm_loss(one, {0}, 0.0), InvalidArgument);
    EXPECT_THROW(mdm_loss(one, {0, 1}, 0.5), InvalidArgument);
}

TEST(LossProperty, NonNegativeAndMonotone) {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        Matrix<double> logits(1, 6);
        for (Eigen::Index c = 0; c < 6; ++c) {
            logits(0, c) = 4.0 * uniform01(rng) - 2.0;
        }
        const TokenId tgt = static_cast<TokenId>(uniform_below(rng, 6));
        const double t = 0.05 + 0.95 * uniform01(rng);
        double prev = mdm_loss(logits, {tgt}, t).value;
        EXPECT_GE(prev, 0.0);
        for (int step = 0; step < 10; ++step) {
            logits(0, tgt) += 0.5;
            const double cur = mdm_loss(logits, {tgt}, t).value;
            EXPECT_LT(cur, prev);
            EXPECT_GE(cur, 0.0);
            prev = cur;
        }
    }
}

TEST(Loss, GradientMatchesFiniteDifference) {
    Rng rng(2);
    Matrix<double> logits(3, 5);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        logits.data()[i] = uniform01(rng) * 2.0 - 1.0;
    }
    const std::vector<TokenId> tgt{1, 4, 0};
    const auto g = mdm_loss_grad<double>(logits, tgt, 0.3);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        auto lp = logits, lm = logits;
        lp.data()[i] += 1e-6;
        lm.data()[i] -= 1e-6;
        const double num = (mdm_loss(lp, tgt, 0.3).value - mdm_loss(lm, tgt, 0.3).value) / 2e-6;
        EXPECT_NEAR(g.data()[i], num, 1e-6);
    }
}

TEST(SampleTime, StaysInOpenInterval) {
    Rng rng(4);
    for (int i = 0; i < 10000; ++i) {
        const double t = sample_time(rng, 1e-3);
        ASSERT_GT(t, 1e-3);
        ASSERT_LE(t, 1.0);
    }
}
