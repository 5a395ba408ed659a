#include "smdm/harness.hpp"

#include <gtest/gtest.h>

using namespace smdm;

namespace {

ModelConfig harness_config() {
    ModelConfig c;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.vocab = Vocabulary::with_specials(10);
    c.max_position = 256;
    c.seed = 17;
    return c;
}

std::vector<int> sizes_of(const DecodeOrder& o) {
    std::vector<int> s;
    for (const auto& st : o.steps) {
        s.push_back(static_cast<int>(st.size()));
    }
    return s;
}

}  // namespace

TEST(Toggles, GridOrder) {
    const auto g = AblationToggle::grid();
    ASSERT_EQ(g.size(), 8u);
    EXPECT_EQ(g.front().str(), "---");
    EXPECT_EQ(g.back().str(), "PRT");
    EXPECT_EQ(g[5].str(), "P-T");
}

TEST(TokenAccounting, FullSparseAtBenchConfig) {
    const auto sizes = std::vector<int>(64, 16);
    EXPECT_EQ(analytic_token_forwards(128, sizes, 64, {true, true, true}).total(), 6272u);
    EXPECT_EQ(analytic_token_forwards(128, sizes, 64, {false, false, false}).total(), 64u * (128u + 1024u));
}

TEST(TokenAccounting, AnalyticEqualsInstrumented) {
    const Model<float> model(harness_config());
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int S = uniform_int(rng, 0, 10);
        const int L = uniform_int(rng, 1, 40);
        const int K = uniform_int(rng, 1, std::min(8, L));
        const int m = uniform_int(rng, 0, 5);
        std::vector<TokenId> prompt(static_cast<std::size_t>(S), 2);
        const auto order = random_order(L, K, rng());
        for (const auto& tg : AblationToggle::grid()) {
            const auto run = run_toggled(model, prompt, L, order, m, tg);
            ASSERT_EQ(run.token_forwards, analytic_token_forwards(S, sizes_of(order), m, tg).total())
                << tg.str() << " S=" << S << " L=" << L << " K=" << K << " m=" << m;
            ASSERT_EQ(run.response.count_masked(model.config().vocab), 0u);
        }
    }
}

TEST(TokenAccounting, EachToggleReducesAtBenchConfig) {
    const auto sizes = std::vector<int>(64, 16);
    for (const auto& tg : AblationToggle::grid()) {
        const auto base = analytic_token_forwards(128, sizes, 64, tg).total();
        for (int bit = 0; bit < 3; ++bit) {
            auto on = tg;
            bool* flag = bit == 0 ? &on.cache_prompt : bit == 1 ? &on.cache_response : &on.truncate_response;
            if (*flag) {
                continue;
            }
            *flag = true;
            EXPECT_LT(analytic_token_forwards(128, sizes, 64, on).total(), base) << tg.str() << " -> " << on.str();
        }
    }
}

TEST(TokenAccounting, EachToggleReducesWhenPromptAndRegistersAreSmall) {
    // K >= 4, S <= L/4 and m <= L/(2K) keep every single-toggle saving positive.
    Rng rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        const int L = uniform_int(rng, 32, 400);
        const int K = uniform_int(rng, 4, 16);
        const int S = uniform_int(rng, 1, L / 4);
        const int m = uniform_int(rng, 0, L / (2 * K));
        const auto sizes = step_sizes_from_schedule(discretize_schedule(K), L);
        for (const auto& tg : AblationToggle::grid()) {
            const auto base = analytic_token_forwards(S, sizes, m, tg).total();
            for (int bit = 0; bit < 3; ++bit) {
                auto on = tg;
                bool* flag = bit == 0 ? &on.cache_prompt : bit == 1 ? &on.cache_response : &on.truncate_response;
                if (*flag) {
                    continue;
                }
                *flag = true;
                ASSERT_LT(analytic_token_forwards(S, sizes, m, on).total(), base)
                    << tg.str() << " -> " << on.str() << " S=" << S << " L=" << L << " K=" << K << " m=" << m;
            }
        }
    }
}

TEST(TokenAccounting, TruncationSavingNeedsFewRegisters) {
    // With m >= the masked rows saved, truncation cannot reduce the count.
    const std::vector<int> sizes{1, 1};
    const auto off = analytic_token_forwards(0, sizes, 4, {true, true, false}).total();
    const auto on = analytic_token_forwards(0, sizes, 4, {true, true, true}).total();
    EXPECT_GT(on, off);
}

TEST(Toggles, CachingDoesNotChangeDecodeLogits) {
    const Model<double> model(Model<float>(harness_config()).cast<double>());
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const int S = uniform_int(rng, 1, 8);
        const int L = uniform_int(rng, 4, 30);
        const int K = uniform_int(rng, 2, std::min(6, L));
        std::vector<TokenId> prompt;
        for (int i = 0; i < S; ++i) {
            prompt.push_back(static_cast<TokenId>(uniform_below(rng, 10)));
        }
        const auto order = random_order(L, K, rng());
        for (bool tr : {false, true}) {
            const auto ref = run_toggled(model, prompt, L, order, 3, {false, false, tr}, true);
            for (const auto& tg : AblationToggle::grid()) {
                if (tg.truncate_response != tr) {
                    continue;
                }
                const auto run = run_toggled(model, prompt, L, order, 3, tg, true);
                ASSERT_EQ(run.decode_logits.size(), ref.decode_logits.size());
                for (std::size_t k = 0; k < ref.decode_logits.size(); ++k) {
                    ASSERT_LT((run.decode_logits[k] - ref.decode_logits[k]).cwiseAbs().maxCoeff(), 1e-10) << tg.str();
                }
                EXPECT_EQ(run.response, ref.response);
            }
        }
    }
}

TEST(Toggles, AllOnMatchesSparseSampler) {
    const Model<float> model(harness_config());
    const std::vector<TokenId> prompt{1, 2, 3, 4};
    const auto order = random_order(24, 6, 2);
    Rng rng(0);
    const auto sp = sample_pregen(model, prompt, 24, order, discretize_schedule(6), 4, rng);
    const auto run = run_toggled(model, prompt, 24, order, 4, {true, true, true});
    EXPECT_EQ(run.response, sp.response);
    EXPECT_EQ(run.token_forwards, sp.token_forwards);
}

TEST(Bench, SmallGridIsConsistent) {
    BenchConfig cfg;
    cfg.L = 32;
    cfg.S = 8;
    cfg.K = 4;
    cfg.m = 2;
    cfg.repeats = 1;
    cfg.model = harness_config();
    const auto rep = bench(cfg, AblationToggle::grid());
    ASSERT_EQ(rep.rows.size(), 8u);
    for (const auto& row : rep.rows) {
        EXPECT_EQ(row.analytic, row.instrumented) << row.toggle.str();
    }
    EXPECT_EQ(rep.dense_tokens, 4u * 40u);
    EXPECT_DOUBLE_EQ(rep.rows.front().token_speedup, 1.0);
    EXPECT_GT(rep.rows.back().token_speedup, 1.0);
}

TEST(Bench, RejectsBadConfig) {
    BenchConfig cfg;
    cfg.K = 0;
    EXPECT_THROW(bench(cfg, {}), InvalidArgument);
    cfg.K = 4;
    cfg.repeats = 0;
    EXPECT_THROW(bench(cfg, {}), InvalidArgument);
}

TEST(Median, OddAndEven) {
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
    EXPECT_EQ(median({}), 0.0);
}

TEST(Verify, PassesOnSmallBudget) {
    VerifyOptions opt;
    opt.trials = 10;
    const auto rep = verify(opt);
    EXPECT_FALSE(rep.vacuous);
    for (const auto& s : rep.suites) {
        EXPECT_TRUE(s.passed) << s.name << ": " << (s.failures.empty() ? "" : s.failures[0]);
        EXPECT_GT(s.checks, 0u) << s.name;
    }
}

TEST(Verify, InjectedFaultIsCaughtAndLocated) {
    VerifyOptions opt;
    opt.trials = 5;
    opt.inject_fault = true;
    const auto rep = verify(opt);
    EXPECT_FALSE(rep.passed());
    bool located = false;
    for (const auto& s : rep.suites) {
        for (const auto& f : s.failures) {
            located = located || (f.find("cell (0,") != std::string::npos && f.find("query") != std::string::npos);
        }
    }
    EXPECT_TRUE(located);
}

TEST(Verify, ZeroTrialsIsVacuous) {
    VerifyOptions opt;
    opt.trials = 0;
    const auto rep = verify(opt);
    EXPECT_TRUE(rep.vacuous);
    EXPECT_TRUE(rep.passed());
}

TEST(GoldenFixture, GoldenRowsParse) {
    const auto m = mask_from_rows(golden_merged_rows());
    EXPECT_EQ(m.rows(), 11u);
    EXPECT_EQ(m.count_allowed(), 3u * 3 + 2 * 5 + 6 + 3 * 9 + 2 * 8);
    EXPECT_THROW(mask_from_rows({"10", "1"}), InvalidArgument);
}
