#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"

using namespace dmd;

namespace {

constexpr auto M = Label::Metaphorical;
constexpr auto L = Label::Literal;

}  // namespace

TEST(Score, AllCorrect) {
    std::vector<ScoredPair> p{{M, M}, {M, M}, {M, M}, {M, M}, {L, L}, {L, L}, {L, L}, {L, L}};
    auto c = score(p);
    EXPECT_EQ(c.tp, 4u);
    EXPECT_EQ(c.tn, 4u);
    EXPECT_EQ(accuracy(c), 1.0);
    EXPECT_EQ(f1(c), 1.0);
}

TEST(Score, HandComputedConfusion) {
    std::vector<ScoredPair> p{{M, M}, {M, L}, {L, L}, {L, M}};
    auto c = score(p);
    EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1, 0, 0}));
    EXPECT_EQ(accuracy(c), 0.5);
    EXPECT_EQ(precision(c), 0.5);
    EXPECT_EQ(recall(c), 0.5);
    EXPECT_EQ(f1(c), 0.5);
}

TEST(Score, NoPositivePredictions) {
    std::vector<ScoredPair> p{{M, L}, {M, L}, {L, L}};
    EXPECT_EQ(f1(score(p)), 0.0);
}

TEST(Score, UnparsedIsWrongAndNeverFalsePositive) {
    std::vector<ScoredPair> p{{M, M}, {M, std::nullopt}, {L, std::nullopt}, {L, L}};
    auto c = score(p);
    EXPECT_EQ(c.unparsed, 2u);
    EXPECT_EQ(c.unparsed_positive, 1u);
    EXPECT_EQ(c.fp, 0u);
    EXPECT_EQ(c.total(), 4u);
    EXPECT_EQ(accuracy(c), 0.5);
    EXPECT_EQ(f1(c), 2.0 / 3.0);  // 2*1 / (2*1 + 0 + 0 + 1)
}

TEST(Score, OrderInvariant) {
    std::mt19937 rng(1);
    std::vector<ScoredPair> p;
    for (int i = 0; i < 60; ++i) {
        const Label g = rng() % 2 ? M : L;
        const auto r = rng() % 3;
        p.emplace_back(g, r == 0 ? std::optional<Label>{} : std::optional<Label>{r == 1 ? M : L});
    }
    const auto base = score(p);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(p.begin(), p.end(), rng);
        EXPECT_EQ(score(p), base);
    }
}

TEST(Metrics, F1HandArithmetic) {
    ConfusionCounts c{2, 1, 6, 1, 0, 0};
    EXPECT_DOUBLE_EQ(f1(c), 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(accuracy(c), 0.8);
}

TEST(Metrics, ZeroDivisionRule) {
    ConfusionCounts c{0, 0, 5, 0, 0, 0};
    EXPECT_EQ(f1(c), 0.0);
    EXPECT_EQ(accuracy(c), 1.0);
}

TEST(Metrics, EmptyEvaluation) {
    EXPECT_THROW(accuracy(ConfusionCounts{}), EmptyEvaluation);
    EXPECT_THROW(f1(ConfusionCounts{}), EmptyEvaluation);
}

TEST(MeanStd, SampleStandardDeviation) {
    auto [m, s] = mean_std(std::vector<double>{0.8, 0.9, 1.0});
    EXPECT_NEAR(m, 0.9, 1e-12);
    EXPECT_NEAR(s, 0.1, 1e-12);
    auto [m1, s1] = mean_std(std::vector<double>{0.7});
    EXPECT_EQ(m1, 0.7);
    EXPECT_EQ(s1, 0.0);
    auto [m2, s2] = mean_std(std::vector<double>{0.5, 0.5, 0.5});
    EXPECT_EQ(m2, 0.5);
    EXPECT_EQ(s2, 0.0);
}

namespace {

Dataset fixture() { return parse_dataset(dmd::fixtures::data_path("fixture20.jsonl")); }

}  // namespace

TEST(Evaluate, FullModeTranscriptCounts) {
    auto ds = fixture();
    auto p = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    EvalOptions o;
    o.runs = 2;
    o.n_per_class = 4;
    auto agg = evaluate(p, ds, Mode::Full, o);
    ASSERT_EQ(agg.runs.size(), 2u);
    for (const auto& r : agg.runs) {
        ASSERT_EQ(r.per_sample.size(), 8u);
        EXPECT_EQ(r.per_sample[0].llm_calls, 4u);
        for (std::size_t i = 1; i < r.per_sample.size(); ++i) EXPECT_EQ(r.per_sample[i].llm_calls, 3u);
        for (const auto& o : r.per_sample) {
            EXPECT_FALSE(o.error.has_value()) << *o.error;
            EXPECT_TRUE(o.implicit && o.explicit_ && o.judge_text);
        }
        EXPECT_EQ(r.counts.total(), 8u);
    }
    EXPECT_EQ(agg.runs[0].seed, 0u);
    EXPECT_EQ(agg.runs[1].seed, 1u);
    EXPECT_EQ(agg.runs[0].run_id, "full/run0");
}

TEST(Evaluate, IdenticalRunsHaveZeroStd) {
    auto ds = fixture();
    auto p = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    auto agg = evaluate(p, ds, Mode::Full, {3, 0, std::nullopt});
    EXPECT_EQ(agg.std_acc, 0.0);
    EXPECT_EQ(agg.std_f1, 0.0);
    // Judge is scripted wrong on 3 of 20.
    EXPECT_DOUBLE_EQ(agg.mean_acc, 17.0 / 20.0);
}

TEST(Evaluate, SingleStageModesUseTheirOwnAnswer) {
    auto ds = fixture();
    auto p = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    auto im = evaluate(p, ds, Mode::ImplicitOnly, {1, 0, std::nullopt});
    auto ex = evaluate(p, ds, Mode::ExplicitOnly, {1, 0, std::nullopt});
    EXPECT_DOUBLE_EQ(im.mean_acc, 16.0 / 20.0);
    EXPECT_DOUBLE_EQ(ex.mean_acc, 14.0 / 20.0);
    for (const auto& o : im.runs[0].per_sample) {
        EXPECT_EQ(o.llm_calls, 1u);
        EXPECT_FALSE(o.explicit_.has_value());
    }
    EXPECT_EQ(ex.runs[0].per_sample[0].llm_calls, 2u);
    EXPECT_EQ(ex.runs[0].per_sample[1].llm_calls, 1u);
}

TEST(Evaluate, StageFailureRecordedNotThrown) {
    auto ds = fixture();
    // Only implicit answers are scripted: explicit and judge calls exhaust.
    auto mock = std::make_shared<MockBackend>(
        std::vector<MockRule>{{"", Stage::Implicit, "ANSWER: METAPHORICAL"}, {"", Stage::Thoughts, "1. a\n2. b"}});
    auto p = dmd::fixtures::fixture_pipeline(mock, ds);
    auto agg = evaluate(p, ds, Mode::Full, {1, 0, std::nullopt});
    const auto& r = agg.runs[0];
    EXPECT_EQ(r.counts.unparsed, 20u);
    for (const auto& o : r.per_sample) {
        ASSERT_TRUE(o.error.has_value());
        EXPECT_TRUE(util::contains(*o.error, "script"));
        EXPECT_TRUE(o.implicit.has_value());
        EXPECT_FALSE(o.predicted.has_value());
    }
    EXPECT_EQ(r.accuracy, 0.0);
}

TEST(Evaluate, ConcurrentJobsMatchSequential) {
    auto ds = fixture();
    auto seq = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    auto par = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    par.jobs = 4;
    EvalOptions o{3, 5, 6};
    auto a = evaluate(seq, ds, Mode::Full, o);
    auto b = evaluate(par, ds, Mode::Full, o);
    EXPECT_EQ(aggregate_to_json(a).dump(), aggregate_to_json(b).dump());
}

TEST(Evaluate, Preconditions) {
    auto ds = fixture();
    auto p = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    EXPECT_THROW(evaluate(p, ds, Mode::Full, {0, 0, std::nullopt}), ConfigError);
    EXPECT_THROW(evaluate(p, ds, Mode::Full, {1, 0, 11}), InsufficientClass);
    auto unlabeled = ds;
    unlabeled.samples.emplace_back("u", "no label", 0);
    EXPECT_THROW(evaluate(p, unlabeled, Mode::Full, {1, 0, std::nullopt}), UnlabeledSample);
    auto no_store = p;
    no_store.store.reset();
    EXPECT_THROW(evaluate(no_store, ds, Mode::ImplicitOnly, {1, 0, std::nullopt}), ConfigError);
    EXPECT_NO_THROW(evaluate(no_store, ds, Mode::ExplicitOnly, {1, 0, std::nullopt}));
}

TEST(Report, JsonRoundTripRecomputes) {
    auto ds = fixture();
    auto p = dmd::fixtures::fixture_pipeline(dmd::fixtures::fixture_mock(), ds);
    auto agg = evaluate(p, ds, Mode::Full, {3, 0, 6});
    auto text = aggregate_to_json(agg).dump();
    auto back = aggregate_from_json(json::parse(text));
    EXPECT_EQ(aggregate_to_json(back).dump(), text);
    std::vector<double> accs, f1s;
    for (const auto& r : back.runs) {
        auto c = score_outcomes(r.per_sample);
        EXPECT_EQ(c, r.counts);
        EXPECT_EQ(accuracy(c), r.accuracy);
        EXPECT_EQ(f1(c), r.f1);
        accs.push_back(accuracy(c));
        f1s.push_back(f1(c));
    }
    EXPECT_EQ(mean_std(accs), std::make_pair(back.mean_acc, back.std_acc));
    EXPECT_EQ(mean_std(f1s), std::make_pair(back.mean_f1, back.std_f1));
}

TEST(Report, Table) {
    AggregateReport a;
    a.mode = Mode::ImplicitOnly;
    a.runs.resize(3);
    a.mean_acc = 0.9;
    a.std_acc = 0.1;
    a.mean_f1 = 0.8525;
    a.std_f1 = 0.0;
    auto t = render_table({a});
    EXPECT_TRUE(util::contains(t, "implicit_only"));
    EXPECT_TRUE(util::contains(t, "90.00 ± 10.00"));
    EXPECT_TRUE(util::contains(t, "85.25 ± 0.00"));
    EXPECT_TRUE(util::contains(t, "Acc"));
}

TEST(Mode, Parse) {
    EXPECT_EQ(parse_mode("implicit"), Mode::ImplicitOnly);
    EXPECT_EQ(parse_mode("EXPLICIT_ONLY"), Mode::ExplicitOnly);
    EXPECT_EQ(parse_mode("full"), Mode::Full);
    EXPECT_FALSE(parse_mode("both").has_value());
}
