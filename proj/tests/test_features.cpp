#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace dmd;

namespace {

// Straight-line reference: nested vectors, no spans, no shared helpers.
std::vector<double> oracle_forward(const std::vector<AffineLayer>& layers, Activation act,
                                   const std::vector<float>& x) {
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t li = 0; li < layers.size(); ++li) {
        std::vector<std::vector<double>> W(layers[li].out, std::vector<double>(layers[li].in));
        for (std::size_t r = 0; r < layers[li].out; ++r)
            for (std::size_t c = 0; c < layers[li].in; ++c) W[r][c] = layers[li].weight[r * layers[li].in + c];
        std::vector<double> y;
        for (std::size_t r = 0; r < W.size(); ++r) {
            double s = layers[li].bias[r];
            for (std::size_t c = 0; c < W[r].size(); ++c) s += W[r][c] * h[c];
            if (li + 1 != layers.size()) {
                if (act == Activation::ReLU) s = std::max(0.0, s);
                if (act == Activation::Tanh) s = std::tanh(s);
            }
            y.push_back(s);
        }
        h = y;
    }
    return h;
}

AffineLayer random_layer(std::mt19937& rng, std::size_t in, std::size_t out) {
    std::normal_distribution<float> nd(0.0f, 1.0f / std::sqrt(static_cast<float>(in)));
    AffineLayer l{in, out, {}, {}};
    for (std::size_t i = 0; i < in * out; ++i) l.weight.push_back(nd(rng));
    for (std::size_t i = 0; i < out; ++i) l.bias.push_back(nd(rng));
    return l;
}

std::vector<float> random_vec(std::mt19937& rng, std::size_t n) {
    std::uniform_real_distribution<float> ud(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = ud(rng);
    return v;
}

}  // namespace

TEST(MlpForward, SingleLayerHasNoActivation) {
    AffineLayer l{2, 2, {1, 1, 0, 2}, {0.5f, -1.0f}};
    std::vector<AffineLayer> layers{l};
    auto y = mlp_forward(layers, Activation::ReLU, std::vector<float>{1, 2});
    ASSERT_EQ(y.size(), 2u);
    EXPECT_FLOAT_EQ(y[0], 3.5f);
    EXPECT_FLOAT_EQ(y[1], 3.0f);
}

TEST(MlpForward, IdentityLayerPassesThrough) {
    std::vector<AffineLayer> layers{AffineLayer::identity(3)};
    std::vector<float> x{0.25f, -7.0f, 1e-3f};
    EXPECT_EQ(mlp_forward(layers, Activation::Tanh, x), x);
}

TEST(MlpForward, HiddenReluClampsNegative) {
    AffineLayer h{2, 2, {1, -1, 0, 1}, {0, 0}};
    AffineLayer o{2, 1, {1, 1}, {0}};
    std::vector<AffineLayer> layers{h, o};
    std::vector<float> x{1, 3};
    auto y = mlp_forward(layers, Activation::ReLU, x);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_NEAR(y[0], 3.0, 1e-6);  // hidden = [-2 -> 0, 3], sum 3
    EXPECT_NEAR(y[0], oracle_forward(layers, Activation::ReLU, x)[0], 1e-6);
}

TEST(MlpForward, DimMismatch) {
    std::vector<AffineLayer> layers{AffineLayer::identity(3)};
    try {
        mlp_forward(layers, Activation::ReLU, std::vector<float>{1, 2});
        FAIL();
    } catch (const DimMismatch& e) {
        EXPECT_EQ(e.expected(), 3u);
        EXPECT_EQ(e.got(), 2u);
    }
}

TEST(TheoryVector, IdentityHeadsConcatenate) {
    TheoryInputs in{{2, 2}, {1, 0}, {0, 1}};
    auto tv = compute_theory_vector(in, HeadWeights::identity(2));
    EXPECT_EQ(tv.h_t, (Vector{1, 0, 0, 1, 2, 2, 1, 0}));
    EXPECT_EQ(tv.h_mip, (Vector{1, 0, 0, 1}));
    EXPECT_EQ(tv.h_spv, (Vector{2, 2, 1, 0}));
}

TEST(TheoryVector, TokenOverloadPicksTargetToken) {
    SentenceEmbeddings sent{{2, 2}, {{9, 9}, {1, 0}}};
    TargetEmbedding tgt{{0, 1}};
    auto tv = compute_theory_vector(sent, 1, tgt, HeadWeights::identity(2));
    EXPECT_EQ(tv.h_t, (Vector{1, 0, 0, 1, 2, 2, 1, 0}));
    EXPECT_THROW(compute_theory_vector(sent, 2, tgt, HeadWeights::identity(2)), PreconditionError);
}

TEST(TheoryVector, ConcatOrderMatters) {
    std::mt19937 rng(5);
    HeadWeights w;
    w.activation = Activation::Tanh;
    w.f = {random_layer(rng, 8, 4)};
    w.g = {random_layer(rng, 8, 4)};
    TheoryInputs a{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
    TheoryInputs b{a.v_s, a.v_t, a.v_st};
    EXPECT_NE(compute_theory_vector(a, w).h_mip, compute_theory_vector(b, w).h_mip);
    TheoryInputs c{a.v_s, a.v_st, a.v_st};
    TheoryInputs d{a.v_s, a.v_st, a.v_st};
    EXPECT_EQ(compute_theory_vector(c, w).h_mip, compute_theory_vector(d, w).h_mip);
}

TEST(TheoryVector, MatchesOracleWithTwoLayerHeads) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        HeadWeights w;
        w.activation = trial % 2 ? Activation::ReLU : Activation::Tanh;
        w.f = {random_layer(rng, 16, 6), random_layer(rng, 6, 4)};
        w.g = {random_layer(rng, 16, 5), random_layer(rng, 5, 4)};
        TheoryInputs in{random_vec(rng, 8), random_vec(rng, 8), random_vec(rng, 8)};
        auto tv = compute_theory_vector(in, w);
        std::vector<float> mip_in(in.v_st);
        mip_in.insert(mip_in.end(), in.v_t.begin(), in.v_t.end());
        std::vector<float> spv_in(in.v_s);
        spv_in.insert(spv_in.end(), in.v_st.begin(), in.v_st.end());
        auto m = oracle_forward(w.f, w.activation, mip_in);
        auto s = oracle_forward(w.g, w.activation, spv_in);
        ASSERT_EQ(tv.h_t.size(), 8u);
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_NEAR(tv.h_t[i], m[i], 1e-6);
            EXPECT_NEAR(tv.h_t[4 + i], s[i], 1e-6);
        }
    }
}

TEST(TheoryVector, RejectsWrongInputDims) {
    TheoryInputs in{{1, 2, 3}, {1, 0}, {0, 1}};
    EXPECT_THROW(compute_theory_vector(in, HeadWeights::identity(2)), DimMismatch);
}

TEST(TestEncoder, Deterministic) {
    TestEncoder a(12, 3), b(12, 3);
    Sample s("x", "The river sleeps tonight", 2);
    auto ea = a.encode(s), eb = b.encode(s);
    EXPECT_EQ(ea.v_s, eb.v_s);
    EXPECT_EQ(ea.v_st, eb.v_st);
    EXPECT_EQ(ea.v_t, eb.v_t);
    EXPECT_NE(TestEncoder(12, 4).encode(s).v_st, ea.v_st);
}

TEST(TestEncoder, TokensDifferAndAreUnitNorm) {
    TestEncoder enc(10, 1);
    auto sent = enc.encode_sentence({"a", "cat", "a"});
    EXPECT_NE(sent.v_tokens[0], sent.v_tokens[1]);
    // Same word at another position is a different contextual vector.
    EXPECT_NE(sent.v_tokens[0], sent.v_tokens[2]);
    for (const auto& v : sent.v_tokens) {
        double n = 0;
        for (float x : v) n += static_cast<double>(x) * x;
        EXPECT_NEAR(n, 1.0, 1e-6);
    }
}

TEST(TestEncoder, SentenceVectorIsTokenMean) {
    TestEncoder enc(9, 2);
    auto sent = enc.encode_sentence({"time", "flew", "by", "quickly"});
    for (std::size_t d = 0; d < 9; ++d) {
        double m = 0;
        for (const auto& t : sent.v_tokens) m += t[d];
        EXPECT_NEAR(sent.v_s[d], m / 4.0, 1e-6);
    }
}

TEST(TestEncoder, ContextChangesTokenVector) {
    TestEncoder enc(8, 0);
    auto a = enc.encode(Sample("a", "time flew by", 1));
    auto b = enc.encode(Sample("b", "the bird flew", 2));
    EXPECT_NE(a.v_st, b.v_st);
    EXPECT_EQ(a.v_t, b.v_t);  // target-alone encoding ignores context
}

TEST(HeadWeightsIo, MismatchedBiasIsShapeError) {
    dmd::fixtures::TempDir tmp;
    util::write_file(tmp.file("w.json"),
                     R"({"activation":"relu","f":[{"w":[[1,0],[0,1]],"b":[0]}],"g":[{"w":[[1,0],[0,1]],"b":[0,0]}]})");
    EXPECT_THROW(load_head_weights(tmp.file("w.json")), ShapeError);
}

TEST(HeadWeightsIo, MalformedJsonIsFormatError) {
    dmd::fixtures::TempDir tmp;
    util::write_file(tmp.file("w.json"), "{not json");
    EXPECT_THROW(load_head_weights(tmp.file("w.json")), FormatError);
    util::write_file(tmp.file("w2.json"), R"({"activation":"gelu","f":[],"g":[]})");
    EXPECT_THROW(load_head_weights(tmp.file("w2.json")), FormatError);
}

TEST(HeadWeightsIo, RoundTripGivesIdenticalOutput) {
    std::mt19937 rng(99);
    HeadWeights w;
    w.activation = Activation::Tanh;
    w.f = {random_layer(rng, 12, 7), random_layer(rng, 7, 3)};
    w.g = {random_layer(rng, 12, 3)};
    dmd::fixtures::TempDir tmp;
    save_head_weights(w, tmp.file("w.json"));
    auto back = load_head_weights(tmp.file("w.json"));
    TheoryInputs in{random_vec(rng, 6), random_vec(rng, 6), random_vec(rng, 6)};
    EXPECT_EQ(compute_theory_vector(in, w).h_t, compute_theory_vector(in, back).h_t);
    EXPECT_EQ(weights_fingerprint(w), weights_fingerprint(back));
}

TEST(Precomputed, EmptyFileGivesEmptyMap) {
    dmd::fixtures::TempDir tmp;
    util::write_file(tmp.file("e.jsonl"), "");
    EXPECT_TRUE(load_precomputed(tmp.file("e.jsonl")).empty());
}

TEST(Precomputed, RoundTripAndLookup) {
    dmd::fixtures::TempDir tmp;
    std::map<std::string, TheoryInputs> recs{{"a", {{1, 2}, {3, 4}, {5, 6}}}, {"b", {{0, 0}, {1, 1}, {2, 2}}}};
    write_precomputed(recs, tmp.file("p.jsonl"));
    auto back = load_precomputed(tmp.file("p.jsonl"));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back["a"].v_st, (Vector{3, 4}));
    PrecomputedProvider prov(back, "p.jsonl");
    EXPECT_EQ(prov.encode(Sample("b", "x y", 0)).v_t, (Vector{2, 2}));
    try {
        prov.encode(Sample("zzz", "x y", 0));
        FAIL();
    } catch (const MissingEmbedding& e) {
        EXPECT_EQ(e.id(), "zzz");
    }
}

TEST(Precomputed, DisagreeingDimsIsShapeError) {
    dmd::fixtures::TempDir tmp;
    util::write_file(tmp.file("p.jsonl"), R"({"id":"a","v_s":[1,2],"v_st":[1],"v_t":[1,2]})" "\n");
    EXPECT_THROW(load_precomputed(tmp.file("p.jsonl")), ShapeError);
    util::write_file(tmp.file("q.jsonl"),
                     R"({"id":"a","v_s":[1,2],"v_st":[1,2],"v_t":[1,2]})" "\n"
                     R"({"id":"b","v_s":[1,2,3],"v_st":[1,2,3],"v_t":[1,2,3]})" "\n");
    EXPECT_THROW(load_precomputed(tmp.file("q.jsonl")), ShapeError);
    util::write_file(tmp.file("r.jsonl"), R"({"id":"a","v_s":[1,2]})" "\n");
    EXPECT_THROW(load_precomputed(tmp.file("r.jsonl")), FormatError);
}
