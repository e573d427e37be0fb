#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace isgcd;
using namespace isgcd::ad;

namespace {

SemanticBipartiteGraph two_edge_graph() {
    ResponseLogSet logs;
    logs.students.intern("0");
    logs.students.intern("1");
    logs.exercises.intern("0");
    logs.logs = {{0, 0, 1}, {1, 0, 0}};
    return build_graph(logs);
}

} // namespace

TEST(EdgeLogits, ZeroParametersGiveZeroLogits) {
    const auto g = two_edge_graph();
    Rng rng(1);
    auto u = testutil::random_tensor(2, 3, rng);
    auto v = testutil::random_tensor(1, 3, rng);
    EdgeMaskParams params(3, rng);
    params.w_correct->fill(0.0);
    params.w_incorrect->fill(0.0);
    params.b_correct->fill(0.0);
    params.b_incorrect->fill(0.0);
    const auto logits = edge_logits(nullptr, u, v, g, params);
    EXPECT_DOUBLE_EQ(logits.correct->value[0], 0.0);
    EXPECT_DOUBLE_EQ(logits.incorrect->value[0], 0.0);
}

TEST(EdgeLogits, SemanticsSelectTheMatrix) {
    const auto g = two_edge_graph();
    Rng rng(2);
    auto u = make_tensor(2, 2);
    auto v = make_tensor(1, 2);
    u->value = {1.0, 0.0, 1.0, 0.0}; // both students share the same embedding
    v->value = {0.0, 0.0};
    EdgeMaskParams params(2, rng);
    const auto logits = edge_logits(nullptr, u, v, g, params);
    // identical pair embedding, different matrices -> different logits
    EXPECT_NE(logits.correct->value[0], logits.incorrect->value[0]);

    // and the logit is the linear map W [u; v] + b
    const double expect_correct = params.w_correct->value[0] * 1.0 + params.b_correct->value[0];
    EXPECT_NEAR(logits.correct->value[0], expect_correct, 1e-12);
}

TEST(EdgeLogits, GradientOfLinearLayerIsPairEmbedding) {
    const auto g = two_edge_graph();
    Rng rng(3);
    auto u = testutil::random_tensor(2, 3, rng, 1.0, false);
    auto v = testutil::random_tensor(1, 3, rng, 1.0, false);
    EdgeMaskParams params(3, rng);
    Tape tape;
    const auto logits = edge_logits(&tape, u, v, g, params);
    tape.backward(sum(&tape, logits.correct));
    // d(logit)/dW1 = [u_s; v_e] for the single correct edge (0,0)
    for (int d = 0; d < 3; ++d) {
        EXPECT_DOUBLE_EQ(params.w_correct->grad[d], u->at(0, d));
        EXPECT_DOUBLE_EQ(params.w_correct->grad[3 + d], v->at(0, d));
    }
    EXPECT_DOUBLE_EQ(params.b_correct->grad[0], 1.0);
    for (const double gr : params.w_incorrect->grad) EXPECT_DOUBLE_EQ(gr, 0.0);
}

TEST(SampleMask, DeterministicZeroLogitGivesExactlyHalf) {
    const auto g = two_edge_graph();
    EdgeLogits logits{make_tensor(1, 1), make_tensor(1, 1)};
    RelaxationConfig cfg{0.37, 1e-6, MaskMode::deterministic};
    const auto mask = sample_mask(nullptr, logits, cfg);
    EXPECT_EQ(mask.rho_correct->value[0], 0.5);
    EXPECT_EQ(mask.rho_incorrect->value[0], 0.5);
    (void)g;
}

TEST(SampleMask, DeterministicMatchesSigmoidOverTemperature) {
    EdgeLogits logits{make_tensor(1, 1), make_tensor(1, 1)};
    logits.correct->value[0] = 1.0;
    RelaxationConfig cfg{0.2, 1e-6, MaskMode::deterministic};
    const auto mask = sample_mask(nullptr, logits, cfg);
    EXPECT_NEAR(mask.rho_correct->value[0], 0.9933071490757153, 1e-12); // sigmoid(5)
}

TEST(SampleMask, TemperatureMustBePositive) {
    EdgeLogits logits{make_tensor(1, 1), make_tensor(1, 1)};
    RelaxationConfig cfg{0.0, 1e-6, MaskMode::deterministic};
    EXPECT_THROW(sample_mask(nullptr, logits, cfg), std::invalid_argument);
}

TEST(SampleMask, StochasticLowTemperatureConcentrates) {
    const double w = 0.8;
    const int draws = 100000;
    auto logits_t = make_tensor(draws, 1);
    logits_t->fill(w);
    EdgeLogits logits{logits_t, make_tensor(2, 1)};
    RelaxationConfig cfg{0.01, 1e-6, MaskMode::stochastic};
    Rng rng(42);
    const auto mask = sample_mask(nullptr, logits, cfg, &rng);
    int above = 0, extreme = 0;
    for (const double r : mask.rho_correct->value) {
        above += r > 0.5;
        extreme += r < 0.01 || r > 0.99;
    }
    const double p_above = static_cast<double>(above) / draws;
    EXPECT_NEAR(p_above, ad::sigmoid_scalar(w), 0.02);
    // at t = 0.01 nearly every draw saturates toward 0 or 1
    EXPECT_GT(static_cast<double>(extreme) / draws, 0.95);
}

TEST(SampleMask, StochasticMeanMatchesQuadrature) {
    const double w = 0.3, t = 0.2;
    const int draws = 100000;
    auto logits_t = make_tensor(draws, 1);
    logits_t->fill(w);
    EdgeLogits logits{logits_t, make_tensor(2, 1)};
    RelaxationConfig cfg{t, 1e-6, MaskMode::stochastic};
    Rng rng(7);
    const auto mask = sample_mask(nullptr, logits, cfg, &rng);
    double mc = 0.0;
    for (const double r : mask.rho_correct->value) mc += r;
    mc /= draws;

    const double analytic = testutil::simpson(
        [&](double delta) {
            const double d = std::clamp(delta, 1e-6, 1.0 - 1e-6);
            return ad::sigmoid_scalar((std::log(d / (1.0 - d)) + w) / t);
        },
        0.0, 1.0);
    EXPECT_NEAR(mc, analytic, 1e-2);
}

TEST(SampleMask, GradientsFlowThroughLogitsOnly) {
    auto logits_t = make_tensor(3, 1, true);
    logits_t->value = {0.5, -0.2, 1.0};
    EdgeLogits logits{logits_t, make_tensor(2, 1)};
    RelaxationConfig cfg{0.2, 1e-6, MaskMode::stochastic};
    Rng rng(9);
    Tape tape;
    const auto mask = sample_mask(&tape, logits, cfg, &rng);
    tape.backward(sum(&tape, mask.rho_correct));
    for (int i = 0; i < 3; ++i) {
        const double rho = mask.rho_correct->value[i];
        // d rho / d w = rho (1 - rho) / t regardless of the sampled noise
        EXPECT_NEAR(logits_t->grad[i], rho * (1.0 - rho) / 0.2, 1e-12);
    }
}

TEST(RbfGram, PointwiseValues) {
    auto x = make_tensor(2, 2);
    x->value = {0.0, 0.0, 0.2, 0.6}; // squared distance 0.04 + 0.36 = 0.4
    const auto k = rbf_gram(nullptr, x, 0.2);
    EXPECT_DOUBLE_EQ(k->at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(k->at(1, 1), 1.0);
    EXPECT_NEAR(k->at(0, 1), std::exp(-1.0), 1e-12);
    EXPECT_DOUBLE_EQ(k->at(0, 1), k->at(1, 0));
}

TEST(RbfGram, PositiveSemidefiniteOnRandomInputs) {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4 + static_cast<int>(rng.below(13)); // up to 16
        auto x = testutil::random_tensor(n, 3, rng);
        const auto k = rbf_gram(nullptr, x, 0.2);
        std::vector<std::vector<double>> km(n, std::vector<double>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) km[i][j] = k->at(i, j);
        const auto eig = testutil::symmetric_eigenvalues(km);
        for (const double ev : eig) EXPECT_GE(ev, -1e-10);
    }
}

TEST(Hsic, ConstantInputGivesExactZero) {
    auto x = make_tensor(5, 3);
    x->fill(0.7);
    Rng rng(12);
    auto y = testutil::random_tensor(5, 3, rng);
    EXPECT_DOUBLE_EQ(hsic(nullptr, x, y, 0.2)->value[0], 0.0);
}

TEST(Hsic, MatchesBruteForceExpansion) {
    Rng rng(13);
    for (int n = 3; n <= 8; ++n) {
        auto x = testutil::random_tensor(n, 2, rng);
        auto y = testutil::random_tensor(n, 2, rng);
        std::vector<std::vector<double>> xr(n, std::vector<double>(2)), yr = xr;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 2; ++j) {
                xr[i][j] = x->at(i, j);
                yr[i][j] = y->at(i, j);
            }
        const double trace_form = hsic(nullptr, x, y, 0.2)->value[0];
        const double brute = testutil::hsic_bruteforce(xr, yr, 0.2);
        EXPECT_NEAR(trace_form, brute, 1e-12);
    }
}

TEST(Hsic, SymmetricInArguments) {
    Rng rng(14);
    auto x = testutil::random_tensor(6, 3, rng);
    auto y = testutil::random_tensor(6, 3, rng);
    EXPECT_NEAR(hsic(nullptr, x, y, 0.2)->value[0], hsic(nullptr, y, x, 0.2)->value[0], 1e-12);
}

TEST(Hsic, IndependentGaussiansNearZeroSelfDependenceLarge) {
    Rng rng(15);
    const int n = 512, z = 2;
    auto x = make_tensor(n, z);
    auto y = make_tensor(n, z);
    for (auto& v : x->value) v = rng.normal();
    for (auto& v : y->value) v = rng.normal();
    const double indep = hsic(nullptr, x, y, 0.2)->value[0];
    const double self = hsic(nullptr, x, x, 0.2)->value[0];
    EXPECT_LT(indep, 0.01);
    EXPECT_GT(self, 10.0 * indep);
}

TEST(Hsic, SelfDependenceFlattensAsBandwidthGrows) {
    Rng rng(16);
    auto x = testutil::random_tensor(32, 3, rng);
    double prev = 1e9;
    for (const double alpha : {0.2, 2.0, 20.0, 200.0}) {
        const double v = hsic(nullptr, x, x, alpha)->value[0];
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Hsic, TooFewSamplesRejected) {
    auto x = make_tensor(1, 2);
    auto y = make_tensor(1, 2);
    EXPECT_THROW(hsic(nullptr, x, y, 0.2), std::invalid_argument);
    auto x2 = make_tensor(3, 2);
    EXPECT_THROW(hsic(nullptr, x2, y, 0.2), std::invalid_argument);
}

TEST(HsicLoss, IdentityMaskSelfTermPositive) {
    Rng rng(17);
    auto u = testutil::random_tensor(8, 3, rng);
    auto v = testutil::random_tensor(6, 3, rng);
    const std::vector<std::int32_t> s_ids{0, 1, 2, 3, 4};
    const std::vector<std::int32_t> e_ids{0, 1, 2, 3};
    HsicConfig cfg;
    const auto loss = hsic_loss(nullptr, u, v, u, v, s_ids, e_ids, cfg);
    EXPECT_GT(loss->value[0], 0.0);
}

TEST(HsicLoss, DegenerateSideContributesZero) {
    Rng rng(18);
    auto u = testutil::random_tensor(8, 3, rng);
    auto v = testutil::random_tensor(6, 3, rng);
    HsicConfig cfg;
    const std::vector<std::int32_t> one_student{3};
    const std::vector<std::int32_t> e_ids{0, 1, 2};
    const auto loss = hsic_loss(nullptr, u, v, u, v, one_student, e_ids, cfg);
    const auto expected = hsic(nullptr, gather_rows(nullptr, v, e_ids), gather_rows(nullptr, v, e_ids), cfg.alpha);
    EXPECT_NEAR(loss->value[0], expected->value[0], 1e-12);

    const auto both_empty = hsic_loss(nullptr, u, v, u, v, {0}, {1}, cfg);
    EXPECT_DOUBLE_EQ(both_empty->value[0], 0.0);
}

TEST(HsicLoss, FiniteAndNonNegativeOnRandomInputs) {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = testutil::random_tensor(10, 4, rng);
        auto b = testutil::random_tensor(10, 4, rng);
        const double v = hsic(nullptr, a, b, 0.2)->value[0];
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, -1e-10);
    }
}

TEST(TotalLoss, WeightingArithmetic) {
    auto bce = make_scalar(1.0);
    auto hs = make_scalar(0.2);
    EXPECT_DOUBLE_EQ(total_loss(nullptr, bce, hs, 0.5)->value[0], 1.1);
    EXPECT_DOUBLE_EQ(total_loss(nullptr, bce, hs, 0.0)->value[0], 1.0);
    EXPECT_THROW(total_loss(nullptr, bce, hs, -1.0), std::invalid_argument);
    EXPECT_DOUBLE_EQ(kDefaultHsicWeight, 0.5);
}

TEST(DetectUncertain, StrictNegativeLogitThreshold) {
    const auto detected = detect_uncertain({-1.0, 0.0, 0.5, -1e-9});
    ASSERT_EQ(detected.size(), 2u);
    EXPECT_EQ(detected[0], 0u);
    EXPECT_EQ(detected[1], 3u);
}

TEST(AdaDiff, ThresholdSemantics) {
    // delta = 0.8: correct edges need r_hat > 0.8, incorrect ones r_hat < 0.2
    const auto keep = ada_diff_keep({0.9, 0.3, 0.85}, {1.0, 0.0, 0.0}, 0.8);
    EXPECT_DOUBLE_EQ(keep[0], 1.0);
    EXPECT_DOUBLE_EQ(keep[1], 0.0);
    EXPECT_DOUBLE_EQ(keep[2], 0.0);
}

TEST(AdaDiff, HalfThresholdKeepsCurrentlyCorrectClassifications) {
    const auto keep = ada_diff_keep({0.6, 0.4, 0.4, 0.6}, {1.0, 1.0, 0.0, 0.0}, 0.5);
    EXPECT_DOUBLE_EQ(keep[0], 1.0); // r=1 predicted 0.6 > 0.5
    EXPECT_DOUBLE_EQ(keep[1], 0.0); // r=1 predicted 0.4
    EXPECT_DOUBLE_EQ(keep[2], 1.0); // r=0 predicted 0.4 < 0.5
    EXPECT_DOUBLE_EQ(keep[3], 0.0);
}

TEST(AdaDiff, DeltaRangeValidated) {
    EXPECT_THROW(ada_diff_keep({0.5}, {1.0}, 0.4), std::invalid_argument);
    EXPECT_THROW(ada_diff_keep({0.5}, {1.0}, 1.0), std::invalid_argument);
}

TEST(AdaDiff, GraphLevelMaskIsHard) {
    const auto g = two_edge_graph();
    const auto mask = ada_diff_mask(g, {0.9}, {0.3}, 0.6);
    EXPECT_EQ(mask.mode, MaskMode::hard);
    EXPECT_DOUBLE_EQ(mask.rho_correct->value[0], 1.0);
    EXPECT_DOUBLE_EQ(mask.rho_incorrect->value[0], 1.0); // 0.3 < 1 - 0.6
    const auto dropped = ada_diff_mask(g, {0.5}, {0.5}, 0.6);
    EXPECT_DOUBLE_EQ(dropped.rho_correct->value[0], 0.0);
    EXPECT_DOUBLE_EQ(dropped.rho_incorrect->value[0], 0.0);
}

TEST(MaskGradient, ReachesMaskWeightsThroughPrediction) {
    // crafted 3-node graph: the masked propagation must carry gradient back to W1
    ResponseLogSet logs;
    logs.students.intern("0");
    logs.students.intern("1");
    logs.exercises.intern("0");
    logs.logs = {{0, 0, 1}, {1, 0, 0}};
    const auto g = build_graph(logs);
    Rng rng(20);
    const auto q = testutil::random_q(1, 2, rng);
    ModelParams theta(2, 1, 2, 3, false, rng);
    EdgeMaskParams phi(3, rng);
    theta.set_requires_grad(false);

    Tape tape;
    const auto logits = edge_logits(&tape, theta.U, theta.V, g, phi);
    RelaxationConfig rc{0.2, 1e-6, MaskMode::stochastic};
    Rng noise(21);
    const EdgeMask mask = sample_mask(&tape, logits, rc, &noise);
    const auto fin = propagate(&tape, theta, apply_mask(g, mask), 2);
    Batch batch;
    batch.students = {0, 1};
    batch.exercises = {0, 0};
    batch.labels = {1.0, 0.0};
    const auto preds = predict_batch(&tape, theta, fin, q, batch);
    const auto bce = bce_loss(&tape, preds, batch.labels);
    const auto hs = hsic_loss(&tape, fin.u_final, fin.v_final, ad::detach(fin.u_final),
                              ad::detach(fin.v_final), {0, 1}, {0}, HsicConfig{});
    const auto loss = total_loss(&tape, bce, hs, 0.5);
    tape.backward(loss);

    double w1_norm = 0.0;
    for (const double gr : phi.w_correct->grad) w1_norm += std::abs(gr);
    EXPECT_GT(w1_norm, 0.0);
    double theta_norm = 0.0;
    for (const double gr : theta.U->grad) theta_norm += std::abs(gr);
    EXPECT_DOUBLE_EQ(theta_norm, 0.0);
}
