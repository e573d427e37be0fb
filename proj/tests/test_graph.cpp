#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace isgcd;

namespace {

ResponseLogSet tiny_logs() {
    ResponseLogSet set;
    set.students.intern("0");
    set.students.intern("1");
    set.exercises.intern("0");
    set.exercises.intern("1");
    set.logs = {{0, 0, 1}, {0, 1, 0}, {1, 0, 1}};
    return set;
}

} // namespace

TEST(BuildGraph, SplitsBySemantics) {
    const auto logs = tiny_logs();
    const auto g = build_graph(logs);
    EXPECT_EQ(g.correct.edge_count(), 2u);
    EXPECT_EQ(g.incorrect.edge_count(), 1u);
    EXPECT_EQ(g.edge_count(), logs.size());
}

TEST(BuildGraph, NormalizerSingleNeighborPair) {
    ResponseLogSet logs;
    logs.students.intern("s");
    logs.exercises.intern("e");
    logs.logs = {{0, 0, 1}};
    const auto g = build_graph(logs);
    ASSERT_EQ(g.correct.edge_count(), 1u);
    EXPECT_DOUBLE_EQ(g.correct.coef[0], 1.0);
}

TEST(BuildGraph, NormalizerFourByNine) {
    // student 0 has 4 correct neighbors; exercise 0 has 9 correct neighbors
    ResponseLogSet logs;
    for (int s = 0; s < 9; ++s) logs.students.intern(std::to_string(s));
    for (int e = 0; e < 4; ++e) logs.exercises.intern(std::to_string(e));
    for (int e = 0; e < 4; ++e) logs.logs.push_back({0, static_cast<std::int32_t>(e), 1});
    for (int s = 1; s < 9; ++s) logs.logs.push_back({static_cast<std::int32_t>(s), 0, 1});
    const auto g = build_graph(logs);
    ASSERT_EQ(g.correct.edge_count(), 12u);
    // edge (0,0): |N_s| = 4, |N_e| = 9 -> c = 1/6
    EXPECT_DOUBLE_EQ(g.correct.coef[0], 1.0 / 6.0);
}

TEST(BuildGraph, PartitionIsDisjoint) {
    Rng rng(3);
    const auto logs = testutil::random_logs(15, 12, 5, rng);
    const auto g = build_graph(logs);
    EXPECT_EQ(g.correct.edge_count() + g.incorrect.edge_count(), logs.size());
    std::set<std::pair<std::int32_t, std::int32_t>> correct_pairs, incorrect_pairs;
    for (std::size_t i = 0; i < g.correct.edge_count(); ++i)
        correct_pairs.insert({g.correct.students[i], g.correct.exercises[i]});
    for (std::size_t i = 0; i < g.incorrect.edge_count(); ++i)
        incorrect_pairs.insert({g.incorrect.students[i], g.incorrect.exercises[i]});
    for (const auto& p : correct_pairs) EXPECT_EQ(incorrect_pairs.count(p), 0u);
}

TEST(BuildGraph, NormalizersFiniteAndSymmetric) {
    Rng rng(4);
    const auto logs = testutil::random_logs(10, 10, 4, rng);
    const auto g = build_graph(logs);
    for (const Subgraph* sub : {&g.correct, &g.incorrect}) {
        for (std::size_t i = 0; i < sub->edge_count(); ++i) {
            EXPECT_TRUE(std::isfinite(sub->coef[i]));
            EXPECT_GT(sub->coef[i], 0.0);
            // same formula evaluated from the exercise side
            const double from_exercise = 1.0 / std::sqrt(static_cast<double>(sub->exercise_degree[sub->exercises[i]]) *
                                                         sub->student_degree[sub->students[i]]);
            EXPECT_DOUBLE_EQ(sub->coef[i], from_exercise);
        }
    }
}

TEST(BuildGraph, OnlyTrainEdgesEnter) {
    Rng rng(5);
    const auto logs = testutil::random_logs(10, 8, 4, rng);
    const std::vector<std::int32_t> train{0, 1, 2, 3, 4};
    const auto g = build_graph(logs, train);
    EXPECT_EQ(g.edge_count(), train.size());
}

TEST(ApplyMask, LengthMismatchRejected) {
    const auto logs = tiny_logs();
    const auto g = build_graph(logs);
    EdgeMask mask;
    mask.rho_correct = ad::make_tensor(1, 1); // wrong length
    mask.rho_incorrect = ad::make_tensor(1, 1);
    EXPECT_THROW(apply_mask(g, mask), std::invalid_argument);
}

TEST(ApplyMask, IdentityMaskReproducesUnmaskedPropagation) {
    Rng rng(6);
    const auto logs = testutil::random_logs(8, 6, 3, rng);
    const auto g = build_graph(logs);
    ModelParams params(8, 6, 3, 4, false, rng);
    const auto fin_plain = propagate(nullptr, params, unmasked(g), 2);
    const auto ones = all_ones_mask(g);
    const auto fin_masked = propagate(nullptr, params, apply_mask(g, ones), 2);
    EXPECT_EQ(fin_plain.u_final->value, fin_masked.u_final->value);
    EXPECT_EQ(fin_plain.v_final->value, fin_masked.v_final->value);
}

TEST(ApplyMask, ZeroMaskKillsAllMessages) {
    Rng rng(7);
    const auto logs = testutil::random_logs(8, 6, 3, rng);
    const auto g = build_graph(logs);
    ModelParams params(8, 6, 3, 4, false, rng);
    EdgeMask zeros = all_ones_mask(g);
    zeros.rho_correct->fill(0.0);
    zeros.rho_incorrect->fill(0.0);
    const auto fin = propagate(nullptr, params, apply_mask(g, zeros), 2);
    // layers >= 1 contribute nothing; readout equals layer 0
    EXPECT_EQ(fin.u_final->value, params.U->value);
    EXPECT_EQ(fin.v_final->value, params.V->value);
    for (const double v : fin.u_layers[1]->value) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(ApplyMask, HalfMaskScalesMessage) {
    ResponseLogSet logs;
    logs.students.intern("s");
    logs.exercises.intern("e");
    logs.logs = {{0, 0, 1}};
    const auto g = build_graph(logs);
    Rng rng(8);
    ModelParams params(1, 1, 1, 3, false, rng);
    EdgeMask half = all_ones_mask(g);
    half.rho_correct->fill(0.5);
    const auto fin = propagate(nullptr, params, apply_mask(g, half), 1);
    for (int d = 0; d < 3; ++d)
        EXPECT_DOUBLE_EQ(fin.u_layers[1]->at(0, d), 0.5 * params.V->at(0, d));
}

TEST(GraphDump, WritesEdgeTable) {
    testutil::TempDir dir;
    const auto logs = tiny_logs();
    const auto g = build_graph(logs);
    const auto path = dir.file("graph.tsv");
    dump_graph_tsv(g, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "semantic\tstudent\texercise\tstudent_degree\texercise_degree\tcoef");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 3);
}
