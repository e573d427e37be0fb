#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace isgcd;

TEST(Accuracy, Basics) {
    EXPECT_DOUBLE_EQ(accuracy({0.9, 0.1}, {1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(accuracy({0.9, 0.9}, {1, 0}), 0.5);
    EXPECT_DOUBLE_EQ(accuracy({0.5}, {1}), 1.0); // threshold is inclusive
    EXPECT_THROW(accuracy({}, {}), std::invalid_argument);
}

TEST(Auc, SeparatedAndTied) {
    EXPECT_DOUBLE_EQ(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
    EXPECT_DOUBLE_EQ(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
    EXPECT_THROW(auc({0.5, 0.6}, {1, 1}), std::invalid_argument);
}

namespace {

// O(n^2) pairwise AUC: ties count one half.
double auc_bruteforce(const std::vector<double>& preds, const std::vector<double>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] == 0.0) continue;
        for (std::size_t j = 0; j < preds.size(); ++j) {
            if (labels[j] != 0.0) continue;
            ++pairs;
            if (preds[i] > preds[j])
                wins += 1.0;
            else if (preds[i] == preds[j])
                wins += 0.5;
        }
    }
    return wins / pairs;
}

} // namespace

TEST(Auc, MatchesBruteForcePairCount) {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 10 + static_cast<int>(rng.below(191)); // up to 200
        std::vector<double> preds(n), labels(n);
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // quantized predictions force plenty of ties
            preds[i] = static_cast<double>(rng.below(20)) / 20.0;
            labels[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            (labels[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        EXPECT_NEAR(auc(preds, labels), auc_bruteforce(preds, labels), 1e-12);
    }
}

namespace {

ResponseLogSet two_student_shared_exercise(bool higher_is_correct) {
    ResponseLogSet logs;
    logs.students.intern("hi");
    logs.students.intern("lo");
    logs.exercises.intern("e");
    logs.logs = {{0, 0, static_cast<std::int8_t>(higher_is_correct ? 1 : 0)},
                 {1, 0, static_cast<std::int8_t>(higher_is_correct ? 0 : 1)}};
    return logs;
}

QMatrix single_concept_q(std::int32_t n_exercises = 1) {
    QMatrix q;
    q.num_exercises = n_exercises;
    q.num_concepts = 1;
    q.concept_ids.intern("k");
    q.concepts_of.assign(n_exercises, {0});
    return q;
}

} // namespace

TEST(Doa, SingleAgreeingPairIsOne) {
    const auto logs = two_student_shared_exercise(true);
    const std::vector<std::vector<double>> prof{{0.9}, {0.2}};
    const std::vector<std::int32_t> test{0, 1};
    EXPECT_DOUBLE_EQ(doa(prof, logs, test, single_concept_q()), 1.0);
}

TEST(Doa, SingleDisagreeingPairIsZero) {
    const auto logs = two_student_shared_exercise(false);
    const std::vector<std::vector<double>> prof{{0.9}, {0.2}};
    const std::vector<std::int32_t> test{0, 1};
    EXPECT_DOUBLE_EQ(doa(prof, logs, test, single_concept_q()), 0.0);
}

TEST(Doa, NoValidPairIsAnError) {
    ResponseLogSet logs;
    logs.students.intern("a");
    logs.exercises.intern("e");
    logs.logs = {{0, 0, 1}};
    const std::vector<std::vector<double>> prof{{0.5}};
    EXPECT_THROW(doa(prof, logs, {0}, single_concept_q()), std::invalid_argument);
}

TEST(Doa, InvariantUnderMonotoneTransformPerConcept) {
    Rng rng(32);
    const int m = 30, n = 20, t = 4;
    const auto logs = testutil::random_logs(m, n, 8, rng);
    const auto q = testutil::random_q(n, t, rng);
    std::vector<std::int32_t> test(logs.size());
    for (std::size_t i = 0; i < test.size(); ++i) test[i] = static_cast<std::int32_t>(i);

    std::vector<std::vector<double>> prof(m, std::vector<double>(t));
    for (auto& row : prof)
        for (auto& v : row) v = rng.uniform(0.01, 0.99);
    const double base = doa(prof, logs, test, q);

    auto transformed = prof;
    for (auto& row : transformed)
        for (int k = 0; k < t; ++k) {
            const double x = row[k];
            // a different strictly increasing map per concept
            row[k] = k % 2 ? std::pow(x, 3.0) + 0.1 * k : std::tanh(4.0 * x) + 0.01 * k;
        }
    EXPECT_DOUBLE_EQ(doa(transformed, logs, test, q), base);
}

TEST(Doa, RandomAbilitiesConvergeToHalf) {
    Rng rng(33);
    const int m = 60, n = 40;
    const auto logs = testutil::random_logs(m, n, 25, rng);
    const auto q = single_concept_q(n);
    std::vector<std::int32_t> test(logs.size());
    for (std::size_t i = 0; i < test.size(); ++i) test[i] = static_cast<std::int32_t>(i);
    std::vector<std::vector<double>> prof(m, std::vector<double>(1));
    for (auto& row : prof) row[0] = rng.uniform();
    EXPECT_NEAR(doa(prof, logs, test, q), 0.5, 0.02);
}

TEST(Doa, BoundedInUnitInterval) {
    Rng rng(34);
    const auto logs = testutil::random_logs(12, 8, 5, rng);
    const auto q = testutil::random_q(8, 3, rng);
    std::vector<std::int32_t> test(logs.size());
    for (std::size_t i = 0; i < test.size(); ++i) test[i] = static_cast<std::int32_t>(i);
    std::vector<std::vector<double>> prof(12, std::vector<double>(3));
    for (auto& row : prof)
        for (auto& v : row) v = rng.uniform();
    const double v = doa(prof, logs, test, q);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
}
