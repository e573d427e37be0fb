#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "isgcd/dataset.hpp"
#include "isgcd/rng.hpp"

namespace isgcd {

inline double accuracy(const std::vector<double>& preds, const std::vector<double>& labels,
                       double threshold = 0.5) {
    if (preds.empty() || preds.size() != labels.size())
        throw std::invalid_argument("accuracy: empty or misaligned inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        hits += (preds[i] >= threshold) == (labels[i] != 0.0);
    return static_cast<double>(hits) / preds.size();
}

// Rank-based (Mann-Whitney) AUC with average ranks for ties, so tied
// prediction pairs contribute 1/2.
inline double auc(const std::vector<double>& preds, const std::vector<double>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw std::invalid_argument("auc: empty or misaligned inputs");
    const std::size_t n = preds.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a] < preds[b]; });

    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && preds[order[j]] == preds[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0.0) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: needs both classes present");
    return (pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Degree of Agreement of a proficiency matrix against held-out logs.
// For each concept, over student pairs that both answered a related exercise
// with different outcomes and have strictly ordered abilities on the concept:
// the fraction where the higher-ability student is the correct one. Concepts
// without a single valid pair are excluded from the mean. Concepts whose
// candidate pair count exceeds `max_pairs_per_concept` are uniformly thinned
// with a fixed seed.
inline double doa(const std::vector<std::vector<double>>& proficiency, // M x T
                  const ResponseLogSet& logs, const std::vector<std::int32_t>& test_indices,
                  const QMatrix& q, std::size_t max_pairs_per_concept = 1'000'000,
                  std::uint64_t seed = 0) {
    const auto t_count = static_cast<std::size_t>(q.num_concepts);

    // test responders per exercise, split by outcome
    std::vector<std::vector<std::int32_t>> correct_by_ex(q.num_exercises), wrong_by_ex(q.num_exercises);
    for (const std::int32_t idx : test_indices) {
        const auto& log = logs.logs[idx];
        (log.score ? correct_by_ex : wrong_by_ex)[log.exercise].push_back(log.student);
    }
    std::vector<std::vector<std::int32_t>> exercises_of_concept(t_count);
    for (std::int32_t e = 0; e < q.num_exercises; ++e)
        for (const std::int32_t k : q.concepts_of[e]) exercises_of_concept[k].push_back(e);

    double doa_sum = 0.0;
    std::size_t concepts_counted = 0;
    for (std::size_t k = 0; k < t_count; ++k) {
        std::size_t candidates = 0;
        for (const std::int32_t e : exercises_of_concept[k])
            candidates += correct_by_ex[e].size() * wrong_by_ex[e].size();
        if (candidates == 0) continue;

        const bool thin = candidates > max_pairs_per_concept;
        const double keep_p = thin ? static_cast<double>(max_pairs_per_concept) / candidates : 1.0;
        Rng rng = stream_rng(seed, "doa", k);

        std::size_t num = 0, den = 0;
        for (const std::int32_t e : exercises_of_concept[k]) {
            for (const std::int32_t sc : correct_by_ex[e]) {
                const double a_c = proficiency[sc][k];
                for (const std::int32_t sw : wrong_by_ex[e]) {
                    if (thin && !rng.bernoulli(keep_p)) continue;
                    const double a_w = proficiency[sw][k];
                    if (a_c == a_w) continue;
                    ++den;
                    num += a_c > a_w;
                }
            }
        }
        if (den == 0) continue;
        doa_sum += static_cast<double>(num) / den;
        ++concepts_counted;
    }
    if (concepts_counted == 0) throw std::invalid_argument("doa: no concept has a valid response pair");
    return doa_sum / concepts_counted;
}

} // namespace isgcd
