#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "isgcd/dataset.hpp"
#include "isgcd/rng.hpp"

namespace isgcd {

// Configuration of the synthetic dataset. Mastery comes from a low-dimensional
// latent model (student vector x concept loading against a per-concept
// threshold), exercises carry 1-3 random concepts, responses follow the
// DINA-style guess/slip rule, and exercise popularity is Zipf-skewed so the
// response graph has the long tail of real logs.
struct SynthConfig {
    std::int32_t students = 500;
    std::int32_t exercises = 200;
    std::int32_t concepts = 20;
    int logs_per_student = 40; // mean; per-student counts vary around it
    double guess = 0.1;
    double slip = 0.1;
    int min_concepts = 1;
    int max_concepts = 3;
    int latent_dim = 4;            // dimensionality of the mastery structure
    double mastery_rate = 0.82;    // mean per-concept mastery probability
    double popularity_skew = 1.0;  // Zipf exponent over exercises (0 = uniform)
    std::uint64_t seed = 0;
};

struct SynthData {
    ResponseLogSet logs;
    QMatrix q;
    std::vector<std::vector<std::int8_t>> mastery; // M x T ground truth
    std::vector<std::vector<double>> mastery_score; // M x T latent scores
};

namespace detail {

// Beasley-Springer-Moro inverse normal CDF; plenty for threshold placement.
inline double probit(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) return -probit(1 - p);
    const double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

} // namespace detail

inline SynthData generate_synthetic(const SynthConfig& cfg) {
    if (cfg.min_concepts < 1 || cfg.max_concepts < cfg.min_concepts || cfg.max_concepts > cfg.concepts)
        throw std::invalid_argument("generate_synthetic: bad concepts-per-exercise range");
    if (cfg.guess < 0 || cfg.guess > 1 || cfg.slip < 0 || cfg.slip > 1)
        throw std::invalid_argument("generate_synthetic: guess/slip out of [0,1]");
    if (cfg.mastery_rate <= 0 || cfg.mastery_rate >= 1)
        throw std::invalid_argument("generate_synthetic: mastery_rate out of (0,1)");
    if (cfg.latent_dim < 1) throw std::invalid_argument("generate_synthetic: latent_dim must be >= 1");

    Rng rng = stream_rng(cfg.seed, "synth");
    SynthData data;

    for (std::int32_t s = 0; s < cfg.students; ++s) data.logs.students.intern(std::to_string(s));
    for (std::int32_t e = 0; e < cfg.exercises; ++e) data.logs.exercises.intern(std::to_string(e));

    // latent mastery structure: score_sk = <x_s, g_k> + wobble, mastered when
    // the score clears the concept threshold
    std::vector<std::vector<double>> x(cfg.students, std::vector<double>(cfg.latent_dim));
    for (auto& row : x)
        for (auto& v : row) v = rng.normal();
    std::vector<std::vector<double>> load(cfg.concepts, std::vector<double>(cfg.latent_dim));
    for (auto& row : load)
        for (auto& v : row) v = rng.normal() / std::sqrt(static_cast<double>(cfg.latent_dim));

    const double wobble_sd = 0.25;
    const double score_sd = std::sqrt(1.0 + wobble_sd * wobble_sd);
    const double base_threshold = score_sd * detail::probit(1.0 - cfg.mastery_rate);
    std::vector<double> threshold(cfg.concepts);
    for (auto& t : threshold) t = base_threshold + rng.uniform(-0.3, 0.3);

    data.mastery.assign(cfg.students, std::vector<std::int8_t>(cfg.concepts, 0));
    data.mastery_score.assign(cfg.students, std::vector<double>(cfg.concepts, 0.0));
    for (std::int32_t s = 0; s < cfg.students; ++s)
        for (std::int32_t k = 0; k < cfg.concepts; ++k) {
            double score = 0.0;
            for (int d = 0; d < cfg.latent_dim; ++d) score += x[s][d] * load[k][d];
            score += wobble_sd * rng.normal();
            data.mastery_score[s][k] = score;
            data.mastery[s][k] = score >= threshold[k] ? 1 : 0;
        }

    data.q.num_exercises = cfg.exercises;
    data.q.num_concepts = cfg.concepts;
    data.q.concepts_of.assign(cfg.exercises, {});
    for (std::int32_t k = 0; k < cfg.concepts; ++k) data.q.concept_ids.intern(std::to_string(k));
    for (std::int32_t e = 0; e < cfg.exercises; ++e) {
        const int count =
            cfg.min_concepts +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_concepts - cfg.min_concepts + 1)));
        std::vector<std::int32_t> pool(cfg.concepts);
        for (std::int32_t k = 0; k < cfg.concepts; ++k) pool[k] = k;
        shuffle(pool, rng);
        auto& row = data.q.concepts_of[e];
        row.assign(pool.begin(), pool.begin() + count);
        std::sort(row.begin(), row.end());
    }

    const auto respond = [&](std::int32_t s, std::int32_t e) -> std::int8_t {
        bool mastered = true;
        for (const std::int32_t k : data.q.concepts_of[e]) mastered = mastered && data.mastery[s][k];
        const double p = mastered ? 1.0 - cfg.slip : cfg.guess;
        return rng.bernoulli(p) ? 1 : 0;
    };

    // Zipf popularity over a shuffled exercise order
    std::vector<std::int32_t> by_rank(cfg.exercises);
    for (std::int32_t e = 0; e < cfg.exercises; ++e) by_rank[e] = e;
    shuffle(by_rank, rng);
    std::vector<double> cumulative(cfg.exercises);
    double total = 0.0;
    for (std::int32_t r = 0; r < cfg.exercises; ++r) {
        total += 1.0 / std::pow(r + 1.0, cfg.popularity_skew);
        cumulative[r] = total;
    }
    const auto draw_exercise = [&]() {
        const double u = rng.uniform() * total;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        return by_rank[it - cumulative.begin()];
    };

    std::vector<std::set<std::int32_t>> answered(cfg.students);
    const int cap = cfg.exercises;
    for (std::int32_t s = 0; s < cfg.students; ++s) {
        const int quota =
            std::min(cap, std::max(3, 3 + static_cast<int>(rng.below(
                                            static_cast<std::uint64_t>(std::max(1, 2 * cfg.logs_per_student - 5))))));
        auto& mine = answered[s];
        int guard = 0;
        while (static_cast<int>(mine.size()) < quota && guard++ < 60 * quota) mine.insert(draw_exercise());
        for (const std::int32_t e : mine) data.logs.logs.push_back({s, e, respond(s, e)});
    }
    // keep every exercise present so dims survive a write/load round trip
    std::vector<bool> covered(cfg.exercises, false);
    for (const auto& log : data.logs.logs) covered[log.exercise] = true;
    for (std::int32_t e = 0; e < cfg.exercises; ++e) {
        if (covered[e]) continue;
        std::int32_t s = static_cast<std::int32_t>(rng.below(cfg.students));
        while (answered[s].count(e)) s = static_cast<std::int32_t>(rng.below(cfg.students));
        answered[s].insert(e);
        data.logs.logs.push_back({s, e, respond(s, e)});
    }
    return data;
}

inline void write_logs_csv(const ResponseLogSet& set, const std::string& path) {
    std::ofstream out(path);
    out << "student_id,exercise_id,score\n";
    for (const auto& log : set.logs)
        out << set.students.names()[log.student] << ',' << set.exercises.names()[log.exercise] << ','
            << static_cast<int>(log.score) << '\n';
}

inline void write_q_csv(const QMatrix& q, const IdMap& exercise_ids, const std::string& path) {
    std::ofstream out(path);
    out << "exercise_id,concept_id\n";
    for (std::int32_t e = 0; e < q.num_exercises; ++e)
        for (const std::int32_t k : q.concepts_of[e])
            out << exercise_ids.names()[e] << ',' << q.concept_ids.names()[k] << '\n';
}

inline void write_mastery_tsv(const SynthData& data, const std::string& path) {
    std::ofstream out(path);
    out << "student_id";
    for (std::int32_t k = 0; k < data.q.num_concepts; ++k) out << "\tconcept_" << data.q.concept_ids.names()[k];
    out << '\n';
    for (std::size_t s = 0; s < data.mastery.size(); ++s) {
        out << data.logs.students.names()[s];
        for (const std::int8_t m : data.mastery[s]) out << '\t' << static_cast<int>(m);
        out << '\n';
    }
}

} // namespace isgcd
