#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "isgcd/dataset.hpp"
#include "isgcd/tensor.hpp"

namespace isgcd {

// Edges of one semantic subgraph (all-correct or all-incorrect responses),
// with the per-edge symmetric normalizer 1/sqrt(|N_s| |N_e|) where the
// neighbor counts are taken within this subgraph.
struct Subgraph {
    std::vector<std::int32_t> students;   // edge i connects students[i]
    std::vector<std::int32_t> exercises;  // ... and exercises[i]
    std::vector<std::int32_t> log_index;  // originating log index
    std::vector<double> coef;             // per-edge normalizer c_se
    std::vector<std::int32_t> student_degree;
    std::vector<std::int32_t> exercise_degree;

    std::size_t edge_count() const { return students.size(); }
};

// The training response graph split by edge semantics. Built from training
// logs only; immutable afterwards.
struct SemanticBipartiteGraph {
    std::int32_t num_students = 0;
    std::int32_t num_exercises = 0;
    Subgraph correct;   // r_se = 1
    Subgraph incorrect; // r_se = 0

    std::size_t edge_count() const { return correct.edge_count() + incorrect.edge_count(); }
};

enum class MaskMode { stochastic, deterministic, hard };

// Per-edge retention weights aligned with the graph's two edge lists. Values
// live in [0,1]; hard mode uses only {0,1}. The tensors stay attached to the
// tape that produced them, so propagation through a masked graph is
// differentiable w.r.t. the mask.
struct EdgeMask {
    ad::TensorPtr rho_correct;   // |E1| x 1
    ad::TensorPtr rho_incorrect; // |E0| x 1
    MaskMode mode = MaskMode::deterministic;
};

// A graph plus an optional mask. Neighbor counts (and hence c_se) always stay
// those of the unmasked graph; the mask only scales messages.
struct MaskedGraph {
    const SemanticBipartiteGraph* graph = nullptr;
    const EdgeMask* mask = nullptr; // nullptr means rho == 1 everywhere
};

inline SemanticBipartiteGraph build_graph(const ResponseLogSet& logs,
                                          const std::vector<std::int32_t>& train_indices) {
    SemanticBipartiteGraph g;
    g.num_students = logs.num_students();
    g.num_exercises = logs.num_exercises();
    for (Subgraph* sub : {&g.correct, &g.incorrect}) {
        sub->student_degree.assign(g.num_students, 0);
        sub->exercise_degree.assign(g.num_exercises, 0);
    }
    for (const std::int32_t idx : train_indices) {
        const auto& log = logs.logs[idx];
        Subgraph& sub = log.score ? g.correct : g.incorrect;
        sub.students.push_back(log.student);
        sub.exercises.push_back(log.exercise);
        sub.log_index.push_back(idx);
        ++sub.student_degree[log.student];
        ++sub.exercise_degree[log.exercise];
    }
    for (Subgraph* sub : {&g.correct, &g.incorrect}) {
        sub->coef.resize(sub->edge_count());
        for (std::size_t i = 0; i < sub->edge_count(); ++i) {
            const double ds = sub->student_degree[sub->students[i]];
            const double de = sub->exercise_degree[sub->exercises[i]];
            sub->coef[i] = 1.0 / std::sqrt(ds * de);
        }
    }
    return g;
}

inline SemanticBipartiteGraph build_graph(const ResponseLogSet& logs) {
    std::vector<std::int32_t> all(logs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int32_t>(i);
    return build_graph(logs, all);
}

inline MaskedGraph apply_mask(const SemanticBipartiteGraph& graph, const EdgeMask& mask) {
    if (!mask.rho_correct || !mask.rho_incorrect ||
        static_cast<std::size_t>(mask.rho_correct->rows()) != graph.correct.edge_count() ||
        static_cast<std::size_t>(mask.rho_incorrect->rows()) != graph.incorrect.edge_count())
        throw std::invalid_argument("apply_mask: mask length does not match graph edge lists");
    return {&graph, &mask};
}

inline MaskedGraph unmasked(const SemanticBipartiteGraph& graph) { return {&graph, nullptr}; }

// Debug dump of both edge lists with degrees and normalizers.
inline void dump_graph_tsv(const SemanticBipartiteGraph& g, const std::string& path) {
    std::ofstream out(path);
    out << "semantic\tstudent\texercise\tstudent_degree\texercise_degree\tcoef\n";
    const auto dump = [&](const Subgraph& sub, const char* label) {
        for (std::size_t i = 0; i < sub.edge_count(); ++i)
            out << label << '\t' << sub.students[i] << '\t' << sub.exercises[i] << '\t'
                << sub.student_degree[sub.students[i]] << '\t' << sub.exercise_degree[sub.exercises[i]]
                << '\t' << sub.coef[i] << '\n';
    };
    dump(g.correct, "correct");
    dump(g.incorrect, "incorrect");
}

} // namespace isgcd
