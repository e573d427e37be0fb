#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "isgcd/graph.hpp"
#include "isgcd/model.hpp"
#include "isgcd/ops.hpp"
#include "isgcd/optim.hpp"
#include "isgcd/rng.hpp"

namespace isgcd {

inline constexpr double kDefaultTemperature = 0.2;
inline constexpr double kDefaultKernelBandwidth = 0.2;
inline constexpr double kDefaultHsicWeight = 0.5;

// Parameters of the edge differentiation layer (phi): one linear map per edge
// semantic, from the concatenated local pair embedding (2Z) to a retention
// logit. The two maps are never shared. Biases start at +1 so the reliable
// graph begins close to the original one.
struct EdgeMaskParams {
    int dim = 0; // Z

    ad::TensorPtr w_correct;   // 2Z x 1 (W^1)
    ad::TensorPtr b_correct;   // 1 x 1
    ad::TensorPtr w_incorrect; // 2Z x 1 (W^0)
    ad::TensorPtr b_incorrect; // 1 x 1

    EdgeMaskParams() = default;

    EdgeMaskParams(int z, Rng& rng) : dim(z) {
        w_correct = ad::xavier_init(2 * z, 1, rng, true, "mask_w1");
        w_incorrect = ad::xavier_init(2 * z, 1, rng, true, "mask_w0");
        b_correct = ad::make_tensor(1, 1, true, "mask_b1");
        b_incorrect = ad::make_tensor(1, 1, true, "mask_b0");
        b_correct->value[0] = 1.0;
        b_incorrect->value[0] = 1.0;
    }

    std::vector<ad::TensorPtr> all() const { return {w_correct, b_correct, w_incorrect, b_incorrect}; }

    void set_requires_grad(bool flag) {
        for (const auto& t : all()) t->requires_grad = flag;
    }
};

// Per-edge certainty logits w_se, one column per semantic subgraph.
struct EdgeLogits {
    ad::TensorPtr correct;   // |E1| x 1
    ad::TensorPtr incorrect; // |E0| x 1
};

// w = W^1 [u_s; v_e] + b^1 on correct edges, W^0 [...] + b^0 on incorrect
// ones. Uses the local (layer-0) embeddings only.
inline EdgeLogits edge_logits(ad::Tape* tape, const ad::TensorPtr& u_local, const ad::TensorPtr& v_local,
                              const SemanticBipartiteGraph& graph, const EdgeMaskParams& params) {
    const auto per_subgraph = [&](const Subgraph& sub, const ad::TensorPtr& w, const ad::TensorPtr& b) {
        auto pair = ad::concat_cols(tape, ad::gather_rows(tape, u_local, sub.students),
                                    ad::gather_rows(tape, v_local, sub.exercises));
        return ad::add_row_vec(tape, ad::matmul(tape, pair, w), b);
    };
    return {per_subgraph(graph.correct, params.w_correct, params.b_correct),
            per_subgraph(graph.incorrect, params.w_incorrect, params.b_incorrect)};
}

struct RelaxationConfig {
    double temperature = kDefaultTemperature;
    double noise_clamp = 1e-6; // delta is clamped to [noise_clamp, 1-noise_clamp]
    MaskMode mode = MaskMode::deterministic;
};

namespace detail {
// Binary concrete relaxation of Bern(w): rho = sigmoid((log(delta/(1-delta)) + w) / t).
// The noise term is a constant during backward; gradients flow through w only.
inline ad::TensorPtr relax(ad::Tape* tape, const ad::TensorPtr& logits, const RelaxationConfig& cfg,
                           Rng* rng) {
    if (cfg.temperature <= 0.0) throw std::invalid_argument("sample_mask: temperature must be positive");
    ad::TensorPtr shifted = logits;
    if (cfg.mode == MaskMode::stochastic) {
        if (!rng) throw std::invalid_argument("sample_mask: stochastic mode needs an rng");
        std::vector<double> noise(logits->size());
        for (auto& v : noise) {
            const double delta = std::clamp(rng->uniform(), cfg.noise_clamp, 1.0 - cfg.noise_clamp);
            v = std::log(delta / (1.0 - delta));
        }
        shifted = ad::add_buffer(tape, logits, noise);
    }
    return ad::sigmoid(tape, ad::scale(tape, shifted, 1.0 / cfg.temperature));
}
} // namespace detail

// Draws per-edge retention weights from the concrete relaxation of both logit
// columns. Deterministic mode fixes delta = 0.5, i.e. rho = sigmoid(w / t).
inline EdgeMask sample_mask(ad::Tape* tape, const EdgeLogits& logits, const RelaxationConfig& cfg,
                            Rng* rng = nullptr) {
    EdgeMask mask;
    mask.mode = cfg.mode;
    mask.rho_correct = detail::relax(tape, logits.correct, cfg, rng);
    mask.rho_incorrect = detail::relax(tape, logits.incorrect, cfg, rng);
    return mask;
}

inline EdgeMask all_ones_mask(const SemanticBipartiteGraph& g) {
    EdgeMask mask;
    mask.mode = MaskMode::deterministic;
    mask.rho_correct = ad::make_tensor(static_cast<int>(g.correct.edge_count()), 1);
    mask.rho_incorrect = ad::make_tensor(static_cast<int>(g.incorrect.edge_count()), 1);
    mask.rho_correct->fill(1.0);
    mask.rho_incorrect->fill(1.0);
    return mask;
}

struct HsicConfig {
    double alpha = kDefaultKernelBandwidth;
    double beta = kDefaultHsicWeight;
    int max_nodes = 1024; // cap on kernel batch size (O(n^2) cost)
};

// Empirical HSIC: (n-1)^-2 Tr(K_X J K_Y J) with RBF kernels and the centering
// matrix J = I - 11^T/n. Differentiable w.r.t. both inputs.
inline ad::TensorPtr hsic(ad::Tape* tape, const ad::TensorPtr& x, const ad::TensorPtr& y, double alpha) {
    if (x->rows() != y->rows()) throw std::invalid_argument("hsic: sample counts differ");
    if (x->rows() < 2) throw std::invalid_argument("hsic: need at least two samples");
    const int n = x->rows();
    auto kx = ad::rbf_gram(tape, x, alpha);
    auto ky = ad::rbf_gram(tape, y, alpha);
    auto trace = ad::frob_inner(tape, ad::center_gram(tape, kx), ky);
    const double norm = 1.0 / (static_cast<double>(n - 1) * (n - 1));
    return ad::scale(tape, trace, norm);
}

// Eq.-style HSIC loss between reliable-graph and original-graph embeddings,
// estimated on the unique students and exercises of the current batch
// (subsampled to cfg.max_nodes). The original-graph embeddings must be passed
// in detached; they act as constants. Terms with fewer than two nodes
// contribute zero.
inline ad::TensorPtr hsic_loss(ad::Tape* tape, const ad::TensorPtr& u_reliable, const ad::TensorPtr& v_reliable,
                               const ad::TensorPtr& u_original, const ad::TensorPtr& v_original,
                               const std::vector<std::int32_t>& student_ids,
                               const std::vector<std::int32_t>& exercise_ids, const HsicConfig& cfg) {
    auto term = [&](const ad::TensorPtr& reliable, const ad::TensorPtr& original,
                    const std::vector<std::int32_t>& ids) -> ad::TensorPtr {
        if (ids.size() < 2) return nullptr;
        return hsic(tape, ad::gather_rows(tape, reliable, ids), ad::gather_rows(tape, original, ids),
                    cfg.alpha);
    };
    auto s_term = term(u_reliable, u_original, student_ids);
    auto e_term = term(v_reliable, v_original, exercise_ids);
    if (s_term && e_term) return ad::add(tape, s_term, e_term);
    if (s_term) return s_term;
    if (e_term) return e_term;
    return ad::make_scalar(0.0);
}

// Unique node ids of a batch, subsampled to `max_nodes` when larger.
inline std::vector<std::int32_t> unique_capped(const std::vector<std::int32_t>& ids, int max_nodes, Rng& rng) {
    std::vector<std::int32_t> uniq = ids;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (max_nodes > 0 && uniq.size() > static_cast<std::size_t>(max_nodes)) {
        shuffle(uniq, rng);
        uniq.resize(max_nodes);
        std::sort(uniq.begin(), uniq.end());
    }
    return uniq;
}

// L_all = L_BCE + beta * L_HSIC.
inline ad::TensorPtr total_loss(ad::Tape* tape, const ad::TensorPtr& bce, const ad::TensorPtr& hsic_term,
                                double beta) {
    if (beta < 0.0) throw std::invalid_argument("total_loss: beta must be >= 0");
    return ad::add(tape, bce, ad::scale(tape, hsic_term, beta));
}

// Edges the layer regards as uncertain: deterministic retention
// sigmoid(w/t) < 0.5, i.e. strictly negative logit.
inline std::vector<std::size_t> detect_uncertain(const std::vector<double>& logits) {
    std::vector<std::size_t> detected;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (logits[i] < 0.0) detected.push_back(i);
    return detected;
}

// Hard adaptive edge differentiation: keep a correct edge only when the model
// is confident it is correct (r_hat > delta), an incorrect edge only when
// confidently incorrect (r_hat < 1-delta). Returns 0/1 retention weights.
inline std::vector<double> ada_diff_keep(const std::vector<double>& preds, const std::vector<double>& labels,
                                         double delta) {
    if (delta < 0.5 || delta >= 1.0) throw std::invalid_argument("ada_diff: delta must be in [0.5, 1)");
    if (preds.size() != labels.size()) throw std::invalid_argument("ada_diff: array length mismatch");
    std::vector<double> keep(preds.size(), 0.0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool kept = labels[i] == 1.0 ? preds[i] > delta : preds[i] < 1.0 - delta;
        keep[i] = kept ? 1.0 : 0.0;
    }
    return keep;
}

// Graph-level Ada-Diff: builds the hard mask from per-subgraph predictions on
// the training edges.
inline EdgeMask ada_diff_mask(const SemanticBipartiteGraph& g, const std::vector<double>& preds_correct,
                              const std::vector<double>& preds_incorrect, double delta) {
    if (preds_correct.size() != g.correct.edge_count() || preds_incorrect.size() != g.incorrect.edge_count())
        throw std::invalid_argument("ada_diff_mask: predictions misaligned with graph edges");
    EdgeMask mask;
    mask.mode = MaskMode::hard;
    mask.rho_correct = ad::make_tensor(static_cast<int>(g.correct.edge_count()), 1);
    mask.rho_incorrect = ad::make_tensor(static_cast<int>(g.incorrect.edge_count()), 1);
    mask.rho_correct->value = ada_diff_keep(preds_correct, std::vector<double>(preds_correct.size(), 1.0), delta);
    mask.rho_incorrect->value =
        ada_diff_keep(preds_incorrect, std::vector<double>(preds_incorrect.size(), 0.0), delta);
    return mask;
}

} // namespace isgcd
