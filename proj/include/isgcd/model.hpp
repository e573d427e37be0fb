#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "isgcd/dataset.hpp"
#include "isgcd/graph.hpp"
#include "isgcd/ops.hpp"
#include "isgcd/optim.hpp"

namespace isgcd {

inline constexpr int kDefaultEmbeddingDim = 128;
inline constexpr int kMlpHidden1 = 512;
inline constexpr int kMlpHidden2 = 256;
inline constexpr double kDiscriminationScale = 10.0;

// All trainable parameters of the graph-based CD model (theta): student,
// exercise and concept latent embeddings, pre-activation discrimination
// scalars, optional per-entity scalar biases, and the diagnostic MLP.
// The MLP weight matrices are kept elementwise nonnegative (clamped after
// every optimizer step) so that higher diagnosed ability can never lower a
// predicted response.
struct ModelParams {
    std::int32_t num_students = 0;
    std::int32_t num_exercises = 0;
    std::int32_t num_concepts = 0;
    int dim = kDefaultEmbeddingDim;
    bool bias_enabled = false;

    ad::TensorPtr U, V, O; // M x Z, N x Z, T x Z
    ad::TensorPtr h_disc;  // N x 1, pre-activation; used as 10 * sigmoid(h)
    ad::TensorPtr b_s, b_e;
    ad::TensorPtr mlp_w1, mlp_b1, mlp_w2, mlp_b2, mlp_w3, mlp_b3;

    ModelParams() = default;

    ModelParams(std::int32_t m, std::int32_t n, std::int32_t t, int z, bool bias_on, Rng& rng)
        : num_students(m), num_exercises(n), num_concepts(t), dim(z), bias_enabled(bias_on) {
        U = ad::xavier_init(m, z, rng, true, "U");
        V = ad::xavier_init(n, z, rng, true, "V");
        O = ad::xavier_init(t, z, rng, true, "O");
        h_disc = ad::xavier_init(n, 1, rng, true, "h_disc");
        if (bias_on) {
            b_s = ad::make_tensor(m, 1, true, "b_s");
            b_e = ad::make_tensor(n, 1, true, "b_e");
        }
        mlp_w1 = ad::xavier_init(t, kMlpHidden1, rng, true, "mlp_w1");
        mlp_b1 = ad::make_tensor(1, kMlpHidden1, true, "mlp_b1");
        mlp_w2 = ad::xavier_init(kMlpHidden1, kMlpHidden2, rng, true, "mlp_w2");
        mlp_b2 = ad::make_tensor(1, kMlpHidden2, true, "mlp_b2");
        mlp_w3 = ad::xavier_init(kMlpHidden2, 1, rng, true, "mlp_w3");
        mlp_b3 = ad::make_tensor(1, 1, true, "mlp_b3");
        clamp_mlp_nonneg();
        // Hidden activations sit near 0.5 at initialization, so nonnegative
        // weight columns would push every pre-activation far positive and
        // saturate the sigmoids. Centering the biases keeps initial
        // predictions near 0.5 with healthy gradients.
        for (int j = 0; j < kMlpHidden2; ++j) {
            double col = 0.0;
            for (int i = 0; i < kMlpHidden1; ++i) col += mlp_w2->at(i, j);
            mlp_b2->value[j] = -0.5 * col;
        }
        double col3 = 0.0;
        for (int i = 0; i < kMlpHidden2; ++i) col3 += mlp_w3->at(i, 0);
        mlp_b3->value[0] = -0.5 * col3;
    }

    // Declared parameter order; checkpoints and optimizers follow it.
    std::vector<ad::TensorPtr> all() const {
        std::vector<ad::TensorPtr> out{U, V, O, h_disc};
        if (bias_enabled) {
            out.push_back(b_s);
            out.push_back(b_e);
        }
        for (const auto& t : {mlp_w1, mlp_b1, mlp_w2, mlp_b2, mlp_w3, mlp_b3}) out.push_back(t);
        return out;
    }

    void set_requires_grad(bool flag) {
        for (const auto& t : all()) t->requires_grad = flag;
    }

    void clamp_mlp_nonneg() {
        for (const auto& w : {mlp_w1, mlp_w2, mlp_w3})
            for (auto& v : w->value)
                if (v < 0.0) v = -v;
    }
};

// Per-layer embeddings plus the layer-sum readout.
struct FinalEmbeddings {
    std::vector<ad::TensorPtr> u_layers; // l = 0..L
    std::vector<ad::TensorPtr> v_layers;
    ad::TensorPtr u_final; // sum over layers
    ad::TensorPtr v_final;
};

// L rounds of semantic-aware propagation over the masked graph followed by the
// layer-sum readout. Messages in each subgraph are normalized by that
// subgraph's degrees and scaled by the edge retention rho.
inline FinalEmbeddings propagate(ad::Tape* tape, const ModelParams& params, const MaskedGraph& mg, int layers) {
    if (layers < 0) throw std::invalid_argument("propagate: layer count must be >= 0");
    const SemanticBipartiteGraph& g = *mg.graph;

    FinalEmbeddings fin;
    fin.u_layers.push_back(params.U);
    fin.v_layers.push_back(params.V);
    const ad::TensorPtr rho1 = mg.mask ? mg.mask->rho_correct : nullptr;
    const ad::TensorPtr rho0 = mg.mask ? mg.mask->rho_incorrect : nullptr;

    for (int l = 1; l <= layers; ++l) {
        const auto& u_prev = fin.u_layers[l - 1];
        const auto& v_prev = fin.v_layers[l - 1];
        auto u_next = ad::add(tape,
                              ad::spmm_edges(tape, g.correct.students, g.correct.exercises, g.correct.coef,
                                             rho1, v_prev, g.num_students),
                              ad::spmm_edges(tape, g.incorrect.students, g.incorrect.exercises,
                                             g.incorrect.coef, rho0, v_prev, g.num_students));
        auto v_next = ad::add(tape,
                              ad::spmm_edges(tape, g.correct.exercises, g.correct.students, g.correct.coef,
                                             rho1, u_prev, g.num_exercises),
                              ad::spmm_edges(tape, g.incorrect.exercises, g.incorrect.students,
                                             g.incorrect.coef, rho0, u_prev, g.num_exercises));
        fin.u_layers.push_back(std::move(u_next));
        fin.v_layers.push_back(std::move(v_next));
    }

    fin.u_final = fin.u_layers[0];
    fin.v_final = fin.v_layers[0];
    for (int l = 1; l <= layers; ++l) {
        fin.u_final = ad::add(tape, fin.u_final, fin.u_layers[l]);
        fin.v_final = ad::add(tape, fin.v_final, fin.v_layers[l]);
    }
    return fin;
}

// Proficiency matrix A (M x T) and difficulty matrix D (N x T); every entry is
// a sigmoid output in (0,1).
struct Diagnosis {
    ad::TensorPtr proficiency; // a_sk
    ad::TensorPtr difficulty;  // d_ek
};

inline Diagnosis diagnose(ad::Tape* tape, const ModelParams& params, const FinalEmbeddings& fin) {
    auto a_logits = ad::matmul_nt(tape, fin.u_final, params.O);
    auto d_logits = ad::matmul_nt(tape, fin.v_final, params.O);
    if (params.bias_enabled) {
        a_logits = ad::add_col_vec(tape, a_logits, params.b_s);
        d_logits = ad::add_col_vec(tape, d_logits, params.b_e);
    }
    return {ad::sigmoid(tape, a_logits), ad::sigmoid(tape, d_logits)};
}

// One training/evaluation batch of logs, as parallel index/label arrays.
struct Batch {
    std::vector<std::int32_t> students;
    std::vector<std::int32_t> exercises;
    std::vector<double> labels;

    Batch() = default;
    Batch(const ResponseLogSet& logs, const std::vector<std::int32_t>& indices) {
        students.reserve(indices.size());
        exercises.reserve(indices.size());
        labels.reserve(indices.size());
        for (const std::int32_t i : indices) {
            const auto& log = logs.logs[i];
            students.push_back(log.student);
            exercises.push_back(log.exercise);
            labels.push_back(static_cast<double>(log.score));
        }
    }
    std::size_t size() const { return students.size(); }
};

// 0/1 concept-mask buffer for the exercises of a batch (B x T, row-major).
inline std::vector<double> concept_mask_rows(const QMatrix& q, const std::vector<std::int32_t>& exercises) {
    std::vector<double> mask(exercises.size() * static_cast<std::size_t>(q.num_concepts), 0.0);
    for (std::size_t i = 0; i < exercises.size(); ++i) {
        double* row = mask.data() + i * q.num_concepts;
        for (const std::int32_t k : q.concepts_of[exercises[i]]) row[k] = 1.0;
    }
    return mask;
}

inline ad::TensorPtr mlp_forward(ad::Tape* tape, const ad::TensorPtr& x, const ModelParams& params) {
    auto h1 = ad::sigmoid(tape, ad::add_row_vec(tape, ad::matmul(tape, x, params.mlp_w1), params.mlp_b1));
    auto h2 = ad::sigmoid(tape, ad::add_row_vec(tape, ad::matmul(tape, h1, params.mlp_w2), params.mlp_b2));
    return ad::sigmoid(tape, ad::add_row_vec(tape, ad::matmul(tape, h2, params.mlp_w3), params.mlp_b3));
}

// Diagnostic function on already-diagnosed rows: per log, the concept-masked
// ability-difficulty gap scaled by discrimination, pushed through the
// monotone MLP. `a_rows`/`d_rows` are B x T aligned with the batch.
inline ad::TensorPtr predict_from_rows(ad::Tape* tape, const ModelParams& params, const QMatrix& q,
                                       const Batch& batch, const ad::TensorPtr& a_rows,
                                       const ad::TensorPtr& d_rows) {
    auto gap = ad::sub(tape, a_rows, d_rows);
    auto masked = ad::mul_buffer(tape, gap, concept_mask_rows(q, batch.exercises));
    auto disc = ad::scale(tape, ad::sigmoid(tape, ad::gather_rows(tape, params.h_disc, batch.exercises)),
                          kDiscriminationScale);
    auto p = ad::row_scale(tape, masked, disc);
    return mlp_forward(tape, p, params);
}

// Predicted response probabilities for a batch, straight from final
// embeddings (gathers the needed rows, then shares the row path above).
inline ad::TensorPtr predict_batch(ad::Tape* tape, const ModelParams& params, const FinalEmbeddings& fin,
                                   const QMatrix& q, const Batch& batch) {
    auto u_rows = ad::gather_rows(tape, fin.u_final, batch.students);
    auto v_rows = ad::gather_rows(tape, fin.v_final, batch.exercises);
    auto a_logits = ad::matmul_nt(tape, u_rows, params.O);
    auto d_logits = ad::matmul_nt(tape, v_rows, params.O);
    if (params.bias_enabled) {
        a_logits = ad::add_col_vec(tape, a_logits, ad::gather_rows(tape, params.b_s, batch.students));
        d_logits = ad::add_col_vec(tape, d_logits, ad::gather_rows(tape, params.b_e, batch.exercises));
    }
    auto a_rows = ad::sigmoid(tape, a_logits);
    auto d_rows = ad::sigmoid(tape, d_logits);
    return predict_from_rows(tape, params, q, batch, a_rows, d_rows);
}

// Predictions for a batch given full diagnosis matrices (evaluation path and
// the public Diagnosis-level contract).
inline ad::TensorPtr predict_from_diagnosis(ad::Tape* tape, const ModelParams& params, const Diagnosis& diag,
                                            const QMatrix& q, const Batch& batch) {
    auto a_rows = ad::gather_rows(tape, diag.proficiency, batch.students);
    auto d_rows = ad::gather_rows(tape, diag.difficulty, batch.exercises);
    return predict_from_rows(tape, params, q, batch, a_rows, d_rows);
}

// Summed BCE for gradients; divide by batch size for the logged mean.
inline ad::TensorPtr bce_loss(ad::Tape* tape, const ad::TensorPtr& preds, const std::vector<double>& labels) {
    return ad::bce_sum(tape, preds, labels);
}

} // namespace isgcd
