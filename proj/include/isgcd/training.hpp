#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "isgcd/checkpoint.hpp"
#include "isgcd/dataset.hpp"
#include "isgcd/graph.hpp"
#include "isgcd/iediff.hpp"
#include "isgcd/metrics.hpp"
#include "isgcd/model.hpp"

namespace isgcd {

enum class Strategy { AL, ALwoP, MTL };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::AL: return "al";
        case Strategy::ALwoP: return "alwop";
        case Strategy::MTL: return "mtl";
    }
    return "?";
}

inline std::optional<Strategy> strategy_from_string(const std::string& s) {
    if (s == "al") return Strategy::AL;
    if (s == "alwop") return Strategy::ALwoP;
    if (s == "mtl") return Strategy::MTL;
    return std::nullopt;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = kDefaultBatchSize;
    int dim = kDefaultEmbeddingDim; // Z
    int layers = 2;                 // L
    double temperature = kDefaultTemperature;
    double alpha = kDefaultKernelBandwidth;
    double beta = kDefaultHsicWeight;
    int pretrain_epochs = 5;
    int max_epochs = 100;
    int patience = 10;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::AL;
    bool sgnn_on = true;
    bool iediff_on = true;
    bool bias_on = false;
    int hsic_max_nodes = 1024;

    void validate() const {
        if (learning_rate <= 0) throw std::invalid_argument("config: learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (dim < 1) throw std::invalid_argument("config: embedding dim must be >= 1");
        if (layers < 0 || layers > 4) throw std::invalid_argument("config: layers must be in [0, 4]");
        if (temperature <= 0) throw std::invalid_argument("config: temperature must be > 0");
        if (alpha <= 0) throw std::invalid_argument("config: alpha must be > 0");
        if (beta < 0) throw std::invalid_argument("config: beta must be >= 0");
        if (pretrain_epochs < 0 || max_epochs < 0 || patience < 0)
            throw std::invalid_argument("config: epoch counts must be >= 0");
        if (iediff_on && !sgnn_on)
            throw std::invalid_argument("config: iediff requires the graph layers (sgnn) enabled");
    }

    int effective_layers() const { return sgnn_on ? layers : 0; }
};

struct StepRecord {
    int epoch;
    const char* phase;
    double bce;
    double hsic;
    double total;
};

struct EpochRecord {
    int epoch = 0;
    std::string phase;
    double bce_mean = 0.0;  // per log
    double hsic_mean = 0.0; // per batch
    double val_acc = 0.0;
    double val_auc = 0.0;
    double wall_ms = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> phi_steps; // per phase-A/MTL step, for the loss decomposition
    int best_epoch = -1;
    double best_val_auc = -1.0;
};

inline void write_history(const TrainHistory& h, const std::string& path) {
    std::ofstream out(path);
    char buf[256];
    for (const auto& r : h.epochs) {
        std::snprintf(buf, sizeof buf,
                      "epoch=%d phase=%s bce=%.10g hsic=%.10g val_acc=%.10g val_auc=%.10g wall_ms=%.0f\n",
                      r.epoch, r.phase.c_str(), r.bce_mean, r.hsic_mean, r.val_acc, r.val_auc, r.wall_ms);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "best_epoch=%d best_val_auc=%.10g\n", h.best_epoch, h.best_val_auc);
    out << buf;
}

struct FitResult {
    ModelParams theta;
    EdgeMaskParams phi;
    TrainHistory history;
    double best_val_acc = 0.0;
    double best_val_auc = 0.0;
};

// Deterministic retention weights (delta = 0.5) for the current parameters.
inline EdgeMask deterministic_mask_for(const TrainConfig& cfg, const ModelParams& theta,
                                       const EdgeMaskParams& phi, const SemanticBipartiteGraph& graph) {
    RelaxationConfig rc{cfg.temperature, 1e-6, MaskMode::deterministic};
    return sample_mask(nullptr, edge_logits(nullptr, theta.U, theta.V, graph, phi), rc);
}

// Evaluation-time predictions for arbitrary log indices: deterministic mask,
// full propagation, chunked batches. No tape is involved.
inline std::vector<double> predict_with_params(const TrainConfig& cfg, const ModelParams& theta,
                                               const EdgeMaskParams& phi,
                                               const SemanticBipartiteGraph& graph, const QMatrix& q,
                                               const ResponseLogSet& logs,
                                               const std::vector<std::int32_t>& indices) {
    std::optional<EdgeMask> mask;
    MaskedGraph mg = unmasked(graph);
    if (cfg.iediff_on) {
        mask = deterministic_mask_for(cfg, theta, phi, graph);
        mg = apply_mask(graph, *mask);
    }
    auto fin = propagate(nullptr, theta, mg, cfg.effective_layers());
    std::vector<double> preds;
    preds.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(cfg.batch_size));
        Batch batch(logs, {indices.begin() + start, indices.begin() + end});
        auto out = predict_batch(nullptr, theta, fin, q, batch);
        preds.insert(preds.end(), out->value.begin(), out->value.end());
    }
    return preds;
}

// Full proficiency/difficulty matrices for the current parameters.
inline Diagnosis diagnose_with_params(const TrainConfig& cfg, const ModelParams& theta,
                                      const EdgeMaskParams& phi, const SemanticBipartiteGraph& graph) {
    std::optional<EdgeMask> mask;
    MaskedGraph mg = unmasked(graph);
    if (cfg.iediff_on) {
        mask = deterministic_mask_for(cfg, theta, phi, graph);
        mg = apply_mask(graph, *mask);
    }
    auto fin = propagate(nullptr, theta, mg, cfg.effective_layers());
    return diagnose(nullptr, theta, fin);
}

// Orchestrates Algorithm-style training on one fold: optional pre-training of
// theta on the original graph, then per epoch a phi pass (stochastic masks,
// BCE + beta * HSIC) with theta frozen followed by a theta pass (deterministic
// masks, BCE) with phi frozen. MTL instead optimizes everything jointly.
// Early stopping keeps the parameters of the best validation-AUC epoch.
class Trainer {
public:
    Trainer(const TrainConfig& cfg, const ResponseLogSet& logs, const QMatrix& q, const Fold& fold)
        : cfg_(cfg), logs_(logs), q_(q), fold_(fold), graph_(build_graph(logs, fold.train)) {
        cfg_.validate();
        if (q_.num_exercises != logs_.num_exercises())
            throw std::invalid_argument("fit: Q matrix rows do not match exercise count");
        Rng init = stream_rng(cfg_.seed, "init");
        theta_ = ModelParams(logs_.num_students(), logs_.num_exercises(), q_.num_concepts, cfg_.dim,
                             cfg_.bias_on, init);
        phi_ = EdgeMaskParams(cfg_.dim, init);
        opt_theta_.emplace(theta_.all(), ad::AdamConfig{cfg_.learning_rate});
        opt_phi_.emplace(phi_.all(), ad::AdamConfig{cfg_.learning_rate});
    }

    ModelParams& theta() { return theta_; }
    EdgeMaskParams& phi() { return phi_; }
    const SemanticBipartiteGraph& graph() const { return graph_; }
    TrainHistory& history() { return history_; }

    // Deterministic retention weights from the current phi (no tape).
    EdgeMask deterministic_mask() { return deterministic_mask_for(cfg_, theta_, phi_, graph_); }

    // Deterministic evaluation predictions for arbitrary log indices (chunked).
    std::vector<double> predict(const std::vector<std::int32_t>& indices) {
        return predict_with_params(cfg_, theta_, phi_, graph_, q_, logs_, indices);
    }

    // Full diagnosis matrices with the current parameters (deterministic mask).
    Diagnosis diagnose_current() { return diagnose_with_params(cfg_, theta_, phi_, graph_); }

    // Pre-training of theta on the original (unmasked) graph, BCE only.
    void pretrain() {
        for (int i = 0; i < cfg_.pretrain_epochs; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            const double bce = theta_pass(++epoch_, nullptr);
            record_epoch("pretrain", bce, 0.0, t0);
        }
    }

    // One alternating epoch: phi pass (if enabled) then theta pass, one full
    // pass over the training data each.
    void alternate_epoch() {
        ++epoch_;
        const auto t0 = std::chrono::steady_clock::now();
        double hsic_mean = 0.0;
        if (cfg_.iediff_on) hsic_mean = phi_pass(epoch_);
        std::optional<EdgeMask> mask;
        if (cfg_.iediff_on) mask = deterministic_mask();
        const double bce = theta_pass(epoch_, mask ? &*mask : nullptr);
        record_epoch(cfg_.iediff_on ? "phi+theta" : "theta", bce, hsic_mean, t0);
    }

    // Joint multi-task epoch: one pass minimizing BCE + beta * HSIC over both
    // parameter sets at once.
    void mtl_epoch() {
        ++epoch_;
        const auto t0 = std::chrono::steady_clock::now();
        theta_.set_requires_grad(true);
        phi_.set_requires_grad(true);
        Rng relax = stream_rng(cfg_.seed, "relaxation", static_cast<std::uint64_t>(epoch_));
        Rng hsic_rng = stream_rng(cfg_.seed, "hsic", static_cast<std::uint64_t>(epoch_));

        double bce_sum = 0.0, hsic_sum = 0.0;
        std::size_t n_logs = 0, n_batches = 0;
        for (const auto& batch_idx : batch_iter(fold_.train, cfg_.batch_size, cfg_.seed, epoch_)) {
            ad::Tape tape;
            auto logits = edge_logits(&tape, theta_.U, theta_.V, graph_, phi_);
            RelaxationConfig rc{cfg_.temperature, 1e-6, MaskMode::stochastic};
            EdgeMask mask = sample_mask(&tape, logits, rc, &relax);
            MaskedGraph mg = apply_mask(graph_, mask);
            auto fin = propagate(&tape, theta_, mg, cfg_.effective_layers());

            auto fin_orig = propagate(nullptr, detached_theta(), unmasked(graph_), cfg_.effective_layers());

            Batch batch(logs_, batch_idx);
            auto preds = predict_batch(&tape, theta_, fin, q_, batch);
            auto bce = bce_loss(&tape, preds, batch.labels);

            HsicConfig hc{cfg_.alpha, cfg_.beta, cfg_.hsic_max_nodes};
            auto s_ids = unique_capped(batch.students, hc.max_nodes, hsic_rng);
            auto e_ids = unique_capped(batch.exercises, hc.max_nodes, hsic_rng);
            auto hs = hsic_loss(&tape, fin.u_final, fin.v_final, fin_orig.u_final, fin_orig.v_final, s_ids,
                                e_ids, hc);
            auto loss = total_loss(&tape, bce, hs, cfg_.beta);
            check_finite(loss->value[0], "mtl", n_batches);
            history_.phi_steps.push_back({epoch_, "mtl", bce->value[0], hs->value[0], loss->value[0]});

            tape.backward(loss);
            opt_theta_->step();
            opt_phi_->step();
            theta_.clamp_mlp_nonneg();

            bce_sum += bce->value[0];
            hsic_sum += hs->value[0];
            n_logs += batch.size();
            ++n_batches;
        }
        record_epoch("mtl", n_logs ? bce_sum / n_logs : 0.0, n_batches ? hsic_sum / n_batches : 0.0, t0);
    }

    FitResult fit() {
        if (cfg_.strategy == Strategy::AL) pretrain();
        for (int i = 0; i < cfg_.max_epochs; ++i) {
            if (cfg_.strategy == Strategy::MTL)
                mtl_epoch();
            else
                alternate_epoch();
            if (epochs_since_best_ > cfg_.patience) break;
        }
        restore_best();
        FitResult result{std::move(theta_), std::move(phi_), std::move(history_), best_val_acc_,
                         best_val_auc_};
        return result;
    }

    // Phase A: theta frozen, one pass optimizing phi with stochastic masks and
    // the combined loss. Returns the mean HSIC value per batch.
    double phi_pass(int epoch) {
        theta_.set_requires_grad(false);
        phi_.set_requires_grad(true);
        Rng relax = stream_rng(cfg_.seed, "relaxation", static_cast<std::uint64_t>(epoch));
        Rng hsic_rng = stream_rng(cfg_.seed, "hsic", static_cast<std::uint64_t>(epoch));

        // theta is fixed for the whole pass, so the original-graph embeddings
        // are constants; compute them once.
        auto fin_orig = propagate(nullptr, theta_, unmasked(graph_), cfg_.effective_layers());

        double hsic_sum = 0.0;
        std::size_t n_batches = 0;
        for (const auto& batch_idx : batch_iter(fold_.train, cfg_.batch_size, cfg_.seed, epoch)) {
            ad::Tape tape;
            auto logits = edge_logits(&tape, theta_.U, theta_.V, graph_, phi_);
            RelaxationConfig rc{cfg_.temperature, 1e-6, MaskMode::stochastic};
            EdgeMask mask = sample_mask(&tape, logits, rc, &relax);
            MaskedGraph mg = apply_mask(graph_, mask);
            auto fin = propagate(&tape, theta_, mg, cfg_.effective_layers());

            Batch batch(logs_, batch_idx);
            auto preds = predict_batch(&tape, theta_, fin, q_, batch);
            auto bce = bce_loss(&tape, preds, batch.labels);

            HsicConfig hc{cfg_.alpha, cfg_.beta, cfg_.hsic_max_nodes};
            auto s_ids = unique_capped(batch.students, hc.max_nodes, hsic_rng);
            auto e_ids = unique_capped(batch.exercises, hc.max_nodes, hsic_rng);
            auto hs = hsic_loss(&tape, fin.u_final, fin.v_final, fin_orig.u_final, fin_orig.v_final, s_ids,
                                e_ids, hc);
            auto loss = total_loss(&tape, bce, hs, cfg_.beta);
            check_finite(loss->value[0], "phi", n_batches);
            history_.phi_steps.push_back({epoch, "phi", bce->value[0], hs->value[0], loss->value[0]});

            tape.backward(loss);
            opt_phi_->step();
            hsic_sum += hs->value[0];
            ++n_batches;
        }
        theta_.set_requires_grad(true);
        return n_batches ? hsic_sum / n_batches : 0.0;
    }

    // Phase B (and pre-training with mask == nullptr): phi frozen, one pass
    // optimizing theta under BCE. Returns the mean BCE per log.
    double theta_pass(int epoch, const EdgeMask* mask) {
        theta_.set_requires_grad(true);
        phi_.set_requires_grad(false);
        MaskedGraph mg = mask ? apply_mask(graph_, *mask) : unmasked(graph_);

        double bce_sum = 0.0;
        std::size_t n_logs = 0, n_batches = 0;
        for (const auto& batch_idx : batch_iter(fold_.train, cfg_.batch_size, cfg_.seed, epoch)) {
            ad::Tape tape;
            auto fin = propagate(&tape, theta_, mg, cfg_.effective_layers());
            Batch batch(logs_, batch_idx);
            auto preds = predict_batch(&tape, theta_, fin, q_, batch);
            auto loss = bce_loss(&tape, preds, batch.labels);
            check_finite(loss->value[0], "theta", n_batches);
            tape.backward(loss);
            opt_theta_->step();
            theta_.clamp_mlp_nonneg();
            bce_sum += loss->value[0];
            n_logs += batch.size();
            ++n_batches;
        }
        phi_.set_requires_grad(true);
        return n_logs ? bce_sum / n_logs : 0.0;
    }

private:
    void check_finite(double loss, const char* phase, std::size_t batch) const {
        if (!std::isfinite(loss))
            throw training_error("non-finite loss at epoch " + std::to_string(epoch_) + ", phase " + phase +
                                 ", batch " + std::to_string(batch));
    }

    // Copy of theta that shares values but not gradients, for original-graph
    // propagation while theta itself is being optimized (MTL).
    ModelParams detached_theta() const {
        ModelParams t = theta_;
        t.U = ad::detach(theta_.U);
        t.V = ad::detach(theta_.V);
        return t;
    }

    void record_epoch(const char* phase, double bce_mean, double hsic_mean,
                      std::chrono::steady_clock::time_point t0) {
        const auto [acc, roc] = evaluate_validation();
        EpochRecord rec;
        rec.epoch = epoch_;
        rec.phase = phase;
        rec.bce_mean = bce_mean;
        rec.hsic_mean = hsic_mean;
        rec.val_acc = acc;
        rec.val_auc = roc;
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        history_.epochs.push_back(rec);

        if (roc > best_val_auc_) {
            best_val_auc_ = roc;
            best_val_acc_ = acc;
            history_.best_epoch = epoch_;
            history_.best_val_auc = roc;
            snapshot_best();
            epochs_since_best_ = 0;
        } else if (rec.phase != "pretrain") {
            ++epochs_since_best_;
        }
    }

    std::pair<double, double> evaluate_validation() {
        if (fold_.valid.empty()) return {0.0, 0.0};
        const auto preds = predict(fold_.valid);
        std::vector<double> labels;
        labels.reserve(fold_.valid.size());
        for (const std::int32_t i : fold_.valid) labels.push_back(logs_.logs[i].score);
        bool has_pos = false, has_neg = false;
        for (const double r : labels) (r != 0.0 ? has_pos : has_neg) = true;
        // a single-class validation split gives no ranking signal
        const double roc = has_pos && has_neg ? auc(preds, labels) : 0.5;
        return {accuracy(preds, labels), roc};
    }

    void snapshot_best() {
        best_values_.clear();
        for (const auto& t : theta_.all()) best_values_.push_back(t->value);
        for (const auto& t : phi_.all()) best_values_.push_back(t->value);
    }

    void restore_best() {
        if (best_values_.empty()) return;
        std::size_t i = 0;
        for (const auto& t : theta_.all()) t->value = best_values_[i++];
        for (const auto& t : phi_.all()) t->value = best_values_[i++];
    }

    TrainConfig cfg_;
    const ResponseLogSet& logs_;
    const QMatrix& q_;
    Fold fold_;
    SemanticBipartiteGraph graph_;
    ModelParams theta_;
    EdgeMaskParams phi_;
    std::optional<ad::Adam> opt_theta_;
    std::optional<ad::Adam> opt_phi_;
    TrainHistory history_;
    int epoch_ = 0;
    int epochs_since_best_ = 0;
    double best_val_auc_ = -1.0;
    double best_val_acc_ = 0.0;
    std::vector<std::vector<double>> best_values_;
};

inline FitResult fit(const TrainConfig& cfg, const ResponseLogSet& logs, const QMatrix& q, const Fold& fold) {
    Trainer trainer(cfg, logs, q, fold);
    return trainer.fit();
}

} // namespace isgcd
