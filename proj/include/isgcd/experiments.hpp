#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "isgcd/metrics.hpp"
#include "isgcd/training.hpp"

namespace isgcd {

struct FoldMetrics {
    double acc = 0.0;
    double auc = 0.0;
    double doa = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation over folds
};

struct MetricReport {
    std::vector<FoldMetrics> per_fold;
    MetricSummary acc, auc, doa;

    void finalize() {
        const auto summarize = [this](double FoldMetrics::* field) {
            MetricSummary s;
            for (const auto& f : per_fold) s.mean += f.*field;
            s.mean /= per_fold.size();
            if (per_fold.size() > 1) {
                double ss = 0.0;
                for (const auto& f : per_fold) ss += (f.*field - s.mean) * (f.*field - s.mean);
                s.stddev = std::sqrt(ss / (per_fold.size() - 1));
            }
            return s;
        };
        acc = summarize(&FoldMetrics::acc);
        auc = summarize(&FoldMetrics::auc);
        doa = summarize(&FoldMetrics::doa);
    }
};

// Test metrics of a trained model: ACC/AUC on the given logs and DOA of the
// diagnosed proficiency matrix against them.
inline FoldMetrics evaluate_model(const TrainConfig& cfg, const ModelParams& theta, const EdgeMaskParams& phi,
                                  const SemanticBipartiteGraph& graph, const ResponseLogSet& logs,
                                  const QMatrix& q, const std::vector<std::int32_t>& test_indices) {
    FoldMetrics m;
    const auto preds = predict_with_params(cfg, theta, phi, graph, q, logs, test_indices);
    std::vector<double> labels;
    labels.reserve(test_indices.size());
    for (const std::int32_t i : test_indices) labels.push_back(logs.logs[i].score);
    m.acc = accuracy(preds, labels);
    m.auc = auc(preds, labels);

    const Diagnosis diag = diagnose_with_params(cfg, theta, phi, graph);
    std::vector<std::vector<double>> prof(theta.num_students, std::vector<double>(theta.num_concepts));
    for (std::int32_t s = 0; s < theta.num_students; ++s)
        for (std::int32_t k = 0; k < theta.num_concepts; ++k) prof[s][k] = diag.proficiency->at(s, k);
    m.doa = doa(prof, logs, test_indices, q, 1'000'000, cfg.seed);
    return m;
}

// Trains one model per fold and aggregates test ACC/AUC/DOA as mean +- sample
// standard deviation. `jobs` > 1 runs folds on worker threads; every fold uses
// an RNG stream derived from (seed, fold), so results do not depend on `jobs`.
inline MetricReport cross_validate(const TrainConfig& cfg, const ResponseLogSet& logs, const QMatrix& q,
                                   const FoldPlan& plan, int jobs = 1) {
    const int k = static_cast<int>(plan.folds.size());
    MetricReport report;
    report.per_fold.resize(k);

    const auto run_fold = [&](int f) {
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = detail::splitmix64(cfg.seed ^ detail::fnv1a("fold")) + static_cast<std::uint64_t>(f);
        Trainer trainer(fold_cfg, logs, q, plan.folds[f]);
        FitResult fit = trainer.fit();
        const SemanticBipartiteGraph graph = build_graph(logs, plan.folds[f].train);
        report.per_fold[f] =
            evaluate_model(fold_cfg, fit.theta, fit.phi, graph, logs, q, plan.folds[f].test);
    };

    if (jobs <= 1) {
        for (int f = 0; f < k; ++f) run_fold(f);
    } else {
        std::vector<std::thread> workers;
        std::atomic<int> next{0};
        const int n_workers = std::min(jobs, k);
        for (int w = 0; w < n_workers; ++w)
            workers.emplace_back([&] {
                for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) run_fold(f);
            });
        for (auto& t : workers) t.join();
    }
    report.finalize();
    return report;
}

// One edge of the trained graph in the uncertain-edge report.
struct DetectionEdge {
    std::int32_t log_index;
    std::int32_t student;
    std::int32_t exercise;
    std::int8_t score; // score used for training (after flipping)
    double retention;  // deterministic rho
    bool flipped;
    bool detected;
};

struct DetectionResult {
    double detection_ratio = 0.0; // |detected AND flipped| / |flipped|
    std::size_t n_flipped = 0;
    std::size_t n_detected = 0;
    std::size_t n_true_positive = 0;
    std::vector<DetectionEdge> edges;
    FoldMetrics test_metrics;
};

// Label-flip detection experiment: flips `flip_ratio` of the training-split
// logs, trains on the corrupted data, then checks which training edges the
// edge differentiation layer holds at deterministic retention < 0.5.
// Detection looks at the final alternating state: the mask keeps moving after
// the best-accuracy epoch, so the early-stopping snapshot would undersell it.
inline DetectionResult detection_experiment(const TrainConfig& cfg, const ResponseLogSet& logs,
                                            const QMatrix& q, double flip_ratio, std::uint64_t seed) {
    if (flip_ratio <= 0.0 || flip_ratio > 1.0)
        throw std::invalid_argument("detection_experiment: flip ratio must be in (0, 1]");
    if (!cfg.iediff_on)
        throw std::invalid_argument("detection_experiment: requires the edge differentiation layer");

    const FoldPlan plan = make_folds(logs, kDefaultFolds, seed);
    const Fold& fold = plan.folds[0];
    auto [flipped_logs, mask] = inject_label_flips(logs, flip_ratio, seed, fold.train);

    Trainer trainer(cfg, flipped_logs, q, fold);
    if (cfg.strategy == Strategy::AL) trainer.pretrain();
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        if (cfg.strategy == Strategy::MTL)
            trainer.mtl_epoch();
        else
            trainer.alternate_epoch();
    }
    FitResult fit{std::move(trainer.theta()), std::move(trainer.phi()), std::move(trainer.history()), 0.0,
                  0.0};

    const SemanticBipartiteGraph graph = build_graph(flipped_logs, fold.train);
    const EdgeMask det = deterministic_mask_for(cfg, fit.theta, fit.phi, graph);
    const EdgeLogits logits = edge_logits(nullptr, fit.theta.U, fit.theta.V, graph, fit.phi);

    DetectionResult result;
    result.n_flipped = mask.count();
    const auto collect = [&](const Subgraph& sub, const ad::TensorPtr& rho, const ad::TensorPtr& w) {
        for (std::size_t i = 0; i < sub.edge_count(); ++i) {
            DetectionEdge edge;
            edge.log_index = sub.log_index[i];
            edge.student = sub.students[i];
            edge.exercise = sub.exercises[i];
            edge.score = flipped_logs.logs[edge.log_index].score;
            edge.retention = rho->value[i];
            edge.flipped = mask.flipped[edge.log_index];
            edge.detected = w->value[i] < 0.0;
            result.edges.push_back(edge);
            result.n_detected += edge.detected;
            result.n_true_positive += edge.detected && edge.flipped;
        }
    };
    collect(graph.correct, det.rho_correct, logits.correct);
    collect(graph.incorrect, det.rho_incorrect, logits.incorrect);
    result.detection_ratio =
        result.n_flipped == 0 ? 0.0 : static_cast<double>(result.n_true_positive) / result.n_flipped;
    result.test_metrics = evaluate_model(cfg, fit.theta, fit.phi, graph, flipped_logs, q, fold.test);
    return result;
}

inline void write_detection_tsv(const DetectionResult& result, const ResponseLogSet& logs,
                                const std::string& path) {
    std::ofstream out(path);
    out << "student_id\texercise_id\tscore\tretention\tflipped\tdetected\n";
    char buf[64];
    for (const auto& e : result.edges) {
        std::snprintf(buf, sizeof buf, "%.6f", e.retention);
        out << logs.students.names()[e.student] << '\t' << logs.exercises.names()[e.exercise] << '\t'
            << static_cast<int>(e.score) << '\t' << buf << '\t' << (e.flipped ? 1 : 0) << '\t'
            << (e.detected ? 1 : 0) << '\n';
    }
}

inline void write_metric_report_kv(const MetricReport& report, const std::string& path) {
    std::ofstream out(path);
    char buf[128];
    const auto line = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%s=%.6f\n", key, v);
        out << buf;
    };
    out << "folds=" << report.per_fold.size() << '\n';
    for (std::size_t f = 0; f < report.per_fold.size(); ++f) {
        const std::string p = "fold" + std::to_string(f) + "_";
        line((p + "acc").c_str(), report.per_fold[f].acc);
        line((p + "auc").c_str(), report.per_fold[f].auc);
        line((p + "doa").c_str(), report.per_fold[f].doa);
    }
    line("acc_mean", report.acc.mean);
    line("acc_std", report.acc.stddev);
    line("auc_mean", report.auc.mean);
    line("auc_std", report.auc.stddev);
    line("doa_mean", report.doa.mean);
    line("doa_std", report.doa.stddev);
}

} // namespace isgcd
