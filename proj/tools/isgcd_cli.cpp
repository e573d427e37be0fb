// Command-line front end: data preparation, training, cross-validation,
// label-flip detection experiments, checkpoint evaluation and diagnosis dumps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
// Option precedence: command line > --config file (flat key=value) > defaults.
// ISGCD_SEED is used when the seed comes from neither source.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isgcd/isgcd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct RunConfig {
    // data
    std::string logs_path;
    std::string q_path;
    std::string out_dir;
    std::string split_path;
    std::string checkpoint_path;
    std::string config_path;
    std::string role = "test";
    std::string dump_graph;

    // training
    isgcd::TrainConfig train;
    std::string strategy = "al";
    std::string sgnn = "on";
    std::string iediff = "on";
    std::string bias = "off";

    int folds = isgcd::kDefaultFolds;
    int fold = 0;
    int jobs = 1;
    std::string layer_sweep;     // e.g. "1,2,3,4"
    std::string flip_ratios = "0.3";

    // synth
    isgcd::SynthConfig synth;

    std::uint64_t seed = 0;
    bool seed_set = false;
};

bool parse_on_off(const std::string& v, const std::string& flag) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw CLI::ValidationError(flag, "expected on/off");
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

// Applies a flat key=value config file underneath already-parsed CLI flags:
// a file entry only takes effect when the matching flag was not given.
class ConfigLayer {
public:
    void bind(CLI::Option* opt, std::function<void(const std::string&)> apply) {
        entries_.push_back({opt, std::move(apply)});
    }

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
        std::map<std::string, std::string> kv;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw CLI::ValidationError("--config",
                                           path + ":" + std::to_string(line_no) + ": expected key=value");
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        for (const auto& e : entries_) {
            if (e.opt->count() > 0) continue; // command line wins
            std::string key = e.opt->get_name(false, false);
            if (key.rfind("--", 0) == 0) key = key.substr(2);
            const auto it = kv.find(key);
            if (it != kv.end()) e.apply(it->second);
        }
        if (kv.count("seed")) seed_in_file = true;
    }

    bool seed_in_file = false;

private:
    struct Entry {
        CLI::Option* opt;
        std::function<void(const std::string&)> apply;
    };
    std::vector<Entry> entries_;
};

// Registers the shared options on a subcommand and returns the layer that
// re-applies config-file values after parsing.
std::shared_ptr<ConfigLayer> add_train_options(CLI::App* cmd, RunConfig& rc, bool needs_logs = true) {
    auto layer = std::make_shared<ConfigLayer>();
    const auto bind = [&layer](CLI::Option* opt, std::function<void(const std::string&)> setter) {
        layer->bind(opt, std::move(setter));
    };

    if (needs_logs) {
        bind(cmd->add_option("--logs", rc.logs_path, "response log file (csv/tsv with header)"),
             [&rc](const std::string& v) { rc.logs_path = v; });
        bind(cmd->add_option("--q", rc.q_path, "exercise-concept pair file"),
             [&rc](const std::string& v) { rc.q_path = v; });
    }
    bind(cmd->add_option("--out", rc.out_dir, "output directory"),
         [&rc](const std::string& v) { rc.out_dir = v; });

    bind(cmd->add_option("--lr", rc.train.learning_rate, "Adam learning rate"),
         [&rc](const std::string& v) { rc.train.learning_rate = std::stod(v); });
    bind(cmd->add_option("--batch-size", rc.train.batch_size, "logs per batch"),
         [&rc](const std::string& v) { rc.train.batch_size = std::stoi(v); });
    bind(cmd->add_option("--dim", rc.train.dim, "embedding dimension Z"),
         [&rc](const std::string& v) { rc.train.dim = std::stoi(v); });
    bind(cmd->add_option("--layers", rc.train.layers, "GNN layer count L"),
         [&rc](const std::string& v) { rc.train.layers = std::stoi(v); });
    bind(cmd->add_option("--temperature", rc.train.temperature, "concrete relaxation temperature"),
         [&rc](const std::string& v) { rc.train.temperature = std::stod(v); });
    bind(cmd->add_option("--alpha", rc.train.alpha, "RBF kernel bandwidth"),
         [&rc](const std::string& v) { rc.train.alpha = std::stod(v); });
    bind(cmd->add_option("--beta", rc.train.beta, "HSIC weight in the combined loss"),
         [&rc](const std::string& v) { rc.train.beta = std::stod(v); });
    bind(cmd->add_option("--pretrain-epochs", rc.train.pretrain_epochs, "pre-training epochs"),
         [&rc](const std::string& v) { rc.train.pretrain_epochs = std::stoi(v); });
    bind(cmd->add_option("--max-epochs", rc.train.max_epochs, "maximum alternating epochs"),
         [&rc](const std::string& v) { rc.train.max_epochs = std::stoi(v); });
    bind(cmd->add_option("--patience", rc.train.patience, "early-stopping patience on validation AUC"),
         [&rc](const std::string& v) { rc.train.patience = std::stoi(v); });
    bind(cmd->add_option("--hsic-max-nodes", rc.train.hsic_max_nodes, "HSIC kernel batch cap"),
         [&rc](const std::string& v) { rc.train.hsic_max_nodes = std::stoi(v); });
    bind(cmd->add_option("--strategy", rc.strategy, "training strategy: al, alwop, mtl"),
         [&rc](const std::string& v) { rc.strategy = v; });
    bind(cmd->add_option("--sgnn", rc.sgnn, "semantic GNN layers: on/off"),
         [&rc](const std::string& v) { rc.sgnn = v; });
    bind(cmd->add_option("--iediff", rc.iediff, "edge differentiation layer: on/off"),
         [&rc](const std::string& v) { rc.iediff = v; });
    bind(cmd->add_option("--bias", rc.bias, "per-entity bias terms: on/off"),
         [&rc](const std::string& v) { rc.bias = v; });
    bind(cmd->add_option("--folds", rc.folds, "cross-validation fold count"),
         [&rc](const std::string& v) { rc.folds = std::stoi(v); });
    bind(cmd->add_option("--seed", rc.seed, "root RNG seed"), [&rc](const std::string& v) {
        rc.seed = std::stoull(v);
        rc.seed_set = true;
    });

    cmd->add_option("--config", rc.config_path, "flat key=value config file (overridden by flags)");
    return layer;
}

void finalize_config(CLI::App* cmd, RunConfig& rc, const std::shared_ptr<ConfigLayer>& layer) {
    if (cmd->count("--seed") > 0) rc.seed_set = true;
    if (!rc.config_path.empty()) layer->load(rc.config_path);
    if (layer->seed_in_file) rc.seed_set = true;
    if (!rc.seed_set) {
        if (const char* env = std::getenv("ISGCD_SEED")) rc.seed = std::stoull(env);
    }
    rc.train.seed = rc.seed;
    const auto strat = isgcd::strategy_from_string(rc.strategy);
    if (!strat) throw CLI::ValidationError("--strategy", "expected al, alwop or mtl");
    rc.train.strategy = *strat;
    rc.train.sgnn_on = parse_on_off(rc.sgnn, "--sgnn");
    rc.train.iediff_on = parse_on_off(rc.iediff, "--iediff");
    rc.train.bias_on = parse_on_off(rc.bias, "--bias");
    if (!rc.train.sgnn_on) rc.train.iediff_on = false; // sgnn off implies the KaNCD configuration
    rc.train.validate();
}

void require_input_file(const std::string& path, const std::string& flag) {
    if (path.empty()) throw CLI::RequiredError(flag);
    if (!fs::exists(path)) throw CLI::ValidationError(flag, "file does not exist: " + path);
}

isgcd::TableFormat format_of(const std::string& path) { return isgcd::detail::format_from_path(path); }

void write_effective_config(const RunConfig& rc, const std::string& path) {
    std::ofstream out(path);
    char buf[128];
    const auto kv = [&](const char* key, const std::string& value) { out << key << '=' << value << '\n'; };
    const auto kvd = [&](const char* key, double value) {
        std::snprintf(buf, sizeof buf, "%.10g", value);
        out << key << '=' << buf << '\n';
    };
    kvd("lr", rc.train.learning_rate);
    kv("batch-size", std::to_string(rc.train.batch_size));
    kv("dim", std::to_string(rc.train.dim));
    kv("layers", std::to_string(rc.train.layers));
    kvd("temperature", rc.train.temperature);
    kvd("alpha", rc.train.alpha);
    kvd("beta", rc.train.beta);
    kv("pretrain-epochs", std::to_string(rc.train.pretrain_epochs));
    kv("max-epochs", std::to_string(rc.train.max_epochs));
    kv("patience", std::to_string(rc.train.patience));
    kv("hsic-max-nodes", std::to_string(rc.train.hsic_max_nodes));
    kv("strategy", isgcd::to_string(rc.train.strategy));
    kv("sgnn", rc.train.sgnn_on ? "on" : "off");
    kv("iediff", rc.train.iediff_on ? "on" : "off");
    kv("bias", rc.train.bias_on ? "on" : "off");
    kv("folds", std::to_string(rc.folds));
    kv("seed", std::to_string(rc.seed));
}

void write_split_tsv(const isgcd::FoldPlan& plan, int fold, const std::string& path) {
    std::ofstream out(path);
    out << "log_index\trole\n";
    const auto dump = [&](const std::vector<std::int32_t>& idx, const char* role) {
        for (const std::int32_t i : idx) out << i << '\t' << role << '\n';
    };
    dump(plan.folds[fold].train, "train");
    dump(plan.folds[fold].valid, "valid");
    dump(plan.folds[fold].test, "test");
}

isgcd::Fold read_split_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw isgcd::parse_error("cannot open split file: " + path);
    std::string line;
    std::getline(in, line); // header
    isgcd::Fold fold;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw isgcd::parse_error(path + ": expected log_index<TAB>role");
        const std::int32_t idx = std::stoi(line.substr(0, tab));
        const std::string role = line.substr(tab + 1);
        if (role == "train")
            fold.train.push_back(idx);
        else if (role == "valid")
            fold.valid.push_back(idx);
        else if (role == "test")
            fold.test.push_back(idx);
        else
            throw isgcd::parse_error(path + ": unknown role '" + role + "'");
    }
    return fold;
}

void write_id_maps(const isgcd::ResponseLogSet& logs, const isgcd::QMatrix& q, const fs::path& dir) {
    isgcd::write_id_map_tsv((dir / "student_id_map.tsv").string(), logs.students);
    isgcd::write_id_map_tsv((dir / "exercise_id_map.tsv").string(), logs.exercises);
    isgcd::write_id_map_tsv((dir / "concept_id_map.tsv").string(), q.concept_ids);
}

void write_fold_metrics(const isgcd::FoldMetrics& m, const std::string& path) {
    std::ofstream out(path);
    char buf[64];
    const auto kv = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%s=%.6f\n", key, v);
        out << buf;
    };
    kv("acc", m.acc);
    kv("auc", m.auc);
    kv("doa", m.doa);
}

struct LoadedData {
    isgcd::ResponseLogSet logs;
    isgcd::QMatrix q;
};

LoadedData load_data(const RunConfig& rc) {
    require_input_file(rc.logs_path, "--logs");
    require_input_file(rc.q_path, "--q");
    LoadedData data;
    data.logs = isgcd::load_response_logs(rc.logs_path, format_of(rc.logs_path));
    data.q = isgcd::load_q_matrix(rc.q_path, data.logs, format_of(rc.q_path));
    return data;
}

int cmd_train(const RunConfig& rc) {
    if (rc.out_dir.empty()) throw CLI::RequiredError("--out");
    const auto data = load_data(rc);
    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);

    if (rc.fold < 0 || rc.fold >= rc.folds) throw CLI::ValidationError("--fold", "fold index out of range");
    const auto plan = isgcd::make_folds(data.logs, rc.folds, rc.seed);
    const auto& fold = plan.folds[rc.fold];

    isgcd::Trainer trainer(rc.train, data.logs, data.q, fold);
    if (!rc.dump_graph.empty()) isgcd::dump_graph_tsv(trainer.graph(), rc.dump_graph);
    isgcd::FitResult result = trainer.fit();

    isgcd::save_checkpoint(result.theta, result.phi, rc.train.layers,
                           {rc.train.bias_on, rc.train.sgnn_on, rc.train.iediff_on},
                           (out / "checkpoint.bin").string());
    isgcd::write_history(result.history, (out / "history.log").string());
    write_split_tsv(plan, rc.fold, (out / "split.tsv").string());
    write_effective_config(rc, (out / "config.txt").string());
    write_id_maps(data.logs, data.q, out);

    const auto graph = isgcd::build_graph(data.logs, fold.train);
    const auto metrics =
        isgcd::evaluate_model(rc.train, result.theta, result.phi, graph, data.logs, data.q, fold.test);
    write_fold_metrics(metrics, (out / "metrics.txt").string());

    std::printf("train: best_epoch=%d val_auc=%.4f test_acc=%.4f test_auc=%.4f test_doa=%.4f\n",
                result.history.best_epoch, result.best_val_auc, metrics.acc, metrics.auc, metrics.doa);
    return 0;
}

void write_cv_outputs(const isgcd::MetricReport& report, const fs::path& out, const std::string& suffix) {
    isgcd::write_metric_report_kv(report, (out / ("cv_report" + suffix + ".txt")).string());
    json j;
    j["folds"] = report.per_fold.size();
    j["acc"] = {{"mean", report.acc.mean}, {"std", report.acc.stddev}};
    j["auc"] = {{"mean", report.auc.mean}, {"std", report.auc.stddev}};
    j["doa"] = {{"mean", report.doa.mean}, {"std", report.doa.stddev}};
    auto& folds = j["per_fold"] = json::array();
    for (const auto& f : report.per_fold)
        folds.push_back({{"acc", f.acc}, {"auc", f.auc}, {"doa", f.doa}});
    std::ofstream(out / ("cv_report" + suffix + ".json")) << j.dump(2) << '\n';
}

int cmd_cv(const RunConfig& rc) {
    if (rc.out_dir.empty()) throw CLI::RequiredError("--out");
    const auto data = load_data(rc);
    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);
    const auto plan = isgcd::make_folds(data.logs, rc.folds, rc.seed);
    write_id_maps(data.logs, data.q, out);

    const std::vector<int> sweep =
        rc.layer_sweep.empty() ? std::vector<int>{rc.train.layers} : parse_int_list(rc.layer_sweep);
    for (const int layers : sweep) {
        isgcd::TrainConfig cfg = rc.train;
        cfg.layers = layers;
        cfg.validate();
        const auto report = isgcd::cross_validate(cfg, data.logs, data.q, plan, rc.jobs);
        const std::string suffix = rc.layer_sweep.empty() ? "" : "_L" + std::to_string(layers);
        write_cv_outputs(report, out, suffix);
        std::printf("cv%s: acc=%.4f+-%.4f auc=%.4f+-%.4f doa=%.4f+-%.4f\n", suffix.c_str(), report.acc.mean,
                    report.acc.stddev, report.auc.mean, report.auc.stddev, report.doa.mean,
                    report.doa.stddev);
    }
    return 0;
}

int cmd_detect(const RunConfig& rc) {
    if (rc.out_dir.empty()) throw CLI::RequiredError("--out");
    const auto ratios = parse_double_list(rc.flip_ratios);
    if (ratios.empty()) throw CLI::ValidationError("--flip-ratios", "no ratios given");
    for (const double r : ratios)
        if (r <= 0.0 || r > 1.0) throw CLI::ValidationError("--flip-ratios", "ratios must be in (0, 1]");

    const auto data = load_data(rc);
    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);
    write_id_maps(data.logs, data.q, out);

    std::ofstream summary(out / "detection_summary.tsv");
    summary << "flip_ratio\tn_flipped\tn_detected\tn_true_positive\tdetection_ratio\ttest_acc\ttest_auc\n";
    char buf[256];
    for (const double ratio : ratios) {
        const auto result = isgcd::detection_experiment(rc.train, data.logs, data.q, ratio, rc.seed);
        std::snprintf(buf, sizeof buf, "%.2f", ratio);
        isgcd::write_detection_tsv(result, data.logs, (out / ("edges_" + std::string(buf) + ".tsv")).string());
        std::snprintf(buf, sizeof buf, "%.2f\t%zu\t%zu\t%zu\t%.6f\t%.4f\t%.4f\n", ratio, result.n_flipped,
                      result.n_detected, result.n_true_positive, result.detection_ratio,
                      result.test_metrics.acc, result.test_metrics.auc);
        summary << buf;
        std::printf("detect ratio=%.2f: detection=%.4f (flipped=%zu detected=%zu)\n", ratio,
                    result.detection_ratio, result.n_flipped, result.n_detected);
    }
    return 0;
}

int cmd_synth(RunConfig& rc) {
    if (rc.out_dir.empty()) throw CLI::RequiredError("--out");
    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);
    rc.synth.seed = rc.seed;
    const auto data = isgcd::generate_synthetic(rc.synth);
    isgcd::write_logs_csv(data.logs, (out / "logs.csv").string());
    isgcd::write_q_csv(data.q, data.logs.exercises, (out / "q.csv").string());
    isgcd::write_mastery_tsv(data, (out / "mastery.tsv").string());
    std::printf("synth: students=%d exercises=%d concepts=%d logs=%zu\n", rc.synth.students,
                rc.synth.exercises, rc.synth.concepts, data.logs.size());
    return 0;
}

struct CheckpointContext {
    LoadedData data;
    isgcd::Fold fold;
    isgcd::Checkpoint ck;
    isgcd::TrainConfig cfg;
    isgcd::SemanticBipartiteGraph graph;
};

CheckpointContext load_checkpoint_context(const RunConfig& rc) {
    require_input_file(rc.checkpoint_path, "--checkpoint");
    require_input_file(rc.split_path, "--split");
    CheckpointContext ctx;
    ctx.data = load_data(rc);
    ctx.fold = read_split_tsv(rc.split_path);
    ctx.ck = isgcd::load_checkpoint(rc.checkpoint_path);
    isgcd::check_checkpoint_dims(ctx.ck, ctx.data.logs.num_students(), ctx.data.logs.num_exercises(),
                                 ctx.data.q.num_concepts, ctx.ck.dim);
    ctx.cfg = rc.train;
    ctx.cfg.dim = ctx.ck.dim;
    ctx.cfg.layers = ctx.ck.layers;
    ctx.cfg.sgnn_on = ctx.ck.flags.sgnn_on;
    ctx.cfg.iediff_on = ctx.ck.flags.iediff_on;
    ctx.cfg.bias_on = ctx.ck.flags.bias_on;
    ctx.graph = isgcd::build_graph(ctx.data.logs, ctx.fold.train);
    return ctx;
}

int cmd_eval(const RunConfig& rc) {
    auto ctx = load_checkpoint_context(rc);
    const std::vector<std::int32_t>* indices = nullptr;
    if (rc.role == "train")
        indices = &ctx.fold.train;
    else if (rc.role == "valid")
        indices = &ctx.fold.valid;
    else if (rc.role == "test")
        indices = &ctx.fold.test;
    else
        throw CLI::ValidationError("--role", "expected train, valid or test");

    const auto metrics = isgcd::evaluate_model(ctx.cfg, ctx.ck.theta, ctx.ck.phi, ctx.graph, ctx.data.logs,
                                               ctx.data.q, *indices);
    std::printf("acc=%.6f\nauc=%.6f\ndoa=%.6f\n", metrics.acc, metrics.auc, metrics.doa);
    if (!rc.out_dir.empty()) {
        fs::create_directories(rc.out_dir);
        write_fold_metrics(metrics, (fs::path(rc.out_dir) / ("metrics_" + rc.role + ".txt")).string());
    }
    return 0;
}

int cmd_diagnose(const RunConfig& rc) {
    if (rc.out_dir.empty()) throw CLI::RequiredError("--out");
    auto ctx = load_checkpoint_context(rc);
    fs::create_directories(rc.out_dir);
    const fs::path out(rc.out_dir);

    const auto diag = isgcd::diagnose_with_params(ctx.cfg, ctx.ck.theta, ctx.ck.phi, ctx.graph);
    const auto dump = [&](const isgcd::ad::TensorPtr& matrix, const isgcd::IdMap& ids,
                          const std::string& path) {
        std::ofstream f(path);
        f << "id";
        for (std::int32_t k = 0; k < ctx.data.q.num_concepts; ++k)
            f << '\t' << ctx.data.q.concept_ids.names()[k];
        f << '\n';
        char buf[32];
        for (int i = 0; i < matrix->rows(); ++i) {
            f << ids.names()[i];
            for (int k = 0; k < matrix->cols(); ++k) {
                std::snprintf(buf, sizeof buf, "%.6f", matrix->at(i, k));
                f << '\t' << buf;
            }
            f << '\n';
        }
    };
    dump(diag.proficiency, ctx.data.logs.students, (out / "proficiency.tsv").string());
    dump(diag.difficulty, ctx.data.logs.exercises, (out / "difficulty.tsv").string());
    write_id_maps(ctx.data.logs, ctx.data.q, out);
    std::printf("diagnose: wrote proficiency.tsv (%d x %d) and difficulty.tsv (%d x %d)\n",
                ctx.ck.theta.num_students, ctx.ck.theta.num_concepts, ctx.ck.theta.num_exercises,
                ctx.ck.theta.num_concepts);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ISG-CD: semantic-aware graph cognitive diagnosis with informative edge differentiation"};
    app.require_subcommand(1);

    RunConfig rc;

    auto* train = app.add_subcommand("train", "train one model on one fold and write a checkpoint");
    auto train_layer = add_train_options(train, rc);
    train->add_option("--fold", rc.fold, "fold index used for the train/valid/test split");
    train->add_option("--dump-graph", rc.dump_graph, "write the training graph edge table to this TSV");

    auto* cv = app.add_subcommand("cv", "k-fold cross-validation with aggregated metrics");
    auto cv_layer = add_train_options(cv, rc);
    cv->add_option("--jobs", rc.jobs, "parallel fold workers");
    cv->add_option("--layer-sweep", rc.layer_sweep, "comma list of L values; one report per value");

    auto* detect = app.add_subcommand("detect", "label-flip injection and uncertain-edge detection");
    auto detect_layer = add_train_options(detect, rc);
    detect->add_option("--flip-ratios", rc.flip_ratios, "comma list of flip ratios in (0,1]");

    auto* synth = app.add_subcommand("synth", "generate a synthetic guess/slip dataset");
    auto synth_layer = add_train_options(synth, rc, false);
    synth->add_option("--students", rc.synth.students, "number of students");
    synth->add_option("--exercises", rc.synth.exercises, "number of exercises");
    synth->add_option("--concepts", rc.synth.concepts, "number of knowledge concepts");
    synth->add_option("--logs-per-student", rc.synth.logs_per_student, "responses sampled per student");
    synth->add_option("--guess", rc.synth.guess, "probability of guessing correctly");
    synth->add_option("--slip", rc.synth.slip, "probability of slipping on a mastered exercise");
    synth->add_option("--min-concepts", rc.synth.min_concepts, "minimum concepts per exercise");
    synth->add_option("--max-concepts", rc.synth.max_concepts, "maximum concepts per exercise");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a stored split");
    auto eval_layer = add_train_options(eval, rc);
    eval->add_option("--checkpoint", rc.checkpoint_path, "checkpoint file");
    eval->add_option("--split", rc.split_path, "split.tsv written by train");
    eval->add_option("--role", rc.role, "which part to score: train, valid, test");

    auto* diagnose = app.add_subcommand("diagnose", "dump proficiency and difficulty matrices");
    auto diagnose_layer = add_train_options(diagnose, rc);
    diagnose->add_option("--checkpoint", rc.checkpoint_path, "checkpoint file");
    diagnose->add_option("--split", rc.split_path, "split.tsv written by train");

    try {
        app.parse(argc, argv);
        CLI::App* sub = app.get_subcommands().front();
        const auto layer = sub == train    ? train_layer
                           : sub == cv     ? cv_layer
                           : sub == detect ? detect_layer
                           : sub == synth  ? synth_layer
                           : sub == eval   ? eval_layer
                                           : diagnose_layer;
        finalize_config(sub, rc, layer);

        if (sub == train) return cmd_train(rc);
        if (sub == cv) return cmd_cv(rc);
        if (sub == detect) return cmd_detect(rc);
        if (sub == synth) return cmd_synth(rc);
        if (sub == eval) return cmd_eval(rc);
        return cmd_diagnose(rc);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
