#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "test_util.hpp"

// End-to-end checks of the command-line tool. The binary path comes from the
// build system.
#ifndef ISGCD_CLI_PATH
#error "ISGCD_CLI_PATH must be defined by the build"
#endif

namespace {

using testutil::TempDir;

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ISGCD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> read_kv(const std::string& path) {
    std::map<std::string, std::string> kv;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

// shared tiny dataset + fast training flags
struct CliFixture {
    TempDir dir;
    std::string data;
    std::string fast;

    CliFixture() {
        data = dir.file("data");
        const int rc = run_cli("synth --out " + data +
                               " --students 50 --exercises 25 --concepts 5 --logs-per-student 10 --seed 3");
        EXPECT_EQ(rc, 0);
        fast = " --dim 8 --layers 1 --batch-size 256 --lr 0.01 --pretrain-epochs 1 --max-epochs 2"
               " --hsic-max-nodes 32 --seed 5 --logs " +
               data + "/logs.csv --q " + data + "/q.csv";
    }
};

} // namespace

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run_cli(""), 2); }

TEST(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(run_cli("train --no-such-flag 1"), 2); }

TEST(Cli, MissingInputFileIsUsageError) {
    TempDir dir;
    EXPECT_EQ(run_cli("train --logs /nonexistent.csv --q /nonexistent.csv --out " + dir.file("out")), 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run_cli("--help"), 0); }

TEST(Cli, SynthTrainEvalDiagnoseRoundTrip) {
    CliFixture fx;
    const std::string run = fx.dir.file("run");
    ASSERT_EQ(run_cli("train --out " + run + fx.fast), 0);
    for (const char* f : {"checkpoint.bin", "history.log", "split.tsv", "config.txt", "metrics.txt",
                          "student_id_map.tsv", "exercise_id_map.tsv", "concept_id_map.tsv"})
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(run) / f)) << f;

    EXPECT_EQ(run_cli("eval --checkpoint " + run + "/checkpoint.bin --split " + run + "/split.tsv --out " +
                      run + " --role test" + fx.fast),
              0);
    const auto eval_kv = read_kv(run + "/metrics_test.txt");
    const auto train_kv = read_kv(run + "/metrics.txt");
    EXPECT_EQ(eval_kv.at("auc"), train_kv.at("auc"));

    const std::string diag = fx.dir.file("diag");
    ASSERT_EQ(run_cli("diagnose --checkpoint " + run + "/checkpoint.bin --split " + run + "/split.tsv" +
                      " --out " + diag + fx.fast),
              0);
    std::ifstream prof(diag + "/proficiency.tsv");
    std::string line;
    std::getline(prof, line);
    int rows = 0;
    while (std::getline(prof, line)) ++rows;
    EXPECT_EQ(rows, 50);
}

TEST(Cli, FlagPrecedenceOverConfigFileOverDefaults) {
    CliFixture fx;
    // defaults
    const std::string run_default = fx.dir.file("run_default");
    ASSERT_EQ(run_cli("train --out " + run_default + fx.fast), 0);
    EXPECT_EQ(read_kv(run_default + "/config.txt").at("beta"), "0.5");

    // config file layer
    const std::string cfg_path = fx.dir.file("exp.cfg");
    testutil::write_file(cfg_path, "beta=0.25\ntemperature=0.4\n");
    const std::string run_file = fx.dir.file("run_file");
    ASSERT_EQ(run_cli("train --out " + run_file + " --config " + cfg_path + fx.fast), 0);
    const auto file_kv = read_kv(run_file + "/config.txt");
    EXPECT_EQ(file_kv.at("beta"), "0.25");
    EXPECT_EQ(file_kv.at("temperature"), "0.4");

    // command line beats the file
    const std::string run_flag = fx.dir.file("run_flag");
    ASSERT_EQ(run_cli("train --out " + run_flag + " --config " + cfg_path + " --beta 0.75" + fx.fast), 0);
    const auto flag_kv = read_kv(run_flag + "/config.txt");
    EXPECT_EQ(flag_kv.at("beta"), "0.75");
    EXPECT_EQ(flag_kv.at("temperature"), "0.4");
}

TEST(Cli, SeedEnvFallback) {
    CliFixture fx;
    const std::string run = fx.dir.file("run_env");
    const std::string cmd = std::string("ISGCD_SEED=777 ") + ISGCD_CLI_PATH + " train --out " + run +
                            fx.fast + " >/dev/null 2>&1";
    // fx.fast carries --seed 5, which must win over the environment
    ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    EXPECT_EQ(read_kv(run + "/config.txt").at("seed"), "5");

    // without --seed the environment fills it in
    std::string fast_noseed = fx.fast;
    const auto pos = fast_noseed.find(" --seed 5");
    fast_noseed.erase(pos, 9);
    const std::string run2 = fx.dir.file("run_env2");
    const std::string cmd2 = std::string("ISGCD_SEED=777 ") + ISGCD_CLI_PATH + " train --out " + run2 +
                             fast_noseed + " >/dev/null 2>&1";
    ASSERT_EQ(WEXITSTATUS(std::system(cmd2.c_str())), 0);
    EXPECT_EQ(read_kv(run2 + "/config.txt").at("seed"), "777");
}

TEST(Cli, DeterministicOutputFilesGivenSeed) {
    CliFixture fx;
    const std::string a = fx.dir.file("run_a"), b = fx.dir.file("run_b");
    ASSERT_EQ(run_cli("train --out " + a + fx.fast), 0);
    ASSERT_EQ(run_cli("train --out " + b + fx.fast), 0);
    const auto strip_wall = [](std::string text) {
        return std::regex_replace(text, std::regex("wall_ms=[0-9.]+"), "wall_ms=X");
    };
    for (const char* f : {"history.log", "split.tsv", "metrics.txt", "config.txt"})
        EXPECT_EQ(strip_wall(slurp(a + "/" + std::string(f))), strip_wall(slurp(b + "/" + std::string(f))))
            << f;
    EXPECT_EQ(slurp(a + "/checkpoint.bin"), slurp(b + "/checkpoint.bin"));
}

TEST(Cli, DetectZeroRatioIsUsageError) {
    CliFixture fx;
    EXPECT_EQ(run_cli("detect --out " + fx.dir.file("det") + " --flip-ratios 0" + fx.fast), 2);
}

TEST(Cli, DetectWritesSummaryAndEdgeReport) {
    CliFixture fx;
    const std::string det = fx.dir.file("det");
    ASSERT_EQ(run_cli("detect --out " + det + " --flip-ratios 0.1,0.2" + fx.fast), 0);
    std::ifstream summary(det + "/detection_summary.tsv");
    std::string line;
    std::getline(summary, line);
    EXPECT_EQ(line, "flip_ratio\tn_flipped\tn_detected\tn_true_positive\tdetection_ratio\ttest_acc\ttest_auc");
    int rows = 0;
    while (std::getline(summary, line)) ++rows;
    EXPECT_EQ(rows, 2);

    std::ifstream edges(det + "/edges_0.10.tsv");
    std::getline(edges, line);
    EXPECT_EQ(line, "student_id\texercise_id\tscore\tretention\tflipped\tdetected");
    int flipped = 0, total = 0;
    while (std::getline(edges, line)) {
        ++total;
        std::istringstream ss(line);
        std::string s, e, score, retention, fl;
        std::getline(ss, s, '\t');
        std::getline(ss, e, '\t');
        std::getline(ss, score, '\t');
        std::getline(ss, retention, '\t');
        std::getline(ss, fl, '\t');
        flipped += fl == "1";
    }
    EXPECT_GT(total, 0);
    EXPECT_GT(flipped, 0);
}

TEST(Cli, CvWritesAggregatedReports) {
    CliFixture fx;
    const std::string cv = fx.dir.file("cv");
    ASSERT_EQ(run_cli("cv --out " + cv + " --folds 3" + fx.fast), 0);
    const auto kv = read_kv(cv + "/cv_report.txt");
    EXPECT_EQ(kv.at("folds"), "3");
    EXPECT_TRUE(kv.count("auc_mean"));
    EXPECT_TRUE(kv.count("auc_std"));
    EXPECT_TRUE(kv.count("doa_mean"));
    EXPECT_TRUE(kv.count("fold2_acc"));
    EXPECT_TRUE(std::filesystem::exists(cv + "/cv_report.json"));
    const auto js = slurp(cv + "/cv_report.json");
    EXPECT_NE(js.find("\"per_fold\""), std::string::npos);
}

TEST(Cli, CvLayerSweepEmitsOneReportPerValue) {
    CliFixture fx;
    const std::string cv = fx.dir.file("cv_sweep");
    ASSERT_EQ(run_cli("cv --out " + cv + " --folds 2 --layer-sweep 1,2" + fx.fast), 0);
    EXPECT_TRUE(std::filesystem::exists(cv + "/cv_report_L1.txt"));
    EXPECT_TRUE(std::filesystem::exists(cv + "/cv_report_L2.txt"));
    EXPECT_TRUE(std::filesystem::exists(cv + "/cv_report_L2.json"));
}

TEST(Cli, CvParallelFoldsMatchSerial) {
    CliFixture fx;
    const std::string s1 = fx.dir.file("cv_serial"), s2 = fx.dir.file("cv_par");
    ASSERT_EQ(run_cli("cv --out " + s1 + " --folds 3 --jobs 1" + fx.fast), 0);
    ASSERT_EQ(run_cli("cv --out " + s2 + " --folds 3 --jobs 3" + fx.fast), 0);
    EXPECT_EQ(slurp(s1 + "/cv_report.txt"), slurp(s2 + "/cv_report.txt"));
}

TEST(Cli, KancdAblationShorthand) {
    CliFixture fx;
    const std::string run = fx.dir.file("run_kancd");
    ASSERT_EQ(run_cli("train --out " + run + " --sgnn off --iediff off" + fx.fast), 0);
    const auto kv = read_kv(run + "/config.txt");
    EXPECT_EQ(kv.at("sgnn"), "off");
    EXPECT_EQ(kv.at("iediff"), "off");
}

TEST(Cli, MtlStrategyAccepted) {
    CliFixture fx;
    const std::string run = fx.dir.file("run_mtl");
    ASSERT_EQ(run_cli("train --out " + run + " --strategy mtl" + fx.fast), 0);
    EXPECT_EQ(read_kv(run + "/config.txt").at("strategy"), "mtl");
    EXPECT_EQ(run_cli("train --out " + run + " --strategy bogus" + fx.fast), 2);
}

TEST(Cli, CheckpointDimMismatchFailsEval) {
    CliFixture fx;
    const std::string run = fx.dir.file("run_dim");
    ASSERT_EQ(run_cli("train --out " + run + fx.fast), 0);
    // same checkpoint, different dataset -> dimension error (runtime failure)
    const std::string other = fx.dir.file("other");
    ASSERT_EQ(run_cli("synth --out " + other +
                      " --students 20 --exercises 10 --concepts 4 --logs-per-student 5 --seed 8"),
              0);
    EXPECT_EQ(run_cli("eval --checkpoint " + run + "/checkpoint.bin --split " + run + "/split.tsv" +
                      " --logs " + other + "/logs.csv --q " + other + "/q.csv --out " + run),
              1);
}
