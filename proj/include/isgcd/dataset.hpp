#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "isgcd/errors.hpp"
#include "isgcd/rng.hpp"

namespace isgcd {

inline constexpr int kDefaultBatchSize = 8192;
inline constexpr int kDefaultFolds = 5;

// One response log: student s answered exercise e, score 1 = correct.
struct ResponseLog {
    std::int32_t student;
    std::int32_t exercise;
    std::int8_t score;
};

// Dense re-indexing of arbitrary external id strings, in first-appearance order.
class IdMap {
public:
    std::int32_t intern(const std::string& external) {
        auto [it, inserted] = index_.try_emplace(external, static_cast<std::int32_t>(names_.size()));
        if (inserted) names_.push_back(external);
        return it->second;
    }
    const std::string* find_name(std::int32_t idx) const {
        return idx >= 0 && idx < static_cast<std::int32_t>(names_.size()) ? &names_[idx] : nullptr;
    }
    std::int32_t find_index(const std::string& external) const {
        auto it = index_.find(external);
        return it == index_.end() ? -1 : it->second;
    }
    std::int32_t size() const { return static_cast<std::int32_t>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::unordered_map<std::string, std::int32_t> index_;
    std::vector<std::string> names_;
};

// The interaction data R: unique (student, exercise) pairs with binary scores,
// plus the id maps used for dense re-indexing. Immutable after construction.
struct ResponseLogSet {
    std::vector<ResponseLog> logs;
    IdMap students;
    IdMap exercises;

    std::int32_t num_students() const { return students.size(); }
    std::int32_t num_exercises() const { return exercises.size(); }
    std::size_t size() const { return logs.size(); }
};

// Sparse exercise x concept relation matrix; every exercise carries >= 1 concept.
struct QMatrix {
    std::int32_t num_exercises = 0;
    std::int32_t num_concepts = 0;
    std::vector<std::vector<std::int32_t>> concepts_of; // per exercise, sorted
    IdMap concept_ids;

    bool related(std::int32_t exercise, std::int32_t concept_id) const {
        const auto& row = concepts_of[exercise];
        return std::binary_search(row.begin(), row.end(), concept_id);
    }
    double mean_concepts_per_exercise() const {
        std::size_t total = 0;
        for (const auto& row : concepts_of) total += row.size();
        return num_exercises == 0 ? 0.0 : static_cast<double>(total) / num_exercises;
    }
};

struct Fold {
    std::vector<std::int32_t> train;
    std::vector<std::int32_t> valid;
    std::vector<std::int32_t> test;
};

// k-fold split over log indices. Each log is in exactly one test fold; the
// remainder of each fold is split train:valid = 7:1.
struct FoldPlan {
    std::vector<Fold> folds;
    std::uint64_t seed = 0;
};

struct FlipMask {
    std::vector<bool> flipped; // aligned with ResponseLogSet::logs
    double ratio = 0.0;

    std::size_t count() const {
        std::size_t n = 0;
        for (const bool f : flipped) n += f;
        return n;
    }
};

enum class TableFormat { csv, tsv };

namespace detail {

inline char delimiter(TableFormat f) { return f == TableFormat::csv ? ',' : '\t'; }

inline TableFormat format_from_path(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    return ext == ".tsv" ? TableFormat::tsv : TableFormat::csv;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(field);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

inline void strip_crlf(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline void strip_bom(std::string& line) {
    if (line.size() >= 3 && line[0] == '\xEF' && line[1] == '\xBB' && line[2] == '\xBF') line.erase(0, 3);
}

// Reads a delimited file with a header; calls row(line_number, fields) per row.
template <typename RowFn>
void read_table(const std::string& path, TableFormat format,
                const std::vector<std::string>& required_columns,
                std::vector<int>& column_positions, RowFn&& row) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open file: " + path);
    const char delim = delimiter(format);

    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file");
    strip_bom(line);
    strip_crlf(line);
    const auto header = split_line(line, delim);
    column_positions.assign(required_columns.size(), -1);
    for (std::size_t c = 0; c < header.size(); ++c)
        for (std::size_t r = 0; r < required_columns.size(); ++r)
            if (header[c] == required_columns[r]) column_positions[r] = static_cast<int>(c);
    for (std::size_t r = 0; r < required_columns.size(); ++r)
        if (column_positions[r] < 0)
            throw parse_error(path + ": header is missing column '" + required_columns[r] + "'");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        strip_crlf(line);
        if (line.empty()) continue;
        auto fields = split_line(line, delim);
        if (fields.size() < header.size())
            throw parse_error(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        row(line_no, fields);
    }
}

} // namespace detail

// Loads response logs from a delimited file with header columns
// student_id, exercise_id, score (any column order). External ids may be
// arbitrary strings; they are densely re-indexed in first-appearance order.
inline ResponseLogSet load_response_logs(const std::string& path,
                                         TableFormat format = TableFormat::csv) {
    ResponseLogSet set;
    std::unordered_set<std::uint64_t> seen;
    std::vector<int> cols;
    detail::read_table(path, format, {"student_id", "exercise_id", "score"}, cols,
                       [&](std::size_t line_no, const std::vector<std::string>& f) {
                           const std::string& score_str = f[cols[2]];
                           std::int8_t score;
                           if (score_str == "0")
                               score = 0;
                           else if (score_str == "1")
                               score = 1;
                           else
                               throw validation_error(path + ":" + std::to_string(line_no) +
                                                      ": score must be 0 or 1, got '" + score_str + "'");
                           const std::int32_t s = set.students.intern(f[cols[0]]);
                           const std::int32_t e = set.exercises.intern(f[cols[1]]);
                           const std::uint64_t key =
                               (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)) << 32) |
                               static_cast<std::uint32_t>(e);
                           if (!seen.insert(key).second)
                               throw validation_error(path + ":" + std::to_string(line_no) +
                                                      ": duplicate (student, exercise) pair (" + f[cols[0]] +
                                                      ", " + f[cols[1]] + ")");
                           set.logs.push_back({s, e, score});
                       });
    return set;
}

// Loads exercise-concept pairs (columns exercise_id, concept_id) against the
// exercise id map of an already-loaded log set. Pairs for exercises that never
// occur in the logs are ignored; every exercise in the logs must end up with
// at least one concept.
inline QMatrix load_q_matrix(const std::string& path, const ResponseLogSet& logs,
                             TableFormat format = TableFormat::csv) {
    QMatrix q;
    q.num_exercises = logs.num_exercises();
    q.concepts_of.assign(q.num_exercises, {});
    std::vector<int> cols;
    detail::read_table(path, format, {"exercise_id", "concept_id"}, cols,
                       [&](std::size_t, const std::vector<std::string>& f) {
                           const std::int32_t e = logs.exercises.find_index(f[cols[0]]);
                           if (e < 0) return;
                           const std::int32_t k = q.concept_ids.intern(f[cols[1]]);
                           q.concepts_of[e].push_back(k);
                       });
    q.num_concepts = q.concept_ids.size();

    std::string missing;
    int missing_count = 0;
    for (std::int32_t e = 0; e < q.num_exercises; ++e) {
        auto& row = q.concepts_of[e];
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        if (row.empty()) {
            if (missing_count < 10) missing += (missing_count ? ", " : "") + *logs.exercises.find_name(e);
            ++missing_count;
        }
    }
    if (missing_count > 0)
        throw validation_error(path + ": " + std::to_string(missing_count) +
                               " exercise(s) have no related concept: " + missing +
                               (missing_count > 10 ? ", ..." : ""));
    return q;
}

inline void write_id_map_tsv(const std::string& path, const IdMap& map) {
    std::ofstream out(path);
    out << "index\texternal_id\n";
    for (std::int32_t i = 0; i < map.size(); ++i) out << i << '\t' << map.names()[i] << '\n';
}

// Five-fold plan: one shuffled pass assigns balanced test chunks; the
// remainder of each fold is reshuffled (per-fold stream) and split 7:1 into
// train and validation.
inline FoldPlan make_folds(const ResponseLogSet& logs, int k = kDefaultFolds, std::uint64_t seed = 0) {
    if (k < 2) throw std::invalid_argument("make_folds: k must be at least 2");
    if (logs.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("make_folds: fewer logs than folds");

    const std::size_t n = logs.size();
    std::vector<std::int32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::int32_t>(i);
    Rng rng = stream_rng(seed, "folds");
    shuffle(order, rng);

    FoldPlan plan;
    plan.seed = seed;
    plan.folds.resize(k);
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t sz = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        auto& fold = plan.folds[f];
        fold.test.assign(order.begin() + pos, order.begin() + pos + sz);
        fold.train.reserve(n - sz);
        fold.train.insert(fold.train.end(), order.begin(), order.begin() + pos);
        fold.train.insert(fold.train.end(), order.begin() + pos + sz, order.end());
        Rng fold_rng = stream_rng(seed, "folds", static_cast<std::uint64_t>(f) + 1);
        shuffle(fold.train, fold_rng);
        const std::size_t n_valid = fold.train.size() / 8;
        fold.valid.assign(fold.train.end() - n_valid, fold.train.end());
        fold.train.resize(fold.train.size() - n_valid);
        pos += sz;
    }
    return plan;
}

// Shuffled batches for one epoch; the permutation is derived from (seed, epoch)
// and the final partial batch is emitted.
inline std::vector<std::vector<std::int32_t>> batch_iter(const std::vector<std::int32_t>& split,
                                                         int batch_size, std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw std::invalid_argument("batch_iter: batch_size must be >= 1");
    std::vector<std::int32_t> order = split;
    Rng rng = stream_rng(seed, "batching", static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);
    std::vector<std::vector<std::int32_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        batches.emplace_back(order.begin() + i, order.begin() + end);
    }
    return batches;
}

// Flips the score of round(ratio * |subset|) logs chosen uniformly from
// `subset` (all logs when empty). Applying the returned mask again recovers
// the original scores.
inline std::pair<ResponseLogSet, FlipMask> inject_label_flips(const ResponseLogSet& logs, double ratio,
                                                              std::uint64_t seed,
                                                              const std::vector<std::int32_t>& subset = {}) {
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("inject_label_flips: ratio out of [0,1]");
    ResponseLogSet out = logs;
    FlipMask mask;
    mask.ratio = ratio;
    mask.flipped.assign(logs.size(), false);

    std::vector<std::int32_t> pool;
    if (subset.empty()) {
        pool.resize(logs.size());
        for (std::size_t i = 0; i < logs.size(); ++i) pool[i] = static_cast<std::int32_t>(i);
    } else {
        pool = subset;
    }
    const auto n_flip = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(pool.size())));
    Rng rng = stream_rng(seed, "flips");
    shuffle(pool, rng);
    for (std::size_t i = 0; i < n_flip; ++i) {
        const std::int32_t idx = pool[i];
        out.logs[idx].score = static_cast<std::int8_t>(1 - out.logs[idx].score);
        mask.flipped[idx] = true;
    }
    return {std::move(out), std::move(mask)};
}

inline ResponseLogSet apply_flip_mask(const ResponseLogSet& logs, const FlipMask& mask) {
    ResponseLogSet out = logs;
    for (std::size_t i = 0; i < logs.size(); ++i)
        if (mask.flipped[i]) out.logs[i].score = static_cast<std::int8_t>(1 - out.logs[i].score);
    return out;
}

} // namespace isgcd
