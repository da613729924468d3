#pragma once

// Command implementations behind the `modir` executable. Each command reads
// its inputs from files, writes artifacts under one directory and reports a
// human-readable summary on `out`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "modir/metrics.hpp"
#include "modir/synthdata.hpp"
#include "modir/trainer.hpp"

namespace modir {

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
    GenConfig data;
    TrainConfig train;
    EvalConfig eval;
};

nlohmann::ordered_json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
// Missing sections take their defaults; unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);

struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

// Artifact names inside a corpus directory and a run directory.
inline constexpr const char* kSourceCorpusFile = "source.jsonl";
inline constexpr const char* kTargetCorpusFile = "target.jsonl";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kCorporaFile = "corpora.json";
inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kEvalFile = "eval.json";
inline constexpr const char* kProjectionFile = "projection.csv";
inline constexpr const char* kDomainAccCsv = "domain_acc_vs_step.csv";
inline constexpr const char* kInvarianceCsv = "invariance_vs_ndcg.csv";

struct CorpusFiles {
    Corpus source;
    Corpus target;
};
CorpusFiles load_corpora(const std::filesystem::path& dir);

// Writes source/target corpora and the config snapshot into opts.out.
void cmd_generate(const CommandOptions& opts, std::ostream& out);

// Trains on the corpora in `corpus_dir` and populates the run directory
// opts.out. Refuses a non-empty run directory unless opts.force is set.
EvalReport cmd_train(const CommandOptions& opts, const std::filesystem::path& corpus_dir, std::ostream& out);

// Continues a run from its last checkpoint.
EvalReport cmd_resume(const std::filesystem::path& run_dir, const std::filesystem::path& corpus_dir,
                      std::ostream& out);

// Full evaluation of a checkpoint, printed to `out` and also written to
// opts.out/eval.json when opts.out is given.
EvalReport cmd_eval(const CommandOptions& opts, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& corpus_dir, std::ostream& out);

// PCA coordinates of every query and document embedding, written to
// opts.out/projection.csv (current directory by default).
void cmd_project(const CommandOptions& opts, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& corpus_dir, std::ostream& out);

// Summary CSVs of the metrics file of `run_dir`, written to opts.out when
// given and to `run_dir` otherwise.
void cmd_report(const CommandOptions& opts, const std::filesystem::path& run_dir, std::ostream& out);

// Default configuration as pretty-printed JSON.
void cmd_defaults(std::ostream& out);

// Shortest decimal form that round-trips; empty for nullopt.
std::string format_number(std::optional<double> v);

std::vector<EvalReport> read_metrics(const std::filesystem::path& path);

}  // namespace modir
