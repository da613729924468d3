#include "modir/commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "modir/projection.hpp"

namespace fs = std::filesystem;

namespace modir {

// ---------------------------------------------------------------------------
// Configuration

nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["data"] = nlohmann::json(c.data);
    j["train"] = nlohmann::json(c.train);
    j["eval"] = nlohmann::json(c.eval);
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
    RunConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "schema_version") {
                if (value.get<int>() != kConfigSchemaVersion) {
                    throw ConfigError("config: unsupported schema_version " + value.dump());
                }
            } else if (key == "data") {
                c.data = value.get<GenConfig>();
            } else if (key == "train") {
                c.train = value.get<TrainConfig>();
            } else if (key == "eval") {
                c.eval = value.get<EvalConfig>();
            } else {
                throw ConfigError("config: unknown section '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.data.validate();
    c.train.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

namespace {

RunConfig resolve_config(const CommandOptions& opts) {
    return opts.config ? load_run_config(*opts.config) : RunConfig{};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

const fs::path& require_out(const CommandOptions& opts, const char* command) {
    if (!opts.out) throw ConfigError(std::string(command) + ": --out is required");
    return *opts.out;
}

// Creates `dir`, refusing to reuse a non-empty one unless `force`. With
// `force`, only the listed artifacts are removed.
void prepare_output_dir(const fs::path& dir, bool force, std::initializer_list<const char*> artifacts) {
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) throw ConfigError(dir.string() + " is not empty; pass --force to overwrite");
        for (const char* name : artifacts) {
            fs::remove(dir / name);
            fs::remove(dir / (std::string(name) + ".tmp"));
        }
    }
    fs::create_directories(dir);
}

void check_feature_dim(const Encoder& enc, const CorpusFiles& corpora) {
    for (const Corpus* c : {&corpora.source, &corpora.target}) {
        if (c->collection.feature_dim() != enc.input_dim()) {
            throw ConfigError("checkpoint encoder expects input dim " + std::to_string(enc.input_dim()) + " but " +
                              to_string(c->domain()) + " corpus has dim " +
                              std::to_string(c->collection.feature_dim()));
        }
    }
}

void print_summary(const EvalReport& r, std::ostream& out) {
    const auto row = [&](const std::string& name, const std::string& value) {
        out << std::left << std::setw(28) << name << (value.empty() ? "-" : value) << '\n';
    };
    row("step", std::to_string(r.step));
    row("mode", r.mode);
    row("adv_loss", r.adv_loss.value_or(""));
    row("lambda", format_number(r.lambda));
    row("ndcg@" + std::to_string(r.ndcg_k) + " source", format_number(r.ndcg_source));
    row("ndcg@" + std::to_string(r.ndcg_k) + " target", format_number(r.ndcg_target));
    row("knn_source_pct", format_number(r.knn_source_pct));
    row("global_domain_acc", format_number(r.global_domain_acc));
    row("local_domain_acc", format_number(r.local_domain_acc));
    row("local_domain_acc_reserved", format_number(r.local_domain_acc_reserved));
    row("ranking_loss", format_number(r.ranking_loss));
    row("adversarial_loss", format_number(r.adversarial_loss));
    row("classifier_loss", format_number(r.classifier_loss));
}

TrainHooks make_hooks(const Evaluator& evaluator, const TrainConfig& cfg, std::ofstream& metrics,
                      const fs::path& checkpoint_path) {
    TrainHooks hooks;
    hooks.evaluate = [&evaluator, &cfg](const Encoder& enc, EvalReport& report) {
        evaluator.evaluate(enc, report, cfg.mode == TrainMode::Modir);
    };
    hooks.on_eval = [&metrics, checkpoint_path](const EvalReport& report, const Checkpoint& ckpt) {
        metrics << to_json(report).dump() << '\n';
        metrics.flush();
        if (!metrics) throw std::runtime_error("failed to append to metrics file");
        write_checkpoint(ckpt, checkpoint_path);
    };
    return hooks;
}

}  // namespace

CorpusFiles load_corpora(const fs::path& dir) {
    CorpusFiles c{read_corpus(dir / kSourceCorpusFile), read_corpus(dir / kTargetCorpusFile)};
    if (c.source.domain() != Domain::Source) throw ConfigError((dir / kSourceCorpusFile).string() + " is not a source corpus");
    if (c.target.domain() != Domain::Target) throw ConfigError((dir / kTargetCorpusFile).string() + " is not a target corpus");
    return c;
}

std::string format_number(std::optional<double> v) {
    if (!v) return "";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), *v);
    return std::string(buf, res.ptr);
}

std::vector<EvalReport> read_metrics(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open metrics file " + path.string());
    std::vector<EvalReport> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(eval_report_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("metrics file " + path.string() + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_generate(const CommandOptions& opts, std::ostream& out) {
    RunConfig cfg = resolve_config(opts);
    if (opts.seed) cfg.data.seed = *opts.seed;
    cfg.data.validate();
    const fs::path& dir = require_out(opts, "generate");
    prepare_output_dir(dir, opts.force, {kSourceCorpusFile, kTargetCorpusFile, kConfigFile});
    write_text(dir / kConfigFile, to_json(cfg).dump(2) + "\n");
    const auto data = generate(cfg.data);
    write_corpus(data.source, dir / kSourceCorpusFile);
    write_corpus(data.target, dir / kTargetCorpusFile);
    out << "wrote " << (dir / kSourceCorpusFile).string() << " (" << data.source.queries().size() << " queries, "
        << data.source.documents().size() << " documents)\n"
        << "wrote " << (dir / kTargetCorpusFile).string() << " (" << data.target.queries().size() << " queries, "
        << data.target.documents().size() << " documents)\n";
}

EvalReport cmd_train(const CommandOptions& opts, const fs::path& corpus_dir, std::ostream& out) {
    RunConfig cfg = resolve_config(opts);
    if (opts.seed) cfg.train.seed = *opts.seed;
    cfg.train.validate();
    const fs::path& dir = require_out(opts, "train");
    const CorpusFiles corpora = load_corpora(corpus_dir);

    prepare_output_dir(dir, opts.force,
                       {kConfigFile, kCorporaFile, kMetricsFile, kCheckpointFile, kEvalFile, kProjectionFile,
                        kDomainAccCsv, kInvarianceCsv});
    write_text(dir / kConfigFile, to_json(cfg).dump(2) + "\n");
    nlohmann::ordered_json refs;
    refs["source"] = (corpus_dir / kSourceCorpusFile).generic_string();
    refs["target"] = (corpus_dir / kTargetCorpusFile).generic_string();
    refs["data_fingerprint"] = data_fingerprint(corpora.source, corpora.target.collection);
    write_text(dir / kCorporaFile, refs.dump(2) + "\n");

    std::ofstream metrics(dir / kMetricsFile, std::ios::binary | std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open metrics file in " + dir.string());
    const Evaluator evaluator(corpora.source, corpora.target, cfg.eval, cfg.train.seed);
    const auto hooks = make_hooks(evaluator, cfg.train, metrics, dir / kCheckpointFile);
    // The trainer receives only the unlabeled target collection.
    const auto result = train(cfg.train, corpora.source, corpora.target.collection, hooks);
    write_checkpoint(result.final_checkpoint, dir / kCheckpointFile);
    const EvalReport& last = result.reports.back();
    print_summary(last, out);
    return last;
}

EvalReport cmd_resume(const fs::path& run_dir, const fs::path& corpus_dir, std::ostream& out) {
    const RunConfig cfg = load_run_config(run_dir / kConfigFile);
    const Checkpoint ckpt = read_checkpoint(run_dir / kCheckpointFile);
    const CorpusFiles corpora = load_corpora(corpus_dir);

    // Drop reports written after the checkpoint.
    std::vector<EvalReport> kept;
    for (auto& r : read_metrics(run_dir / kMetricsFile)) {
        if (r.step <= ckpt.step) kept.push_back(std::move(r));
    }
    {
        std::ofstream rewrite(run_dir / kMetricsFile, std::ios::binary | std::ios::trunc);
        for (const auto& r : kept) rewrite << to_json(r).dump() << '\n';
    }
    std::ofstream metrics(run_dir / kMetricsFile, std::ios::binary | std::ios::app);
    const Evaluator evaluator(corpora.source, corpora.target, cfg.eval, cfg.train.seed);
    const auto hooks = make_hooks(evaluator, cfg.train, metrics, run_dir / kCheckpointFile);
    const auto result = resume(ckpt, cfg.train, corpora.source, corpora.target.collection, hooks);
    write_checkpoint(result.final_checkpoint, run_dir / kCheckpointFile);
    const EvalReport& last = result.reports.empty() ? kept.back() : result.reports.back();
    if (result.reports.empty() && kept.empty()) throw ConfigError("resume: nothing to report");
    print_summary(last, out);
    return last;
}

EvalReport cmd_eval(const CommandOptions& opts, const fs::path& checkpoint, const fs::path& corpus_dir,
                    std::ostream& out) {
    const RunConfig cfg = resolve_config(opts);
    const Checkpoint ckpt = read_checkpoint(checkpoint);
    const CorpusFiles corpora = load_corpora(corpus_dir);
    check_feature_dim(ckpt.encoder, corpora);

    EvalReport report;
    report.step = ckpt.step;
    report.mode = to_string(ckpt.config.mode);
    if (ckpt.config.mode == TrainMode::Modir) report.adv_loss = to_string(ckpt.config.adv_loss);
    const Evaluator evaluator(corpora.source, corpora.target, cfg.eval, opts.seed.value_or(ckpt.config.seed));
    evaluator.evaluate(ckpt.encoder, report, true);

    const std::string line = to_json(report).dump();
    out << line << '\n';
    if (opts.out) {
        fs::create_directories(*opts.out);
        write_text(*opts.out / kEvalFile, line + "\n");
    }
    return report;
}

void cmd_project(const CommandOptions& opts, const fs::path& checkpoint, const fs::path& corpus_dir,
                 std::ostream& out) {
    const Checkpoint ckpt = read_checkpoint(checkpoint);
    const CorpusFiles corpora = load_corpora(corpus_dir);
    check_feature_dim(ckpt.encoder, corpora);

    struct Row {
        const std::string* id;
        const char* role;
        Domain domain;
    };
    std::vector<Row> rows;
    std::vector<Vec> points;
    for (const Corpus* c : {&corpora.source, &corpora.target}) {
        for (const auto& q : c->queries()) {
            rows.push_back({&q.id, "query", c->domain()});
            points.push_back(ckpt.encoder.embed(q.features));
        }
        for (const auto& d : c->documents()) {
            rows.push_back({&d.id, "doc", c->domain()});
            points.push_back(ckpt.encoder.embed(d.features));
        }
    }
    const Projection proj = pca_2d(points);

    std::ostringstream csv;
    csv << "id,role,domain,pc1,pc2\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv << *rows[i].id << ',' << rows[i].role << ',' << to_string(rows[i].domain) << ','
            << format_number(proj.coords[i][0]) << ',' << format_number(proj.coords[i][1]) << '\n';
    }
    const fs::path dir = opts.out.value_or(".");
    fs::create_directories(dir);
    write_text(dir / kProjectionFile, csv.str());
    out << "wrote " << (dir / kProjectionFile).string() << " (" << rows.size() << " points, variance pc1 "
        << format_number(proj.variance[0]) << ", pc2 " << format_number(proj.variance[1]) << ")\n";
}

void cmd_report(const CommandOptions& opts, const fs::path& run_dir, std::ostream& out) {
    auto reports = read_metrics(run_dir / kMetricsFile);
    if (reports.empty()) throw ConfigError("report: metrics file in " + run_dir.string() + " is empty");
    std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
        return a.step < b.step;
    });

    std::ostringstream acc, inv;
    acc << "step,global,local\n";
    inv << "step,knn_source_pct,target_ndcg,source_ndcg\n";
    for (const auto& r : reports) {
        acc << r.step << ',' << format_number(r.global_domain_acc) << ',' << format_number(r.local_domain_acc) << '\n';
        inv << r.step << ',' << format_number(r.knn_source_pct) << ',' << format_number(r.ndcg_target) << ','
            << format_number(r.ndcg_source) << '\n';
    }
    const fs::path dir = opts.out.value_or(run_dir);
    fs::create_directories(dir);
    write_text(dir / kDomainAccCsv, acc.str());
    write_text(dir / kInvarianceCsv, inv.str());
    out << "wrote " << (dir / kDomainAccCsv).string() << " and " << (dir / kInvarianceCsv).string() << " ("
        << reports.size() << " rows)\n";
}

void cmd_defaults(std::ostream& out) { out << to_json(RunConfig{}).dump(2) << '\n'; }

}  // namespace modir
