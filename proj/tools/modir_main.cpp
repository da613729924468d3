#include <iostream>
#include <vector>

#include <CLI11.hpp>

#include "modir/commands.hpp"

int main(int argc, char** argv) {
    using namespace modir;
    CLI::App app{"modir: momentum-adversarial domain-invariant dense retrieval on synthetic domains"};
    app.require_subcommand(1);

    CommandOptions opts;
    std::string config, out;
    std::uint64_t seed = 0;
    std::vector<CLI::Option*> seed_options;
    auto add_common = [&](CLI::App* cmd, bool with_seed) {
        cmd->add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "Output directory");
        if (with_seed) seed_options.push_back(cmd->add_option("--seed", seed, "Seed overriding the configuration"));
        cmd->add_flag("--force", opts.force, "Overwrite an existing output directory");
    };

    std::string corpus_dir, checkpoint, run_dir;
    auto* generate = app.add_subcommand("generate", "Write source and target corpora");
    add_common(generate, true);
    auto* train = app.add_subcommand("train", "Train an encoder into a run directory");
    add_common(train, true);
    train->add_option("corpora", corpus_dir, "Directory with source.jsonl and target.jsonl")->required();
    auto* resume = app.add_subcommand("resume", "Continue a run from its last checkpoint");
    resume->add_option("run_dir", run_dir, "Run directory")->required();
    resume->add_option("corpora", corpus_dir, "Corpus directory")->required();
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval, true);
    eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("corpora", corpus_dir, "Corpus directory")->required();
    auto* project = app.add_subcommand("project", "Dump 2-D PCA coordinates of all embeddings");
    add_common(project, false);
    project->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
    project->add_option("corpora", corpus_dir, "Corpus directory")->required();
    auto* report = app.add_subcommand("report", "Write summary CSVs for a run directory");
    add_common(report, false);
    report->add_option("run_dir", run_dir, "Run directory")->required();
    app.add_subcommand("defaults", "Print the default configuration");

    CLI11_PARSE(app, argc, argv);
    auto* cmd = app.get_subcommands().front();
    if (!config.empty()) opts.config = config;
    if (!out.empty()) opts.out = out;
    for (const auto* o : seed_options) {
        if (o->count() > 0) opts.seed = seed;
    }

    try {
        const std::string name = cmd->get_name();
        if (name == "generate") cmd_generate(opts, std::cout);
        else if (name == "train") cmd_train(opts, corpus_dir, std::cout);
        else if (name == "resume") cmd_resume(run_dir, corpus_dir, std::cout);
        else if (name == "eval") cmd_eval(opts, checkpoint, corpus_dir, std::cout);
        else if (name == "project") cmd_project(opts, checkpoint, corpus_dir, std::cout);
        else if (name == "report") cmd_report(opts, run_dir, std::cout);
        else if (name == "defaults") cmd_defaults(std::cout);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
