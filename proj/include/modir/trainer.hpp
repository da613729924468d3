#pragma once

// Joint optimization loop: per step, update the domain classifier on the
// momentum queue, then update the encoder on ranking + lambda * adversarial
// loss with the classifier frozen.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "modir/encoder.hpp"
#include "modir/metrics.hpp"
#include "modir/momentum.hpp"
#include "modir/objectives.hpp"
#include "modir/optim.hpp"
#include "modir/retrieval.hpp"
#include "modir/synthdata.hpp"

namespace modir {

enum class TrainMode { Baseline, Modir };
enum class NegativeMode { MinedHard, InBatchRandom };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);
std::string to_string(NegativeMode m);
NegativeMode negative_mode_from_string(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::Modir;
    AdvLossKind adv_loss = AdvLossKind::Confusion;
    int momentum_n = 8;
    int batch_size = 8;  // source q-d pairs per step: half positive, half negative
    int negatives_per_query = 4;
    NegativeMode negative_mode = NegativeMode::MinedHard;
    int mining_refresh_steps = 100;
    // Hard negatives kept per query at each refresh; every step samples
    // negatives_per_query of them.
    int mining_depth = 32;
    double lambda0 = 0.5;
    // 0 selects total_steps / 4.
    double half_life_steps = 0.0;
    int warmup_steps = 500;
    OptimizerConfig encoder_optimizer{OptimizerKind::Sgd, 0.05};
    double classifier_lr = 0.1;
    int classifier_passes = 5;
    bool classifier_bias = true;
    std::vector<int> encoder_dims{32, 64, 32};
    Activation activation = Activation::Tanh;
    long long total_steps = 2000;
    long long eval_every = 50;
    // Items whose id hash is divisible by this are never sampled by the
    // trainer; they form the reserved Local Domain-Acc batch. 0 disables.
    int reserve_modulus = 10;
    std::uint64_t seed = 1;

    double effective_half_life() const;
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Hash of the canonical JSON form of the configuration.
std::uint64_t config_hash(const TrainConfig& c);

struct RunningSums {
    double ranking = 0.0;
    long long ranking_steps = 0;
    double adversarial = 0.0;
    long long adversarial_steps = 0;
    double classifier = 0.0;
    long long classifier_steps = 0;
    long long local_correct = 0;
    long long local_total = 0;

    friend bool operator==(const RunningSums&, const RunningSums&) = default;
};

struct Checkpoint {
    long long step = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t data_fingerprint = 0;
    TrainConfig config;
    Encoder encoder;
    DomainClassifier classifier;
    nlohmann::json encoder_optimizer;
    nlohmann::json classifier_optimizer;
    std::vector<Rng::Snapshot> rngs;
    MomentumQueue queue;
    NegativeMap negatives;
    RunningSums sums;

    nlohmann::json to_json() const;
    static Checkpoint from_json(const nlohmann::json& j);
};

// Write-temp-then-rename.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

enum class TrainPhase { BeforeClassifierStep, AfterClassifierStep, BeforeEncoderStep, AfterEncoderStep };

class Trainer;

struct TrainHooks {
    // Fills evaluation fields the trainer cannot compute itself.
    std::function<void(const Encoder&, EvalReport&)> evaluate;
    // Called after every report with the matching checkpoint.
    std::function<void(const EvalReport&, const Checkpoint&)> on_eval;
    // Instrumentation for contract tests.
    std::function<void(TrainPhase, const Trainer&)> on_phase;
};

struct TrainResult {
    Checkpoint final_checkpoint;
    std::vector<EvalReport> reports;
};

class Trainer {
public:
    // The target side is a Collection: relevance labels of the target domain
    // cannot be handed to the trainer.
    Trainer(TrainConfig cfg, const Corpus& source, const Collection& target);

    static Trainer from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg, const Corpus& source,
                                   const Collection& target);

    // Runs until `stop_at` (exclusive upper bound on completed steps; -1 means
    // total_steps). Returns the reports emitted during this call.
    TrainResult run(long long stop_at = -1, const TrainHooks& hooks = {});

    Checkpoint checkpoint() const;

    long long step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }
    const Encoder& encoder() const { return encoder_; }
    const DomainClassifier& classifier() const { return classifier_; }
    const MomentumQueue& queue() const { return queue_; }
    const NegativeMap& negatives() const { return negatives_; }
    double lambda_at_step(long long step) const;

    // Balanced reserved batch for Local Domain-Acc, empty when disabled.
    std::vector<LabeledEmbedding> reserved_batch() const;

private:
    struct Pair {
        std::size_t query;
        std::size_t doc;
    };

    void setup();
    void refresh_negatives();
    void train_step(const TrainHooks& hooks);
    EvalReport make_report();

    TrainConfig cfg_;
    const Corpus& source_;
    const Collection& target_;

    Encoder encoder_;
    DomainClassifier classifier_;
    Optimizer encoder_opt_;
    Optimizer classifier_opt_;
    MomentumQueue queue_;
    Rng data_rng_{0};
    Rng mining_rng_{0};
    Rng target_rng_{0};
    Rng classifier_rng_{0};
    NegativeMap negatives_;
    RunningSums sums_;
    long long step_ = 0;

    // Derived lookups.
    std::vector<std::vector<std::size_t>> relevant_;  // per source query
    std::vector<std::vector<std::size_t>> negative_idx_;
    std::vector<std::size_t> train_queries_;
    std::vector<std::size_t> train_target_queries_;
    std::vector<std::size_t> train_target_docs_;
    std::set<std::string> reserved_source_docs_;
    std::vector<std::size_t> reserved_source_queries_idx_;
    std::vector<std::size_t> reserved_source_docs_idx_;
    std::vector<std::size_t> reserved_target_queries_idx_;
    std::vector<std::size_t> reserved_target_docs_idx_;
    std::uint64_t data_fingerprint_ = 0;
};

std::uint64_t data_fingerprint(const Corpus& source, const Collection& target);

TrainResult train(const TrainConfig& cfg, const Corpus& source, const Collection& target,
                  const TrainHooks& hooks = {});

// Refuses (ConfigError) when the checkpoint was produced under another
// configuration or other data.
TrainResult resume(const Checkpoint& ckpt, const TrainConfig& cfg, const Corpus& source, const Collection& target,
                   const TrainHooks& hooks = {}, long long stop_at = -1);

}  // namespace modir
