#pragma once

// Retrieval quality and domain-invariance diagnostics.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "modir/encoder.hpp"
#include "modir/momentum.hpp"
#include "modir/retrieval.hpp"
#include "modir/synthdata.hpp"

namespace modir {

// Binary-gain nDCG@k. std::nullopt when `relevant` is empty (query skipped).
std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                                std::size_t k);

struct NdcgSummary {
    double mean = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
};

// Mean nDCG@k of in-domain retrieval for every query of `corpus`.
NdcgSummary mean_ndcg(const EmbeddingIndex& index, const std::vector<Vec>& query_embs, const Corpus& corpus,
                      std::size_t k);

// Mean over queries of the percentage of `domain` documents among the top-K.
double knn_domain_pct(const EmbeddingIndex& joint, const std::vector<Vec>& query_embs, Domain domain,
                      std::size_t K = 100, bool require_both_domains = true);
double knn_source_pct(const EmbeddingIndex& joint, const std::vector<Vec>& query_embs, std::size_t K = 100,
                      bool require_both_domains = true);
double knn_source_pct(const Encoder& enc, const Collection& source, const Collection& target,
                      std::size_t K = 100);

struct LabeledEmbedding {
    Vec vector;
    Domain domain = Domain::Source;
};

struct ProbeConfig {
    double train_fraction = 0.8;
    int max_sweeps = 500;
    double tolerance = 1e-5;
    double lr = 0.5;  // scaled by 1 / mean squared embedding norm
    bool use_bias = true;
    // 0 means use every available embedding.
    std::size_t max_per_domain = 0;
};

void to_json(nlohmann::json& j, const ProbeConfig& c);
void from_json(const nlohmann::json& j, ProbeConfig& c);

struct ProbeResult {
    double accuracy_pct = 0.0;  // held-out
    double train_loss = 0.0;
    int sweeps = 0;
    std::size_t train_size = 0;
    std::size_t heldout_size = 0;
    DomainClassifier probe;
};

// Trains a fresh linear probe on a balanced train split until the per-sweep
// loss improvement drops below tolerance and reports held-out accuracy.
ProbeResult global_domain_acc(const std::vector<Vec>& source, const std::vector<Vec>& target,
                              const ProbeConfig& cfg, Rng& rng);
ProbeResult global_domain_acc(const Encoder& enc, const Collection& source, const Collection& target,
                              const ProbeConfig& cfg, Rng& rng);

// Accuracy (percent) of the argmax domain prediction on the given batch.
double local_domain_acc(const DomainClassifier& clf, const std::vector<LabeledEmbedding>& batch);

struct EvalReport {
    long long step = 0;
    std::string mode;
    std::optional<std::string> adv_loss;
    std::optional<double> lambda;
    std::optional<double> ndcg_source;
    std::optional<double> ndcg_target;
    std::size_t ndcg_k = 10;
    std::optional<double> knn_source_pct;
    std::optional<double> global_domain_acc;
    std::optional<double> local_domain_acc;
    std::optional<double> local_domain_acc_reserved;
    std::optional<double> ranking_loss;
    std::optional<double> adversarial_loss;
    std::optional<double> classifier_loss;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

struct EvalConfig {
    std::size_t ndcg_k = 10;
    std::size_t knn_k = 100;
    ProbeConfig probe;
    bool global_probe = true;
};

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

// Owns the labeled view of both domains. This is the only component that
// reads target relevance judgments.
class Evaluator {
public:
    Evaluator(const Corpus& source, const Corpus& target, EvalConfig cfg, std::uint64_t seed);

    // Fills nDCG and KNN-Source% of `report` for `enc`, plus Global
    // Domain-Acc when `domain_probe` is set.
    void evaluate(const Encoder& enc, EvalReport& report, bool domain_probe) const;

    const EvalConfig& config() const { return cfg_; }

private:
    const Corpus& source_;
    const Corpus& target_;
    EvalConfig cfg_;
    std::uint64_t seed_;
};

}  // namespace modir
