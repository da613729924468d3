#pragma once

// Momentum queue of stop-gradient embeddings and the linear domain
// classifier trained on it.

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modir/numerics.hpp"
#include "modir/objectives.hpp"
#include "modir/optim.hpp"
#include "modir/synthdata.hpp"

namespace modir {

enum class EmbeddingRole { Query, PositiveDoc, NegativeDoc, Doc };

std::string to_string(EmbeddingRole r);
EmbeddingRole embedding_role_from_string(const std::string& s);

// A frozen copy of an encoder output. Holds no reference to the encoder, so
// no gradient can reach the encoder parameters through it.
struct DetachedEmbedding {
    Vec vector;
    Domain domain = Domain::Source;
    EmbeddingRole role = EmbeddingRole::Query;
    long long born_step = 0;

    friend bool operator==(const DetachedEmbedding&, const DetachedEmbedding&) = default;
};

// FIFO of the embeddings contributed by the n most recent batches.
class MomentumQueue {
public:
    MomentumQueue() = default;
    MomentumQueue(std::size_t momentum_n, std::size_t per_batch_contribution);

    // Source and target contributions must be equal in size, and source
    // positive documents must balance source negative documents.
    void push_batch(std::vector<DetachedEmbedding> source_embs, std::vector<DetachedEmbedding> target_embs);

    std::size_t size() const;
    bool empty() const { return size() == 0; }
    std::size_t capacity() const { return momentum_n_ * per_batch_; }
    std::size_t momentum_n() const { return momentum_n_; }
    std::size_t batches_held() const { return batches_.size(); }

    // Entries in insertion order (oldest first).
    std::vector<const DetachedEmbedding*> entries() const;
    const DetachedEmbedding& at(std::size_t i) const;

    nlohmann::json to_json() const;
    static MomentumQueue from_json(const nlohmann::json& j);

private:
    std::size_t momentum_n_ = 1;
    std::size_t per_batch_ = 0;
    std::deque<std::vector<DetachedEmbedding>> batches_;
};

// f(e) = softmax(W_f e [+ b]); index 0 is "source".
class DomainClassifier {
public:
    DomainClassifier() = default;
    explicit DomainClassifier(std::size_t embedding_dim, bool use_bias = false);

    std::array<double, 2> logits(std::span<const double> e) const;
    double classify(std::span<const double> e) const;
    Domain predict(std::span<const double> e) const;

    // Gradient of a loss with respect to e given the logit gradient.
    Vec input_grad(const std::array<double, 2>& dlogits) const;

    Mat& weight() { return weight_; }
    const Mat& weight() const { return weight_; }
    Vec& bias() { return bias_; }
    const Vec& bias() const { return bias_; }
    bool use_bias() const { return use_bias_; }
    std::size_t embedding_dim() const { return weight_.cols(); }

    std::vector<std::span<double>> parameter_blocks();
    std::uint64_t checksum() const;

    nlohmann::json to_json() const;
    static DomainClassifier from_json(const nlohmann::json& j);

    friend bool operator==(const DomainClassifier&, const DomainClassifier&) = default;

private:
    Mat weight_;
    Vec bias_;
    bool use_bias_ = false;
};

struct ClassifierStepResult {
    double mean_loss = 0.0;
    double accuracy = 0.0;  // fraction in [0,1] over the final sweep
    std::vector<std::size_t> visits;  // per queue entry
};

// `passes` shuffled sweeps of per-entry gradient steps on the classifier
// only. Returns statistics of the final sweep (or of the current classifier
// when passes == 0).
ClassifierStepResult train_classifier_step(DomainClassifier& clf, const MomentumQueue& queue,
                                           Optimizer& opt, int passes, Rng& rng);

// One gradient step of the discrimination loss on a single embedding.
double classifier_sgd_update(DomainClassifier& clf, std::span<const double> e, Domain domain, Optimizer& opt);

}  // namespace modir
