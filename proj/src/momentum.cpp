#include "modir/momentum.hpp"

#include <bit>

namespace modir {

std::string to_string(EmbeddingRole r) {
    switch (r) {
        case EmbeddingRole::Query: return "query";
        case EmbeddingRole::PositiveDoc: return "positive_doc";
        case EmbeddingRole::NegativeDoc: return "negative_doc";
        case EmbeddingRole::Doc: return "doc";
    }
    return "?";
}

EmbeddingRole embedding_role_from_string(const std::string& s) {
    if (s == "query") return EmbeddingRole::Query;
    if (s == "positive_doc") return EmbeddingRole::PositiveDoc;
    if (s == "negative_doc") return EmbeddingRole::NegativeDoc;
    if (s == "doc") return EmbeddingRole::Doc;
    throw ConfigError("unknown embedding role '" + s + "'");
}

MomentumQueue::MomentumQueue(std::size_t momentum_n, std::size_t per_batch_contribution)
    : momentum_n_(momentum_n), per_batch_(per_batch_contribution) {
    if (momentum_n_ < 1) throw std::invalid_argument("MomentumQueue: momentum_n must be >= 1");
    if (per_batch_ < 2 || per_batch_ % 2 != 0) {
        throw std::invalid_argument("MomentumQueue: per-batch contribution must be even and positive");
    }
}

void MomentumQueue::push_batch(std::vector<DetachedEmbedding> source_embs,
                               std::vector<DetachedEmbedding> target_embs) {
    if (source_embs.size() != target_embs.size()) {
        throw std::invalid_argument("push_batch: source/target counts differ (" +
                                    std::to_string(source_embs.size()) + " vs " +
                                    std::to_string(target_embs.size()) + ")");
    }
    if (source_embs.size() + target_embs.size() != per_batch_) {
        throw std::invalid_argument("push_batch: batch contributes " +
                                    std::to_string(source_embs.size() + target_embs.size()) +
                                    " entries, queue expects " + std::to_string(per_batch_));
    }
    std::size_t pos = 0, neg = 0;
    for (const auto& e : source_embs) {
        if (e.domain != Domain::Source) throw std::invalid_argument("push_batch: target entry in source list");
        if (e.role == EmbeddingRole::PositiveDoc) ++pos;
        if (e.role == EmbeddingRole::NegativeDoc) ++neg;
    }
    for (const auto& e : target_embs) {
        if (e.domain != Domain::Target) throw std::invalid_argument("push_batch: source entry in target list");
    }
    if (pos != neg) {
        throw std::invalid_argument("push_batch: source positive/negative documents unbalanced (" +
                                    std::to_string(pos) + " vs " + std::to_string(neg) + ")");
    }
    std::vector<DetachedEmbedding> batch = std::move(source_embs);
    batch.insert(batch.end(), std::make_move_iterator(target_embs.begin()),
                 std::make_move_iterator(target_embs.end()));
    batches_.push_back(std::move(batch));
    while (batches_.size() > momentum_n_) batches_.pop_front();
}

std::size_t MomentumQueue::size() const {
    std::size_t n = 0;
    for (const auto& b : batches_) n += b.size();
    return n;
}

std::vector<const DetachedEmbedding*> MomentumQueue::entries() const {
    std::vector<const DetachedEmbedding*> out;
    out.reserve(size());
    for (const auto& b : batches_) {
        for (const auto& e : b) out.push_back(&e);
    }
    return out;
}

const DetachedEmbedding& MomentumQueue::at(std::size_t i) const {
    for (const auto& b : batches_) {
        if (i < b.size()) return b[i];
        i -= b.size();
    }
    throw std::out_of_range("MomentumQueue::at");
}

nlohmann::json MomentumQueue::to_json() const {
    nlohmann::json batches = nlohmann::json::array();
    for (const auto& b : batches_) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : b) {
            arr.push_back({{"v", e.vector.values()},
                           {"domain", to_string(e.domain)},
                           {"role", to_string(e.role)},
                           {"born", e.born_step}});
        }
        batches.push_back(std::move(arr));
    }
    return {{"momentum_n", momentum_n_}, {"per_batch", per_batch_}, {"batches", batches}};
}

MomentumQueue MomentumQueue::from_json(const nlohmann::json& j) {
    MomentumQueue q(j.at("momentum_n").get<std::size_t>(), j.at("per_batch").get<std::size_t>());
    for (const auto& bj : j.at("batches")) {
        std::vector<DetachedEmbedding> batch;
        for (const auto& ej : bj) {
            batch.push_back({Vec(ej.at("v").get<std::vector<double>>()),
                             domain_from_string(ej.at("domain").get<std::string>()),
                             embedding_role_from_string(ej.at("role").get<std::string>()),
                             ej.at("born").get<long long>()});
        }
        q.batches_.push_back(std::move(batch));
    }
    return q;
}

// ---------------------------------------------------------------------------

DomainClassifier::DomainClassifier(std::size_t embedding_dim, bool use_bias)
    : weight_(2, embedding_dim), bias_(2), use_bias_(use_bias) {}

std::array<double, 2> DomainClassifier::logits(std::span<const double> e) const {
    if (e.size() != weight_.cols()) {
        throw std::invalid_argument("classify: embedding dim " + std::to_string(e.size()) + " != " +
                                    std::to_string(weight_.cols()));
    }
    std::array<double, 2> l{dot(weight_.row(0), e), dot(weight_.row(1), e)};
    if (use_bias_) {
        l[0] += bias_[0];
        l[1] += bias_[1];
    }
    return l;
}

double DomainClassifier::classify(std::span<const double> e) const { return softmax2(logits(e))[0]; }

Domain DomainClassifier::predict(std::span<const double> e) const {
    const auto l = logits(e);
    return l[0] > l[1] ? Domain::Source : Domain::Target;
}

Vec DomainClassifier::input_grad(const std::array<double, 2>& dlogits) const {
    Vec g(weight_.cols());
    axpy(dlogits[0], weight_.row(0), g.span());
    axpy(dlogits[1], weight_.row(1), g.span());
    return g;
}

std::vector<std::span<double>> DomainClassifier::parameter_blocks() {
    std::vector<std::span<double>> blocks{weight_.span()};
    if (use_bias_) blocks.push_back(bias_.span());
    return blocks;
}

std::uint64_t DomainClassifier::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        h ^= std::bit_cast<std::uint64_t>(v);
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    };
    for (double v : weight_.values()) mix(v);
    for (double v : bias_) mix(v);
    return h;
}

nlohmann::json DomainClassifier::to_json() const {
    return {{"dim", weight_.cols()}, {"use_bias", use_bias_}, {"weight", weight_.values()}, {"bias", bias_.values()}};
}

DomainClassifier DomainClassifier::from_json(const nlohmann::json& j) {
    DomainClassifier c(j.at("dim").get<std::size_t>(), j.at("use_bias").get<bool>());
    c.weight_ = Mat(2, c.weight_.cols(), j.at("weight").get<std::vector<double>>());
    c.bias_ = Vec(j.at("bias").get<std::vector<double>>());
    if (c.bias_.dim() != 2) throw ConfigError("classifier blob: bias must have 2 entries");
    return c;
}

// ---------------------------------------------------------------------------

double classifier_sgd_update(DomainClassifier& clf, std::span<const double> e, Domain domain, Optimizer& opt) {
    const double p = clf.classify(e);
    const auto d = discrimination_loss(p, domain);
    Mat gw(2, clf.embedding_dim());
    axpy(d.dlogits[0], e, gw.row(0));
    axpy(d.dlogits[1], e, gw.row(1));
    Vec gb{d.dlogits[0], d.dlogits[1]};
    std::vector<std::span<const double>> grads{gw.span()};
    if (clf.use_bias()) grads.push_back(gb.span());
    opt.step(clf.parameter_blocks(), grads);
    return d.loss;
}

ClassifierStepResult train_classifier_step(DomainClassifier& clf, const MomentumQueue& queue,
                                           Optimizer& opt, int passes, Rng& rng) {
    if (queue.empty()) throw std::invalid_argument("train_classifier_step: queue is empty");
    if (passes < 0) throw std::invalid_argument("train_classifier_step: passes must be >= 0");
    const auto entries = queue.entries();
    ClassifierStepResult out;
    out.visits.assign(entries.size(), 0);

    if (passes == 0) {
        double loss = 0.0;
        std::size_t correct = 0;
        for (const auto* e : entries) {
            loss += discrimination_loss(clf.classify(e->vector), e->domain).loss;
            correct += clf.predict(e->vector) == e->domain;
        }
        out.mean_loss = loss / static_cast<double>(entries.size());
        out.accuracy = static_cast<double>(correct) / static_cast<double>(entries.size());
        return out;
    }

    std::vector<std::size_t> order(entries.size());
    for (int pass = 0; pass < passes; ++pass) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        double loss = 0.0;
        std::size_t correct = 0;
        for (std::size_t i : order) {
            const auto* e = entries[i];
            correct += clf.predict(e->vector) == e->domain;
            loss += classifier_sgd_update(clf, e->vector, e->domain, opt);
            ++out.visits[i];
        }
        out.mean_loss = loss / static_cast<double>(entries.size());
        out.accuracy = static_cast<double>(correct) / static_cast<double>(entries.size());
    }
    return out;
}

}  // namespace modir
