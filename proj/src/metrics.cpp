#include "modir/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace modir {

std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                                std::size_t k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    if (relevant.empty()) return std::nullopt;
    double dcg = 0.0;
    const std::size_t depth = std::min(k, ranking.size());
    for (std::size_t i = 0; i < depth; ++i) {
        if (relevant.count(ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, relevant.size());
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

NdcgSummary mean_ndcg(const EmbeddingIndex& index, const std::vector<Vec>& query_embs, const Corpus& corpus,
                      std::size_t k) {
    const auto& queries = corpus.queries();
    if (query_embs.size() != queries.size()) throw std::invalid_argument("mean_ndcg: query count mismatch");
    static const std::set<std::string> kNone;
    NdcgSummary out;
    double total = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto it = corpus.qrels.find(queries[i].id);
        const auto& relevant = it == corpus.qrels.end() ? kNone : it->second;
        if (relevant.empty()) {
            ++out.skipped;
            continue;
        }
        std::vector<std::string> ranking;
        for (const auto& hit : top_k(index, query_embs[i], k)) ranking.push_back(hit.doc_id);
        total += *ndcg_at_k(ranking, relevant, k);
        ++out.evaluated;
    }
    out.mean = out.evaluated ? total / static_cast<double>(out.evaluated) : 0.0;
    return out;
}

double knn_domain_pct(const EmbeddingIndex& joint, const std::vector<Vec>& query_embs, Domain domain,
                      std::size_t K, bool require_both_domains) {
    if (require_both_domains && (!joint.contains_domain(Domain::Source) || !joint.contains_domain(Domain::Target))) {
        throw std::invalid_argument("knn_source_pct: joint index must contain both domains");
    }
    if (query_embs.empty()) throw std::invalid_argument("knn_source_pct: no queries");
    double total = 0.0;
    for (const auto& q : query_embs) {
        const auto hits = top_k(joint, q, K);
        std::size_t count = 0;
        for (const auto& h : hits) count += h.domain == domain;
        total += hits.empty() ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(hits.size());
    }
    return total / static_cast<double>(query_embs.size());
}

double knn_source_pct(const EmbeddingIndex& joint, const std::vector<Vec>& query_embs, std::size_t K,
                      bool require_both_domains) {
    return knn_domain_pct(joint, query_embs, Domain::Source, K, require_both_domains);
}

double knn_source_pct(const Encoder& enc, const Collection& source, const Collection& target, std::size_t K) {
    const auto joint = build_index(enc, {&source, &target});
    std::vector<Vec> q;
    for (const auto& r : target.queries) q.push_back(enc.embed(r.features));
    return knn_source_pct(joint, q, K);
}

// ---------------------------------------------------------------------------
// Global probe

void to_json(nlohmann::json& j, const ProbeConfig& c) {
    j = nlohmann::json{{"train_fraction", c.train_fraction}, {"max_sweeps", c.max_sweeps},
                       {"tolerance", c.tolerance},           {"lr", c.lr},
                       {"use_bias", c.use_bias},             {"max_per_domain", c.max_per_domain}};
}

void from_json(const nlohmann::json& j, ProbeConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "train_fraction") c.train_fraction = value.get<double>();
        else if (key == "max_sweeps") c.max_sweeps = value.get<int>();
        else if (key == "tolerance") c.tolerance = value.get<double>();
        else if (key == "lr") c.lr = value.get<double>();
        else if (key == "use_bias") c.use_bias = value.get<bool>();
        else if (key == "max_per_domain") c.max_per_domain = value.get<std::size_t>();
        else throw ConfigError("probe config: unknown key '" + key + "'");
    }
}

namespace {

double mean_loss(const DomainClassifier& clf, const std::vector<LabeledEmbedding>& data) {
    double s = 0.0;
    for (const auto& e : data) s += discrimination_loss(clf.classify(e.vector), e.domain).loss;
    return s / static_cast<double>(data.size());
}

}  // namespace

ProbeResult global_domain_acc(const std::vector<Vec>& source, const std::vector<Vec>& target,
                              const ProbeConfig& cfg, Rng& rng) {
    if (source.empty() || target.empty()) throw std::invalid_argument("global_domain_acc: empty sample");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
        throw ConfigError("probe train_fraction must be in (0,1)");
    }
    std::size_t per_domain = std::min(source.size(), target.size());
    if (cfg.max_per_domain > 0) per_domain = std::min(per_domain, cfg.max_per_domain);
    if (per_domain < 2) throw std::invalid_argument("global_domain_acc: need >= 2 embeddings per domain");

    auto pick = [&](const std::vector<Vec>& pool) {
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        idx.resize(per_domain);
        return idx;
    };
    const auto s_idx = pick(source);
    const auto t_idx = pick(target);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(per_domain))), 1,
        per_domain - 1);

    std::vector<LabeledEmbedding> train, heldout;
    for (std::size_t i = 0; i < per_domain; ++i) {
        auto& dst = i < n_train ? train : heldout;
        dst.push_back({source[s_idx[i]], Domain::Source});
        dst.push_back({target[t_idx[i]], Domain::Target});
    }

    double mean_sq = 0.0;
    for (const auto& e : train) mean_sq += squared_norm(e.vector);
    mean_sq /= static_cast<double>(train.size());
    const double base_lr = cfg.lr / std::max(mean_sq, 1e-12);

    ProbeResult out;
    out.probe = DomainClassifier(source.front().dim(), cfg.use_bias);
    out.train_size = train.size();
    out.heldout_size = heldout.size();

    std::vector<std::size_t> order(train.size());
    double prev = mean_loss(out.probe, train);
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        Optimizer opt(OptimizerConfig{OptimizerKind::Sgd, base_lr / (1.0 + sweep / 10.0)});
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t i : order) classifier_sgd_update(out.probe, train[i].vector, train[i].domain, opt);
        const double loss = mean_loss(out.probe, train);
        out.sweeps = sweep + 1;
        out.train_loss = loss;
        if (prev - loss < cfg.tolerance) break;
        prev = loss;
    }
    out.accuracy_pct = local_domain_acc(out.probe, heldout);
    return out;
}

ProbeResult global_domain_acc(const Encoder& enc, const Collection& source, const Collection& target,
                              const ProbeConfig& cfg, Rng& rng) {
    auto embed_all = [&](const Collection& c) {
        std::vector<Vec> out;
        for (const auto& r : c.queries) out.push_back(enc.embed(r.features));
        for (const auto& r : c.documents) out.push_back(enc.embed(r.features));
        return out;
    };
    return global_domain_acc(embed_all(source), embed_all(target), cfg, rng);
}

double local_domain_acc(const DomainClassifier& clf, const std::vector<LabeledEmbedding>& batch) {
    if (batch.empty()) throw std::invalid_argument("local_domain_acc: empty batch");
    std::size_t correct = 0;
    for (const auto& e : batch) correct += clf.predict(e.vector) == e.domain;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Reports

namespace {

template <typename T>
nlohmann::ordered_json opt_json(const std::optional<T>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["mode"] = r.mode;
    j["adv_loss"] = opt_json(r.adv_loss);
    j["lambda"] = opt_json(r.lambda);
    j["ndcg_k"] = r.ndcg_k;
    j["ndcg_source"] = opt_json(r.ndcg_source);
    j["ndcg_target"] = opt_json(r.ndcg_target);
    j["knn_source_pct"] = opt_json(r.knn_source_pct);
    j["global_domain_acc"] = opt_json(r.global_domain_acc);
    j["local_domain_acc"] = opt_json(r.local_domain_acc);
    j["local_domain_acc_reserved"] = opt_json(r.local_domain_acc_reserved);
    j["ranking_loss"] = opt_json(r.ranking_loss);
    j["adversarial_loss"] = opt_json(r.adversarial_loss);
    j["classifier_loss"] = opt_json(r.classifier_loss);
    return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.step = j.at("step").get<long long>();
    r.mode = j.at("mode").get<std::string>();
    r.adv_loss = opt_get<std::string>(j, "adv_loss");
    r.lambda = opt_get<double>(j, "lambda");
    r.ndcg_k = j.value("ndcg_k", std::size_t{10});
    r.ndcg_source = opt_get<double>(j, "ndcg_source");
    r.ndcg_target = opt_get<double>(j, "ndcg_target");
    r.knn_source_pct = opt_get<double>(j, "knn_source_pct");
    r.global_domain_acc = opt_get<double>(j, "global_domain_acc");
    r.local_domain_acc = opt_get<double>(j, "local_domain_acc");
    r.local_domain_acc_reserved = opt_get<double>(j, "local_domain_acc_reserved");
    r.ranking_loss = opt_get<double>(j, "ranking_loss");
    r.adversarial_loss = opt_get<double>(j, "adversarial_loss");
    r.classifier_loss = opt_get<double>(j, "classifier_loss");
    return r;
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
    j = nlohmann::json{{"ndcg_k", c.ndcg_k}, {"knn_k", c.knn_k}, {"probe", c.probe}, {"global_probe", c.global_probe}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "ndcg_k") c.ndcg_k = value.get<std::size_t>();
        else if (key == "knn_k") c.knn_k = value.get<std::size_t>();
        else if (key == "probe") from_json(value, c.probe);
        else if (key == "global_probe") c.global_probe = value.get<bool>();
        else throw ConfigError("eval config: unknown key '" + key + "'");
    }
    if (c.ndcg_k < 1 || c.knn_k < 1) throw ConfigError("eval config: k must be >= 1");
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(const Corpus& source, const Corpus& target, EvalConfig cfg, std::uint64_t seed)
    : source_(source), target_(target), cfg_(cfg), seed_(seed) {}

void Evaluator::evaluate(const Encoder& enc, EvalReport& report, bool domain_probe) const {
    auto embed = [&](const std::vector<Record>& records) {
        std::vector<Vec> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(enc.embed(r.features));
        return out;
    };
    const auto sq = embed(source_.queries());
    const auto sd = embed(source_.documents());
    const auto tq = embed(target_.queries());
    const auto td = embed(target_.documents());

    auto make_index = [&](const std::vector<const Corpus*>& corpora) {
        EmbeddingIndex index(enc.output_dim(), report.step);
        for (const auto* c : corpora) {
            const auto& embs = c == &source_ ? sd : td;
            for (std::size_t i = 0; i < embs.size(); ++i) index.add(c->documents()[i].id, c->domain(), embs[i]);
        }
        return index;
    };
    const auto source_index = make_index({&source_});
    const auto target_index = make_index({&target_});
    report.ndcg_k = cfg_.ndcg_k;
    report.ndcg_source = mean_ndcg(source_index, sq, source_, cfg_.ndcg_k).mean;
    report.ndcg_target = mean_ndcg(target_index, tq, target_, cfg_.ndcg_k).mean;

    if (!source_.documents().empty() && !target_.documents().empty()) {
        const auto joint = make_index({&source_, &target_});
        report.knn_source_pct = knn_source_pct(joint, tq, cfg_.knn_k);
    }

    if (domain_probe && cfg_.global_probe) {
        std::vector<Vec> s = sq, t = tq;
        s.insert(s.end(), sd.begin(), sd.end());
        t.insert(t.end(), td.begin(), td.end());
        Rng rng = Rng(seed_).split("global-probe/" + std::to_string(report.step));
        report.global_domain_acc = global_domain_acc(s, t, cfg_.probe, rng).accuracy_pct;
    }
}

}  // namespace modir
