#include "modir/retrieval.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace modir {

void EmbeddingIndex::add(std::string doc_id, Domain domain, std::span<const double> embedding) {
    if (embedding.size() != dim_) throw std::invalid_argument("EmbeddingIndex: embedding dim mismatch");
    if (!seen_.insert(doc_id).second) throw std::invalid_argument("EmbeddingIndex: duplicate doc id " + doc_id);
    ids_.push_back(std::move(doc_id));
    domains_.push_back(domain);
    values_.insert(values_.end(), embedding.begin(), embedding.end());
}

bool EmbeddingIndex::contains_domain(Domain d) const {
    return std::find(domains_.begin(), domains_.end(), d) != domains_.end();
}

EmbeddingIndex build_index(const Encoder& enc, const std::vector<const Collection*>& collections, long long step) {
    EmbeddingIndex index(enc.output_dim(), step);
    for (const auto* c : collections) {
        for (const auto& doc : c->documents) {
            if (doc.features.dim() != enc.input_dim()) {
                throw std::invalid_argument("build_index: document " + doc.id + " has dim " +
                                            std::to_string(doc.features.dim()) + ", encoder expects " +
                                            std::to_string(enc.input_dim()));
            }
            index.add(doc.id, c->domain, enc.embed(doc.features));
        }
    }
    return index;
}

std::vector<ScoredDoc> top_k(const EmbeddingIndex& index, std::span<const double> query_emb, std::size_t k) {
    if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
    if (index.empty()) return {};
    if (query_emb.size() != index.dim()) throw std::invalid_argument("top_k: query dim mismatch");
    std::vector<double> scores(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) scores[i] = dot(index.embedding(i), query_emb);

    std::vector<std::size_t> order(index.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto before = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return index.id(a) < index.id(b);
    };
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), before);

    std::vector<ScoredDoc> out;
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = order[r];
        out.push_back({i, index.id(i), scores[i], index.domain(i)});
    }
    return out;
}

NegativeMap mine_hard_negatives(const EmbeddingIndex& index, const std::vector<EncodedQuery>& queries,
                                const Qrels& qrels, std::size_t per_query, Rng& rng,
                                const std::set<std::string>& excluded) {
    NegativeMap out;
    static const std::set<std::string> kNone;
    for (const auto& q : queries) {
        const auto it = qrels.find(q.id);
        const std::set<std::string>& relevant = it == qrels.end() ? kNone : it->second;
        auto eligible = [&](const std::string& id) { return !relevant.count(id) && !excluded.count(id); };

        std::vector<std::string> negatives;
        if (per_query > 0) {
            const std::size_t want = per_query + relevant.size() + excluded.size();
            for (const auto& hit : top_k(index, q.embedding, want)) {
                if (negatives.size() == per_query) break;
                if (eligible(hit.doc_id)) negatives.push_back(hit.doc_id);
            }
        }
        if (negatives.size() < per_query) {
            std::vector<std::string> pool;
            for (std::size_t i = 0; i < index.size(); ++i) {
                const auto& id = index.id(i);
                if (eligible(id) && std::find(negatives.begin(), negatives.end(), id) == negatives.end()) {
                    pool.push_back(id);
                }
            }
            if (pool.empty() && negatives.empty()) {
                throw ConfigError("mine_hard_negatives: query " + q.id + " has no non-relevant documents");
            }
            rng.shuffle(pool);
            for (std::size_t i = 0; negatives.size() < per_query; ++i) {
                if (i < pool.size()) {
                    negatives.push_back(pool[i]);
                } else {
                    // Fewer eligible documents than requested: repeat uniformly.
                    const auto& src = pool.empty() ? negatives : pool;
                    std::string pick = src[rng.below(src.size())];
                    negatives.push_back(std::move(pick));
                }
            }
        }
        out[q.id] = std::move(negatives);
    }
    return out;
}

void dump_index(const EmbeddingIndex& index, std::ostream& out) {
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto e = index.embedding(i);
        out << nlohmann::json{{"doc_id", index.id(i)},
                              {"domain", to_string(index.domain(i))},
                              {"embedding", std::vector<double>(e.begin(), e.end())}}
                   .dump()
            << '\n';
    }
}

void dump_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    dump_index(index, out);
}

}  // namespace modir
