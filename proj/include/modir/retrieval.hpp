#pragma once

// Exact brute-force dot-product retrieval over encoded documents.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "modir/encoder.hpp"
#include "modir/synthdata.hpp"

namespace modir {

class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    EmbeddingIndex(std::size_t dim, long long built_at_step) : dim_(dim), built_at_step_(built_at_step) {}

    void add(std::string doc_id, Domain domain, std::span<const double> embedding);

    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    std::size_t dim() const { return dim_; }
    long long built_at_step() const { return built_at_step_; }

    const std::string& id(std::size_t i) const { return ids_[i]; }
    Domain domain(std::size_t i) const { return domains_[i]; }
    std::span<const double> embedding(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    bool contains_domain(Domain d) const;

    friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

private:
    std::size_t dim_ = 0;
    long long built_at_step_ = 0;
    std::vector<std::string> ids_;
    std::vector<Domain> domains_;
    std::vector<double> values_;
    std::set<std::string> seen_;
};

EmbeddingIndex build_index(const Encoder& enc, const std::vector<const Collection*>& collections,
                           long long step = 0);

struct ScoredDoc {
    std::size_t index = 0;  // position in the EmbeddingIndex
    std::string doc_id;
    double score = 0.0;
    Domain domain = Domain::Source;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

// Exact top-k by descending dot product; ties broken by ascending doc id.
std::vector<ScoredDoc> top_k(const EmbeddingIndex& index, std::span<const double> query_emb, std::size_t k);

using NegativeMap = std::map<std::string, std::vector<std::string>>;

struct EncodedQuery {
    std::string id;
    Vec embedding;
};

// Per query: the `per_query` highest-ranked non-relevant documents, padded
// with uniform random non-relevant documents when the ranking runs short.
// Documents in `excluded` are never returned.
NegativeMap mine_hard_negatives(const EmbeddingIndex& index, const std::vector<EncodedQuery>& queries,
                                const Qrels& qrels, std::size_t per_query, Rng& rng,
                                const std::set<std::string>& excluded = {});

// One JSON object per line: {"doc_id", "domain", "embedding"}.
void dump_index(const EmbeddingIndex& index, std::ostream& out);
void dump_index(const EmbeddingIndex& index, const std::filesystem::path& path);

}  // namespace modir
