#pragma once

// Paired source/target corpora that share one latent relevance structure and
// differ by a controllable shift of the observed features.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "modir/numerics.hpp"

namespace modir {

enum class Domain { Source, Target };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

enum class ShiftKind { Rotation, Affine, RotationTranslation };

std::string to_string(ShiftKind k);
ShiftKind shift_kind_from_string(const std::string& s);

struct GenConfig {
    int latent_dim = 8;
    int feature_dim = 32;
    int n_topics = 16;
    int queries_per_domain = 256;
    int docs_per_domain = 2048;
    int docs_per_query_relevant = 4;
    ShiftKind shift_kind = ShiftKind::RotationTranslation;
    double shift_magnitude = 1.0;
    double noise_sigma = 0.02;
    std::uint64_t seed = 2022;

    // Latent geometry. Every latent vector is common_offset + topic + item parts.
    double common_offset = 1.0;
    double topic_spread = 1.0;
    double item_spread = 1.0;
    // Shift strength at shift_magnitude = 1.
    double rotation_degrees = 45.0;
    double translation_norm = 2.0;
    double affine_scale = 0.5;

    void validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, GenConfig& c);

struct Record {
    std::string id;
    Vec features;
};

using Qrels = std::map<std::string, std::set<std::string>>;

// Queries and documents of one domain, with no relevance information.
struct Collection {
    Domain domain = Domain::Source;
    std::vector<Record> queries;
    std::vector<Record> documents;

    std::size_t feature_dim() const;
};

// A collection together with its relevance judgments.
struct Corpus {
    Collection collection;
    Qrels qrels;
    GenConfig config;

    Domain domain() const { return collection.domain; }
    const std::vector<Record>& queries() const { return collection.queries; }
    const std::vector<Record>& documents() const { return collection.documents; }

    // Throws ConfigError if ids are duplicated or qrels reference unknown ids.
    void validate() const;
};

// Latent coordinates behind a generated corpus; never serialized.
struct LatentTruth {
    std::vector<Vec> queries;
    std::vector<Vec> documents;
};

struct GeneratedData {
    Corpus source;
    Corpus target;
    LatentTruth source_latent;
    LatentTruth target_latent;
};

GeneratedData generate_with_latents(const GenConfig& cfg);

struct CorpusPair {
    Corpus source;
    Corpus target;
};
CorpusPair generate(const GenConfig& cfg);

inline constexpr int kCorpusFormatVersion = 1;

// Line-delimited JSON: a header line, then query, doc and qrel records.
void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace modir
