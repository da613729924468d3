#include "modir/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace modir {

std::string to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::Source;
    if (s == "target") return Domain::Target;
    throw ConfigError("unknown domain '" + s + "'");
}

std::string to_string(ShiftKind k) {
    switch (k) {
        case ShiftKind::Rotation: return "rotation";
        case ShiftKind::Affine: return "affine";
        case ShiftKind::RotationTranslation: return "rotation+translation";
    }
    return "?";
}

ShiftKind shift_kind_from_string(const std::string& s) {
    if (s == "rotation") return ShiftKind::Rotation;
    if (s == "affine") return ShiftKind::Affine;
    if (s == "rotation+translation") return ShiftKind::RotationTranslation;
    throw ConfigError("unknown shift_kind '" + s + "'");
}

void GenConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("data config: " + msg); };
    if (latent_dim < 1) fail("latent_dim must be >= 1");
    if (feature_dim < latent_dim) fail("feature_dim must be >= latent_dim");
    if (n_topics < 1) fail("n_topics must be >= 1");
    if (queries_per_domain < 1) fail("queries_per_domain must be >= 1");
    if (docs_per_query_relevant < 1) fail("docs_per_query_relevant must be >= 1");
    if (static_cast<long long>(queries_per_domain) * docs_per_query_relevant > docs_per_domain) {
        fail("queries_per_domain * docs_per_query_relevant exceeds docs_per_domain");
    }
    if (static_cast<long long>(queries_per_domain) * docs_per_query_relevant == docs_per_domain) {
        fail("no non-relevant documents would remain for negative sampling");
    }
    if (!(shift_magnitude >= 0.0 && shift_magnitude <= 1.0)) fail("shift_magnitude must be in [0,1]");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
    if (!(common_offset >= 0.0) || !(topic_spread >= 0.0) || !(item_spread >= 0.0)) {
        fail("latent spreads must be >= 0");
    }
    if (!(translation_norm >= 0.0) || !(affine_scale >= 0.0)) fail("shift strengths must be >= 0");
    if (!std::isfinite(rotation_degrees)) fail("rotation_degrees must be finite");
}

void to_json(nlohmann::json& j, const GenConfig& c) {
    j = nlohmann::json{{"latent_dim", c.latent_dim},
                       {"feature_dim", c.feature_dim},
                       {"n_topics", c.n_topics},
                       {"queries_per_domain", c.queries_per_domain},
                       {"docs_per_domain", c.docs_per_domain},
                       {"docs_per_query_relevant", c.docs_per_query_relevant},
                       {"shift_kind", to_string(c.shift_kind)},
                       {"shift_magnitude", c.shift_magnitude},
                       {"noise_sigma", c.noise_sigma},
                       {"seed", c.seed},
                       {"common_offset", c.common_offset},
                       {"topic_spread", c.topic_spread},
                       {"item_spread", c.item_spread},
                       {"rotation_degrees", c.rotation_degrees},
                       {"translation_norm", c.translation_norm},
                       {"affine_scale", c.affine_scale}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
    if (!j.is_object()) throw ConfigError("data config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "latent_dim") c.latent_dim = value.get<int>();
        else if (key == "feature_dim") c.feature_dim = value.get<int>();
        else if (key == "n_topics") c.n_topics = value.get<int>();
        else if (key == "queries_per_domain") c.queries_per_domain = value.get<int>();
        else if (key == "docs_per_domain") c.docs_per_domain = value.get<int>();
        else if (key == "docs_per_query_relevant") c.docs_per_query_relevant = value.get<int>();
        else if (key == "shift_kind") c.shift_kind = shift_kind_from_string(value.get<std::string>());
        else if (key == "shift_magnitude") c.shift_magnitude = value.get<double>();
        else if (key == "noise_sigma") c.noise_sigma = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "common_offset") c.common_offset = value.get<double>();
        else if (key == "topic_spread") c.topic_spread = value.get<double>();
        else if (key == "item_spread") c.item_spread = value.get<double>();
        else if (key == "rotation_degrees") c.rotation_degrees = value.get<double>();
        else if (key == "translation_norm") c.translation_norm = value.get<double>();
        else if (key == "affine_scale") c.affine_scale = value.get<double>();
        else throw ConfigError("data config: unknown key '" + key + "'");
    }
}

std::size_t Collection::feature_dim() const {
    if (!queries.empty()) return queries.front().features.dim();
    if (!documents.empty()) return documents.front().features.dim();
    return 0;
}

void Corpus::validate() const {
    std::set<std::string> qids, dids;
    for (const auto& q : queries()) {
        if (!qids.insert(q.id).second) throw ConfigError("duplicate query id '" + q.id + "'");
    }
    for (const auto& d : documents()) {
        if (!dids.insert(d.id).second) throw ConfigError("duplicate document id '" + d.id + "'");
    }
    for (const auto& [qid, docs] : qrels) {
        if (!qids.count(qid)) throw ConfigError("qrels reference unknown query '" + qid + "'");
        for (const auto& did : docs) {
            if (!dids.count(did)) throw ConfigError("qrels reference unknown document '" + did + "'");
        }
    }
}

namespace {

Vec gaussian(Rng& rng, std::size_t dim, double scale) {
    Vec v(dim);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

// Columns of a random orthogonal matrix via Gram-Schmidt on Gaussian columns.
std::vector<Vec> random_orthonormal_basis(Rng& rng, std::size_t dim) {
    std::vector<Vec> basis;
    basis.reserve(dim);
    while (basis.size() < dim) {
        Vec v = gaussian(rng, dim, 1.0);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) axpy(-dot(v, b), b, v.span());
        }
        const double n = std::sqrt(squared_norm(v));
        if (n < 1e-6) continue;
        for (auto& x : v) x /= n;
        basis.push_back(std::move(v));
    }
    return basis;
}

struct FeatureMap {
    Mat a;   // feature_dim x latent_dim
    Vec b;   // feature_dim
};

FeatureMap source_map(const std::vector<Vec>& basis, std::size_t k) {
    const std::size_t d = basis.size();
    FeatureMap m{Mat(d, k), Vec(d)};
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t r = 0; r < d; ++r) m.a(r, c) = basis[c][r];
    }
    return m;
}

FeatureMap target_map(const GenConfig& cfg, const std::vector<Vec>& basis, Rng& shift_rng) {
    const std::size_t k = static_cast<std::size_t>(cfg.latent_dim);
    const std::size_t d = basis.size();
    FeatureMap m = source_map(basis, k);
    const double mag = cfg.shift_magnitude;
    const bool rotate = cfg.shift_kind == ShiftKind::Rotation ||
                        cfg.shift_kind == ShiftKind::RotationTranslation;
    const bool translate = cfg.shift_kind == ShiftKind::Affine ||
                           cfg.shift_kind == ShiftKind::RotationTranslation;

    // Shear draws happen regardless of kind so that every kind consumes the
    // shift stream identically.
    Mat shear(d, d);
    for (auto& x : shear.span()) x = shift_rng.normal() / std::sqrt(static_cast<double>(d));

    if (rotate) {
        // Rotate latent column c toward the unused basis vector k + c.
        const double phi = mag * cfg.rotation_degrees * std::numbers::pi / 180.0;
        const std::size_t planes = std::min(k, d - k);
        for (std::size_t c = 0; c < planes; ++c) {
            for (std::size_t r = 0; r < d; ++r) {
                m.a(r, c) = std::cos(phi) * basis[c][r] + std::sin(phi) * basis[k + c][r];
            }
        }
    }
    if (cfg.shift_kind == ShiftKind::Affine) {
        Mat sheared(d, k);
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < k; ++c) {
                double s = m.a(r, c);
                for (std::size_t i = 0; i < d; ++i) s += mag * cfg.affine_scale * shear(r, i) * m.a(i, c);
                sheared(r, c) = s;
            }
        }
        m.a = std::move(sheared);
    }
    if (translate) {
        // Last basis vector: orthogonal to the source subspace whenever d > k.
        const Vec& dir = basis[d - 1];
        for (std::size_t r = 0; r < d; ++r) m.b[r] = mag * cfg.translation_norm * dir[r];
    }
    return m;
}

// Latents live on the unit sphere so that dot-product and nearest-neighbor
// rankings agree.
Vec unit(Vec z) {
    const double n = std::sqrt(squared_norm(z));
    for (auto& x : z) x /= n;
    return z;
}

Vec observe(const FeatureMap& m, const Vec& z, double noise_sigma, Rng& rng) {
    Vec x = matvec(m.a, z);
    for (std::size_t r = 0; r < x.dim(); ++r) x[r] += m.b[r] + noise_sigma * rng.normal();
    return x;
}

std::string make_id(char domain, char role, std::size_t i, std::size_t width) {
    std::ostringstream os;
    os << domain << role << std::setw(static_cast<int>(width)) << std::setfill('0') << i;
    return os.str();
}

std::size_t digits(std::size_t n) {
    std::size_t w = 1;
    while (n >= 10) {
        n /= 10;
        ++w;
    }
    return w;
}

void build_domain(const GenConfig& cfg, Domain domain, const std::vector<Vec>& topics,
                  const FeatureMap& map, Rng rng, Corpus& out, LatentTruth& latent) {
    const std::size_t k = static_cast<std::size_t>(cfg.latent_dim);
    const std::size_t nq = static_cast<std::size_t>(cfg.queries_per_domain);
    const std::size_t nd = static_cast<std::size_t>(cfg.docs_per_domain);
    const std::size_t per_q = static_cast<std::size_t>(cfg.docs_per_query_relevant);
    const double item_scale = cfg.item_spread / std::sqrt(static_cast<double>(k));
    const char tag = domain == Domain::Source ? 's' : 't';

    // Latent centers: one per query (shared with its relevant docs), one per background doc.
    std::vector<Vec> query_latent(nq);
    for (std::size_t i = 0; i < nq; ++i) {
        const Vec& topic = topics[i % topics.size()];
        Vec z = gaussian(rng, k, item_scale);
        axpy(1.0, topic, z.span());
        query_latent[i] = unit(std::move(z));
    }
    // doc_owner[j] = query index the doc is relevant to, or nq for background docs.
    std::vector<std::size_t> doc_owner(nd, nq);
    std::vector<Vec> doc_latent(nd);
    for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t r = 0; r < per_q; ++r) {
            doc_owner[i * per_q + r] = i;
            doc_latent[i * per_q + r] = query_latent[i];
        }
    }
    for (std::size_t j = nq * per_q; j < nd; ++j) {
        const Vec& topic = topics[rng.below(topics.size())];
        Vec z = gaussian(rng, k, item_scale);
        axpy(1.0, topic, z.span());
        doc_latent[j] = unit(std::move(z));
    }
    // Shuffle document order so ids carry no relevance signal.
    std::vector<std::size_t> order(nd);
    for (std::size_t j = 0; j < nd; ++j) order[j] = j;
    rng.shuffle(order);

    out.collection.domain = domain;
    out.collection.queries.clear();
    out.collection.documents.clear();
    out.qrels.clear();
    latent.queries.clear();
    latent.documents.clear();

    const std::size_t qw = digits(nq - 1);
    const std::size_t dw = digits(nd - 1);
    for (std::size_t i = 0; i < nq; ++i) {
        out.collection.queries.push_back({make_id(tag, 'q', i, qw), observe(map, query_latent[i], cfg.noise_sigma, rng)});
        latent.queries.push_back(query_latent[i]);
    }
    for (std::size_t pos = 0; pos < nd; ++pos) {
        const std::size_t j = order[pos];
        Record rec{make_id(tag, 'd', pos, dw), observe(map, doc_latent[j], cfg.noise_sigma, rng)};
        if (doc_owner[j] < nq) out.qrels[out.collection.queries[doc_owner[j]].id].insert(rec.id);
        out.collection.documents.push_back(std::move(rec));
        latent.documents.push_back(doc_latent[j]);
    }
    out.config = cfg;
}

}  // namespace

GeneratedData generate_with_latents(const GenConfig& cfg) {
    cfg.validate();
    const std::size_t k = static_cast<std::size_t>(cfg.latent_dim);
    const std::size_t d = static_cast<std::size_t>(cfg.feature_dim);
    const Rng root(cfg.seed);

    Rng topic_rng = root.split("topics");
    Vec offset = gaussian(topic_rng, k, 1.0);
    {
        const double n = std::sqrt(squared_norm(offset));
        for (auto& x : offset) x *= cfg.common_offset / n;
    }
    std::vector<Vec> topics;
    const double topic_scale = cfg.topic_spread / std::sqrt(static_cast<double>(k));
    for (int t = 0; t < cfg.n_topics; ++t) {
        Vec c = gaussian(topic_rng, k, topic_scale);
        axpy(1.0, offset, c.span());
        topics.push_back(std::move(c));
    }

    Rng basis_rng = root.split("basis");
    const auto basis = random_orthonormal_basis(basis_rng, d);
    Rng shift_rng = root.split("shift");
    const FeatureMap src_map = source_map(basis, k);
    const FeatureMap tgt_map = target_map(cfg, basis, shift_rng);

    GeneratedData out;
    build_domain(cfg, Domain::Source, topics, src_map, root.split("source"), out.source, out.source_latent);
    build_domain(cfg, Domain::Target, topics, tgt_map, root.split("target"), out.target, out.target_latent);
    return out;
}

CorpusPair generate(const GenConfig& cfg) {
    auto data = generate_with_latents(cfg);
    return {std::move(data.source), std::move(data.target)};
}

// ---------------------------------------------------------------------------
// Serialization

void write_corpus(const Corpus& corpus, std::ostream& out) {
    nlohmann::json header{{"kind", "header"},
                          {"format", "modir-corpus"},
                          {"version", kCorpusFormatVersion},
                          {"domain", to_string(corpus.domain())},
                          {"config", corpus.config}};
    out << header.dump() << '\n';
    for (const auto& q : corpus.queries()) {
        out << nlohmann::json{{"kind", "query"}, {"id", q.id}, {"vector", q.features.values()}}.dump() << '\n';
    }
    for (const auto& d : corpus.documents()) {
        out << nlohmann::json{{"kind", "doc"}, {"id", d.id}, {"vector", d.features.values()}}.dump() << '\n';
    }
    for (const auto& [qid, docs] : corpus.qrels) {
        out << nlohmann::json{{"kind", "qrel"}, {"query_id", qid}, {"doc_ids", docs}}.dump() << '\n';
    }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_corpus(corpus, out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Corpus read_corpus(std::istream& in) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string kind = rec.at("kind").get<std::string>();
        if (!have_header) {
            if (kind != "header" || rec.value("format", "") != "modir-corpus") {
                throw ConfigError("corpus: missing header line");
            }
            if (rec.at("version").get<int>() != kCorpusFormatVersion) {
                throw ConfigError("corpus: unsupported format version");
            }
            corpus.collection.domain = domain_from_string(rec.at("domain").get<std::string>());
            corpus.config = rec.at("config").get<GenConfig>();
            have_header = true;
        } else if (kind == "query") {
            corpus.collection.queries.push_back(
                {rec.at("id").get<std::string>(), Vec(rec.at("vector").get<std::vector<double>>())});
        } else if (kind == "doc") {
            corpus.collection.documents.push_back(
                {rec.at("id").get<std::string>(), Vec(rec.at("vector").get<std::vector<double>>())});
        } else if (kind == "qrel") {
            auto& docs = corpus.qrels[rec.at("query_id").get<std::string>()];
            for (const auto& id : rec.at("doc_ids")) docs.insert(id.get<std::string>());
        } else {
            throw ConfigError("corpus line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
        }
    }
    if (!have_header) throw ConfigError("corpus: empty input");
    corpus.validate();
    return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open corpus file " + path.string());
    return read_corpus(in);
}

}  // namespace modir
