#include "modir/trainer.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace modir {

std::string to_string(TrainMode m) { return m == TrainMode::Baseline ? "baseline" : "modir"; }

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "baseline" || s == "baseline_ranking_only") return TrainMode::Baseline;
    if (s == "modir") return TrainMode::Modir;
    throw ConfigError("unknown mode '" + s + "'");
}

std::string to_string(NegativeMode m) { return m == NegativeMode::MinedHard ? "mined_hard" : "in_batch_random"; }

NegativeMode negative_mode_from_string(const std::string& s) {
    if (s == "mined_hard") return NegativeMode::MinedHard;
    if (s == "in_batch_random") return NegativeMode::InBatchRandom;
    throw ConfigError("unknown negative_mode '" + s + "'");
}

double TrainConfig::effective_half_life() const {
    return half_life_steps > 0.0 ? half_life_steps : static_cast<double>(total_steps) / 4.0;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
    if (momentum_n < 1) fail("momentum_n must be >= 1");
    if (batch_size < 2 || batch_size % 2 != 0) fail("batch_size must be even and >= 2");
    if (negatives_per_query < 1) fail("negatives_per_query must be >= 1");
    if (mining_refresh_steps < 1) fail("mining_refresh_steps must be >= 1");
    if (mining_depth < negatives_per_query) fail("mining_depth must be >= negatives_per_query");
    if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) fail("lambda0 must be finite and >= 0");
    if (!(half_life_steps >= 0.0)) fail("half_life_steps must be >= 0");
    if (warmup_steps < 0) fail("warmup_steps must be >= 0");
    if (!(encoder_optimizer.lr > 0.0)) fail("encoder lr must be positive");
    if (!(classifier_lr > 0.0)) fail("classifier_lr must be positive");
    if (classifier_passes < 0) fail("classifier_passes must be >= 0");
    if (encoder_dims.size() < 2) fail("encoder_dims needs input and output sizes");
    for (int d : encoder_dims) {
        if (d < 1) fail("encoder_dims must be positive");
    }
    if (total_steps < 1) fail("total_steps must be >= 1");
    if (eval_every < 1) fail("eval_every must be >= 1");
    if (total_steps < eval_every) fail("total_steps must be >= eval_every");
    if (reserve_modulus < 0 || reserve_modulus == 1) fail("reserve_modulus must be 0 or >= 2");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"mode", to_string(c.mode)},
                       {"adv_loss", to_string(c.adv_loss)},
                       {"momentum_n", c.momentum_n},
                       {"batch_size", c.batch_size},
                       {"negatives_per_query", c.negatives_per_query},
                       {"negative_mode", to_string(c.negative_mode)},
                       {"mining_refresh_steps", c.mining_refresh_steps},
                       {"mining_depth", c.mining_depth},
                       {"lambda0", c.lambda0},
                       {"half_life_steps", c.half_life_steps},
                       {"warmup_steps", c.warmup_steps},
                       {"encoder_optimizer", to_string(c.encoder_optimizer.kind)},
                       {"encoder_lr", c.encoder_optimizer.lr},
                       {"classifier_lr", c.classifier_lr},
                       {"classifier_passes", c.classifier_passes},
                       {"classifier_bias", c.classifier_bias},
                       {"encoder_dims", c.encoder_dims},
                       {"activation", to_string(c.activation)},
                       {"total_steps", c.total_steps},
                       {"eval_every", c.eval_every},
                       {"reserve_modulus", c.reserve_modulus},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "mode") c.mode = train_mode_from_string(value.get<std::string>());
        else if (key == "adv_loss") c.adv_loss = adv_loss_kind_from_string(value.get<std::string>());
        else if (key == "momentum_n") c.momentum_n = value.get<int>();
        else if (key == "batch_size") c.batch_size = value.get<int>();
        else if (key == "negatives_per_query") c.negatives_per_query = value.get<int>();
        else if (key == "negative_mode") c.negative_mode = negative_mode_from_string(value.get<std::string>());
        else if (key == "mining_refresh_steps") c.mining_refresh_steps = value.get<int>();
        else if (key == "mining_depth") c.mining_depth = value.get<int>();
        else if (key == "lambda0") c.lambda0 = value.get<double>();
        else if (key == "half_life_steps") c.half_life_steps = value.get<double>();
        else if (key == "warmup_steps") c.warmup_steps = value.get<int>();
        else if (key == "encoder_optimizer") c.encoder_optimizer.kind = optimizer_kind_from_string(value.get<std::string>());
        else if (key == "encoder_lr") c.encoder_optimizer.lr = value.get<double>();
        else if (key == "classifier_lr") c.classifier_lr = value.get<double>();
        else if (key == "classifier_passes") c.classifier_passes = value.get<int>();
        else if (key == "classifier_bias") c.classifier_bias = value.get<bool>();
        else if (key == "encoder_dims") c.encoder_dims = value.get<std::vector<int>>();
        else if (key == "activation") c.activation = activation_from_string(value.get<std::string>());
        else if (key == "total_steps") c.total_steps = value.get<long long>();
        else if (key == "eval_every") c.eval_every = value.get<long long>();
        else if (key == "reserve_modulus") c.reserve_modulus = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else throw ConfigError("train config: unknown key '" + key + "'");
    }
}

std::uint64_t config_hash(const TrainConfig& c) {
    const nlohmann::json j = c;
    return fnv1a64(j.dump());
}

std::uint64_t data_fingerprint(const Corpus& source, const Collection& target) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](std::string_view s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    };
    auto mix_records = [&](const std::vector<Record>& records) {
        for (const auto& r : records) {
            mix_bytes(r.id);
            for (double v : r.features) {
                h ^= std::bit_cast<std::uint64_t>(v);
                h *= 0x100000001b3ULL;
            }
        }
    };
    mix_records(source.queries());
    mix_records(source.documents());
    for (const auto& [q, docs] : source.qrels) {
        mix_bytes(q);
        for (const auto& d : docs) mix_bytes(d);
    }
    mix_records(target.queries);
    mix_records(target.documents);
    return h;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

nlohmann::json rng_to_json(const Rng::Snapshot& s) {
    return {{"seed", s.seed},
            {"state", std::vector<std::uint64_t>(s.state.begin(), s.state.end())},
            {"has_cached_normal", s.has_cached_normal},
            {"cached_normal", s.cached_normal}};
}

Rng::Snapshot rng_from_json(const nlohmann::json& j) {
    Rng::Snapshot s;
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto st = j.at("state").get<std::vector<std::uint64_t>>();
    if (st.size() != 4) throw ConfigError("checkpoint: bad rng state");
    std::copy(st.begin(), st.end(), s.state.begin());
    s.has_cached_normal = j.at("has_cached_normal").get<bool>();
    s.cached_normal = j.at("cached_normal").get<double>();
    return s;
}

}  // namespace

nlohmann::json Checkpoint::to_json() const {
    nlohmann::json rng_arr = nlohmann::json::array();
    for (const auto& r : rngs) rng_arr.push_back(rng_to_json(r));
    nlohmann::json cfg_json = config;
    return {{"format", "modir-checkpoint"},
            {"version", 1},
            {"step", step},
            {"config_hash", config_hash},
            {"data_fingerprint", data_fingerprint},
            {"config", cfg_json},
            {"encoder", encoder.to_json()},
            {"classifier", classifier.to_json()},
            {"encoder_optimizer", encoder_optimizer},
            {"classifier_optimizer", classifier_optimizer},
            {"rngs", rng_arr},
            {"queue", queue.to_json()},
            {"negatives", negatives},
            {"sums",
             {{"ranking", sums.ranking},
              {"ranking_steps", sums.ranking_steps},
              {"adversarial", sums.adversarial},
              {"adversarial_steps", sums.adversarial_steps},
              {"classifier", sums.classifier},
              {"classifier_steps", sums.classifier_steps},
              {"local_correct", sums.local_correct},
              {"local_total", sums.local_total}}}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "modir-checkpoint" || j.value("version", 0) != 1) {
        throw ConfigError("checkpoint: unsupported format");
    }
    Checkpoint c;
    c.step = j.at("step").get<long long>();
    c.config_hash = j.at("config_hash").get<std::uint64_t>();
    c.data_fingerprint = j.at("data_fingerprint").get<std::uint64_t>();
    c.config = j.at("config").get<TrainConfig>();
    c.encoder = Encoder::from_json(j.at("encoder"));
    c.classifier = DomainClassifier::from_json(j.at("classifier"));
    c.encoder_optimizer = j.at("encoder_optimizer");
    c.classifier_optimizer = j.at("classifier_optimizer");
    for (const auto& r : j.at("rngs")) c.rngs.push_back(rng_from_json(r));
    c.queue = MomentumQueue::from_json(j.at("queue"));
    c.negatives = j.at("negatives").get<NegativeMap>();
    const auto& s = j.at("sums");
    c.sums.ranking = s.at("ranking").get<double>();
    c.sums.ranking_steps = s.at("ranking_steps").get<long long>();
    c.sums.adversarial = s.at("adversarial").get<double>();
    c.sums.adversarial_steps = s.at("adversarial_steps").get<long long>();
    c.sums.classifier = s.at("classifier").get<double>();
    c.sums.classifier_steps = s.at("classifier_steps").get<long long>();
    c.sums.local_correct = s.at("local_correct").get<long long>();
    c.sums.local_total = s.at("local_total").get<long long>();
    return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << ckpt.to_json().dump() << '\n';
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint " + path.string() + ": " + e.what());
    }
    return Checkpoint::from_json(j);
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

bool reserved_id(const std::string& id, int modulus) {
    return modulus > 0 && fnv1a64(id) % static_cast<std::uint64_t>(modulus) == 0;
}

// Adds `a * x` to acc[key], creating a zero vector of `dim` on first use.
void accumulate(std::map<std::size_t, Vec>& acc, std::size_t key, std::size_t dim, double a,
                std::span<const double> x) {
    auto [it, inserted] = acc.try_emplace(key, dim);
    axpy(a, x, it->second.span());
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, const Corpus& source, const Collection& target)
    : cfg_(std::move(cfg)), source_(source), target_(target) {
    cfg_.validate();
    const auto in_dim = static_cast<std::size_t>(cfg_.encoder_dims.front());
    if (source_.collection.feature_dim() != in_dim || target_.feature_dim() != in_dim) {
        throw ConfigError("encoder input dim " + std::to_string(in_dim) + " does not match corpus feature dim");
    }
    if (source_.domain() != Domain::Source || target_.domain != Domain::Target) {
        throw ConfigError("trainer expects a source corpus and a target collection");
    }
    const Rng root(cfg_.seed);
    Rng init_rng = root.split("init");
    encoder_ = Encoder::init(cfg_.encoder_dims, cfg_.activation, init_rng);
    classifier_ = DomainClassifier(encoder_.output_dim(), cfg_.classifier_bias);
    encoder_opt_ = Optimizer(cfg_.encoder_optimizer);
    classifier_opt_ = Optimizer(OptimizerConfig{OptimizerKind::Sgd, cfg_.classifier_lr});
    queue_ = MomentumQueue(static_cast<std::size_t>(cfg_.momentum_n), 4 * static_cast<std::size_t>(cfg_.batch_size));
    data_rng_ = root.split("data");
    mining_rng_ = root.split("mining");
    target_rng_ = root.split("target");
    classifier_rng_ = root.split("classifier");
    setup();
}

void Trainer::setup() {
    data_fingerprint_ = data_fingerprint(source_, target_);
    const auto& queries = source_.queries();
    const auto& docs = source_.documents();
    std::map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < docs.size(); ++i) doc_index[docs[i].id] = i;

    relevant_.assign(queries.size(), {});
    std::set<std::string> needed_docs;  // relevant to a trainable query
    std::set<std::string> any_relevant;
    train_queries_.clear();
    reserved_source_queries_idx_.clear();
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto it = source_.qrels.find(queries[i].id);
        if (it != source_.qrels.end()) {
            for (const auto& d : it->second) {
                relevant_[i].push_back(doc_index.at(d));
                any_relevant.insert(d);
            }
        }
        if (reserved_id(queries[i].id, cfg_.reserve_modulus)) {
            reserved_source_queries_idx_.push_back(i);
        } else if (!relevant_[i].empty()) {
            train_queries_.push_back(i);
            if (it != source_.qrels.end()) needed_docs.insert(it->second.begin(), it->second.end());
        }
    }
    if (train_queries_.empty()) throw ConfigError("no trainable source queries with relevance judgments");

    reserved_source_docs_.clear();
    reserved_source_docs_idx_.clear();
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& id = docs[i].id;
        if (needed_docs.count(id)) continue;
        const bool relevant_to_reserved = any_relevant.count(id) > 0;
        if (relevant_to_reserved || reserved_id(id, cfg_.reserve_modulus)) {
            reserved_source_docs_.insert(id);
            reserved_source_docs_idx_.push_back(i);
        }
    }

    train_target_queries_.clear();
    train_target_docs_.clear();
    reserved_target_queries_idx_.clear();
    reserved_target_docs_idx_.clear();
    for (std::size_t i = 0; i < target_.queries.size(); ++i) {
        (reserved_id(target_.queries[i].id, cfg_.reserve_modulus) ? reserved_target_queries_idx_ : train_target_queries_)
            .push_back(i);
    }
    for (std::size_t i = 0; i < target_.documents.size(); ++i) {
        (reserved_id(target_.documents[i].id, cfg_.reserve_modulus) ? reserved_target_docs_idx_ : train_target_docs_)
            .push_back(i);
    }
    if (cfg_.mode == TrainMode::Modir && (train_target_queries_.empty() || train_target_docs_.empty())) {
        throw ConfigError("target collection has no trainable queries or documents");
    }
    if (cfg_.negative_mode == NegativeMode::InBatchRandom && cfg_.batch_size / 2 < 2) {
        throw ConfigError("in-batch negatives need at least two queries per batch");
    }
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg, const Corpus& source,
                                 const Collection& target) {
    if (ckpt.config_hash != config_hash(cfg)) {
        throw ConfigError("checkpoint was written with a different configuration; refusing to resume");
    }
    Trainer t(cfg, source, target);
    if (ckpt.data_fingerprint != t.data_fingerprint_) {
        throw ConfigError("checkpoint was written for different corpora; refusing to resume");
    }
    if (ckpt.rngs.size() != 4) throw ConfigError("checkpoint: expected 4 rng streams");
    if (ckpt.encoder.dims() != t.encoder_.dims()) throw ConfigError("checkpoint: encoder shape mismatch");
    t.step_ = ckpt.step;
    t.encoder_ = ckpt.encoder;
    t.classifier_ = ckpt.classifier;
    t.encoder_opt_.load_state_json(ckpt.encoder_optimizer);
    t.classifier_opt_.load_state_json(ckpt.classifier_optimizer);
    t.data_rng_ = Rng::restore(ckpt.rngs[0]);
    t.mining_rng_ = Rng::restore(ckpt.rngs[1]);
    t.target_rng_ = Rng::restore(ckpt.rngs[2]);
    t.classifier_rng_ = Rng::restore(ckpt.rngs[3]);
    t.queue_ = ckpt.queue;
    t.negatives_ = ckpt.negatives;
    t.sums_ = ckpt.sums;
    t.negative_idx_.clear();
    if (!t.negatives_.empty()) {
        std::map<std::string, std::size_t> doc_index;
        for (std::size_t i = 0; i < source.documents().size(); ++i) doc_index[source.documents()[i].id] = i;
        t.negative_idx_.assign(source.queries().size(), {});
        for (std::size_t q = 0; q < source.queries().size(); ++q) {
            const auto it = t.negatives_.find(source.queries()[q].id);
            if (it == t.negatives_.end()) continue;
            for (const auto& d : it->second) t.negative_idx_[q].push_back(doc_index.at(d));
        }
    }
    return t;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.step = step_;
    c.config_hash = config_hash(cfg_);
    c.data_fingerprint = data_fingerprint_;
    c.config = cfg_;
    c.encoder = encoder_;
    c.classifier = classifier_;
    c.encoder_optimizer = encoder_opt_.state_json();
    c.classifier_optimizer = classifier_opt_.state_json();
    c.rngs = {data_rng_.snapshot(), mining_rng_.snapshot(), target_rng_.snapshot(), classifier_rng_.snapshot()};
    c.queue = queue_;
    c.negatives = negatives_;
    c.sums = sums_;
    return c;
}

double Trainer::lambda_at_step(long long step) const {
    if (cfg_.mode == TrainMode::Baseline || step < cfg_.warmup_steps) return 0.0;
    return lambda_at(LambdaSchedule{cfg_.lambda0, cfg_.effective_half_life()}, step - cfg_.warmup_steps);
}

void Trainer::refresh_negatives() {
    const auto index = build_index(encoder_, {&source_.collection}, step_);
    std::vector<EncodedQuery> queries;
    queries.reserve(train_queries_.size());
    for (std::size_t qi : train_queries_) {
        queries.push_back({source_.queries()[qi].id, encoder_.embed(source_.queries()[qi].features)});
    }
    negatives_ = mine_hard_negatives(index, queries, source_.qrels,
                                     static_cast<std::size_t>(cfg_.mining_depth), mining_rng_,
                                     reserved_source_docs_);
    std::map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < source_.documents().size(); ++i) doc_index[source_.documents()[i].id] = i;
    negative_idx_.assign(source_.queries().size(), {});
    for (std::size_t qi : train_queries_) {
        for (const auto& d : negatives_.at(source_.queries()[qi].id)) negative_idx_[qi].push_back(doc_index.at(d));
    }
}

std::vector<LabeledEmbedding> Trainer::reserved_batch() const {
    std::vector<LabeledEmbedding> s, t;
    for (std::size_t i : reserved_source_queries_idx_) s.push_back({encoder_.embed(source_.queries()[i].features), Domain::Source});
    for (std::size_t i : reserved_source_docs_idx_) s.push_back({encoder_.embed(source_.documents()[i].features), Domain::Source});
    for (std::size_t i : reserved_target_queries_idx_) t.push_back({encoder_.embed(target_.queries[i].features), Domain::Target});
    for (std::size_t i : reserved_target_docs_idx_) t.push_back({encoder_.embed(target_.documents[i].features), Domain::Target});
    const std::size_t m = std::min(s.size(), t.size());
    s.resize(m);
    t.resize(m);
    s.insert(s.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
    return s;
}

void Trainer::train_step(const TrainHooks& hooks) {
    const std::size_t n_queries = static_cast<std::size_t>(cfg_.batch_size) / 2;
    const std::size_t n_neg = static_cast<std::size_t>(cfg_.negatives_per_query);
    const std::size_t emb_dim = encoder_.output_dim();

    if (cfg_.negative_mode == NegativeMode::MinedHard && step_ % cfg_.mining_refresh_steps == 0) {
        refresh_negatives();
    }

    // (1) Source batch: distinct queries, one positive each, n_neg negatives.
    std::vector<std::size_t> pool = train_queries_;
    const std::size_t take = std::min(n_queries, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(data_rng_.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    std::vector<std::size_t> positives(take);
    std::vector<std::vector<std::size_t>> negatives(take);
    for (std::size_t b = 0; b < take; ++b) {
        const auto& rel = relevant_[pool[b]];
        positives[b] = rel[data_rng_.below(rel.size())];
    }
    for (std::size_t b = 0; b < take; ++b) {
        if (cfg_.negative_mode == NegativeMode::MinedHard) {
            std::vector<std::size_t> mined = negative_idx_[pool[b]];
            for (std::size_t k = 0; k < n_neg; ++k) {
                const std::size_t j = k + static_cast<std::size_t>(data_rng_.below(mined.size() - k));
                std::swap(mined[k], mined[j]);
            }
            mined.resize(n_neg);
            negatives[b] = std::move(mined);
        } else {
            std::vector<std::size_t> candidates;
            const auto& rel = relevant_[pool[b]];
            for (std::size_t o = 0; o < take; ++o) {
                if (o == b) continue;
                if (std::find(rel.begin(), rel.end(), positives[o]) != rel.end()) continue;
                candidates.push_back(positives[o]);
            }
            if (candidates.empty()) throw ConfigError("in-batch negatives: no non-relevant candidate in batch");
            for (std::size_t k = 0; k < n_neg; ++k) negatives[b].push_back(candidates[data_rng_.below(candidates.size())]);
        }
    }

    // (3) Encode. Keys: source query qi -> qi, source doc di -> Q + di.
    const std::size_t doc_base = source_.queries().size();
    std::map<std::size_t, Encoding> src_enc;
    auto encode_src = [&](std::size_t key, const Vec& x) -> const Encoding& {
        auto it = src_enc.find(key);
        if (it == src_enc.end()) it = src_enc.emplace(key, encoder_.encode(x)).first;
        return it->second;
    };
    for (std::size_t b = 0; b < take; ++b) {
        encode_src(pool[b], source_.queries()[pool[b]].features);
        encode_src(doc_base + positives[b], source_.documents()[positives[b]].features);
        for (std::size_t d : negatives[b]) encode_src(doc_base + d, source_.documents()[d].features);
    }

    // (5a) Ranking loss, averaged over queries.
    std::map<std::size_t, Vec> upstream;
    double ranking = 0.0;
    for (std::size_t b = 0; b < take; ++b) {
        const Vec& eq = src_enc.at(pool[b]).embedding;
        const Vec& ep = src_enc.at(doc_base + positives[b]).embedding;
        std::vector<double> neg_scores;
        for (std::size_t d : negatives[b]) neg_scores.push_back(dot(eq, src_enc.at(doc_base + d).embedding));
        const auto rl = ranking_loss(dot(eq, ep), neg_scores);
        ranking += rl.loss;
        const double w = 1.0 / static_cast<double>(take);
        accumulate(upstream, pool[b], emb_dim, w * rl.dscore_pos, ep);
        accumulate(upstream, doc_base + positives[b], emb_dim, w * rl.dscore_pos, eq);
        for (std::size_t k = 0; k < negatives[b].size(); ++k) {
            const std::size_t key = doc_base + negatives[b][k];
            accumulate(upstream, pool[b], emb_dim, w * rl.dscores_neg[k], src_enc.at(key).embedding);
            accumulate(upstream, key, emb_dim, w * rl.dscores_neg[k], eq);
        }
    }
    ranking /= static_cast<double>(take);
    if (!std::isfinite(ranking)) {
        throw NumericalError("non-finite ranking loss at step " + std::to_string(step_));
    }
    sums_.ranking += ranking;
    ++sums_.ranking_steps;

    const bool adversarial_phase = cfg_.mode == TrainMode::Modir && step_ >= cfg_.warmup_steps;
    std::vector<std::pair<Encoding, Encoding>> tgt_enc;
    std::map<std::size_t, Vec> tgt_upstream;  // key: 2*pair + {0 query, 1 doc}
    if (adversarial_phase) {
        // (2) Target batch: random unlabeled pairs, as many as source pairs.
        const std::size_t n_pairs = 2 * take;
        tgt_enc.reserve(n_pairs);
        for (std::size_t p = 0; p < n_pairs; ++p) {
            const std::size_t tq = train_target_queries_[target_rng_.below(train_target_queries_.size())];
            const std::size_t td = train_target_docs_[target_rng_.below(train_target_docs_.size())];
            tgt_enc.emplace_back(encoder_.encode(target_.queries[tq].features),
                                 encoder_.encode(target_.documents[td].features));
        }

        // Source pairs entering the queue and the adversarial loss: (q, d+) and (q, first d-).
        std::vector<std::pair<std::size_t, std::size_t>> src_pairs;
        for (std::size_t b = 0; b < take; ++b) {
            src_pairs.emplace_back(pool[b], doc_base + positives[b]);
            src_pairs.emplace_back(pool[b], doc_base + negatives[b].front());
        }

        std::vector<DetachedEmbedding> src_det, tgt_det;
        for (std::size_t p = 0; p < src_pairs.size(); ++p) {
            const auto role = p % 2 == 0 ? EmbeddingRole::PositiveDoc : EmbeddingRole::NegativeDoc;
            src_det.push_back({src_enc.at(src_pairs[p].first).embedding, Domain::Source, EmbeddingRole::Query, step_});
            src_det.push_back({src_enc.at(src_pairs[p].second).embedding, Domain::Source, role, step_});
        }
        for (const auto& [q, d] : tgt_enc) {
            tgt_det.push_back({q.embedding, Domain::Target, EmbeddingRole::Query, step_});
            tgt_det.push_back({d.embedding, Domain::Target, EmbeddingRole::Doc, step_});
        }

        // Local Domain-Acc on the incoming batch, before the classifier sees it.
        for (const auto& e : src_det) {
            sums_.local_correct += classifier_.predict(e.vector) == Domain::Source;
        }
        for (const auto& e : tgt_det) {
            sums_.local_correct += classifier_.predict(e.vector) == Domain::Target;
        }
        sums_.local_total += static_cast<long long>(src_det.size() + tgt_det.size());

        queue_.push_batch(std::move(src_det), std::move(tgt_det));

        // (4) Classifier on the queue; encoder untouched.
        if (hooks.on_phase) hooks.on_phase(TrainPhase::BeforeClassifierStep, *this);
        const auto clf = train_classifier_step(classifier_, queue_, classifier_opt_, cfg_.classifier_passes,
                                               classifier_rng_);
        sums_.classifier += clf.mean_loss;
        ++sums_.classifier_steps;
        if (hooks.on_phase) hooks.on_phase(TrainPhase::AfterClassifierStep, *this);

        // (5b) Adversarial loss with the classifier frozen, averaged over pairs.
        const double lambda = lambda_at_step(step_);
        const double w = 1.0 / static_cast<double>(src_pairs.size() + tgt_enc.size());
        double adversarial = 0.0;
        auto pair_grads = [&](const Vec& eq, const Vec& ed, Domain dom, Vec& gq, Vec& gd) {
            const double pq = classifier_.classify(eq);
            const double pd = classifier_.classify(ed);
            const auto adv = adversarial_loss(cfg_.adv_loss, pq, pd, dom);
            adversarial += adv.loss;
            gq = classifier_.input_grad(probability_grad_to_logits(pq, adv.dp_q));
            gd = classifier_.input_grad(probability_grad_to_logits(pd, adv.dp_d));
        };
        for (const auto& [qk, dk] : src_pairs) {
            Vec gq, gd;
            pair_grads(src_enc.at(qk).embedding, src_enc.at(dk).embedding, Domain::Source, gq, gd);
            if (lambda > 0.0) {
                accumulate(upstream, qk, emb_dim, lambda * w, gq);
                accumulate(upstream, dk, emb_dim, lambda * w, gd);
            }
        }
        for (std::size_t p = 0; p < tgt_enc.size(); ++p) {
            Vec gq, gd;
            pair_grads(tgt_enc[p].first.embedding, tgt_enc[p].second.embedding, Domain::Target, gq, gd);
            if (lambda > 0.0) {
                accumulate(tgt_upstream, 2 * p, emb_dim, lambda * w, gq);
                accumulate(tgt_upstream, 2 * p + 1, emb_dim, lambda * w, gd);
            }
        }
        adversarial *= w;
        if (!std::isfinite(adversarial)) {
            throw NumericalError("non-finite adversarial loss at step " + std::to_string(step_));
        }
        sums_.adversarial += adversarial;
        ++sums_.adversarial_steps;
    }

    // Backprop the summed upstream gradient of every encoded input once.
    if (hooks.on_phase) hooks.on_phase(TrainPhase::BeforeEncoderStep, *this);
    EncoderGrad grad(encoder_);
    for (const auto& [key, up] : upstream) encoder_.backprop(src_enc.at(key).tape, up, grad);
    for (const auto& [key, up] : tgt_upstream) {
        const auto& pair = tgt_enc[key / 2];
        encoder_.backprop(key % 2 == 0 ? pair.first.tape : pair.second.tape, up, grad);
    }
    for (const auto& block : grad.blocks()) {
        for (double g : block) {
            if (!std::isfinite(g)) throw NumericalError("non-finite gradient at step " + std::to_string(step_));
        }
    }
    encoder_opt_.step(encoder_.parameter_blocks(), grad.blocks());
    if (hooks.on_phase) hooks.on_phase(TrainPhase::AfterEncoderStep, *this);
    ++step_;
}

EvalReport Trainer::make_report() {
    EvalReport r;
    r.step = step_;
    r.mode = to_string(cfg_.mode);
    if (sums_.ranking_steps > 0) r.ranking_loss = sums_.ranking / static_cast<double>(sums_.ranking_steps);
    if (cfg_.mode == TrainMode::Modir) {
        r.adv_loss = to_string(cfg_.adv_loss);
        r.lambda = lambda_at_step(step_);
        if (sums_.adversarial_steps > 0) r.adversarial_loss = sums_.adversarial / static_cast<double>(sums_.adversarial_steps);
        if (sums_.classifier_steps > 0) r.classifier_loss = sums_.classifier / static_cast<double>(sums_.classifier_steps);
        if (sums_.local_total > 0) {
            r.local_domain_acc = 100.0 * static_cast<double>(sums_.local_correct) / static_cast<double>(sums_.local_total);
        }
        if (step_ > cfg_.warmup_steps) {
            const auto batch = reserved_batch();
            if (!batch.empty()) r.local_domain_acc_reserved = local_domain_acc(classifier_, batch);
        }
    }
    sums_ = RunningSums{};
    return r;
}

TrainResult Trainer::run(long long stop_at, const TrainHooks& hooks) {
    const long long end = stop_at < 0 ? cfg_.total_steps : std::min(stop_at, cfg_.total_steps);
    TrainResult result;
    while (step_ < end) {
        train_step(hooks);
        if (step_ % cfg_.eval_every == 0 || step_ == cfg_.total_steps) {
            EvalReport report = make_report();
            if (hooks.evaluate) hooks.evaluate(encoder_, report);
            if (hooks.on_eval) hooks.on_eval(report, checkpoint());
            result.reports.push_back(std::move(report));
        }
    }
    result.final_checkpoint = checkpoint();
    return result;
}

TrainResult train(const TrainConfig& cfg, const Corpus& source, const Collection& target, const TrainHooks& hooks) {
    Trainer t(cfg, source, target);
    return t.run(-1, hooks);
}

TrainResult resume(const Checkpoint& ckpt, const TrainConfig& cfg, const Corpus& source, const Collection& target,
                   const TrainHooks& hooks, long long stop_at) {
    Trainer t = Trainer::from_checkpoint(ckpt, cfg, source, target);
    return t.run(stop_at, hooks);
}

}  // namespace modir
