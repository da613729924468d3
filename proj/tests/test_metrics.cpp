#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "modir/metrics.hpp"

using namespace modir;

namespace {

std::vector<Vec> gaussian_cloud(Rng& rng, std::size_t n, const Vec& center, double sigma) {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < n; ++i) {
        Vec v(center.dim());
        for (std::size_t j = 0; j < v.dim(); ++j) v[j] = center[j] + sigma * rng.normal();
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_CASE("ndcg worked examples") {
    CHECK(*ndcg_at_k({"a", "b", "c"}, {"a"}, 10) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*ndcg_at_k({"x", "a", "c"}, {"a"}, 10) == doctest::Approx(0.6309297535714575).epsilon(1e-12));
    CHECK(*ndcg_at_k({"x", "y", "a"}, {"a"}, 2) == 0.0);
    CHECK(*ndcg_at_k({}, {"a"}, 5) == 0.0);
    CHECK_FALSE(ndcg_at_k({"a"}, {}, 5).has_value());
    CHECK_THROWS(ndcg_at_k({"a"}, {"a"}, 0));
    // Two relevant at ranks 1 and 3: (1 + 1/2) / (1 + 1/log2(3)).
    CHECK(*ndcg_at_k({"a", "x", "b"}, {"a", "b"}, 10) ==
          doctest::Approx(1.5 / (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
}

TEST_CASE("ndcg is in [0,1], invariant to relevant-set order and monotone in rank") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::string> ranking;
        for (int i = 0; i < 20; ++i) ranking.push_back("d" + std::to_string(i));
        rng.shuffle(ranking);
        std::set<std::string> rel;
        const auto n_rel = 1 + rng.below(5);
        while (rel.size() < n_rel) rel.insert("d" + std::to_string(rng.below(20)));
        const double v = *ndcg_at_k(ranking, rel, 10);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
        // Swapping two non-relevant documents changes nothing.
        auto perm = ranking;
        std::vector<std::size_t> non;
        for (std::size_t i = 0; i < perm.size(); ++i)
            if (!rel.count(perm[i])) non.push_back(i);
        if (non.size() >= 2) std::swap(perm[non.front()], perm[non.back()]);
        CHECK(*ndcg_at_k(perm, rel, 10) == doctest::Approx(v).epsilon(1e-14));
        // Promoting a relevant document past a non-relevant one never hurts.
        for (std::size_t i = 1; i < ranking.size(); ++i) {
            if (rel.count(ranking[i]) && !rel.count(ranking[i - 1])) {
                auto up = ranking;
                std::swap(up[i], up[i - 1]);
                CHECK(*ndcg_at_k(up, rel, 10) >= v - 1e-15);
                break;
            }
        }
    }
}

TEST_CASE("knn source percentage") {
    EmbeddingIndex source_only(2, 0);
    for (int i = 0; i < 10; ++i) source_only.add("s" + std::to_string(i), Domain::Source, Vec{1.0, 0.1 * i});
    CHECK(knn_source_pct(source_only, {Vec{1, 0}}, 5, false) == 100.0);
    CHECK_THROWS(knn_source_pct(source_only, {Vec{1, 0}}, 5, true));

    // Target documents dominate the direction of every query.
    EmbeddingIndex joint(2, 0);
    for (int i = 0; i < 200; ++i) joint.add("s" + std::to_string(i), Domain::Source, Vec{-1.0, 0.001 * i});
    for (int i = 0; i < 200; ++i) joint.add("t" + std::to_string(i), Domain::Target, Vec{1.0, 0.001 * i});
    CHECK(knn_source_pct(joint, {Vec{1, 0}, Vec{2, 0.1}}, 100) == 0.0);
    CHECK(knn_source_pct(joint, {Vec{-1, 0}}, 100) == 100.0);
}

TEST_CASE("knn fixture with 37 source documents in the top 100") {
    EmbeddingIndex joint(1, 0);
    for (int i = 0; i < 37; ++i) joint.add("s" + std::to_string(i), Domain::Source, Vec{10.0});
    for (int i = 0; i < 63; ++i) joint.add("t" + std::to_string(i), Domain::Target, Vec{9.0});
    for (int i = 0; i < 500; ++i) joint.add("u" + std::to_string(i), Domain::Source, Vec{-1.0});
    const std::vector<Vec> queries{Vec{1.0}, Vec{0.5}};
    CHECK(knn_source_pct(joint, queries, 100) == doctest::Approx(37.0).epsilon(1e-12));
    const double s = knn_domain_pct(joint, queries, Domain::Source, 100);
    const double t = knn_domain_pct(joint, queries, Domain::Target, 100);
    CHECK(s + t == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("source and target percentages sum to 100") {
    Rng rng(12);
    EmbeddingIndex joint(4, 0);
    for (int i = 0; i < 300; ++i) {
        Vec v(4);
        for (std::size_t j = 0; j < 4; ++j) v[j] = rng.normal();
        joint.add("d" + std::to_string(i), i % 2 ? Domain::Source : Domain::Target, v);
    }
    std::vector<Vec> q = gaussian_cloud(rng, 20, Vec(4), 1.0);
    CHECK(knn_domain_pct(joint, q, Domain::Source, 50) + knn_domain_pct(joint, q, Domain::Target, 50) ==
          doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("probe on identical distributions is near chance") {
    Rng rng(13);
    auto s = gaussian_cloud(rng, 1000, Vec{1, 0, 0, 0}, 1.0);
    auto t = gaussian_cloud(rng, 1000, Vec{1, 0, 0, 0}, 1.0);
    const auto r = global_domain_acc(s, t, ProbeConfig{}, rng);
    CHECK(r.accuracy_pct > 44.0);
    CHECK(r.accuracy_pct < 56.0);
    CHECK(r.train_size == 1600);
    CHECK(r.heldout_size == 400);
}

TEST_CASE("probe with shuffled labels is near chance") {
    Rng rng(14);
    auto pool = gaussian_cloud(rng, 1000, Vec{0, 0, 0}, 1.0);
    auto far = gaussian_cloud(rng, 1000, Vec{5, 0, 0}, 1.0);
    pool.insert(pool.end(), far.begin(), far.end());
    rng.shuffle(pool);
    std::vector<Vec> s(pool.begin(), pool.begin() + 1000), t(pool.begin() + 1000, pool.end());
    const auto r = global_domain_acc(s, t, ProbeConfig{}, rng);
    CHECK(std::abs(r.accuracy_pct - 50.0) < 6.0);
}

TEST_CASE("probe separates shifted clouds and is stable across seeds") {
    Rng rng(15);
    const auto s = gaussian_cloud(rng, 500, Vec{1, 0, 0}, 0.3);
    const auto t = gaussian_cloud(rng, 500, Vec{-1, 0.5, 0}, 0.3);
    std::vector<double> acc;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        Rng r(seed);
        acc.push_back(global_domain_acc(s, t, ProbeConfig{}, r).accuracy_pct);
    }
    for (double a : acc) CHECK(a >= 97.0);
    CHECK(*std::max_element(acc.begin(), acc.end()) - *std::min_element(acc.begin(), acc.end()) <= 2.0);
}

TEST_CASE("probe on an untrained encoder under full shift") {
    const auto data = generate(GenConfig{});
    Rng init(16);
    const Encoder enc = Encoder::init({32, 64, 32}, Activation::Tanh, init);
    Rng rng(17);
    const auto r = global_domain_acc(enc, data.source.collection, data.target.collection, ProbeConfig{}, rng);
    CHECK(r.accuracy_pct >= 95.0);
}

TEST_CASE("probe validation") {
    Rng rng(18);
    ProbeConfig bad;
    bad.train_fraction = 1.0;
    CHECK_THROWS_AS(global_domain_acc({Vec{1}, Vec{2}}, {Vec{3}, Vec{4}}, bad, rng), ConfigError);
    CHECK_THROWS(global_domain_acc({}, {Vec{3}}, ProbeConfig{}, rng));
    CHECK_THROWS(global_domain_acc({Vec{1}}, {Vec{3}}, ProbeConfig{}, rng));
    nlohmann::json j = ProbeConfig{};
    CHECK_NOTHROW(j.get<ProbeConfig>());
    j["bogus"] = 1;
    CHECK_THROWS_AS(j.get<ProbeConfig>(), ConfigError);
}

TEST_CASE("local accuracy") {
    Rng rng(19);
    DomainClassifier zero(3);
    double total = 0.0;
    for (int b = 0; b < 100; ++b) {
        std::vector<LabeledEmbedding> batch;
        for (int i = 0; i < 8; ++i) {
            Vec v{rng.normal(), rng.normal(), rng.normal()};
            batch.push_back({v, i % 2 ? Domain::Source : Domain::Target});
        }
        total += local_domain_acc(zero, batch);
    }
    CHECK(total / 100.0 == doctest::Approx(50.0).epsilon(1e-12));

    DomainClassifier perfect(2);
    perfect.weight()(0, 0) = 1.0;
    perfect.weight()(1, 0) = -1.0;
    const std::vector<LabeledEmbedding> batch{
        {Vec{1, 0}, Domain::Source}, {Vec{2, 5}, Domain::Source}, {Vec{-1, 0}, Domain::Target}};
    CHECK(local_domain_acc(perfect, batch) == 100.0);
    CHECK_THROWS(local_domain_acc(perfect, {}));

    // A converged probe classifies its own held-out side well.
    const auto s = gaussian_cloud(rng, 300, Vec{2, 0}, 0.3);
    const auto t = gaussian_cloud(rng, 300, Vec{-2, 0}, 0.3);
    const auto r = global_domain_acc(s, t, ProbeConfig{}, rng);
    std::vector<LabeledEmbedding> fresh;
    for (const auto& v : gaussian_cloud(rng, 50, Vec{2, 0}, 0.3)) fresh.push_back({v, Domain::Source});
    for (const auto& v : gaussian_cloud(rng, 50, Vec{-2, 0}, 0.3)) fresh.push_back({v, Domain::Target});
    CHECK(local_domain_acc(r.probe, fresh) == 100.0);
}

TEST_CASE("mean ndcg over a corpus") {
    Corpus c;
    c.collection.queries = {{"q0", Vec{1, 0}}, {"q1", Vec{0, 1}}, {"q2", Vec{1, 1}}};
    c.collection.documents = {{"a", Vec{1, 0}}, {"b", Vec{0, 1}}};
    c.qrels = {{"q0", {"a"}}, {"q1", {"a"}}};
    const Encoder id({Layer{Mat::identity(2), Vec(2)}}, Activation::Identity);
    const auto index = build_index(id, {&c.collection});
    std::vector<Vec> q;
    for (const auto& r : c.queries()) q.push_back(id.embed(r.features));
    const auto s = mean_ndcg(index, q, c, 10);
    CHECK(s.evaluated == 2);
    CHECK(s.skipped == 1);
    CHECK(s.mean == doctest::Approx((1.0 + 0.6309297535714575) / 2.0).epsilon(1e-12));
    CHECK_THROWS(mean_ndcg(index, {Vec{1, 0}}, c, 10));
}

TEST_CASE("eval report json round trip") {
    EvalReport r;
    r.step = 150;
    r.mode = "modir";
    r.adv_loss = "confusion";
    r.lambda = 0.0625;
    r.ndcg_source = 0.81;
    r.ndcg_target = 0.52;
    r.knn_source_pct = 71.5;
    r.global_domain_acc = 88.0;
    r.local_domain_acc = 62.5;
    r.ranking_loss = 0.3;
    r.adversarial_loss = 0.7;
    r.classifier_loss = 0.6;
    CHECK(eval_report_from_json(nlohmann::json::parse(to_json(r).dump())) == r);
    EvalReport base;
    base.mode = "baseline";
    const auto j = to_json(base);
    CHECK(j.at("local_domain_acc").is_null());
    CHECK(eval_report_from_json(nlohmann::json::parse(j.dump())) == base);
}

TEST_CASE("eval config json") {
    EvalConfig c;
    c.ndcg_k = 5;
    c.probe.max_sweeps = 7;
    nlohmann::json j = c;
    const auto back = j.get<EvalConfig>();
    CHECK(back.ndcg_k == 5);
    CHECK(back.probe.max_sweeps == 7);
    j["ndcg_k"] = 0;
    CHECK_THROWS_AS(j.get<EvalConfig>(), ConfigError);
}
