#include <doctest.h>

#include <cmath>

#include "chain.hpp"
#include "modir/objectives.hpp"

using namespace modir;
using namespace modir::testing;

TEST_CASE("ranking loss reference values") {
    // ln(e + 2) - 1 = 0.5514447139320509
    CHECK(std::abs(ranking_loss(1.0, std::vector<double>{0.0, 0.0}).loss - 0.5514447139320509) < 1e-12);
    CHECK(std::abs(ranking_loss(0.3, std::vector<double>{0.3}).loss - std::log(2.0)) < 1e-15);
    CHECK(ranking_loss(20.0, std::vector<double>{0.0}).loss < 1e-8);
    CHECK_THROWS(ranking_loss(1.0, std::vector<double>{}));
}

TEST_CASE("ranking loss is non-negative and decreases with the positive score") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> negs(1 + rng.below(6));
        for (auto& n : negs) n = rng.uniform(-30, 30);
        double previous = INFINITY;
        for (double pos = -40; pos <= 60; pos += 5) {
            const double l = ranking_loss(pos, negs).loss;
            CHECK(l >= 0.0);
            CHECK(l <= previous);
            previous = l;
        }
    }
}

TEST_CASE("ranking loss gradient matches finite differences") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> scores(5);
        for (auto& s : scores) s = rng.uniform(-3, 3);
        const auto fn = [](std::span<const double> s) { return ranking_loss(s[0], s.subspan(1)).loss; };
        const auto rl = ranking_loss(scores[0], std::span<const double>(scores).subspan(1));
        std::vector<double> g{rl.dscore_pos};
        g.insert(g.end(), rl.dscores_neg.begin(), rl.dscores_neg.end());
        CHECK(check_gradient(fn, g, scores).max_relative_error < 1e-4);
    }
}

TEST_CASE("discrimination loss reference values") {
    CHECK(std::abs(discrimination_loss(0.5, Domain::Source).loss - std::log(2.0)) < 1e-15);
    CHECK(std::abs(discrimination_loss(0.5, Domain::Target).loss - std::log(2.0)) < 1e-15);
    // -ln 0.8 = 0.2231435513142097, -ln 0.2 = 1.6094379124341003
    CHECK(std::abs(discrimination_loss(0.8, Domain::Source).loss - 0.2231435513142097) < 1e-12);
    CHECK(std::abs(discrimination_loss(0.8, Domain::Target).loss - 1.6094379124341003) < 1e-12);
    CHECK(std::isfinite(discrimination_loss(0.0, Domain::Source).loss));
}

TEST_CASE("confusion loss reference values and minimum") {
    const double at_half = adversarial_loss(AdvLossKind::Confusion, 0.5, 0.5, Domain::Source).loss;
    CHECK(std::abs(at_half - 2.0 * std::log(2.0)) < 1e-9);
    // -(ln 0.9 + ln 0.1) = 2.4079456086518722
    CHECK(std::abs(adversarial_loss(AdvLossKind::Confusion, 0.9, 0.9, Domain::Target).loss - 2.4079456086518722) <
          1e-12);
    for (int i = 1; i <= 99; ++i) {
        for (int j = 1; j <= 99; ++j) {
            const double l = adversarial_loss(AdvLossKind::Confusion, i / 100.0, j / 100.0, Domain::Source).loss;
            CHECK(l >= 2.0 * std::log(2.0) - 1e-12);
            if (i != 50 || j != 50) CHECK(l > at_half + 1e-9);
        }
    }
}

TEST_CASE("gan loss vanishes when the classifier is fooled") {
    const double p = 1.0 - 1e-12;
    CHECK(adversarial_loss(AdvLossKind::Gan, p, p, Domain::Target).loss < 1e-11);
    CHECK(adversarial_loss(AdvLossKind::Gan, 0.2, 0.7, Domain::Source).loss == 0.0);
}

TEST_CASE("adversarial losses have matching probability gradients") {
    Rng rng(3);
    for (auto kind : {AdvLossKind::Confusion, AdvLossKind::Minimax, AdvLossKind::Gan}) {
        for (auto domain : {Domain::Source, Domain::Target}) {
            for (int t = 0; t < 20; ++t) {
                const Vec p{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
                const auto fn = [&](std::span<const double> x) { return adversarial_loss(kind, x[0], x[1], domain).loss; };
                const auto a = adversarial_loss(kind, p[0], p[1], domain);
                CHECK(check_gradient(fn, Vec{a.dp_q, a.dp_d}, p).max_relative_error < 1e-4);
            }
        }
    }
}

TEST_CASE("confusion and minimax share the fixed point p = 1/2") {
    const auto conf = adversarial_loss(AdvLossKind::Confusion, 0.5, 0.5, Domain::Source);
    CHECK(probability_grad_to_logits(0.5, conf.dp_q)[0] == 0.0);
    CHECK(probability_grad_to_logits(0.5, conf.dp_d)[1] == 0.0);
    // Minimax is balanced over one source and one target pair.
    const auto src = adversarial_loss(AdvLossKind::Minimax, 0.5, 0.5, Domain::Source);
    const auto tgt = adversarial_loss(AdvLossKind::Minimax, 0.5, 0.5, Domain::Target);
    const auto ls = probability_grad_to_logits(0.5, src.dp_q);
    const auto lt = probability_grad_to_logits(0.5, tgt.dp_q);
    CHECK(std::abs(ls[0] + lt[0]) < 1e-15);
    CHECK(std::abs(ls[1] + lt[1]) < 1e-15);
}

TEST_CASE("full chain gradients through classifier and encoder") {
    for (auto c : {Chain::Ranking, Chain::Discrimination, Chain::Confusion, Chain::Minimax, Chain::Gan}) {
        for (int t = 0; t < 20; ++t) {
            const auto domain = t % 2 == 0 ? Domain::Source : Domain::Target;
            const auto point = random_chain_point(1000 + static_cast<std::uint64_t>(t), domain);
            const auto check = check_chain(c, point);
            INFO(to_string(c), " point ", t);
            CHECK(check.finite);
            CHECK(check.max_relative_error < 1e-4);
        }
    }
}

TEST_CASE("lambda schedule") {
    const LambdaSchedule s{0.3, 250.0};
    CHECK(lambda_at(s, 0) == 0.3);
    CHECK(std::abs(lambda_at(s, 250) - 0.15) < 1e-12);
    CHECK(std::abs(lambda_at(s, 500) - 0.075) < 1e-12);
    double previous = INFINITY;
    for (long long step = 0; step < 5000; step += 7) {
        const double l = lambda_at(s, step);
        CHECK(l < previous);
        previous = l;
    }
    CHECK_THROWS(lambda_at(s, -1));
    CHECK_THROWS(lambda_at(LambdaSchedule{0.1, 0.0}, 3));
}

TEST_CASE("loss kind names") {
    for (auto k : {AdvLossKind::Confusion, AdvLossKind::Minimax, AdvLossKind::Gan}) {
        CHECK(adv_loss_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(adv_loss_kind_from_string("wasserstein"), ConfigError);
}
