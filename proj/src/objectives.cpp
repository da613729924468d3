#include "modir/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace modir {

double clamp_probability(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

RankingLoss ranking_loss(double score_pos, std::span<const double> scores_neg) {
    if (scores_neg.empty()) throw std::invalid_argument("ranking_loss: at least one negative required");
    std::vector<double> all;
    all.reserve(scores_neg.size() + 1);
    all.push_back(score_pos);
    all.insert(all.end(), scores_neg.begin(), scores_neg.end());
    for (double s : all) {
        if (!std::isfinite(s)) throw NumericalError("ranking_loss: non-finite score");
    }
    const double lse = log_sum_exp(all);
    RankingLoss out;
    // log1p form keeps precision when the positive dominates.
    double tail = 0.0;
    for (double s : scores_neg) tail += std::exp(s - score_pos);
    out.loss = std::log1p(tail);
    out.dscore_pos = std::exp(score_pos - lse) - 1.0;
    out.dscores_neg.reserve(scores_neg.size());
    for (double s : scores_neg) out.dscores_neg.push_back(std::exp(s - lse));
    if (!std::isfinite(out.loss)) out.loss = lse - score_pos;
    return out;
}

std::array<double, 2> probability_grad_to_logits(double p, double dloss_dp) {
    // p = sigmoid(l0 - l1): dp/dl0 = p(1-p), dp/dl1 = -p(1-p)
    const double g = dloss_dp * p * (1.0 - p);
    return {g, -g};
}

DiscriminationLoss discrimination_loss(double p_source, Domain domain) {
    const double p = clamp_probability(p_source);
    DiscriminationLoss out;
    if (domain == Domain::Source) {
        out.loss = -std::log(p);
        out.dlogits = {p - 1.0, 1.0 - p};
    } else {
        out.loss = -std::log(1.0 - p);
        out.dlogits = {p, -p};
    }
    return out;
}

std::string to_string(AdvLossKind k) {
    switch (k) {
        case AdvLossKind::Confusion: return "confusion";
        case AdvLossKind::Minimax: return "minimax";
        case AdvLossKind::Gan: return "gan";
    }
    return "?";
}

AdvLossKind adv_loss_kind_from_string(const std::string& s) {
    if (s == "confusion") return AdvLossKind::Confusion;
    if (s == "minimax") return AdvLossKind::Minimax;
    if (s == "gan") return AdvLossKind::Gan;
    throw ConfigError("unknown adversarial loss '" + s + "'");
}

AdversarialLoss adversarial_loss(AdvLossKind kind, double p_q, double p_d, Domain domain) {
    const double q = clamp_probability(p_q);
    const double d = clamp_probability(p_d);
    AdversarialLoss out;
    switch (kind) {
        case AdvLossKind::Confusion:
            out.loss = -0.5 * (std::log(q) + std::log(1.0 - q) + std::log(d) + std::log(1.0 - d));
            out.dp_q = -0.5 * (1.0 / q - 1.0 / (1.0 - q));
            out.dp_d = -0.5 * (1.0 / d - 1.0 / (1.0 - d));
            break;
        case AdvLossKind::Minimax:
            if (domain == Domain::Source) {
                out.loss = std::log(q) + std::log(d);
                out.dp_q = 1.0 / q;
                out.dp_d = 1.0 / d;
            } else {
                out.loss = std::log(1.0 - q) + std::log(1.0 - d);
                out.dp_q = -1.0 / (1.0 - q);
                out.dp_d = -1.0 / (1.0 - d);
            }
            break;
        case AdvLossKind::Gan:
            if (domain == Domain::Target) {
                out.loss = -0.5 * (std::log(q) + std::log(d));
                out.dp_q = -0.5 / q;
                out.dp_d = -0.5 / d;
            }
            break;
    }
    return out;
}

double LambdaSchedule::at(double step) const { return lambda0 * std::exp2(-step / half_life_steps); }

double lambda_at(const LambdaSchedule& sched, long long step) {
    if (step < 0) throw std::invalid_argument("lambda_at: negative step");
    if (!(sched.half_life_steps > 0.0)) throw std::invalid_argument("lambda_at: half life must be positive");
    return sched.at(static_cast<double>(step));
}

}  // namespace modir
