#pragma once

// Ranking, domain-discrimination and adversarial losses with analytic
// gradients, plus the exponentially decaying adversarial weight.

#include <span>
#include <string>
#include <vector>

#include "modir/synthdata.hpp"

namespace modir {

inline constexpr double kProbClamp = 1e-12;

double clamp_probability(double p);

struct RankingLoss {
    double loss = 0.0;
    double dscore_pos = 0.0;
    std::vector<double> dscores_neg;
};

// Negative log-likelihood of the positive among {positive} + negatives.
RankingLoss ranking_loss(double score_pos, std::span<const double> scores_neg);

struct DiscriminationLoss {
    double loss = 0.0;
    // Gradient with respect to the (source, target) logits.
    std::array<double, 2> dlogits{};
};

DiscriminationLoss discrimination_loss(double p_source, Domain domain);

enum class AdvLossKind { Confusion, Minimax, Gan };

std::string to_string(AdvLossKind k);
AdvLossKind adv_loss_kind_from_string(const std::string& s);

struct AdversarialLoss {
    double loss = 0.0;
    double dp_q = 0.0;
    double dp_d = 0.0;
};

// Encoder-side loss for one query-document pair given the frozen classifier's
// source probabilities of the query and document embeddings.
//   Confusion: -1/2 (log p_q + log(1-p_q) + log p_d + log(1-p_d))
//   Minimax:   -(discrimination loss of q and d at the true domain)
//   Gan:       target pairs -1/2 (log p_q + log p_d), source pairs 0
AdversarialLoss adversarial_loss(AdvLossKind kind, double p_q, double p_d, Domain domain);

// Chain rule through p = softmax2(l)[0]: d/d(l_source - l_target) of a loss
// given dL/dp. Returns the pair of logit gradients.
std::array<double, 2> probability_grad_to_logits(double p, double dloss_dp);

struct LambdaSchedule {
    double lambda0 = 0.1;
    double half_life_steps = 500.0;

    // lambda0 * 2^(-step / half_life_steps)
    double at(double step) const;
};

double lambda_at(const LambdaSchedule& sched, long long step);

}  // namespace modir
