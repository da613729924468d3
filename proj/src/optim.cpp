#include "modir/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "modir/numerics.hpp"

namespace modir {

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::Momentum: return "momentum";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "momentum") return OptimizerKind::Momentum;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

void Optimizer::step(const std::vector<std::span<double>>& params,
                     const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Optimizer: block count mismatch");
    std::size_t total = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size()) throw std::invalid_argument("Optimizer: block size mismatch");
        total += params[b].size();
    }
    ++t_;
    if (cfg_.kind == OptimizerKind::Sgd) {
        for (std::size_t b = 0; b < params.size(); ++b) {
            for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= cfg_.lr * grads[b][i];
        }
        return;
    }
    if (m_.empty()) m_.assign(total, 0.0);
    if (cfg_.kind == OptimizerKind::Adam && v_.empty()) v_.assign(total, 0.0);
    if (m_.size() != total) throw std::invalid_argument("Optimizer: parameter layout changed");

    std::size_t k = 0;
    if (cfg_.kind == OptimizerKind::Momentum) {
        for (std::size_t b = 0; b < params.size(); ++b) {
            for (std::size_t i = 0; i < params[b].size(); ++i, ++k) {
                m_[k] = cfg_.momentum * m_[k] + grads[b][i];
                params[b][i] -= cfg_.lr * m_[k];
            }
        }
        return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t i = 0; i < params[b].size(); ++i, ++k) {
            const double g = grads[b][i];
            m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
            v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g * g;
            params[b][i] -= cfg_.lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg_.adam_eps);
        }
    }
}

nlohmann::json Optimizer::state_json() const {
    return nlohmann::json{{"kind", to_string(cfg_.kind)}, {"t", t_}, {"m", m_}, {"v", v_}};
}

void Optimizer::load_state_json(const nlohmann::json& j) {
    if (optimizer_kind_from_string(j.at("kind").get<std::string>()) != cfg_.kind) {
        throw ConfigError("optimizer state kind does not match configuration");
    }
    t_ = j.at("t").get<long long>();
    m_ = j.at("m").get<std::vector<double>>();
    v_ = j.at("v").get<std::vector<double>>();
}

}  // namespace modir
