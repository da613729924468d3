#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace modir {

enum class OptimizerKind { Sgd, Momentum, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double lr = 0.05;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

// First-order optimizer over a list of parameter blocks. Blocks are treated as
// one concatenated vector; the block layout must stay fixed across steps.
class Optimizer {
public:
    Optimizer() = default;
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    void step(const std::vector<std::span<double>>& params,
              const std::vector<std::span<const double>>& grads);

    const OptimizerConfig& config() const { return cfg_; }
    long long steps_taken() const { return t_; }

    nlohmann::json state_json() const;
    void load_state_json(const nlohmann::json& j);

private:
    OptimizerConfig cfg_;
    long long t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

}  // namespace modir
