#pragma once

// Shared-weight feed-forward encoder used for both queries and documents.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modir/numerics.hpp"

namespace modir {

enum class Activation { Tanh, Relu, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
    Mat weight;  // out x in
    Vec bias;    // out

    friend bool operator==(const Layer&, const Layer&) = default;
};

// Activations recorded by a forward pass; enough for exact backprop.
struct Tape {
    std::vector<Vec> inputs;           // input to each layer
    std::vector<Vec> pre_activations;  // W x + b of each layer
};

struct Encoding {
    Vec embedding;
    Tape tape;
};

class EncoderGrad;

class Encoder {
public:
    Encoder() = default;
    Encoder(std::vector<Layer> layers, Activation activation);

    // Glorot-uniform weights, zero biases. dims = {D_in, hidden..., D_emb}.
    static Encoder init(const std::vector<int>& dims, Activation activation, Rng& rng);

    Encoding encode(std::span<const double> x) const;
    // Forward pass without a tape.
    Vec embed(std::span<const double> x) const;

    // Accumulates d(upstream . embedding)/d(theta) into grad and returns the
    // gradient with respect to the input.
    Vec backprop(const Tape& tape, std::span<const double> upstream, EncoderGrad& grad) const;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<int> dims() const;
    Activation activation() const { return activation_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::size_t parameter_count() const;
    std::vector<std::span<double>> parameter_blocks();
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> flat);
    // Order-sensitive hash of the raw parameter bits.
    std::uint64_t checksum() const;

    nlohmann::json to_json() const;
    static Encoder from_json(const nlohmann::json& j);

    friend bool operator==(const Encoder&, const Encoder&) = default;

private:
    std::vector<Layer> layers_;
    Activation activation_ = Activation::Tanh;
};

class EncoderGrad {
public:
    EncoderGrad() = default;
    explicit EncoderGrad(const Encoder& shape);

    void zero();
    bool congruent_with(const Encoder& enc) const;

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t accumulated() const { return accumulated_; }
    void count_accumulation() { ++accumulated_; }

    std::vector<std::span<const double>> blocks() const;
    std::vector<double> flat() const;
    void scale(double s);

private:
    std::vector<Layer> layers_;
    std::size_t accumulated_ = 0;
};

}  // namespace modir
