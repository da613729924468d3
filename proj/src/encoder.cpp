#include "modir/encoder.hpp"

#include <bit>
#include <cmath>

namespace modir {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

namespace {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Identity: return x;
    }
    return x;
}

// Derivative expressed through the pre-activation.
double activate_grad(Activation a, double pre) {
    switch (a) {
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

}  // namespace

Encoder::Encoder(std::vector<Layer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
    if (layers_.empty()) throw std::invalid_argument("Encoder: at least one layer required");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.bias.dim() != layer.weight.rows()) {
            throw std::invalid_argument("Encoder: bias/weight mismatch in layer " + std::to_string(l));
        }
        if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
            throw std::invalid_argument("Encoder: layer " + std::to_string(l) + " does not compose");
        }
    }
}

Encoder Encoder::init(const std::vector<int>& dims, Activation activation, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("encoder dims need at least input and output");
    for (int d : dims) {
        if (d < 1) throw ConfigError("encoder dims must be positive");
    }
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto fan_in = static_cast<std::size_t>(dims[l]);
        const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Layer layer{Mat(fan_out, fan_in), Vec(fan_out)};
        for (auto& w : layer.weight.span()) w = rng.uniform(-bound, bound);
        layers.push_back(std::move(layer));
    }
    return Encoder(std::move(layers), activation);
}

Encoding Encoder::encode(std::span<const double> x) const {
    if (x.size() != input_dim()) {
        throw std::invalid_argument("encode: input dim " + std::to_string(x.size()) + " != " +
                                    std::to_string(input_dim()));
    }
    Encoding out;
    out.tape.inputs.reserve(layers_.size());
    out.tape.pre_activations.reserve(layers_.size());
    Vec h(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Vec pre = matvec(layers_[l].weight, h);
        axpy(1.0, layers_[l].bias, pre.span());
        out.tape.inputs.push_back(std::move(h));
        h = pre;
        if (l + 1 < layers_.size()) {
            for (auto& v : h) v = activate(activation_, v);
        }
        out.tape.pre_activations.push_back(std::move(pre));
    }
    out.embedding = std::move(h);
    return out;
}

Vec Encoder::embed(std::span<const double> x) const {
    if (x.size() != input_dim()) throw std::invalid_argument("embed: input dim mismatch");
    Vec h(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Vec pre = matvec(layers_[l].weight, h);
        axpy(1.0, layers_[l].bias, pre.span());
        if (l + 1 < layers_.size()) {
            for (auto& v : pre) v = activate(activation_, v);
        }
        h = std::move(pre);
    }
    return h;
}

Vec Encoder::backprop(const Tape& tape, std::span<const double> upstream, EncoderGrad& grad) const {
    if (tape.inputs.size() != layers_.size() || tape.pre_activations.size() != layers_.size()) {
        throw std::invalid_argument("backprop: tape does not match encoder depth");
    }
    if (!grad.congruent_with(*this)) throw std::invalid_argument("backprop: gradient shape mismatch");
    if (upstream.size() != output_dim()) throw std::invalid_argument("backprop: upstream dim mismatch");

    Vec delta(upstream);  // dL/d(pre-activation) of the current layer
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const Layer& layer = layers_[li];
        const Vec& in = tape.inputs[li];
        if (in.dim() != layer.weight.cols() || tape.pre_activations[li].dim() != layer.weight.rows()) {
            throw std::invalid_argument("backprop: tape shape mismatch at layer " + std::to_string(li));
        }
        Layer& g = grad.layers()[li];
        add_outer(g.weight, delta, in);
        axpy(1.0, delta, g.bias.span());
        Vec down = matvec_transposed(layer.weight, delta);
        if (li > 0) {
            const Vec& prev_pre = tape.pre_activations[li - 1];
            for (std::size_t i = 0; i < down.dim(); ++i) down[i] *= activate_grad(activation_, prev_pre[i]);
        }
        delta = std::move(down);
    }
    grad.count_accumulation();
    return delta;
}

std::size_t Encoder::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
std::size_t Encoder::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

std::vector<int> Encoder::dims() const {
    std::vector<int> d;
    if (layers_.empty()) return d;
    d.push_back(static_cast<int>(input_dim()));
    for (const auto& l : layers_) d.push_back(static_cast<int>(l.weight.rows()));
    return d;
}

std::size_t Encoder::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.dim();
    return n;
}

std::vector<std::span<double>> Encoder::parameter_blocks() {
    std::vector<std::span<double>> blocks;
    for (auto& l : layers_) {
        blocks.push_back(l.weight.span());
        blocks.push_back(l.bias.span());
    }
    return blocks;
}

std::vector<double> Encoder::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers_) {
        flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void Encoder::set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("set_flat_parameters: size mismatch");
    std::size_t k = 0;
    for (auto& block : parameter_blocks()) {
        for (auto& v : block) v = flat[k++];
    }
}

std::uint64_t Encoder::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : flat_parameters()) {
        h ^= std::bit_cast<std::uint64_t>(v);
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    }
    return h;
}

nlohmann::json Encoder::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        layers.push_back({{"rows", l.weight.rows()},
                          {"cols", l.weight.cols()},
                          {"weight", l.weight.values()},
                          {"bias", l.bias.values()}});
    }
    return {{"format", "modir-encoder"},
            {"version", 1},
            {"dims", dims()},
            {"activation", to_string(activation_)},
            {"layers", layers}};
}

Encoder Encoder::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "modir-encoder" || j.value("version", 0) != 1) {
        throw ConfigError("encoder blob: unsupported format");
    }
    std::vector<Layer> layers;
    for (const auto& lj : j.at("layers")) {
        layers.push_back({Mat(lj.at("rows").get<std::size_t>(), lj.at("cols").get<std::size_t>(),
                              lj.at("weight").get<std::vector<double>>()),
                          Vec(lj.at("bias").get<std::vector<double>>())});
    }
    Encoder enc(std::move(layers), activation_from_string(j.at("activation").get<std::string>()));
    if (enc.dims() != j.at("dims").get<std::vector<int>>()) throw ConfigError("encoder blob: dims mismatch");
    return enc;
}

// ---------------------------------------------------------------------------

EncoderGrad::EncoderGrad(const Encoder& shape) {
    for (const auto& l : shape.layers()) {
        layers_.push_back({Mat(l.weight.rows(), l.weight.cols()), Vec(l.bias.dim())});
    }
}

void EncoderGrad::zero() {
    for (auto& l : layers_) {
        l.weight.fill(0.0);
        l.bias.fill(0.0);
    }
    accumulated_ = 0;
}

bool EncoderGrad::congruent_with(const Encoder& enc) const {
    if (layers_.size() != enc.layers().size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight.rows() != enc.layers()[i].weight.rows() ||
            layers_[i].weight.cols() != enc.layers()[i].weight.cols()) {
            return false;
        }
    }
    return true;
}

std::vector<std::span<const double>> EncoderGrad::blocks() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers_) {
        out.push_back(l.weight.span());
        out.push_back(l.bias.span());
    }
    return out;
}

std::vector<double> EncoderGrad::flat() const {
    std::vector<double> f;
    for (const auto& b : blocks()) f.insert(f.end(), b.begin(), b.end());
    return f;
}

void EncoderGrad::scale(double s) {
    for (auto& l : layers_) {
        for (auto& v : l.weight.span()) v *= s;
        for (auto& v : l.bias) v *= s;
    }
}

}  // namespace modir
