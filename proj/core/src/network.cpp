#include "cpnav/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpnav/rng.hpp"

namespace cpnav {

std::string_view layer_kind_name(LayerKind kind) noexcept {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

LayerSpec conv_spec(int in_channels, int out_channels, int kernel, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec pool_spec(int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = stride;
    return s;
}

LayerSpec dense_spec(int in_dim, int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_dim = in_dim;
    s.out_dim = out_dim;
    return s;
}

LayerSpec simple_spec(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    return s;
}

namespace {

Shape layer_output_shape(const LayerSpec& s, const Shape& in) {
    switch (s.kind) {
        case LayerKind::Conv2d:
            if (in.size() != 3 || in[0] != s.in_channels)
                throw DimensionError("conv2d expects " + std::to_string(s.in_channels) + " channels, got " + shape_str(in));
            if (s.kernel_h != s.kernel_w)
                throw DimensionError("only square kernels are supported");
            return {s.out_channels, ops::conv_out_extent(in[1], s.kernel_h, s.stride, s.pad),
                    ops::conv_out_extent(in[2], s.kernel_w, s.stride, s.pad)};
        case LayerKind::MaxPool2d:
            if (in.size() != 3) throw DimensionError("maxpool2d expects (C,H,W), got " + shape_str(in));
            return {in[0], ops::conv_out_extent(in[1], s.kernel_h, s.stride, 0),
                    ops::conv_out_extent(in[2], s.kernel_w, s.stride, 0)};
        case LayerKind::Flatten: return {static_cast<int>(shape_size(in))};
        case LayerKind::Dense:
            if (shape_size(in) != static_cast<std::size_t>(s.in_dim))
                throw DimensionError("dense expects " + std::to_string(s.in_dim) + " inputs, got " + shape_str(in));
            return {s.out_dim};
        case LayerKind::Relu:
        case LayerKind::Softmax: return in;
    }
    return in;
}

Shape expected_weight_shape(const LayerSpec& s) {
    if (s.kind == LayerKind::Conv2d) return {s.out_channels, s.in_channels, s.kernel_h, s.kernel_w};
    return {s.out_dim, s.in_dim};
}

int expected_bias_len(const LayerSpec& s) { return s.kind == LayerKind::Conv2d ? s.out_channels : s.out_dim; }

LayerParams init_params(const LayerSpec& s, std::uint64_t seed) {
    LayerParams p{Tensor(expected_weight_shape(s)), Tensor({expected_bias_len(s)})};
    double fan_in = 0, fan_out = 0;
    if (s.kind == LayerKind::Conv2d) {
        fan_in = static_cast<double>(s.in_channels) * s.kernel_h * s.kernel_w;
        fan_out = static_cast<double>(s.out_channels) * s.kernel_h * s.kernel_w;
    } else {
        fan_in = s.in_dim;
        fan_out = s.out_dim;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(seed);
    for (float& w : p.weights.data()) w = static_cast<float>(rng.uniform(-limit, limit));
    return p;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<std::string> class_names, std::vector<LayerSpec> layers,
                 std::vector<LayerParams> params)
    : input_shape_(std::move(input_shape)),
      class_names_(std::move(class_names)),
      layers_(std::move(layers)),
      params_(std::move(params)) {
    validate();
}

void Network::validate() const {
    if (layers_.empty()) throw DimensionError("network has no layers");
    if (params_.size() != layers_.size()) throw DimensionError("one parameter slot per layer required");
    Shape shape = input_shape_;
    if (shape_size(shape) == 0) throw DimensionError("empty input shape");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& s = layers_[i];
        if (!(s.lr_mult >= 0.0)) throw DomainError("lr_mult must be non-negative");
        shape = layer_output_shape(s, shape);
        if (s.has_params()) {
            if (params_[i].weights.shape() != expected_weight_shape(s) ||
                params_[i].bias.shape() != Shape{expected_bias_len(s)})
                throw DimensionError("parameter shapes of layer " + std::to_string(i) + " do not match its spec");
        } else if (!params_[i].weights.empty() || !params_[i].bias.empty()) {
            throw DimensionError("parameter-free layer " + std::to_string(i) + " carries parameters");
        }
    }
    if (!class_names_.empty() && shape_size(shape) != class_names_.size())
        throw DimensionError("network emits " + std::to_string(shape_size(shape)) + " values for " +
                             std::to_string(class_names_.size()) + " classes");
}

void Network::set_lr_mult(std::size_t i, double lr_mult) {
    if (!(lr_mult >= 0.0)) throw DomainError("lr_mult must be non-negative");
    layers_.at(i).lr_mult = lr_mult;
}

std::vector<Shape> Network::output_shapes() const {
    std::vector<Shape> out;
    Shape shape = input_shape_;
    for (const LayerSpec& s : layers_) {
        shape = layer_output_shape(s, shape);
        out.push_back(shape);
    }
    return out;
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const LayerParams& p : params_) n += p.count();
    return n;
}

Gradients Network::zero_gradients() const {
    Gradients g;
    g.reserve(params_.size());
    for (const LayerParams& p : params_) {
        LayerParams z;
        if (!p.weights.empty()) z.weights = Tensor(p.weights.shape());
        if (!p.bias.empty()) z.bias = Tensor(p.bias.shape());
        g.push_back(std::move(z));
    }
    return g;
}

Tensor Network::forward(const Tensor& input, ForwardTape* tape) const {
    if (input.shape() != input_shape_)
        throw DimensionError("network input shape " + shape_str(input.shape()) + " != " + shape_str(input_shape_));
    if (tape) {
        tape->caches.clear();
        tape->caches.resize(layers_.size());
    }
    Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& s = layers_[i];
        const LayerParams& p = params_[i];
        LayerCache* cache = tape ? &tape->caches[i] : nullptr;
        switch (s.kind) {
            case LayerKind::Conv2d: {
                ops::ConvCache<float> cc;
                x = ops::conv2d_forward(x, p.weights, p.bias, s.stride, s.pad, cache ? &cc : nullptr);
                if (cache) *cache = std::move(cc);
                break;
            }
            case LayerKind::Relu: {
                Tensor y = ops::relu_forward(x);
                if (cache) *cache = std::move(x);
                x = std::move(y);
                break;
            }
            case LayerKind::MaxPool2d: {
                ops::PoolCache pc;
                x = ops::maxpool2d_forward(x, s.kernel_h, s.stride, cache ? &pc : nullptr);
                if (cache) *cache = std::move(pc);
                break;
            }
            case LayerKind::Flatten: {
                if (cache) *cache = x.shape();
                x = x.reshaped({static_cast<int>(x.size())});
                break;
            }
            case LayerKind::Dense: {
                Tensor y = ops::dense_forward(x, p.weights, p.bias);
                if (cache) *cache = std::move(x);
                x = std::move(y);
                break;
            }
            case LayerKind::Softmax: {
                x = ops::softmax(x);
                if (cache) *cache = x;
                break;
            }
        }
    }
    require_finite(x, "network output");
    return x;
}

namespace {

template <typename C>
const C& cache_as(const ForwardTape& tape, std::size_t i, const char* kind) {
    if (i >= tape.caches.size()) throw StateError(std::string("no forward cache for ") + kind + " layer");
    const C* c = std::get_if<C>(&tape.caches[i]);
    if (!c) throw StateError(std::string("no forward cache for ") + kind + " layer");
    return *c;
}

void accumulate(Tensor& into, const Tensor& add) {
    auto dst = into.data();
    auto src = add.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

Tensor Network::backward(const ForwardTape& tape, const Tensor& out_grad, Gradients* grads) const {
    if (tape.caches.size() != layers_.size()) throw StateError("backward called without a matching forward tape");
    if (grads && grads->size() != layers_.size()) throw DimensionError("gradient buffer does not match network");
    Tensor g = out_grad;
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
        const LayerSpec& s = layers_[idx];
        const LayerParams& p = params_[idx];
        switch (s.kind) {
            case LayerKind::Conv2d: {
                const auto& cc = cache_as<ops::ConvCache<float>>(tape, idx, "conv2d");
                ops::ConvGrads<float> cg = ops::conv2d_backward(g, cc, p.weights);
                if (grads) {
                    accumulate((*grads)[idx].weights, cg.weights);
                    accumulate((*grads)[idx].bias, cg.bias);
                }
                g = std::move(cg.input);
                break;
            }
            case LayerKind::Relu: g = ops::relu_backward(g, cache_as<Tensor>(tape, idx, "relu")); break;
            case LayerKind::MaxPool2d: g = ops::maxpool2d_backward(g, cache_as<ops::PoolCache>(tape, idx, "maxpool2d")); break;
            case LayerKind::Flatten: g = g.reshaped(cache_as<Shape>(tape, idx, "flatten")); break;
            case LayerKind::Dense: {
                const Tensor& in = cache_as<Tensor>(tape, idx, "dense");
                ops::DenseGrads<float> dg = ops::dense_backward(g, in, p.weights);
                if (grads) {
                    accumulate((*grads)[idx].weights, dg.weights);
                    accumulate((*grads)[idx].bias, dg.bias);
                }
                g = std::move(dg.input);
                break;
            }
            case LayerKind::Softmax: g = ops::softmax_backward(g, cache_as<Tensor>(tape, idx, "softmax")); break;
        }
    }
    require_finite(g, "input gradient");
    return g;
}

std::vector<std::string> command_class_names() {
    std::vector<std::string> names;
    for (FlightCommand c : kAllCommands) names.emplace_back(command_name(c));
    return names;
}

Network build_micronet(Shape input_shape, std::uint64_t seed, std::vector<std::string> class_names) {
    if (input_shape.size() != 3) throw DimensionError("micronet input must be (C,H,W)");
    if (input_shape[1] < 32 || input_shape[2] < 32)
        throw DimensionError("micronet input extents must be at least 32, got " + shape_str(input_shape));
    const int c = input_shape[0];
    std::vector<LayerSpec> layers = {
        conv_spec(c, 8, 5, 2, 2),        simple_spec(LayerKind::Relu), pool_spec(2, 2),
        conv_spec(8, 16, 3, 1, 1),       simple_spec(LayerKind::Relu), pool_spec(2, 2),
        conv_spec(16, 16, 3, 1, 1),      simple_spec(LayerKind::Relu),
        conv_spec(16, 16, 3, 1, 1),      simple_spec(LayerKind::Relu),
        conv_spec(16, 16, 3, 1, 1),      simple_spec(LayerKind::Relu), pool_spec(2, 2),
        simple_spec(LayerKind::Flatten),
    };
    // Flattened extent depends on the input size.
    Shape shape = input_shape;
    for (const LayerSpec& s : layers) shape = layer_output_shape(s, shape);
    const int flat = shape[0];
    const int out = static_cast<int>(class_names.size());
    layers.push_back(dense_spec(flat, 128));
    layers.push_back(simple_spec(LayerKind::Relu));
    layers.push_back(dense_spec(128, 64));
    layers.push_back(simple_spec(LayerKind::Relu));
    layers.push_back(dense_spec(64, out));

    std::vector<LayerParams> params;
    for (std::size_t i = 0; i < layers.size(); ++i)
        params.push_back(layers[i].has_params() ? init_params(layers[i], mix_seed(seed, i)) : LayerParams{});
    return Network(std::move(input_shape), std::move(class_names), std::move(layers), std::move(params));
}

std::size_t head_layer_index(const Network& network) {
    for (std::size_t i = network.num_layers(); i-- > 0;)
        if (network.layer(i).kind == LayerKind::Dense) return i;
    throw DomainError("network has no dense layer to replace");
}

Network replace_head(const Network& network, int num_classes, double head_lr_mult, std::uint64_t seed) {
    if (num_classes < 2) throw DomainError("replace_head needs at least 2 classes");
    if (!(head_lr_mult >= 0.0)) throw DomainError("head lr_mult must be non-negative");
    const std::size_t head = head_layer_index(network);
    std::vector<LayerSpec> layers = network.layers();
    std::vector<LayerParams> params = network.all_params();
    layers[head].out_dim = num_classes;
    layers[head].lr_mult = head_lr_mult;
    params[head] = init_params(layers[head], mix_seed(seed, head));

    std::vector<std::string> names;
    if (num_classes == kNumCommands) {
        names = command_class_names();
    } else {
        for (int i = 0; i < num_classes; ++i) names.push_back("class_" + std::to_string(i));
    }
    return Network(network.input_shape(), std::move(names), std::move(layers), std::move(params));
}

Prediction prediction_from_distribution(std::span<const double> distribution) {
    if (distribution.size() != static_cast<std::size_t>(kNumCommands))
        throw DimensionError("a flight prediction needs " + std::to_string(kNumCommands) + " probabilities");
    Prediction p;
    p.distribution.assign(distribution.begin(), distribution.end());
    std::size_t best = 0;
    for (std::size_t i = 1; i < distribution.size(); ++i)
        if (distribution[i] > distribution[best]) best = i;
    p.command = command_from_index(static_cast<int>(best));
    p.confidence = distribution[best];
    return p;
}

Tensor class_scores(const Network& network, const Tensor& image) {
    Tensor logits = network.forward(image);
    if (!network.layers().empty() && network.layers().back().kind == LayerKind::Softmax)
        throw DomainError("class scores requested from a network that ends in softmax");
    return logits;
}

Prediction predict(const Network& network, const Tensor& image) {
    const Tensor logits = class_scores(network, image);
    // Softmax in double so the distribution sums to one tightly.
    const Tensor64 probs = ops::softmax(logits.cast<double>());
    return prediction_from_distribution(probs.values());
}

ScoreGradient class_score_gradient(const Network& network, const Tensor& image, int class_id) {
    ForwardTape tape;
    const Tensor logits = network.forward(image, &tape);
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= logits.size())
        throw DomainError("class id " + std::to_string(class_id) + " out of range");
    Tensor seed(logits.shape());
    seed[static_cast<std::size_t>(class_id)] = 1.0f;
    ScoreGradient sg;
    sg.score = logits[static_cast<std::size_t>(class_id)];
    sg.input_grad = network.backward(tape, seed, nullptr);
    return sg;
}

void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity, double lr,
              double momentum) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw DimensionError("sgd_step: params, grads and velocity lengths differ");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0,1)");
    const float m = static_cast<float>(momentum);
    for (std::size_t i = 0; i < params.size(); ++i) velocity[i] = m * velocity[i] + grads[i];
    if (lr == 0.0) return;
    const float r = static_cast<float>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= r * velocity[i];
}

SgdMomentum::SgdMomentum(double momentum) : momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0,1)");
}

void SgdMomentum::step(Network& network, const Gradients& grads, double base_lr) {
    if (grads.size() != network.num_layers()) throw DimensionError("gradient list does not match network");
    if (velocity_.size() != network.num_layers()) velocity_ = network.zero_gradients();
    for (std::size_t i = 0; i < network.num_layers(); ++i) {
        if (!network.layer(i).has_params()) continue;
        const double lr = base_lr * network.layer(i).lr_mult;
        LayerParams& p = network.mutable_params(i);
        if (velocity_[i].weights.shape() != p.weights.shape()) velocity_[i] = network.zero_gradients()[i];
        sgd_step(p.weights.data(), grads[i].weights.data(), velocity_[i].weights.data(), lr, momentum_);
        sgd_step(p.bias.data(), grads[i].bias.data(), velocity_[i].bias.data(), lr, momentum_);
    }
}

}  // namespace cpnav
