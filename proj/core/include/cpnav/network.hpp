#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cpnav/command.hpp"
#include "cpnav/ops.hpp"
#include "cpnav/tensor.hpp"

namespace cpnav {

enum class LayerKind { Conv2d, Relu, MaxPool2d, Flatten, Dense, Softmax };

std::string_view layer_kind_name(LayerKind kind) noexcept;

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int kernel_h = 0, kernel_w = 0;
    int stride = 1;
    int pad = 0;
    int in_channels = 0, out_channels = 0;  // conv2d
    int in_dim = 0, out_dim = 0;            // dense
    double lr_mult = 1.0;                   // 0 freezes the layer

    bool has_params() const noexcept { return kind == LayerKind::Conv2d || kind == LayerKind::Dense; }
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

LayerSpec conv_spec(int in_channels, int out_channels, int kernel, int stride, int pad);
LayerSpec pool_spec(int kernel, int stride);
LayerSpec dense_spec(int in_dim, int out_dim);
LayerSpec simple_spec(LayerKind kind);  // relu / flatten / softmax

// weights+bias for conv/dense; both empty for parameter-free layers.
struct LayerParams {
    Tensor weights;
    Tensor bias;

    std::size_t count() const noexcept { return weights.size() + bias.size(); }
    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

using LayerCache = std::variant<std::monostate, ops::ConvCache<float>, ops::PoolCache, Tensor /*input*/, Shape>;

// Per-forward intermediate state. Owned by the caller so a trained network
// can serve concurrent forward passes.
struct ForwardTape {
    std::vector<LayerCache> caches;
};

using Gradients = std::vector<LayerParams>;

class Network {
public:
    Network(Shape input_shape, std::vector<std::string> class_names, std::vector<LayerSpec> layers,
            std::vector<LayerParams> params);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    int num_classes() const noexcept { return static_cast<int>(class_names_.size()); }
    std::size_t num_layers() const noexcept { return layers_.size(); }

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
    const LayerParams& params(std::size_t i) const { return params_.at(i); }
    LayerParams& mutable_params(std::size_t i) { return params_.at(i); }
    const std::vector<LayerParams>& all_params() const noexcept { return params_; }

    void set_lr_mult(std::size_t i, double lr_mult);

    // Shape after each layer, in order.
    std::vector<Shape> output_shapes() const;
    std::size_t parameter_count() const noexcept;

    Gradients zero_gradients() const;

    /// Logits (or whatever the last layer emits). When `tape` is given the
    /// per-layer caches required by backward() are recorded into it.
    Tensor forward(const Tensor& input, ForwardTape* tape = nullptr) const;

    /// Back-propagates `out_grad` through a recorded tape. Parameter
    /// gradients are accumulated into `grads` when it is non-null. Returns
    /// the gradient with respect to the network input.
    Tensor backward(const ForwardTape& tape, const Tensor& out_grad, Gradients* grads) const;

    friend bool operator==(const Network&, const Network&) = default;

private:
    void validate() const;

    Shape input_shape_;
    std::vector<std::string> class_names_;
    std::vector<LayerSpec> layers_;
    std::vector<LayerParams> params_;
};

std::vector<std::string> command_class_names();

/// Desk-scale five-conv / three-dense classifier over (C,H,W) frames.
/// Weights are drawn from U(+-sqrt(6/(fan_in+fan_out))) with one child
/// stream per layer; biases start at zero.
Network build_micronet(Shape input_shape = {3, 64, 64}, std::uint64_t seed = 0,
                       std::vector<std::string> class_names = command_class_names());

/// Reinitialises the final dense layer with `num_classes` outputs and the
/// given learning-rate multiplier. Every other parameter is copied bitwise.
Network replace_head(const Network& network, int num_classes = kNumCommands, double head_lr_mult = 10.0,
                     std::uint64_t seed = 0);

// Index of the final dense layer; throws DomainError if there is none.
std::size_t head_layer_index(const Network& network);

struct Prediction {
    FlightCommand command = FlightCommand::MoveForward;
    double confidence = 0.0;
    std::vector<double> distribution;
};

// Argmax with lowest-index tie-break over a probability vector.
Prediction prediction_from_distribution(std::span<const double> distribution);

Prediction predict(const Network& network, const Tensor& image);

// Raw pre-softmax class scores.
Tensor class_scores(const Network& network, const Tensor& image);

// Gradient of one pre-softmax class score with respect to the input image.
// Network parameters are not touched.
struct ScoreGradient {
    double score = 0.0;
    Tensor input_grad;
};
ScoreGradient class_score_gradient(const Network& network, const Tensor& image, int class_id);

// ------------------------------------------------------------------ SGD

/// v <- momentum * v + grad ; p <- p - lr * v. Skips the write entirely when
/// lr == 0 so frozen tensors stay bitwise intact.
void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity, double lr,
              double momentum);

class SgdMomentum {
public:
    explicit SgdMomentum(double momentum = 0.9);

    // Per-layer effective rate = base_lr * lr_mult.
    void step(Network& network, const Gradients& grads, double base_lr);

    double momentum() const noexcept { return momentum_; }

private:
    double momentum_;
    Gradients velocity_;
};

}  // namespace cpnav
