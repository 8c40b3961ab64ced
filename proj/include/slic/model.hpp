#pragma once

#include "slic/core.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace slic {

struct EncoderArch {
    int input_dim = 0;
    std::vector<int> backbone_dims = {256, 128};
    int head_hidden = 64;
    int embed_dim = 32;

    // [input_dim, backbone..., head_hidden, embed_dim]
    std::vector<int> layer_dims() const;
    int num_layers() const { return static_cast<int>(backbone_dims.size()) + 2; }
    void validate() const;

    bool operator==(const EncoderArch&) const = default;
};

// MLP backbone plus 2-layer projection head; ReLU between layers, linear
// output. The same parameters process every view (shared encoder).
struct Encoder {
    EncoderArch arch;
    std::vector<Matrix> weights; // layer l: [out_dim x in_dim]
    std::vector<Vec> biases;

    int backbone_layers() const { return static_cast<int>(arch.backbone_dims.size()); }
};

// Cached activations from one forward pass. acts[0] is the input; acts[l + 1]
// is the activation after layer l (post-ReLU except for the final layer).
struct ForwardTape {
    std::vector<Vec> acts;

    std::span<const double> output() const { return acts.back(); }
    std::span<const double> backbone_output(const Encoder& enc) const {
        return acts[enc.backbone_layers()];
    }
};

enum class EmbeddingTap { head, backbone };

ForwardTape forward(const Encoder& enc, std::span<const double> x);

struct Gradients {
    std::vector<Matrix> weight_grads;
    std::vector<Vec> bias_grads;

    static Gradients zeros_like(const Encoder& enc);
    void zero();
};

// Accumulates d(loss)/d(parameters) into `out` given d(loss)/d(output).
void backward(const Encoder& enc, const ForwardTape& tape, std::span<const double> output_grad,
              Gradients& out);

enum class LossKind { triplet, infonce };

struct LossConfig {
    double m1 = 0.2;
    double m2 = 0.04;
    double lambda = 1.0;
    LossKind kind = LossKind::triplet;
    double infonce_temperature = 0.1;

    void validate() const;
};

// max(0, d(a,p) - d(a,n) + margin) with d = cosine distance.
double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                    double margin);

// The same hinge with the augmented anchor as positive and a temporally
// distinct clip as negative; margin m2 < m1.
double temporal_loss(std::span<const double> x, std::span<const double> aug_x,
                     std::span<const double> temp_neg, double m2);

// Softmax cross-entropy over cosine similarities at the given temperature,
// computed with max-subtraction.
double infonce_loss(std::span<const double> anchor, std::span<const double> positive,
                    const Matrix& negatives, double temperature);

// mean(present instance losses) + lambda * mean(present temporal losses);
// absent entries are skipped triplets and drop out of the denominator.
double total_loss(std::span<const std::optional<double>> instance_losses,
                  std::span<const std::optional<double>> temporal_losses, double lambda);

// Gradient-emitting variants: the loss value is returned and
// weight * d(loss)/d(input) is accumulated into the matching grad spans.
double triplet_loss_grad(std::span<const double> a, std::span<const double> p,
                         std::span<const double> n, double margin, double weight,
                         std::span<double> ga, std::span<double> gp, std::span<double> gn);

double infonce_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                         const Matrix& negatives, double temperature, double weight,
                         std::span<double> ga, std::span<double> gp, Matrix& gnegs);

// d = cosine distance; accumulates weight * dd/da, weight * dd/db.
double cosine_distance_grad(std::span<const double> a, std::span<const double> b, double weight,
                            std::span<double> ga, std::span<double> gb);

struct OptState {
    double lr = 0.1;
    double momentum = 0.5;
    std::vector<Matrix> weight_momentum;
    std::vector<Vec> bias_momentum;

    static OptState make(const Encoder& enc, double lr, double momentum);
};

// buf <- momentum * buf + grad; param <- param - lr * buf. No weight decay.
void sgd_step(Encoder& enc, const Gradients& grads, OptState& opt);

// Uniform(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) weights, zero biases.
Encoder init_encoder(const EncoderArch& arch, RngStream& rng);

void save_encoder(const Encoder& enc, const std::filesystem::path& path, std::uint64_t seed,
                  int epoch);

struct LoadedEncoder {
    Encoder encoder;
    std::uint64_t seed = 0;
    int epoch = 0;
};

LoadedEncoder load_encoder(const std::filesystem::path& path);

} // namespace slic
