#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpvls/core/sequence.hpp"
#include "gpvls/core/tensor.hpp"
#include "gpvls/core/vision.hpp"

namespace gpvls::core {

/// Hyperparameters of the toy decoder. Defaults are the desk-scale configuration.
struct ModelConfig {
    std::size_t patch_size = 16;
    std::size_t channels = 3;
    std::size_t d_v = 32;
    std::size_t d_t = 32;
    std::size_t vocab_size = 256;
    std::size_t n_heads = 2;
    std::size_t d_ff = 128;
    std::uint64_t encoder_seed = kDefaultEncoderSeed;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// theta: every trainable tensor plus the seed that produced the initial values.
///
/// The decoder is one causal self-attention block with residual MLP and an untied output
/// head. Decoder tensors are keyed by name:
///   attn.wq, attn.wk, attn.wv, attn.wo   [d_t x d_t]
///   mlp.w1 [d_t x d_ff], mlp.b1 [1 x d_ff], mlp.w2 [d_ff x d_t], mlp.b2 [1 x d_t]
///   head.w [d_t x vocab], head.b [1 x vocab]
struct ModelParams {
    ModelConfig config;
    Matrix token_embedding;       // [vocab x d_t]
    ProjectionMatrix projection;  // [d_t x d_v]
    std::map<std::string, Matrix> decoder;
    std::uint64_t rng_seed = 0;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Every trainable tensor in a fixed order: token_embedding, projection, decoder.* by name.
std::vector<std::pair<std::string, Matrix*>> named_tensors(ModelParams& params);
std::vector<std::pair<std::string, const Matrix*>> named_tensors(const ModelParams& params);

/// Checks tensor shapes against the config and that all entries are finite.
void validate_params(const ModelParams& params);

/// Gradients keyed by the names produced by named_tensors().
using Gradients = std::map<std::string, Matrix>;

/// Inputs for one training sequence. Features are projected inside the model so W is trained.
struct TrainingExample {
    VisualFeatures visual;
    InstructionSequence sequence;
};

/// log p(x_i | x_<i) for every position whose slot is a text token (i >= 1); 0 elsewhere.
/// Position i's value depends only on slots 0..i.
std::vector<double> position_log_probs(const ModelParams& params, const VisualTokens& visual,
                                       const InstructionSequence& sequence);

struct LogLikelihood {
    double value = 0.0;
    std::size_t masked_positions = 0;
    /// Set when the mask selected no position; value is 0 in that case.
    bool empty_mask = false;
};

/// Sum of log p_theta(x_i | X_v, X_instruct, x_<i) over masked positions.
LogLikelihood sequence_log_likelihood(const ModelParams& params, const VisualTokens& visual,
                                      const InstructionSequence& sequence);
/// Text-only overload: visual tokens as a prefix, text masked per role_mask.
LogLikelihood sequence_log_likelihood(const ModelParams& params, const VisualTokens& visual,
                                      const TextSequence& sequence);

struct LossAndGradients {
    double loss = 0.0;  // nats per masked token
    std::size_t tokens = 0;
    Gradients gradients;
};

/// Mean negative log-likelihood per masked token over the batch.
double batch_loss(const ModelParams& params, std::span<const TrainingExample> batch);
LossAndGradients loss_and_gradients(const ModelParams& params, std::span<const TrainingExample> batch);

struct StepResult {
    ModelParams params;
    double loss = 0.0;  // loss before the update
};

/// One plain gradient-descent step. Throws TrainingError naming the offending tensor when
/// the loss or a gradient is non-finite.
StepResult training_step(const ModelParams& params, std::span<const TrainingExample> batch,
                         double learning_rate);

/// Adam behind the same step contract; state lives outside the params.
class AdamOptimizer {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    AdamOptimizer() = default;
    explicit AdamOptimizer(Options options) : options_(options) {}

    StepResult step(const ModelParams& params, std::span<const TrainingExample> batch,
                    double learning_rate);

    std::uint64_t steps() const noexcept { return steps_; }
    const Gradients& first_moment() const noexcept { return m_; }
    const Gradients& second_moment() const noexcept { return v_; }
    void restore(std::uint64_t steps, Gradients m, Gradients v);

private:
    Options options_;
    std::uint64_t steps_ = 0;
    Gradients m_;
    Gradients v_;
};

/// Greedy continuation of `prompt` until kEndOfAnswer or max_tokens.
std::vector<int> greedy_decode(const ModelParams& params, const VisualTokens& visual,
                               const InstructionSequence& prompt, std::size_t max_tokens);

}  // namespace gpvls::core
