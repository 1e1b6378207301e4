#include "gpvls/adapters/toy.hpp"

#include <chrono>

#include <fmt/core.h>

#include "gpvls/core/checkpoint.hpp"
#include "gpvls/core/sequence.hpp"

namespace gpvls::adapters {

core::InstructionSequence toy_prompt(const std::string& question, std::size_t visual_count) {
    core::ConversationTurn turn{core::tokenize_bytes(question, false), core::TextSequence{}};
    return core::build_instruction_sequence({turn}, visual_count, core::FirstTurnOrder::QuestionThenVisual);
}

core::VisualFeatures toy_features(const core::ModelConfig& config, const std::filesystem::path& image) {
    return core::encode_image(core::read_netpbm(image), config.patch_size, config.d_v, config.encoder_seed);
}

ToyAdapter::ToyAdapter(std::string name, std::filesystem::path checkpoint, std::filesystem::path image_root)
    : name_(std::move(name)), checkpoint_(std::move(checkpoint)), image_root_(std::move(image_root)) {}

const core::ModelParams& ToyAdapter::params() {
    std::lock_guard lock(load_mutex_);
    if (!params_) {
        try {
            params_ = std::make_shared<const core::ModelParams>(core::load_checkpoint(checkpoint_).params);
        } catch (const Error& e) {
            throw AdapterError(FailureKind::Load, fmt::format("cannot load {}: {}", checkpoint_.string(), e.what()));
        }
    }
    return *params_;
}

Reply ToyAdapter::query(const Query& q) {
    const auto start = std::chrono::steady_clock::now();
    const core::ModelParams& p = params();
    core::VisualTokens visual;
    visual.tokens = core::Matrix(0, p.config.d_t);
    if (q.image_ref) {
        try {
            visual = core::project_visual(p.projection, toy_features(p.config, image_root_ / *q.image_ref));
        } catch (const Error& e) {
            throw AdapterError(FailureKind::Input, fmt::format("image {}: {}", *q.image_ref, e.what()));
        }
    }
    const auto prompt = toy_prompt(q.prompt, visual.tokens.rows());
    const auto ids = core::greedy_decode(p, visual, prompt, static_cast<std::size_t>(std::max(q.max_tokens, 0)));
    Reply r;
    r.text = core::detokenize_bytes(ids);
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    r.token_usage = TokenUsage{static_cast<long long>(prompt.size()), static_cast<long long>(ids.size())};
    return r;
}

Health ToyAdapter::probe() {
    try {
        params();
        return {true, std::nullopt, "ok"};
    } catch (const AdapterError& e) {
        return {false, e.kind(), e.what()};
    }
}

}  // namespace gpvls::adapters
