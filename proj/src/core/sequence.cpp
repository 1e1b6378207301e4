#include "gpvls/core/sequence.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "gpvls/errors.hpp"

namespace gpvls::core {

void TextSequence::validate(std::size_t vocab_size) const {
    if (token_ids.empty()) throw ValidationError("text sequence is empty");
    if (token_ids.size() != role_mask.size()) {
        throw ValidationError("text sequence: token_ids and role_mask lengths differ");
    }
    for (int id : token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
            throw ValidationError(fmt::format("token id {} outside vocabulary of {}", id, vocab_size));
        }
    }
}

TextSequence tokenize_bytes(std::string_view text, bool answer) {
    TextSequence seq;
    seq.token_ids.reserve(text.size());
    for (unsigned char c : text) seq.token_ids.push_back(c);
    seq.role_mask.assign(seq.token_ids.size(), answer);
    return seq;
}

std::string detokenize_bytes(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    return out;
}

std::size_t InstructionSequence::masked_count() const {
    return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), true));
}

FirstTurnOrder draw_first_turn_order(std::mt19937_64& rng) {
    return (rng() >> 63) == 0 ? FirstTurnOrder::QuestionThenVisual : FirstTurnOrder::VisualThenQuestion;
}

namespace {

void append_text(InstructionSequence& seq, const TextSequence& text, bool masked) {
    for (int id : text.token_ids) {
        seq.slots.push_back({SlotKind::Text, id});
        seq.loss_mask.push_back(masked);
    }
}

void append_visual(InstructionSequence& seq, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
        seq.slots.push_back({SlotKind::Visual, static_cast<int>(k)});
        seq.loss_mask.push_back(false);
    }
}

}  // namespace

InstructionSequence build_instruction_sequence(const std::vector<ConversationTurn>& conversation,
                                               std::size_t visual_count, FirstTurnOrder order) {
    if (conversation.empty()) throw ValidationError("conversation has no turns");
    InstructionSequence seq;
    for (std::size_t t = 0; t < conversation.size(); ++t) {
        const auto& turn = conversation[t];
        if (t == 0 && order == FirstTurnOrder::VisualThenQuestion) append_visual(seq, visual_count);
        append_text(seq, turn.question, false);
        if (t == 0 && order == FirstTurnOrder::QuestionThenVisual) append_visual(seq, visual_count);
        append_text(seq, turn.answer, true);
    }
    return seq;
}

InstructionSequence build_instruction_sequence(const std::vector<ConversationTurn>& conversation,
                                               std::size_t visual_count, std::mt19937_64& rng) {
    if (conversation.empty()) throw ValidationError("conversation has no turns");
    return build_instruction_sequence(conversation, visual_count, draw_first_turn_order(rng));
}

InstructionSequence prefix_layout(const TextSequence& text, std::size_t visual_count) {
    if (text.token_ids.size() != text.role_mask.size()) {
        throw ValidationError("text sequence: token_ids and role_mask lengths differ");
    }
    InstructionSequence seq;
    append_visual(seq, visual_count);
    for (std::size_t i = 0; i < text.size(); ++i) {
        seq.slots.push_back({SlotKind::Text, text.token_ids[i]});
        seq.loss_mask.push_back(text.role_mask[i]);
    }
    return seq;
}

}  // namespace gpvls::core
