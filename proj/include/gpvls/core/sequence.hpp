#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace gpvls::core {

/// Token ids plus a per-token flag marking answer (prediction) tokens.
struct TextSequence {
    std::vector<int> token_ids;
    std::vector<bool> role_mask;

    std::size_t size() const noexcept { return token_ids.size(); }
    /// Throws ValidationError if lengths differ, the sequence is empty, or an id is out of range.
    void validate(std::size_t vocab_size) const;
};

/// Byte-level tokenizer: one token per UTF-8 byte.
TextSequence tokenize_bytes(std::string_view text, bool answer);
std::string detokenize_bytes(const std::vector<int>& ids);

/// End-of-answer marker appended to answers during training and used to stop decoding.
inline constexpr int kEndOfAnswer = 0;

enum class SlotKind : std::uint8_t { Text, Visual };

/// One position of a multimodal sequence: a text token id or a row of the visual tokens.
struct Slot {
    SlotKind kind;
    int index;

    friend bool operator==(const Slot&, const Slot&) = default;
};

/// Interleaved text/visual layout with the answer-token loss mask.
struct InstructionSequence {
    std::vector<Slot> slots;
    std::vector<bool> loss_mask;

    std::size_t size() const noexcept { return slots.size(); }
    std::size_t masked_count() const;
    friend bool operator==(const InstructionSequence&, const InstructionSequence&) = default;
};

struct ConversationTurn {
    TextSequence question;
    TextSequence answer;
};

enum class FirstTurnOrder : std::uint8_t { QuestionThenVisual, VisualThenQuestion };

/// Draws a first-turn order with probability 1/2 each from the top bit of one rng output.
FirstTurnOrder draw_first_turn_order(std::mt19937_64& rng);

/// Turn 1 instruction is [X_q, X_v] or [X_v, X_q]; later turns use X_q alone. Each
/// instruction is followed by its answer, and only answer positions are masked in.
InstructionSequence build_instruction_sequence(const std::vector<ConversationTurn>& conversation,
                                               std::size_t visual_count, FirstTurnOrder order);

InstructionSequence build_instruction_sequence(const std::vector<ConversationTurn>& conversation,
                                               std::size_t visual_count, std::mt19937_64& rng);

/// Visual tokens as a prefix followed by the text sequence, masked per role_mask.
InstructionSequence prefix_layout(const TextSequence& text, std::size_t visual_count);

}  // namespace gpvls::core
