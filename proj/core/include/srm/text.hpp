#pragma once

#include <string>
#include <vector>

#include "srm/errors.hpp"
#include "srm/relation_graph.hpp"

namespace srm {

// Word-level vocabulary with fixed reserved ids for the special tokens.
class Vocabulary {
public:
    static constexpr int kCls = 0;
    static constexpr int kImg = 1;
    static constexpr int kSep = 2;
    static constexpr int kMask = 3;
    static constexpr int kPad = 4;
    static constexpr int kUnk = 5;
    static constexpr int kReservedCount = 6;

    Vocabulary();

    // Returns the id (existing or newly assigned).
    int add(const std::string& word);
    // [UNK] for unknown words.
    int id(const std::string& word) const;
    const std::string& word(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    std::vector<int> tokenize(const std::vector<std::string>& words) const;

    // One word per line; line number = id - reserved count.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> words_;  // index = id
};

// Joint text+visual input layout: [CLS] question answer [IMG] v_0..v_{k-1} [SEP].
// Type ids: question 0, answer 1, visual 2 ([CLS] takes 0, [IMG]/[SEP] take 2).
// Text-region slots (including the specials) carry sequence positions; visual
// slots are positioned only through their box projections.
struct TokenSequence {
    std::vector<int> ids;            // token id, -1 on visual slots
    std::vector<int> type_ids;
    std::vector<int> text_positions; // -1 on visual slots
    std::vector<int> object_index;   // object id on visual slots, -1 otherwise
    std::vector<std::uint8_t> is_visual;
    std::vector<std::uint8_t> is_word;  // maskable text tokens (not specials)
    std::vector<std::uint8_t> attend;   // attention key mask, 0 = hidden ([PAD])
    int img_slot = -1;

    int length() const { return static_cast<int>(ids.size()); }
    std::vector<int> visual_slots() const;
    std::vector<int> word_slots() const;
};

struct SequenceLimits {
    int max_text_tokens = 64;
    int max_visual_regions = 16;
};

TokenSequence encode_sequence(const Vocabulary& vocab,
                              const std::vector<int>& question_ids,
                              const std::vector<int>& answer_ids,
                              const Scene& scene,
                              const SequenceLimits& limits = {});

}  // namespace srm
