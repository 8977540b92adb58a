#include "srm/text.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace srm {

Vocabulary::Vocabulary()
    : words_{"[CLS]", "[IMG]", "[SEP]", "[MASK]", "[PAD]", "[UNK]"} {}

int Vocabulary::add(const std::string& word) {
    for (int i = 0; i < size(); ++i) {
        if (words_[i] == word) return i;
    }
    words_.push_back(word);
    return size() - 1;
}

int Vocabulary::id(const std::string& word) const {
    for (int i = 0; i < size(); ++i) {
        if (words_[i] == word) return i;
    }
    return kUnk;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) {
        throw ValidationError("token id out of range: " + std::to_string(id));
    }
    return words_[id];
}

std::vector<int> Vocabulary::tokenize(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open vocabulary file for writing: " + path);
    for (int i = kReservedCount; i < size(); ++i) {
        out << words_[i] << '\n';
    }
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) vocab.add(line);
    }
    return vocab;
}

std::vector<int> TokenSequence::visual_slots() const {
    std::vector<int> out;
    for (int s = 0; s < length(); ++s) {
        if (is_visual[s]) out.push_back(s);
    }
    return out;
}

std::vector<int> TokenSequence::word_slots() const {
    std::vector<int> out;
    for (int s = 0; s < length(); ++s) {
        if (is_word[s]) out.push_back(s);
    }
    return out;
}

TokenSequence encode_sequence(const Vocabulary& vocab,
                              const std::vector<int>& question_ids,
                              const std::vector<int>& answer_ids,
                              const Scene& scene,
                              const SequenceLimits& limits) {
    int text_count = static_cast<int>(question_ids.size() + answer_ids.size());
    if (text_count > limits.max_text_tokens) {
        std::ostringstream os;
        os << "text length " << text_count << " exceeds limit "
           << limits.max_text_tokens;
        throw ValidationError(os.str());
    }
    int n_obj = static_cast<int>(scene.objects.size());
    if (n_obj > limits.max_visual_regions) {
        std::ostringstream os;
        os << "region count " << n_obj << " exceeds limit "
           << limits.max_visual_regions;
        throw ValidationError(os.str());
    }
    for (int id : question_ids) vocab.word(id);  // range check
    for (int id : answer_ids) vocab.word(id);

    TokenSequence seq;
    int total = 1 + text_count + 1 + n_obj + 1;
    seq.ids.reserve(total);

    auto push_text = [&](int id, int type, int text_pos, bool word) {
        seq.ids.push_back(id);
        seq.type_ids.push_back(type);
        seq.text_positions.push_back(text_pos);
        seq.object_index.push_back(-1);
        seq.is_visual.push_back(0);
        seq.is_word.push_back(word ? 1 : 0);
        seq.attend.push_back(id == Vocabulary::kPad ? 0 : 1);
    };

    int pos = 0;
    push_text(Vocabulary::kCls, 0, pos++, false);
    for (int id : question_ids) push_text(id, 0, pos++, true);
    for (int id : answer_ids) push_text(id, 1, pos++, true);
    seq.img_slot = static_cast<int>(seq.ids.size());
    push_text(Vocabulary::kImg, 2, pos++, false);

    for (int i = 0; i < n_obj; ++i) {
        seq.ids.push_back(-1);
        seq.type_ids.push_back(2);
        seq.text_positions.push_back(-1);
        seq.object_index.push_back(i);
        seq.is_visual.push_back(1);
        seq.is_word.push_back(0);
        seq.attend.push_back(1);
    }
    push_text(Vocabulary::kSep, 2, pos++, false);
    return seq;
}

}  // namespace srm
