#pragma once

#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "contagion/errors.hpp"

namespace contagion {

/// Whitespace-plus-punctuation tokenizer: maximal runs of [A-Za-z0-9_]
/// become one token, any other non-space character is its own token.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            flush();
        } else if (std::isalnum(u) || c == '_') {
            cur.push_back(c);
        } else {
            flush();
            tokens.push_back(std::string(1, c));
        }
    }
    flush();
    return tokens;
}

/// Inverse for word-token spans (entity labels carry no punctuation).
inline std::string detokenize(const std::vector<std::string>& tokens, std::size_t begin,
                              std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
        if (!out.empty()) out += ' ';
        out += tokens[i];
    }
    return out;
}

/// Dataset-derived vocabulary. Ids 0 and 1 are reserved for <unk> and
/// <sep>; remaining ids are assigned in first-seen order so a rebuilt
/// vocabulary from the same dataset is identical.
class Vocab {
public:
    static constexpr int kUnkId = 0;
    static constexpr int kSepId = 1;

    Vocab() {
        add("<unk>");
        add("<sep>");
    }

    int add(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        index_.emplace(token, id);
        return id;
    }

    /// Lookup; unknown tokens map to the reserved <unk> id.
    int encode(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnkId : it->second;
    }

    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        Vocab v;
        if (tokens.size() < 2 || tokens[0] != "<unk>" || tokens[1] != "<sep>")
            throw VocabMismatch("vocabulary must start with <unk>, <sep>");
        for (std::size_t i = 2; i < tokens.size(); ++i) v.add(tokens[i]);
        if (v.size() != static_cast<int>(tokens.size()))
            throw VocabMismatch("vocabulary contains duplicate tokens");
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

} // namespace contagion
