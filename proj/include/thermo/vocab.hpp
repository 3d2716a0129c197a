#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace thermo {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

/// Token <-> id table with four reserved ids. Ids are dense in [0, size()).
class Vocab {
public:
    // Fresh vocabulary holding only [PAD]=0, [UNK]=1, [CLS]=2, [SEP]=3.
    static Vocab with_reserved() {
        Vocab v;
        v.add(kPadToken);
        v.add(kUnkToken);
        v.add(kClsToken);
        v.add(kSepToken);
        return v;
    }

    // Rebuild from an id-ordered token list plus reserved-id assignments.
    static Vocab from_tokens(std::vector<std::string> tokens,
                             TokenId pad, TokenId unk, TokenId cls, TokenId sep) {
        Vocab v;
        for (auto& t : tokens) {
            if (t.empty()) {
                throw std::invalid_argument("vocab: empty token string");
            }
            if (v.token_to_id_.count(t) != 0) {
                throw std::invalid_argument("vocab: duplicate token '" + t + "'");
            }
            v.token_to_id_.emplace(t, static_cast<TokenId>(v.id_to_token_.size()));
            v.id_to_token_.push_back(std::move(t));
        }
        const auto n = static_cast<TokenId>(v.id_to_token_.size());
        for (TokenId id : {pad, unk, cls, sep}) {
            if (id < 0 || id >= n) {
                throw std::invalid_argument("vocab: reserved id out of range");
            }
        }
        if (pad == unk || pad == cls || pad == sep || unk == cls || unk == sep || cls == sep) {
            throw std::invalid_argument("vocab: reserved ids must be pairwise distinct");
        }
        v.pad_ = pad;
        v.unk_ = unk;
        v.cls_ = cls;
        v.sep_ = sep;
        return v;
    }

    // Returns the existing id if the token is already present.
    TokenId add(std::string token) {
        if (token.empty()) {
            throw std::invalid_argument("vocab: empty token string");
        }
        if (auto it = token_to_id_.find(token); it != token_to_id_.end()) {
            return it->second;
        }
        const auto id = static_cast<TokenId>(id_to_token_.size());
        token_to_id_.emplace(token, id);
        id_to_token_.push_back(std::move(token));
        return id;
    }

    std::optional<TokenId> lookup(std::string_view token) const {
        auto it = token_to_id_.find(std::string(token));
        return it == token_to_id_.end() ? std::nullopt : std::optional<TokenId>(it->second);
    }

    const std::string& token(TokenId id) const {
        if (!contains(id)) {
            throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
        }
        return id_to_token_[static_cast<std::size_t>(id)];
    }

    bool contains(TokenId id) const noexcept {
        return id >= 0 && static_cast<std::size_t>(id) < id_to_token_.size();
    }

    std::size_t size() const noexcept { return id_to_token_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

    TokenId pad_id() const noexcept { return pad_; }
    TokenId unk_id() const noexcept { return unk_; }
    TokenId cls_id() const noexcept { return cls_; }
    TokenId sep_id() const noexcept { return sep_; }

    friend bool operator==(const Vocab& a, const Vocab& b) {
        return a.id_to_token_ == b.id_to_token_ && a.pad_ == b.pad_ &&
               a.unk_ == b.unk_ && a.cls_ == b.cls_ && a.sep_ == b.sep_;
    }

private:
    Vocab() = default;

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
    TokenId pad_ = 0;
    TokenId unk_ = 1;
    TokenId cls_ = 2;
    TokenId sep_ = 3;
};

inline std::string lowercase_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (i > start) {
            words.emplace_back(text.substr(start, i - start));
        }
    }
    return words;
}

// Lowercased whitespace tokenization wrapped as [CLS] ... [SEP].
// Unknown words map to unk_id; empty text yields [cls, sep].
inline TokenSequence tokenize(std::string_view text, const Vocab& vocab) {
    if (vocab.size() == 0) {
        throw std::invalid_argument("tokenize: empty vocab");
    }
    TokenSequence ids;
    const auto words = split_words(text);
    ids.reserve(words.size() + 2);
    ids.push_back(vocab.cls_id());
    for (const auto& w : words) {
        const auto id = vocab.lookup(lowercase_ascii(w));
        ids.push_back(id ? *id : vocab.unk_id());
    }
    ids.push_back(vocab.sep_id());
    return ids;
}

} // namespace thermo
