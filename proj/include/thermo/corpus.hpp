#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermo/vocab.hpp"

namespace thermo {

/// One labeled training/explanation example, as stored in corpus JSONL files.
struct LabeledText {
    std::string text;
    int label = 0;

    friend bool operator==(const LabeledText&, const LabeledText&) = default;
};

// Corpus files are JSON Lines: {"text": string, "label": int} per line.
inline std::vector<LabeledText> load_corpus_jsonl(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open corpus file " + file.string());
    }
    std::vector<LabeledText> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            corpus.push_back({j.at("text").get<std::string>(), j.at("label").get<int>()});
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(file.string() + " line " + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
    return corpus;
}

inline void save_corpus_jsonl(const std::vector<LabeledText>& corpus,
                              const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write corpus file " + file.string());
    }
    for (const auto& item : corpus) {
        nlohmann::json j;
        j["text"] = item.text;
        j["label"] = item.label;
        out << j.dump() << '\n';
    }
}

// Reserved tokens first, then corpus tokens in first-appearance order.
inline Vocab build_vocab(const std::vector<LabeledText>& corpus) {
    Vocab vocab = Vocab::with_reserved();
    for (const auto& item : corpus) {
        for (const auto& word : split_words(item.text)) {
            vocab.add(lowercase_ascii(word));
        }
    }
    return vocab;
}

} // namespace thermo
