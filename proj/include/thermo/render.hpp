#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermo/hub.hpp"
#include "thermo/vocab.hpp"

namespace thermo {

// Scale scores into [-1, 1] by the maximum absolute value; all-zero input
// stays all-zero.
inline std::vector<double> normalize_scores(std::vector<double> scores) {
    double max_abs = 0.0;
    for (const double s : scores) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument("normalize_scores: non-finite score");
        }
        max_abs = std::max(max_abs, std::abs(s));
    }
    if (max_abs > 0.0) {
        for (double& s : scores) s /= max_abs;
    }
    return scores;
}

/// Token strings plus normalized scores, ready for rendering.
struct Heatmap {
    std::vector<std::string> tokens;
    std::vector<double> scores;  // in [-1, 1]
    std::string title;
};

namespace detail {

inline std::string escape_html(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string label_name(int label, const std::vector<std::string>& label_names) {
    if (label >= 0 && static_cast<std::size_t>(label) < label_names.size()) {
        return label_names[static_cast<std::size_t>(label)];
    }
    return std::to_string(label);
}

inline std::string opacity_string(double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace detail

inline Heatmap make_heatmap(const Instance& inst, const Vocab& vocab,
                            const std::vector<std::string>& label_names,
                            const std::string& coordinate) {
    if (inst.attributions.size() != inst.input_ids.size()) {
        throw std::invalid_argument("heatmap: attributions/input_ids length mismatch");
    }
    Heatmap hm;
    hm.tokens.reserve(inst.input_ids.size());
    for (const TokenId id : inst.input_ids) {
        hm.tokens.push_back(vocab.contains(id) ? vocab.token(id)
                                               : "[UNK:" + std::to_string(id) + "]");
    }
    hm.scores = normalize_scores(inst.attributions);
    hm.title = coordinate + " instance " + std::to_string(inst.idx) +
               " | true: " + detail::label_name(inst.true_label, label_names) +
               " | predicted: " +
               detail::label_name(select_target(inst.logits), label_names);
    return hm;
}

// Self-contained HTML document: one inline span per token, red for positive
// scores, blue for negative, opacity proportional to |score|. Byte-stable.
inline std::string render_html(const Heatmap& hm) {
    if (hm.tokens.size() != hm.scores.size()) {
        throw std::invalid_argument("render_html: tokens/scores length mismatch");
    }
    std::string out;
    out += "<!doctype html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
    out += "<title>" + detail::escape_html(hm.title) + "</title>\n";
    out += "<style>\n"
           "body { font-family: sans-serif; margin: 2em; }\n"
           ".meta { margin-bottom: 1em; color: #333; }\n"
           ".tokens { line-height: 2.2; max-width: 60em; }\n"
           ".tok { padding: 2px 4px; margin: 0 1px; border-radius: 3px; }\n"
           "</style>\n</head>\n<body>\n";
    out += "<div class=\"meta\"><strong>" + detail::escape_html(hm.title) +
           "</strong></div>\n<div class=\"tokens\">\n";
    for (std::size_t i = 0; i < hm.tokens.size(); ++i) {
        const double s = hm.scores[i];
        const char* rgb = s < 0.0 ? "0,0,255" : "255,0,0";
        out += "<span class=\"tok\" style=\"background-color:rgba(";
        out += rgb;
        out += ',';
        out += detail::opacity_string(std::abs(s));
        out += ");\">";
        out += detail::escape_html(hm.tokens[i]);
        out += "</span>\n";
    }
    out += "</div>\n</body>\n</html>\n";
    return out;
}

inline std::string render_html(const Instance& inst, const Vocab& vocab,
                               const std::vector<std::string>& label_names,
                               const std::string& coordinate) {
    return render_html(make_heatmap(inst, vocab, label_names, coordinate));
}

} // namespace thermo
