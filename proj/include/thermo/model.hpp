#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermo/corpus.hpp"
#include "thermo/matrix.hpp"
#include "thermo/rng.hpp"
#include "thermo/vocab.hpp"

namespace thermo {

using Logits = std::vector<double>;

// Hooks every explainer consumes. Perturbation-based methods need only
// ForwardModel; gradient-based methods additionally need the embedding-level
// hooks. Any classifier supplying these members plugs into the explainers.
template <class M>
concept ForwardModel = requires(const M& m, const TokenSequence& ids) {
    { m.forward(ids) } -> std::same_as<Logits>;
    { m.num_classes() } -> std::convertible_to<int>;
    { m.pad_id() } -> std::convertible_to<TokenId>;
    { m.cls_id() } -> std::convertible_to<TokenId>;
    { m.sep_id() } -> std::convertible_to<TokenId>;
};

template <class M>
concept DifferentiableModel = ForwardModel<M> &&
    requires(const M& m, const TokenSequence& ids, const Matrix& x, int target) {
        { m.embed(ids) } -> std::same_as<Matrix>;
        { m.forward_from_embeddings(x) } -> std::same_as<Logits>;
        { m.gradient_wrt_embeddings(x, target) } -> std::same_as<Matrix>;
    };

/// Small differentiable text classifier: embedding -> mean pool -> tanh MLP.
///
/// Deterministically initialized from a seed; the [PAD] embedding row starts
/// at exactly zero so an all-pad sequence is a neutral baseline.
class ReferenceModel {
public:
    Matrix embedding;                 // vocab_size x embed_dim
    Matrix hidden_weights;            // hidden_dim x embed_dim
    std::vector<double> hidden_bias;  // hidden_dim
    Matrix output_weights;            // num_classes x hidden_dim
    std::vector<double> output_bias;  // num_classes

    ReferenceModel(Vocab vocab, int embed_dim, int hidden_dim, int num_classes,
                   std::uint64_t seed)
        : vocab_(std::move(vocab)),
          embed_dim_(embed_dim),
          hidden_dim_(hidden_dim),
          num_classes_(num_classes),
          seed_(seed) {
        if (embed_dim < 1 || hidden_dim < 1 || num_classes < 2) {
            throw std::invalid_argument("reference model: need d >= 1, h >= 1, C >= 2");
        }
        const auto vsize = vocab_.size();
        embedding = Matrix(vsize, static_cast<std::size_t>(embed_dim));
        hidden_weights = Matrix(static_cast<std::size_t>(hidden_dim),
                                static_cast<std::size_t>(embed_dim));
        hidden_bias.assign(static_cast<std::size_t>(hidden_dim), 0.0);
        output_weights = Matrix(static_cast<std::size_t>(num_classes),
                                static_cast<std::size_t>(hidden_dim));
        output_bias.assign(static_cast<std::size_t>(num_classes), 0.0);

        // uniform(-0.5, 0.5) / sqrt(fan-in), fixed draw order, pad row zeroed.
        SplitMix64 rng(seed);
        const double embed_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
        const double hidden_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
        const double output_scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        for (double& w : embedding.data()) w = rng.uniform(-0.5, 0.5) * embed_scale;
        for (double& w : hidden_weights.data()) w = rng.uniform(-0.5, 0.5) * hidden_scale;
        for (double& w : hidden_bias) w = rng.uniform(-0.5, 0.5) * hidden_scale;
        for (double& w : output_weights.data()) w = rng.uniform(-0.5, 0.5) * output_scale;
        for (double& w : output_bias) w = rng.uniform(-0.5, 0.5) * output_scale;
        for (std::size_t k = 0; k < embedding.cols(); ++k) {
            embedding(static_cast<std::size_t>(vocab_.pad_id()), k) = 0.0;
        }
    }

    int embed_dim() const noexcept { return embed_dim_; }
    int hidden_dim() const noexcept { return hidden_dim_; }
    int num_classes() const noexcept { return num_classes_; }
    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const Vocab& vocab() const noexcept { return vocab_; }
    std::uint64_t seed() const noexcept { return seed_; }

    TokenId pad_id() const noexcept { return vocab_.pad_id(); }
    TokenId cls_id() const noexcept { return vocab_.cls_id(); }
    TokenId sep_id() const noexcept { return vocab_.sep_id(); }

    // Embedding lookup, row i = embedding[ids[i]].
    Matrix embed(const TokenSequence& ids) const {
        check_ids(ids);
        Matrix x(ids.size(), static_cast<std::size_t>(embed_dim_));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto* src = embedding.row(static_cast<std::size_t>(ids[i]));
            std::copy(src, src + embed_dim_, x.row(i));
        }
        return x;
    }

    Logits forward(const TokenSequence& ids) const {
        return forward_from_embeddings(embed(ids));
    }

    Logits forward_from_embeddings(const Matrix& x) const {
        check_embeddings(x);
        const auto pooled = mean_pool(x);
        const auto hidden = hidden_activation(pooled);
        Logits logits(static_cast<std::size_t>(num_classes_));
        for (std::size_t c = 0; c < logits.size(); ++c) {
            double acc = output_bias[c];
            for (std::size_t j = 0; j < hidden.size(); ++j) {
                acc += output_weights(c, j) * hidden[j];
            }
            logits[c] = acc;
        }
        return logits;
    }

    // Exact gradient of logits[target] w.r.t. the embedding matrix rows.
    // Backprop through the output layer, tanh and mean pooling; with mean
    // pooling every row receives the same gradient vector.
    Matrix gradient_wrt_embeddings(const Matrix& x, int target) const {
        check_embeddings(x);
        if (target < 0 || target >= num_classes_) {
            throw std::out_of_range("gradient: target class " + std::to_string(target) +
                                    " out of range");
        }
        const auto pooled = mean_pool(x);
        const auto hidden = hidden_activation(pooled);

        // d logit_t / d hidden_j = W2[t][j]; through tanh: * (1 - a_j^2)
        std::vector<double> dz(static_cast<std::size_t>(hidden_dim_));
        for (std::size_t j = 0; j < dz.size(); ++j) {
            dz[j] = output_weights(static_cast<std::size_t>(target), j) *
                    (1.0 - hidden[j] * hidden[j]);
        }
        // d logit_t / d pooled_k = sum_j W1[j][k] * dz_j
        std::vector<double> dpool(static_cast<std::size_t>(embed_dim_), 0.0);
        for (std::size_t j = 0; j < dz.size(); ++j) {
            for (std::size_t k = 0; k < dpool.size(); ++k) {
                dpool[k] += hidden_weights(j, k) * dz[j];
            }
        }
        Matrix grad(x.rows(), x.cols());
        const double inv_n = 1.0 / static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t k = 0; k < x.cols(); ++k) {
                grad(i, k) = dpool[k] * inv_n;
            }
        }
        return grad;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["vocab"] = {{"tokens", vocab_.tokens()},
                      {"pad_id", vocab_.pad_id()},
                      {"unk_id", vocab_.unk_id()},
                      {"cls_id", vocab_.cls_id()},
                      {"sep_id", vocab_.sep_id()}};
        j["dims"] = {{"V", vocab_.size()},
                     {"d", embed_dim_},
                     {"h", hidden_dim_},
                     {"C", num_classes_}};
        j["E"] = matrix_to_json(embedding);
        j["W1"] = matrix_to_json(hidden_weights);
        j["b1"] = hidden_bias;
        j["W2"] = matrix_to_json(output_weights);
        j["b2"] = output_bias;
        j["seed"] = seed_;
        return j;
    }

    static ReferenceModel from_json(const nlohmann::json& j) {
        const auto& jv = j.at("vocab");
        Vocab vocab = Vocab::from_tokens(jv.at("tokens").get<std::vector<std::string>>(),
                                         jv.at("pad_id").get<TokenId>(),
                                         jv.at("unk_id").get<TokenId>(),
                                         jv.at("cls_id").get<TokenId>(),
                                         jv.at("sep_id").get<TokenId>());
        const auto& dims = j.at("dims");
        const auto v = dims.at("V").get<std::size_t>();
        const int d = dims.at("d").get<int>();
        const int h = dims.at("h").get<int>();
        const int c = dims.at("C").get<int>();
        if (v != vocab.size()) {
            throw std::invalid_argument("model json: dims.V does not match vocab size");
        }
        ReferenceModel m(std::move(vocab), d, h, c, j.value("seed", std::uint64_t{0}));
        m.embedding = matrix_from_json(j.at("E"), v, static_cast<std::size_t>(d), "E");
        m.hidden_weights = matrix_from_json(j.at("W1"), static_cast<std::size_t>(h),
                                            static_cast<std::size_t>(d), "W1");
        m.hidden_bias = vector_from_json(j.at("b1"), static_cast<std::size_t>(h), "b1");
        m.output_weights = matrix_from_json(j.at("W2"), static_cast<std::size_t>(c),
                                            static_cast<std::size_t>(h), "W2");
        m.output_bias = vector_from_json(j.at("b2"), static_cast<std::size_t>(c), "b2");
        return m;
    }

    void save(const std::filesystem::path& file) const {
        std::ofstream out(file, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write model file " + file.string());
        }
        out << to_json().dump(2) << '\n';
    }

    static ReferenceModel load(const std::filesystem::path& file) {
        std::ifstream in(file);
        if (!in) {
            throw std::runtime_error("cannot open model file " + file.string());
        }
        nlohmann::json j;
        try {
            in >> j;
            return from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("model file " + file.string() + ": " + e.what());
        }
    }

    friend bool operator==(const ReferenceModel& a, const ReferenceModel& b) {
        return a.vocab_ == b.vocab_ && a.embed_dim_ == b.embed_dim_ &&
               a.hidden_dim_ == b.hidden_dim_ && a.num_classes_ == b.num_classes_ &&
               a.seed_ == b.seed_ && a.embedding == b.embedding &&
               a.hidden_weights == b.hidden_weights && a.hidden_bias == b.hidden_bias &&
               a.output_weights == b.output_weights && a.output_bias == b.output_bias;
    }

private:
    void check_ids(const TokenSequence& ids) const {
        if (ids.empty()) {
            throw std::invalid_argument("model: empty token sequence");
        }
        for (const TokenId id : ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
                throw std::out_of_range("model: token id " + std::to_string(id) +
                                        " out of range for vocab of size " +
                                        std::to_string(vocab_.size()));
            }
        }
    }

    void check_embeddings(const Matrix& x) const {
        if (x.rows() == 0 || x.cols() != static_cast<std::size_t>(embed_dim_)) {
            throw std::invalid_argument("model: embedding matrix must be n x d with n >= 1");
        }
        for (const double v : x.data()) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("model: non-finite embedding input");
            }
        }
    }

    std::vector<double> mean_pool(const Matrix& x) const {
        std::vector<double> pooled(x.cols(), 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t k = 0; k < x.cols(); ++k) {
                pooled[k] += x(i, k);
            }
        }
        const double inv_n = 1.0 / static_cast<double>(x.rows());
        for (double& v : pooled) v *= inv_n;
        return pooled;
    }

    std::vector<double> hidden_activation(const std::vector<double>& pooled) const {
        std::vector<double> hidden(static_cast<std::size_t>(hidden_dim_));
        for (std::size_t jrow = 0; jrow < hidden.size(); ++jrow) {
            double acc = hidden_bias[jrow];
            for (std::size_t k = 0; k < pooled.size(); ++k) {
                acc += hidden_weights(jrow, k) * pooled[k];
            }
            hidden[jrow] = std::tanh(acc);
        }
        return hidden;
    }

    static nlohmann::json matrix_to_json(const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < m.cols(); ++c) {
                row.push_back(m(r, c));
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    static Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows,
                                   std::size_t cols, const char* name) {
        if (!j.is_array() || j.size() != rows) {
            throw std::invalid_argument(std::string("model json: ") + name + " wrong shape");
        }
        Matrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto& row = j[r];
            if (!row.is_array() || row.size() != cols) {
                throw std::invalid_argument(std::string("model json: ") + name + " wrong shape");
            }
            for (std::size_t c = 0; c < cols; ++c) {
                const double v = row[c].get<double>();
                if (!std::isfinite(v)) {
                    throw std::invalid_argument(std::string("model json: ") + name +
                                                " has non-finite entry");
                }
                m(r, c) = v;
            }
        }
        return m;
    }

    static std::vector<double> vector_from_json(const nlohmann::json& j, std::size_t size,
                                                const char* name) {
        if (!j.is_array() || j.size() != size) {
            throw std::invalid_argument(std::string("model json: ") + name + " wrong shape");
        }
        std::vector<double> v(size);
        for (std::size_t i = 0; i < size; ++i) {
            v[i] = j[i].get<double>();
            if (!std::isfinite(v[i])) {
                throw std::invalid_argument(std::string("model json: ") + name +
                                            " has non-finite entry");
            }
        }
        return v;
    }

    Vocab vocab_;
    int embed_dim_;
    int hidden_dim_;
    int num_classes_;
    std::uint64_t seed_;
};

static_assert(DifferentiableModel<ReferenceModel>);

struct TrainOptions {
    double learning_rate = 0.5;
    int epochs = 200;
};

struct TrainReport {
    double final_loss = 0.0;
    double accuracy = 0.0;
};

namespace detail {

inline std::vector<double> softmax(const Logits& logits) {
    std::vector<double> p(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

} // namespace detail

// Full-batch gradient descent on softmax cross-entropy. Deterministic.
// Tokenize never emits [PAD], so the pad embedding row stays at zero.
inline TrainReport train_classifier(ReferenceModel& model,
                                    const std::vector<LabeledText>& corpus,
                                    const TrainOptions& opts = {}) {
    if (corpus.empty()) {
        throw std::invalid_argument("train: empty corpus");
    }
    const int c_count = model.num_classes();
    std::vector<TokenSequence> sequences;
    sequences.reserve(corpus.size());
    for (const auto& item : corpus) {
        if (item.label < 0 || item.label >= c_count) {
            throw std::invalid_argument("train: label " + std::to_string(item.label) +
                                        " out of range for " + std::to_string(c_count) +
                                        " classes");
        }
        sequences.push_back(tokenize(item.text, model.vocab()));
    }

    const auto d = static_cast<std::size_t>(model.embed_dim());
    const auto h = static_cast<std::size_t>(model.hidden_dim());
    const auto c = static_cast<std::size_t>(c_count);
    const double inv_batch = 1.0 / static_cast<double>(corpus.size());

    TrainReport report;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        Matrix grad_e(model.embedding.rows(), d);
        Matrix grad_w1(h, d);
        std::vector<double> grad_b1(h, 0.0);
        Matrix grad_w2(c, h);
        std::vector<double> grad_b2(c, 0.0);
        double loss = 0.0;

        for (std::size_t s = 0; s < corpus.size(); ++s) {
            const auto& ids = sequences[s];
            const auto label = static_cast<std::size_t>(corpus[s].label);
            const auto x = model.embed(ids);

            // forward pass, keeping intermediates
            std::vector<double> pooled(d, 0.0);
            for (std::size_t i = 0; i < x.rows(); ++i) {
                for (std::size_t k = 0; k < d; ++k) pooled[k] += x(i, k);
            }
            const double inv_n = 1.0 / static_cast<double>(x.rows());
            for (double& v : pooled) v *= inv_n;
            std::vector<double> hidden(h);
            for (std::size_t j = 0; j < h; ++j) {
                double acc = model.hidden_bias[j];
                for (std::size_t k = 0; k < d; ++k) {
                    acc += model.hidden_weights(j, k) * pooled[k];
                }
                hidden[j] = std::tanh(acc);
            }
            Logits logits(c);
            for (std::size_t cc = 0; cc < c; ++cc) {
                double acc = model.output_bias[cc];
                for (std::size_t j = 0; j < h; ++j) {
                    acc += model.output_weights(cc, j) * hidden[j];
                }
                logits[cc] = acc;
            }
            const auto probs = detail::softmax(logits);
            loss -= std::log(std::max(probs[label], 1e-300));

            // backward pass
            std::vector<double> dlogits = probs;
            dlogits[label] -= 1.0;
            std::vector<double> dhidden(h, 0.0);
            for (std::size_t cc = 0; cc < c; ++cc) {
                grad_b2[cc] += dlogits[cc];
                for (std::size_t j = 0; j < h; ++j) {
                    grad_w2(cc, j) += dlogits[cc] * hidden[j];
                    dhidden[j] += model.output_weights(cc, j) * dlogits[cc];
                }
            }
            std::vector<double> dpool(d, 0.0);
            for (std::size_t j = 0; j < h; ++j) {
                const double dz = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                grad_b1[j] += dz;
                for (std::size_t k = 0; k < d; ++k) {
                    grad_w1(j, k) += dz * pooled[k];
                    dpool[k] += model.hidden_weights(j, k) * dz;
                }
            }
            for (const TokenId id : ids) {
                for (std::size_t k = 0; k < d; ++k) {
                    grad_e(static_cast<std::size_t>(id), k) += dpool[k] * inv_n;
                }
            }
        }

        const double step = opts.learning_rate * inv_batch;
        for (std::size_t i = 0; i < model.embedding.data().size(); ++i) {
            model.embedding.data()[i] -= step * grad_e.data()[i];
        }
        for (std::size_t i = 0; i < model.hidden_weights.data().size(); ++i) {
            model.hidden_weights.data()[i] -= step * grad_w1.data()[i];
        }
        for (std::size_t j = 0; j < h; ++j) model.hidden_bias[j] -= step * grad_b1[j];
        for (std::size_t i = 0; i < model.output_weights.data().size(); ++i) {
            model.output_weights.data()[i] -= step * grad_w2.data()[i];
        }
        for (std::size_t cc = 0; cc < c; ++cc) model.output_bias[cc] -= step * grad_b2[cc];
        report.final_loss = loss * inv_batch;
    }

    std::size_t correct = 0;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        const auto logits = model.forward(sequences[s]);
        const auto pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
        if (pred == corpus[s].label) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(corpus.size());
    return report;
}

} // namespace thermo
