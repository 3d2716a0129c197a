#include <catch2/catch.hpp>

#include <cmath>

#include "thermo/corpus.hpp"
#include "thermo/model.hpp"
#include "thermo/vocab.hpp"

#include "support/temp_dir.hpp"
#include "support/test_models.hpp"

using namespace thermo;
using testsupport::make_test_model;

namespace {

// vocab where "good" lands on id 5 and "movie" on id 9
Vocab spec_example_vocab() {
    auto v = Vocab::with_reserved();
    v.add("filler0");  // 4
    v.add("good");     // 5
    v.add("filler1");  // 6
    v.add("filler2");  // 7
    v.add("filler3");  // 8
    v.add("movie");    // 9
    return v;
}

} // namespace

TEST_CASE("tokenize maps words through the vocab") {
    const auto vocab = spec_example_vocab();

    CHECK(tokenize("good movie", vocab) ==
          TokenSequence{vocab.cls_id(), 5, 9, vocab.sep_id()});
    CHECK(tokenize("GOOD", vocab) == TokenSequence{vocab.cls_id(), 5, vocab.sep_id()});
    CHECK(tokenize("zzz", vocab) ==
          TokenSequence{vocab.cls_id(), vocab.unk_id(), vocab.sep_id()});
    CHECK(tokenize("", vocab) == TokenSequence{vocab.cls_id(), vocab.sep_id()});
    CHECK(tokenize("  \t \n ", vocab) == TokenSequence{vocab.cls_id(), vocab.sep_id()});
}

TEST_CASE("vocab invariants") {
    auto vocab = Vocab::with_reserved();
    CHECK(vocab.size() == 4);
    CHECK(vocab.pad_id() == 0);
    CHECK(vocab.unk_id() == 1);
    CHECK(vocab.cls_id() == 2);
    CHECK(vocab.sep_id() == 3);

    const auto id = vocab.add("word");
    CHECK(id == 4);
    CHECK(vocab.add("word") == 4);  // idempotent
    CHECK(vocab.token(4) == "word");
    CHECK_FALSE(vocab.lookup("missing").has_value());
    CHECK_THROWS_AS(vocab.token(99), std::out_of_range);

    CHECK_THROWS_AS(Vocab::from_tokens({"a", "b", "c", "c"}, 0, 1, 2, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(Vocab::from_tokens({"a", "b", "c", "d"}, 0, 0, 2, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(Vocab::from_tokens({"a", "b"}, 0, 1, 2, 3), std::invalid_argument);
}

TEST_CASE("build_vocab is deterministic and reserved-first") {
    const std::vector<LabeledText> corpus = {{"Good movie", 1}, {"bad Movie", 0}};
    const auto vocab = build_vocab(corpus);
    CHECK(vocab.size() == 7);  // 4 reserved + good, movie, bad
    CHECK(vocab.lookup("good") == TokenId{4});
    CHECK(vocab.lookup("movie") == TokenId{5});
    CHECK(vocab.lookup("bad") == TokenId{6});
}

TEST_CASE("forward with zero parameters returns the output bias") {
    auto model = make_test_model(1);
    for (double& v : model.embedding.data()) v = 0.0;
    for (double& v : model.hidden_weights.data()) v = 0.0;
    for (double& v : model.hidden_bias) v = 0.0;
    for (double& v : model.output_weights.data()) v = 0.0;
    model.output_bias = {0.25, -1.5};

    const auto logits = model.forward({4, 5, 6});
    CHECK(logits[0] == 0.25);
    CHECK(logits[1] == -1.5);
}

TEST_CASE("mean pooling makes repeated tokens equivalent to one") {
    const auto model = make_test_model(2);
    const auto once = model.forward({7});
    const auto twice = model.forward({7, 7});
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i] == Approx(twice[i]).margin(1e-15));
    }
}

TEST_CASE("forward golden vector, frozen from the seeded init") {
    const auto model = make_test_model(42);
    const TokenSequence ids{4, 5, 6, 7};
    const auto logits = model.forward(ids);
    REQUIRE(logits.size() == 2);
    CHECK(logits[0] == Approx(-0.14515539449927783).margin(1e-15));
    CHECK(logits[1] == Approx(0.1460526470103664).margin(1e-15));

    // same numbers through the embedding-level path
    const auto via_embeddings = model.forward_from_embeddings(model.embed(ids));
    CHECK(via_embeddings[0] == logits[0]);
    CHECK(via_embeddings[1] == logits[1]);
}

TEST_CASE("forward rejects out-of-range token ids") {
    const auto model = make_test_model(3);
    CHECK_THROWS_AS(model.forward({4, static_cast<TokenId>(model.vocab_size())}),
                    std::out_of_range);
    CHECK_THROWS_AS(model.forward({-1}), std::out_of_range);
    CHECK_THROWS_AS(model.forward({}), std::invalid_argument);
}

TEST_CASE("embed is a pure row lookup with a zero pad row") {
    const auto model = make_test_model(4);

    SECTION("pad row is exactly zero at init") {
        const auto x = model.embed(TokenSequence{model.pad_id()});
        for (std::size_t k = 0; k < x.cols(); ++k) {
            CHECK(x(0, k) == 0.0);
        }
    }

    SECTION("rows match the embedding table elementwise") {
        const TokenSequence ids{5, 4, 5};
        const auto x = model.embed(ids);
        REQUIRE(x.rows() == 3);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t k = 0; k < x.cols(); ++k) {
                CHECK(x(i, k) == model.embedding(static_cast<std::size_t>(ids[i]), k));
            }
        }
    }
}

TEST_CASE("forward_from_embeddings on zero input takes the tanh(b1) path") {
    const auto model = make_test_model(5);
    const Matrix zeros(3, static_cast<std::size_t>(model.embed_dim()));
    const auto logits = model.forward_from_embeddings(zeros);

    for (int c = 0; c < model.num_classes(); ++c) {
        double expected = model.output_bias[static_cast<std::size_t>(c)];
        for (int j = 0; j < model.hidden_dim(); ++j) {
            expected += model.output_weights(static_cast<std::size_t>(c),
                                             static_cast<std::size_t>(j)) *
                        std::tanh(model.hidden_bias[static_cast<std::size_t>(j)]);
        }
        CHECK(logits[static_cast<std::size_t>(c)] == Approx(expected).margin(1e-15));
    }
}

TEST_CASE("forward_from_embeddings rejects wrong shapes and non-finite input") {
    const auto model = make_test_model(6);
    CHECK_THROWS_AS(model.forward_from_embeddings(Matrix(2, 7)), std::invalid_argument);
    Matrix bad(2, static_cast<std::size_t>(model.embed_dim()));
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(model.forward_from_embeddings(bad), std::invalid_argument);
}

TEST_CASE("gradient of a constant model is zero") {
    auto model = make_test_model(7);
    for (double& v : model.hidden_weights.data()) v = 0.0;
    const auto x = model.embed({4, 5, 6});
    const auto g = model.gradient_wrt_embeddings(x, 0);
    for (const double v : g.data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("gradient matches the one-dimensional chain rule") {
    // d = h = 1: logit_0 = w2 * tanh(w1 * p + b1) + b2, p = mean of x
    auto model = ReferenceModel(testsupport::make_test_vocab(4), 1, 1, 2, 11);
    const double w1 = 0.8;
    const double b1 = -0.3;
    const double w2 = 1.7;
    model.hidden_weights(0, 0) = w1;
    model.hidden_bias[0] = b1;
    model.output_weights(0, 0) = w2;

    Matrix x(3, 1);
    x(0, 0) = 0.2;
    x(1, 0) = -0.5;
    x(2, 0) = 0.9;
    const double pooled = (0.2 - 0.5 + 0.9) / 3.0;
    const double a = std::tanh(w1 * pooled + b1);
    const double expected = (1.0 / 3.0) * w1 * w2 * (1.0 - a * a);

    const auto g = model.gradient_wrt_embeddings(x, 0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(g(i, 0) == Approx(expected).margin(1e-15));
    }
}

TEST_CASE("gradient rejects an out-of-range target") {
    const auto model = make_test_model(8);
    const auto x = model.embed({4});
    CHECK_THROWS_AS(model.gradient_wrt_embeddings(x, model.num_classes()), std::out_of_range);
    CHECK_THROWS_AS(model.gradient_wrt_embeddings(x, -1), std::out_of_range);
}

TEST_CASE("analytic gradient matches central finite differences on 100 random triples") {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto model = testsupport::make_nonlinear_model(1000 + s);
        SplitMix64 rng(2000 + s);
        const auto ids =
            testsupport::random_word_sequence(rng, model.vocab_size(), 2 + rng.below(8));
        const auto target = static_cast<int>(rng.below(2));
        const auto x = model.embed(ids);
        const auto analytic = model.gradient_wrt_embeddings(x, target);
        const auto numeric = testsupport::finite_difference_gradient(model, x, target, 1e-4);
        for (std::size_t i = 0; i < analytic.data().size(); ++i) {
            worst = std::max(worst, std::abs(analytic.data()[i] - numeric.data()[i]));
        }
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("forward and gradient are deterministic") {
    const auto model = make_test_model(9);
    const TokenSequence ids{4, 6, 5};
    CHECK(model.forward(ids) == model.forward(ids));
    const auto x = model.embed(ids);
    CHECK(model.gradient_wrt_embeddings(x, 1) == model.gradient_wrt_embeddings(x, 1));
}

TEST_CASE("model json round-trips bit-exactly") {
    const auto model = make_test_model(10, 9, 3, 4, 3);

    SECTION("through the json document") {
        const auto copy = ReferenceModel::from_json(model.to_json());
        CHECK(copy == model);
    }

    SECTION("the document carries the documented field names") {
        const auto j = model.to_json();
        for (const char* key : {"vocab", "dims", "E", "W1", "b1", "W2", "b2", "seed"}) {
            CHECK(j.contains(key));
        }
        for (const char* key : {"V", "d", "h", "C"}) {
            CHECK(j.at("dims").contains(key));
        }
        CHECK(j.at("dims").at("V") == 13);  // 4 reserved + 9 words
        CHECK(j.at("dims").at("d") == 3);
        CHECK(j.at("dims").at("h") == 4);
        CHECK(j.at("dims").at("C") == 3);
    }

    SECTION("through a file") {
        testsupport::TempDir dir("model_io");
        const auto file = dir / "model.json";
        model.save(file);
        CHECK(ReferenceModel::load(file) == model);
    }

    SECTION("missing file errors with the path") {
        CHECK_THROWS_WITH(ReferenceModel::load("/nonexistent/model.json"),
                          Catch::Contains("/nonexistent/model.json"));
    }

    SECTION("shape mismatch is rejected") {
        auto j = model.to_json();
        j["b1"].push_back(0.5);
        CHECK_THROWS_AS(ReferenceModel::from_json(j), std::invalid_argument);
    }
}

TEST_CASE("training separates an easy toy corpus") {
    const auto corpus = testsupport::make_toy_corpus(80, 5);
    ReferenceModel model(build_vocab(corpus), 8, 16, 2, 1);
    const auto report = train_classifier(model, corpus, {0.5, 200});
    CHECK(report.accuracy >= 0.85);
    CHECK(report.final_loss < 0.7);

    SECTION("pad embedding row is untouched by training") {
        for (std::size_t k = 0; k < model.embedding.cols(); ++k) {
            CHECK(model.embedding(static_cast<std::size_t>(model.pad_id()), k) == 0.0);
        }
    }
}

TEST_CASE("training rejects out-of-range labels") {
    const std::vector<LabeledText> corpus = {{"good", 1}, {"bad", 5}};
    ReferenceModel model(build_vocab(corpus), 4, 4, 2, 1);
    CHECK_THROWS_WITH(train_classifier(model, corpus), Catch::Contains("label 5"));
}
