#include <catch2/catch.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "thermo/cli.hpp"

#include "support/temp_dir.hpp"
#include "support/test_models.hpp"

using namespace thermo;
using testsupport::TempDir;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    CliResult res;
    res.code = thermo::cli::run(args, out, err);
    res.out = out.str();
    res.err = err.str();
    return res;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// corpus + saved model + root, ready for generate/render/correlate
struct Workspace {
    TempDir dir{"cli"};
    std::filesystem::path corpus_file;
    std::filesystem::path model_file;
    std::filesystem::path root;

    explicit Workspace(std::size_t sentences = 12) {
        const auto corpus = testsupport::make_toy_corpus(sentences, 3);
        corpus_file = dir / "corpus.jsonl";
        save_corpus_jsonl(corpus, corpus_file);
        model_file = dir / "model.json";
        ReferenceModel(build_vocab(corpus), 4, 5, 2, 11).save(model_file);
        root = dir / "root";
    }

    CliResult generate(const std::string& explainer, const std::string& id,
                       std::vector<std::string> extra = {}) const {
        std::vector<std::string> args = {"generate",    "--corpus",  corpus_file.string(),
                                         "--model",     model_file.string(),
                                         "--explainer", explainer,   "--id",
                                         id,            "--root",    root.string()};
        args.insert(args.end(), extra.begin(), extra.end());
        return run_cli(args);
    }
};

} // namespace

TEST_CASE("exit code mapping distinguishes user and internal errors") {
    std::ostringstream err;
    CHECK(cli::run_guarded([] { return 0; }, err) == 0);
    CHECK(cli::run_guarded([]() -> int { throw std::runtime_error("bad data"); }, err) == 1);
    CHECK(cli::run_guarded([]() -> int { throw std::invalid_argument("bad flag"); }, err) ==
          1);
    CHECK(cli::run_guarded([]() -> int { throw cli::InternalError("bug"); }, err) == 2);
    CHECK(cli::run_guarded([]() -> int { throw 42; }, err) == 2);
}

TEST_CASE("cmd_generate writes a loadable, valid dataset") {
    Workspace ws;
    const auto res = ws.generate("lgxa", "toy-ref-lgxa");
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(res.out.find("generated 12 instances") != std::string::npos);

    const auto ds = load_dataset("toy-ref-lgxa", ws.root);
    CHECK(ds.instances.size() == 12);
    CHECK(validate_dataset(ds).empty());
}

TEST_CASE("cmd_generate rejects an unknown explainer with usage help") {
    Workspace ws;
    const auto res = ws.generate("gradcam", "toy-ref-gradcam");
    CHECK(res.code == 1);
    CHECK(res.err.find("--explainer") != std::string::npos);
}

TEST_CASE("cmd_generate is deterministic for a fixed seed") {
    Workspace ws;
    REQUIRE(ws.generate("lime", "toy-ref-lime").code == 0);
    const auto first = read_file(ws.root / "toy-ref-lime" / "1.0" / "data.jsonl");
    REQUIRE(ws.generate("lime", "toy-ref-lime").code == 0);
    CHECK(read_file(ws.root / "toy-ref-lime" / "1.0" / "data.jsonl") == first);

    SECTION("and changes under a different seed") {
        REQUIRE(ws.generate("lime", "toy-ref-lime", {"--seed", "7"}).code == 0);
        CHECK(read_file(ws.root / "toy-ref-lime" / "1.0" / "data.jsonl") != first);
    }
}

TEST_CASE("cmd_generate applies a hyperparameter config file") {
    Workspace ws;
    const auto config_file = ws.dir / "lime.json";
    std::ofstream(config_file) << R"({"samples": 7, "mask_prob": 0.5})";
    REQUIRE(ws.generate("lime", "toy-ref-lime",
                        {"--config", config_file.string()})
                .code == 0);
    const auto ds = load_dataset("toy-ref-lime", ws.root);
    const auto& lime = std::get<LimeConfig>(ds.config.explainer_config.method);
    CHECK(lime.samples == 7);
    CHECK(lime.mask_prob == 0.5);

    SECTION("a conflicting method field is rejected") {
        std::ofstream(config_file) << R"({"method": "occ"})";
        const auto res = ws.generate("lime", "toy-ref-lime",
                                     {"--config", config_file.string()});
        CHECK(res.code == 1);
        CHECK(res.err.find("conflicts") != std::string::npos);
    }
}

TEST_CASE("cmd_render writes the expected HTML") {
    Workspace ws;
    REQUIRE(ws.generate("occ", "toy-ref-occ").code == 0);
    const auto out_file = ws.dir / "heatmap.html";

    const auto res = run_cli({"render", "--id", "toy-ref-occ", "--idx", "0", "--out",
                              out_file.string(), "--root", ws.root.string()});
    INFO(res.err);
    REQUIRE(res.code == 0);

    const auto html = read_file(out_file);
    CHECK(html.rfind("<!doctype html>", 0) == 0);

    const auto ds = load_dataset("toy-ref-occ", ws.root);
    const auto model = ReferenceModel::load(ds.config.model_file);
    CHECK(html == render_html(ds.instances[0], model.vocab(), ds.config.label_names,
                              "toy-ref-occ"));

    SECTION("a negative idx is rejected at parse time") {
        const auto bad = run_cli({"render", "--id", "toy-ref-occ", "--idx", "-1", "--out",
                                  out_file.string(), "--root", ws.root.string()});
        CHECK(bad.code == 1);
    }

    SECTION("an out-of-range idx is a data error") {
        const auto bad = run_cli({"render", "--id", "toy-ref-occ", "--idx", "99", "--out",
                                  out_file.string(), "--root", ws.root.string()});
        CHECK(bad.code == 1);
        CHECK(bad.err.find("out of range") != std::string::npos);
    }
}

TEST_CASE("cmd_correlate prints one machine-parseable line") {
    Workspace ws;
    REQUIRE(ws.generate("lgxa", "toy-ref-lgxa").code == 0);
    REQUIRE(ws.generate("lig", "toy-ref-lig").code == 0);

    SECTION("a dataset against itself is tau=1") {
        const auto res = run_cli({"correlate", "--id-a", "toy-ref-lgxa", "--id-b",
                                  "toy-ref-lgxa", "--root", ws.root.string()});
        REQUIRE(res.code == 0);
        CHECK(res.out.rfind("tau=1 p=", 0) == 0);
        CHECK(res.out.find(" n=") != std::string::npos);
    }

    SECTION("misaligned datasets exit 1 with an alignment error") {
        Workspace other(5);  // different corpus length
        REQUIRE(other.generate("lgxa", "toy2-ref-lgxa").code == 0);
        std::filesystem::rename(other.root / "toy2-ref-lgxa",
                                ws.root / "toy2-ref-lgxa");
        const auto res = run_cli({"correlate", "--id-a", "toy-ref-lgxa", "--id-b",
                                  "toy2-ref-lgxa", "--root", ws.root.string()});
        CHECK(res.code == 1);
        CHECK(res.err.find("differ in length") != std::string::npos);
    }

    SECTION("missing datasets exit 1 naming the coordinate") {
        const auto res = run_cli({"correlate", "--id-a", "toy-ref-lgxa", "--id-b",
                                  "toy-ref-svs", "--root", ws.root.string()});
        CHECK(res.code == 1);
        CHECK(res.err.find("toy-ref-svs") != std::string::npos);
    }
}

TEST_CASE("cmd_correlate reports tau=1 for lig vs lgxa on a linear model") {
    // generate() only runs the nonlinear reference model, so build the two
    // datasets from a linear test double and save them under the root.
    TempDir dir("cli_linear");
    const auto model = testsupport::LinearEmbeddingModel::random(91, 12, 4);
    SplitMix64 rng(92);

    ExplanationDataset lgxa;
    lgxa.config.coordinate = CoordinateId::parse("lin-ref-lgxa");
    lgxa.config.explainer_config = {LgxaConfig{}, 42};
    lgxa.config.num_classes = 2;
    ExplanationDataset lig = lgxa;
    lig.config.coordinate = CoordinateId::parse("lin-ref-lig");
    lig.config.explainer_config = {LigConfig{}, 42};

    for (std::size_t idx = 0; idx < 8; ++idx) {
        TokenSequence ids(3 + rng.below(4));
        for (auto& id : ids) id = static_cast<TokenId>(1 + rng.below(11));
        const auto logits = model.forward(ids);
        const int target = select_target(logits);
        Instance inst;
        inst.idx = idx;
        inst.input_ids = ids;
        inst.logits = logits;
        inst.true_label = 0;
        inst.attributions = explain_gradient_x_activation(model, ids, target).scores;
        lgxa.instances.push_back(inst);
        inst.attributions = explain_integrated_gradients(model, ids, target, {25}).scores;
        lig.instances.push_back(inst);
    }
    save_dataset(lgxa, dir.path());
    save_dataset(lig, dir.path());

    const auto res = run_cli({"correlate", "--id-a", "lin-ref-lig", "--id-b", "lin-ref-lgxa",
                              "--root", dir.path().string()});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(res.out.rfind("tau=1 p=", 0) == 0);
}

TEST_CASE("cmd_compare reports disagreements and renders pairs") {
    Workspace ws;
    REQUIRE(ws.generate("lgxa", "toy-refa-lgxa").code == 0);

    SECTION("identical predictions mean zero disagreements") {
        REQUIRE(ws.generate("lgxa", "toy-refb-lgxa").code == 0);
        const auto res = run_cli({"compare", "--id-a", "toy-refa-lgxa", "--id-b",
                                  "toy-refb-lgxa", "--root", ws.root.string()});
        REQUIRE(res.code == 0);
        CHECK(res.out.rfind("0 disagreements", 0) == 0);
    }

    SECTION("a constructed flip is listed and rendered") {
        auto flipped = load_dataset("toy-refa-lgxa", ws.root);
        flipped.config.coordinate = CoordinateId::parse("toy-refb-lgxa");
        std::swap(flipped.instances[4].logits[0], flipped.instances[4].logits[1]);
        save_dataset(flipped, ws.root);

        const auto render_dir = ws.dir / "pairs";
        const auto res = run_cli({"compare", "--id-a", "toy-refa-lgxa", "--id-b",
                                  "toy-refb-lgxa", "--root", ws.root.string(),
                                  "--render-dir", render_dir.string()});
        INFO(res.err);
        REQUIRE(res.code == 0);
        CHECK(res.out.find("1 disagreements") != std::string::npos);
        CHECK(res.out.find("idx: 4") != std::string::npos);
        CHECK(std::filesystem::exists(render_dir / "4_a.html"));
        CHECK(std::filesystem::exists(render_dir / "4_b.html"));
    }
}

TEST_CASE("cmd_validate reports violations with exit 1") {
    Workspace ws;
    REQUIRE(ws.generate("svs", "toy-ref-svs").code == 0);

    const auto ok = run_cli({"validate", "--id", "toy-ref-svs", "--root", ws.root.string()});
    REQUIRE(ok.code == 0);
    CHECK(ok.out.find("ok: 12 instances") != std::string::npos);

    SECTION("a corrupted line fails with its line number") {
        const auto data_file = ws.root / "toy-ref-svs" / "1.0" / "data.jsonl";
        auto contents = read_file(data_file);
        contents += "{\"idx\":12,\"input_ids\":[4";  // truncated
        std::ofstream(data_file, std::ios::binary) << contents;
        const auto res =
            run_cli({"validate", "--id", "toy-ref-svs", "--root", ws.root.string()});
        CHECK(res.code == 1);
        CHECK(res.err.find("line 13") != std::string::npos);
    }
}

TEST_CASE("cmd_info prints the hyperparameter choices on one line") {
    Workspace ws;
    REQUIRE(ws.generate("lime", "toy-ref-lime").code == 0);
    const auto res = run_cli({"info", "--id", "toy-ref-lime", "--root", ws.root.string()});
    REQUIRE(res.code == 0);
    CHECK(res.out.find("id=toy-ref-lime") != std::string::npos);
    CHECK(res.out.find("explainer=lime") != std::string::npos);
    CHECK(res.out.find("mask_prob=0.3") != std::string::npos);
    CHECK(res.out.find("samples=25") != std::string::npos);
    CHECK(res.out.find("instances=12") != std::string::npos);
    CHECK(std::count(res.out.begin(), res.out.end(), '\n') == 1);
}

TEST_CASE("the THERMO_ROOT environment variable supplies the root") {
    Workspace ws;
    REQUIRE(ws.generate("lgxa", "toy-ref-lgxa").code == 0);
    ::setenv("THERMO_ROOT", ws.root.string().c_str(), 1);
    const auto res = run_cli({"validate", "--id", "toy-ref-lgxa"});
    ::unsetenv("THERMO_ROOT");
    CHECK(res.code == 0);
}

TEST_CASE("cmd_train fits and saves a model usable by generate") {
    Workspace ws;
    const auto trained_file = ws.dir / "trained.json";
    const auto res = run_cli({"train", "--corpus", ws.corpus_file.string(), "--out",
                              trained_file.string(), "--epochs", "50"});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(res.out.find("accuracy=") != std::string::npos);
    REQUIRE(std::filesystem::exists(trained_file));

    const auto gen = run_cli({"generate", "--corpus", ws.corpus_file.string(), "--model",
                              trained_file.string(), "--explainer", "lig", "--id",
                              "toy-trained-lig", "--root", ws.root.string()});
    CHECK(gen.code == 0);
}

TEST_CASE("missing arguments and unknown commands exit 1") {
    CHECK(run_cli({}).code == 1);
    CHECK(run_cli({"generate"}).code == 1);
    CHECK(run_cli({"frobnicate"}).code == 1);

    SECTION("--help exits 0") {
        CHECK(run_cli({"--help"}).code == 0);
    }
}

TEST_CASE("the installed binary answers --help") {
    const int status = std::system(THERMO_CLI_BIN " --help > /dev/null 2>&1");
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 0);
}
