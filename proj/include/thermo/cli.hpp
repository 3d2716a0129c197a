#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thermo/analysis.hpp"
#include "thermo/corpus.hpp"
#include "thermo/hub.hpp"
#include "thermo/model.hpp"
#include "thermo/render.hpp"
#include "thermo/serialize.hpp"

namespace thermo::cli {

// Raised for conditions that indicate a bug rather than bad input.
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

// Exit codes: 0 success, 1 user/data error, 2 internal error.
template <class F>
int run_guarded(F&& f, std::ostream& err) {
    try {
        return std::forward<F>(f)();
    } catch (const InternalError& e) {
        err << "internal error: " << e.what() << '\n';
        return 2;
    } catch (const std::bad_alloc&) {
        err << "internal error: out of memory\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (...) {
        err << "internal error: unknown exception\n";
        return 2;
    }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

inline std::string method_params_text(const MethodConfig& method) {
    struct Printer {
        std::string operator()(const LgxaConfig&) const { return ""; }
        std::string operator()(const LigConfig& c) const {
            return " steps=" + std::to_string(c.steps);
        }
        std::string operator()(const LimeConfig& c) const {
            return " samples=" + std::to_string(c.samples) +
                   " mask_prob=" + format_double(c.mask_prob) +
                   " kernel_width=" + format_double(c.kernel_width) +
                   " ridge_lambda=" + format_double(c.ridge_lambda);
        }
        std::string operator()(const OcclusionConfig& c) const {
            return " window=" + std::to_string(c.window);
        }
        std::string operator()(const SvsConfig& c) const {
            return " samples=" + std::to_string(c.samples);
        }
        std::string operator()(const ExactShapleyConfig&) const { return ""; }
    };
    return std::visit(Printer{}, method);
}

inline void write_text_file(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + file.string());
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write failed for " + file.string());
    }
}

} // namespace detail

// Entry point shared by the binary and the tests. `args` excludes argv[0].
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"explanation dataset toolkit: generate, store, validate, analyze and "
                 "render feature attribution maps"};
    app.require_subcommand(1);

    std::string root = "thermo_data";
    std::uint64_t seed = 42;
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "chatty progress output");

    const auto add_root = [&](CLI::App* sub) {
        sub->add_option("--root", root, "dataset root directory")
            ->envname("THERMO_ROOT")
            ->capture_default_str();
    };

    // --- train ---------------------------------------------------------
    std::string train_corpus;
    std::string train_out;
    int train_embed_dim = 8;
    int train_hidden_dim = 16;
    int train_classes = 0;
    int train_epochs = 200;
    double train_lr = 0.5;
    auto* train = app.add_subcommand("train", "fit the built-in reference classifier on a "
                                              "JSONL corpus and save it as a model file");
    train->add_option("--corpus", train_corpus, "JSONL corpus: {\"text\":str,\"label\":int}")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "output model JSON file")->required();
    train->add_option("--seed", seed, "init seed")->capture_default_str();
    train->add_option("--embed-dim", train_embed_dim, "embedding width")
        ->check(CLI::PositiveNumber);
    train->add_option("--hidden-dim", train_hidden_dim, "hidden layer width")
        ->check(CLI::PositiveNumber);
    train->add_option("--classes", train_classes, "class count (default: max label + 1)");
    train->add_option("--epochs", train_epochs, "training epochs")->check(CLI::PositiveNumber);
    train->add_option("--lr", train_lr, "learning rate")->check(CLI::PositiveNumber);

    // --- generate ------------------------------------------------------
    std::string gen_corpus;
    std::string gen_model;
    std::string gen_explainer;
    std::string gen_config_file;
    std::string gen_id;
    std::string gen_version = "1.0";
    std::string gen_labels;
    int gen_workers = 1;
    auto* generate = app.add_subcommand("generate", "compute an explanation dataset for a "
                                                    "corpus/model/explainer coordinate");
    generate->add_option("--corpus", gen_corpus, "JSONL corpus file")
        ->required()
        ->check(CLI::ExistingFile);
    generate->add_option("--model", gen_model, "model JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    generate->add_option("--explainer", gen_explainer, "one of: lgxa, lig, lime, occ, svs")
        ->required()
        ->check(CLI::IsMember({"lgxa", "lig", "lime", "occ", "svs"}));
    generate->add_option("--config", gen_config_file,
                         "JSON file overriding explainer hyperparameters")
        ->check(CLI::ExistingFile);
    generate->add_option("--id", gen_id, "coordinate id 'dataset-model-explainer'")
        ->required();
    generate->add_option("--version", gen_version, "dataset version tag")
        ->capture_default_str();
    generate->add_option("--seed", seed, "global seed")->capture_default_str();
    generate->add_option("--workers", gen_workers, "parallel workers")
        ->check(CLI::PositiveNumber);
    generate->add_option("--labels", gen_labels, "comma-separated class label names");
    add_root(generate);

    // --- render --------------------------------------------------------
    std::string render_id;
    std::string render_version = "1.0";
    std::size_t render_idx = 0;
    std::string render_out;
    auto* render = app.add_subcommand("render", "write one instance as an HTML heatmap");
    render->add_option("--id", render_id, "coordinate id")->required();
    render->add_option("--version", render_version, "dataset version tag")
        ->capture_default_str();
    render->add_option("--idx", render_idx, "instance index")->required();
    render->add_option("--out", render_out, "output HTML file")->required();
    add_root(render);

    // --- correlate -----------------------------------------------------
    std::string cor_id_a;
    std::string cor_id_b;
    std::string cor_version_a = "1.0";
    std::string cor_version_b = "1.0";
    bool cor_drop_pad = false;
    auto* correlate = app.add_subcommand(
        "correlate", "Kendall tau between two datasets' flattened attribution maps");
    correlate->add_option("--id-a", cor_id_a, "first coordinate id")->required();
    correlate->add_option("--id-b", cor_id_b, "second coordinate id")->required();
    correlate->add_option("--version-a", cor_version_a, "")->capture_default_str();
    correlate->add_option("--version-b", cor_version_b, "")->capture_default_str();
    correlate->add_flag("--drop-pad", cor_drop_pad, "drop [PAD] positions before comparing");
    add_root(correlate);

    // --- compare -------------------------------------------------------
    std::string cmp_id_a;
    std::string cmp_id_b;
    std::string cmp_version_a = "1.0";
    std::string cmp_version_b = "1.0";
    std::string cmp_render_dir;
    auto* compare = app.add_subcommand(
        "compare", "list instances on which two datasets' predicted labels disagree");
    compare->add_option("--id-a", cmp_id_a, "first coordinate id")->required();
    compare->add_option("--id-b", cmp_id_b, "second coordinate id")->required();
    compare->add_option("--version-a", cmp_version_a, "")->capture_default_str();
    compare->add_option("--version-b", cmp_version_b, "")->capture_default_str();
    compare->add_option("--render-dir", cmp_render_dir,
                        "render side-by-side heatmaps for each pair into this directory");
    add_root(compare);

    // --- validate / info -------------------------------------------------
    std::string val_id;
    std::string val_version = "1.0";
    auto* validate = app.add_subcommand("validate", "check a stored dataset's invariants");
    validate->add_option("--id", val_id, "coordinate id")->required();
    validate->add_option("--version", val_version, "dataset version tag")
        ->capture_default_str();
    add_root(validate);

    std::string info_id;
    std::string info_version = "1.0";
    auto* info = app.add_subcommand("info", "print a dataset's config summary on one line");
    info->add_option("--id", info_id, "coordinate id")->required();
    info->add_option("--version", info_version, "dataset version tag")->capture_default_str();
    add_root(info);

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("thermo");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    // --- handlers --------------------------------------------------------

    if (train->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto corpus = load_corpus_jsonl(train_corpus);
                if (corpus.empty()) {
                    throw std::runtime_error("corpus " + train_corpus + " is empty");
                }
                int classes = train_classes;
                if (classes == 0) {
                    for (const auto& item : corpus) classes = std::max(classes, item.label + 1);
                    classes = std::max(classes, 2);
                }
                ReferenceModel model(build_vocab(corpus), train_embed_dim, train_hidden_dim,
                                     classes, seed);
                const auto report =
                    train_classifier(model, corpus, {train_lr, train_epochs});
                model.save(train_out);
                out << "trained reference model: vocab=" << model.vocab_size()
                    << " d=" << train_embed_dim << " h=" << train_hidden_dim
                    << " C=" << classes << " epochs=" << train_epochs
                    << " loss=" << format_double(report.final_loss)
                    << " accuracy=" << format_double(report.accuracy) << " -> " << train_out
                    << '\n';
                return 0;
            },
            err);
    }

    if (generate->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto corpus = load_corpus_jsonl(gen_corpus);
                nlohmann::json jcfg;
                jcfg["method"] = gen_explainer;
                if (!gen_config_file.empty()) {
                    std::ifstream in(gen_config_file);
                    nlohmann::json overrides;
                    try {
                        in >> overrides;
                    } catch (const nlohmann::json::exception& e) {
                        throw std::runtime_error("config file " + gen_config_file + ": " +
                                                 e.what());
                    }
                    if (overrides.contains("method") &&
                        overrides["method"].get<std::string>() != gen_explainer) {
                        throw std::runtime_error("config file method '" +
                                                 overrides["method"].get<std::string>() +
                                                 "' conflicts with --explainer " +
                                                 gen_explainer);
                    }
                    for (const auto& [key, value] : overrides.items()) jcfg[key] = value;
                }
                if (!jcfg.contains("seed")) jcfg["seed"] = seed;
                const auto explainer_config = explainer_config_from_json(jcfg);
                const auto coordinate = CoordinateId::parse(gen_id, gen_version);
                std::vector<std::string> label_names;
                if (!gen_labels.empty()) label_names = detail::split_csv(gen_labels);

                const auto start = std::chrono::steady_clock::now();
                const auto ds = generate_dataset(corpus, gen_model, explainer_config,
                                                 coordinate, gen_workers, label_names);
                save_dataset(ds, root);
                const std::chrono::duration<double> elapsed =
                    std::chrono::steady_clock::now() - start;
                char secs[32];
                std::snprintf(secs, sizeof(secs), "%.3f", elapsed.count());
                out << "generated " << ds.instances.size() << " instances in " << secs
                    << " s -> " << dataset_dir(root, coordinate).string() << '\n';
                return 0;
            },
            err);
    }

    if (render->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto ds = load_dataset(render_id, root, render_version);
                if (render_idx >= ds.instances.size()) {
                    throw std::runtime_error("instance idx " + std::to_string(render_idx) +
                                             " out of range (dataset has " +
                                             std::to_string(ds.instances.size()) +
                                             " instances)");
                }
                const auto model = ReferenceModel::load(ds.config.model_file);
                const auto html =
                    render_html(ds.instances[render_idx], model.vocab(),
                                ds.config.label_names, ds.config.coordinate.canonical());
                detail::write_text_file(render_out, html);
                out << "wrote " << render_out << '\n';
                return 0;
            },
            err);
    }

    if (correlate->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto a = load_dataset(cor_id_a, root, cor_version_a);
                const auto b = load_dataset(cor_id_b, root, cor_version_b);
                std::optional<TokenId> drop_pad;
                if (cor_drop_pad) {
                    drop_pad = ReferenceModel::load(a.config.model_file).pad_id();
                }
                const auto res = explainer_agreement(a, b, drop_pad);
                out << "tau=" << format_double(res.tau) << " p=" << format_double(res.p_value)
                    << " n=" << res.n << '\n';
                return 0;
            },
            err);
    }

    if (compare->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto a = load_dataset(cmp_id_a, root, cmp_version_a);
                const auto b = load_dataset(cmp_id_b, root, cmp_version_b);
                const auto pairs = disagreement(a, b);
                out << pairs.size() << " disagreements\n";
                if (!pairs.empty()) {
                    out << "idx:";
                    for (const auto& p : pairs) out << ' ' << p.idx;
                    out << '\n';
                }
                if (!cmp_render_dir.empty() && !pairs.empty()) {
                    std::filesystem::create_directories(cmp_render_dir);
                    const auto model_a = ReferenceModel::load(a.config.model_file);
                    const auto model_b = ReferenceModel::load(b.config.model_file);
                    for (const auto& p : pairs) {
                        const auto stem =
                            std::filesystem::path(cmp_render_dir) / std::to_string(p.idx);
                        detail::write_text_file(
                            stem.string() + "_a.html",
                            render_html(p.instance_a, model_a.vocab(), a.config.label_names,
                                        a.config.coordinate.canonical()));
                        detail::write_text_file(
                            stem.string() + "_b.html",
                            render_html(p.instance_b, model_b.vocab(), b.config.label_names,
                                        b.config.coordinate.canonical()));
                    }
                    out << "wrote " << 2 * pairs.size() << " heatmaps to " << cmp_render_dir
                        << '\n';
                }
                return 0;
            },
            err);
    }

    if (validate->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto ds = load_dataset(val_id, root, val_version);
                const auto violations = validate_dataset(ds);
                if (violations.empty()) {
                    out << "ok: " << ds.instances.size() << " instances\n";
                    return 0;
                }
                for (const auto& v : violations) out << v.message << '\n';
                return 1;
            },
            err);
    }

    if (info->parsed()) {
        return run_guarded(
            [&]() -> int {
                const auto ds = load_dataset(info_id, root, info_version);
                out << "id=" << ds.config.coordinate.canonical()
                    << " version=" << ds.config.coordinate.version
                    << " explainer=" << explainer_name(ds.config.explainer_config.method)
                    << " instances=" << ds.instances.size()
                    << " classes=" << ds.config.num_classes
                    << detail::method_params_text(ds.config.explainer_config.method)
                    << " seed=" << ds.config.explainer_config.seed << '\n';
                return 0;
            },
            err);
    }

    err << "error: no command given\n";
    return 1;
}

} // namespace thermo::cli
