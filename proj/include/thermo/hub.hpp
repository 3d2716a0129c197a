#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thermo/corpus.hpp"
#include "thermo/explain.hpp"
#include "thermo/model.hpp"
#include "thermo/serialize.hpp"
#include "thermo/vocab.hpp"

namespace thermo {

inline constexpr const char* kToolVersion = "0.1.0";

struct DatasetNotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

/// Three-coordinate dataset identifier plus a version tag. The canonical
/// string form is "dataset-model-explainer"; components are lowercase
/// alphanumeric with underscores, so '-' only ever separates coordinates.
struct CoordinateId {
    std::string dataset;
    std::string model;
    std::string explainer;
    std::string version = "1.0";

    static bool valid_component(std::string_view s) {
        if (s.empty()) return false;
        for (const char c : s) {
            const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
            if (!ok) return false;
        }
        return true;
    }

    static bool valid_version(std::string_view s) {
        if (s.empty()) return false;
        for (const char c : s) {
            const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                            c == '_' || c == '.';
            if (!ok) return false;
        }
        return true;
    }

    void check() const {
        if (!valid_component(dataset) || !valid_component(model) ||
            !valid_component(explainer)) {
            throw std::invalid_argument(
                "coordinate components must be lowercase alphanumeric/underscore, got '" +
                dataset + "-" + model + "-" + explainer + "'");
        }
        if (!valid_version(version)) {
            throw std::invalid_argument("invalid version tag '" + version + "'");
        }
    }

    std::string canonical() const {
        check();
        return dataset + "-" + model + "-" + explainer;
    }

    static CoordinateId parse(std::string_view canonical, std::string_view version = "1.0") {
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= canonical.size(); ++i) {
            if (i == canonical.size() || canonical[i] == '-') {
                parts.emplace_back(canonical.substr(start, i - start));
                start = i + 1;
            }
        }
        if (parts.size() != 3) {
            throw std::invalid_argument("coordinate id '" + std::string(canonical) +
                                        "' must have exactly three '-'-separated parts");
        }
        CoordinateId id{parts[0], parts[1], parts[2], std::string(version)};
        id.check();
        return id;
    }

    friend bool operator==(const CoordinateId&, const CoordinateId&) = default;
};

// ---------------------------------------------------------------------------
// Dataset schema
// ---------------------------------------------------------------------------

/// One explained example as shipped in data.jsonl.
struct Instance {
    std::size_t idx = 0;
    TokenSequence input_ids;
    std::vector<double> attributions;
    int true_label = 0;
    Logits logits;

    friend bool operator==(const Instance&, const Instance&) = default;
};

/// Versioned provenance record: coordinate plus every hyperparameter choice.
struct DatasetConfig {
    CoordinateId coordinate;
    ExplainerConfig explainer_config;
    std::string model_file;
    int num_classes = 2;
    std::vector<std::string> label_names;
    std::string created;  // ISO-8601 UTC
    std::string tool_version = kToolVersion;

    friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ExplanationDataset {
    DatasetConfig config;
    std::vector<Instance> instances;

    friend bool operator==(const ExplanationDataset&, const ExplanationDataset&) = default;
};

struct Violation {
    std::optional<std::size_t> instance_idx;  // nullopt = config-level
    std::string message;
};

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

inline nlohmann::json explainer_config_to_json(const ExplainerConfig& cfg) {
    nlohmann::json j;
    j["method"] = std::string(explainer_name(cfg.method));
    struct Writer {
        nlohmann::json& j;
        void operator()(const LgxaConfig&) const {}
        void operator()(const LigConfig& c) const { j["steps"] = c.steps; }
        void operator()(const LimeConfig& c) const {
            j["samples"] = c.samples;
            j["mask_prob"] = c.mask_prob;
            j["kernel_width"] = c.kernel_width;
            j["ridge_lambda"] = c.ridge_lambda;
        }
        void operator()(const OcclusionConfig& c) const { j["window"] = c.window; }
        void operator()(const SvsConfig& c) const { j["samples"] = c.samples; }
        void operator()(const ExactShapleyConfig&) const {}
    };
    std::visit(Writer{j}, cfg.method);
    j["seed"] = cfg.seed;
    return j;
}

inline ExplainerConfig explainer_config_from_json(const nlohmann::json& j) {
    ExplainerConfig cfg;
    cfg.method = default_method_config(j.at("method").get<std::string>());
    struct Reader {
        const nlohmann::json& j;
        void operator()(LgxaConfig&) const {}
        void operator()(LigConfig& c) const { c.steps = j.value("steps", c.steps); }
        void operator()(LimeConfig& c) const {
            c.samples = j.value("samples", c.samples);
            c.mask_prob = j.value("mask_prob", c.mask_prob);
            c.kernel_width = j.value("kernel_width", c.kernel_width);
            c.ridge_lambda = j.value("ridge_lambda", c.ridge_lambda);
        }
        void operator()(OcclusionConfig& c) const { c.window = j.value("window", c.window); }
        void operator()(SvsConfig& c) const { c.samples = j.value("samples", c.samples); }
        void operator()(ExactShapleyConfig&) const {}
    };
    std::visit(Reader{j}, cfg.method);
    cfg.seed = j.value("seed", cfg.seed);
    validate_config(cfg);
    return cfg;
}

inline nlohmann::json dataset_config_to_json(const DatasetConfig& cfg) {
    nlohmann::json j;
    j["coordinate"] = {{"dataset", cfg.coordinate.dataset},
                       {"model", cfg.coordinate.model},
                       {"explainer", cfg.coordinate.explainer},
                       {"version", cfg.coordinate.version}};
    j["explainer_config"] = explainer_config_to_json(cfg.explainer_config);
    j["model_file"] = cfg.model_file;
    j["num_classes"] = cfg.num_classes;
    j["label_names"] = cfg.label_names;
    j["created"] = cfg.created;
    j["tool_version"] = cfg.tool_version;
    return j;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    DatasetConfig cfg;
    const auto& jc = j.at("coordinate");
    cfg.coordinate = {jc.at("dataset").get<std::string>(),
                      jc.at("model").get<std::string>(),
                      jc.at("explainer").get<std::string>(),
                      jc.value("version", std::string("1.0"))};
    cfg.coordinate.check();
    cfg.explainer_config = explainer_config_from_json(j.at("explainer_config"));
    cfg.model_file = j.value("model_file", std::string());
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.label_names = j.value("label_names", std::vector<std::string>());
    cfg.created = j.value("created", std::string());
    cfg.tool_version = j.value("tool_version", std::string());
    return cfg;
}

// data.jsonl line, field order fixed, floats as shortest round-trip decimals.
inline std::string instance_to_jsonl(const Instance& inst) {
    std::string line = "{\"idx\":" + std::to_string(inst.idx) + ",\"input_ids\":[";
    for (std::size_t i = 0; i < inst.input_ids.size(); ++i) {
        if (i) line += ',';
        line += std::to_string(inst.input_ids[i]);
    }
    line += "],\"attributions\":[";
    for (std::size_t i = 0; i < inst.attributions.size(); ++i) {
        if (i) line += ',';
        line += format_double(inst.attributions[i]);
    }
    line += "],\"true_label\":" + std::to_string(inst.true_label) + ",\"logits\":[";
    for (std::size_t i = 0; i < inst.logits.size(); ++i) {
        if (i) line += ',';
        line += format_double(inst.logits[i]);
    }
    line += "]}";
    return line;
}

inline Instance instance_from_json(const nlohmann::json& j, int num_classes) {
    Instance inst;
    inst.idx = j.at("idx").get<std::size_t>();
    inst.input_ids = j.at("input_ids").get<TokenSequence>();
    inst.attributions = j.at("attributions").get<std::vector<double>>();
    inst.true_label = j.at("true_label").get<int>();
    inst.logits = j.at("logits").get<Logits>();
    if (inst.input_ids.empty()) {
        throw std::invalid_argument("input_ids must be non-empty");
    }
    if (inst.attributions.size() != inst.input_ids.size()) {
        throw std::invalid_argument("attributions length does not match input_ids length");
    }
    if (inst.logits.size() != static_cast<std::size_t>(num_classes)) {
        throw std::invalid_argument("logits length does not match num_classes");
    }
    if (inst.true_label < 0 || inst.true_label >= num_classes) {
        throw std::invalid_argument("true_label out of range");
    }
    for (const double v : inst.attributions) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite attribution");
    }
    for (const double v : inst.logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit");
    }
    return inst;
}

// ---------------------------------------------------------------------------
// Persistence: <root>/<dataset-model-explainer>/<version>/{config.json,data.jsonl}
// ---------------------------------------------------------------------------

inline std::filesystem::path dataset_dir(const std::filesystem::path& root,
                                         const CoordinateId& id) {
    return root / id.canonical() / id.version;
}

inline void save_dataset(const ExplanationDataset& ds, const std::filesystem::path& root) {
    const auto dir = dataset_dir(root, ds.config.coordinate);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create dataset directory " + dir.string() + ": " +
                                 ec.message());
    }
    {
        const auto file = dir / "config.json";
        std::ofstream out(file, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + file.string());
        out << dataset_config_to_json(ds.config).dump(2) << '\n';
        if (!out) throw std::runtime_error("write failed for " + file.string());
    }
    {
        const auto file = dir / "data.jsonl";
        std::ofstream out(file, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + file.string());
        for (const auto& inst : ds.instances) {
            out << instance_to_jsonl(inst) << '\n';
        }
        if (!out) throw std::runtime_error("write failed for " + file.string());
    }
}

inline ExplanationDataset load_dataset(const CoordinateId& id,
                                       const std::filesystem::path& root) {
    const auto dir = dataset_dir(root, id);
    const auto config_file = dir / "config.json";
    const auto data_file = dir / "data.jsonl";
    if (!std::filesystem::exists(config_file) || !std::filesystem::exists(data_file)) {
        throw DatasetNotFound("dataset '" + id.canonical() + "' version " + id.version +
                              " not found under " + root.string());
    }

    ExplanationDataset ds;
    {
        std::ifstream in(config_file);
        nlohmann::json j;
        try {
            in >> j;
            ds.config = dataset_config_from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(config_file.string() + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw SchemaError(config_file.string() + ": " + e.what());
        }
    }

    std::ifstream in(data_file);
    if (!in) {
        throw std::runtime_error("cannot open " + data_file.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ds.instances.push_back(instance_from_json(j, ds.config.num_classes));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(data_file.string() + " line " + std::to_string(lineno) + ": " +
                              e.what());
        } catch (const std::invalid_argument& e) {
            throw SchemaError(data_file.string() + " line " + std::to_string(lineno) + ": " +
                              e.what());
        }
    }
    return ds;
}

inline ExplanationDataset load_dataset(std::string_view canonical,
                                       const std::filesystem::path& root,
                                       std::string_view version = "1.0") {
    return load_dataset(CoordinateId::parse(canonical, version), root);
}

// ---------------------------------------------------------------------------
// Validation, filtering, sorting
// ---------------------------------------------------------------------------

inline std::vector<Violation> validate_dataset(const ExplanationDataset& ds) {
    std::vector<Violation> out;
    const int c = ds.config.num_classes;
    if (explainer_name(ds.config.explainer_config.method) != ds.config.coordinate.explainer) {
        out.push_back({std::nullopt, "explainer config tag '" +
                                         std::string(explainer_name(
                                             ds.config.explainer_config.method)) +
                                         "' does not match coordinate explainer '" +
                                         ds.config.coordinate.explainer + "'"});
    }
    if (c < 2) {
        out.push_back({std::nullopt, "num_classes must be >= 2"});
    }
    for (std::size_t i = 0; i < ds.instances.size(); ++i) {
        const auto& inst = ds.instances[i];
        const auto tag = [&](std::string msg) {
            out.push_back({inst.idx, "instance idx " + std::to_string(inst.idx) + ": " +
                                        std::move(msg)});
        };
        if (inst.idx != i) {
            tag("idx does not equal position " + std::to_string(i) +
                " (expected contiguous 0..N-1)");
        }
        if (inst.input_ids.empty()) {
            tag("input_ids empty");
        }
        if (inst.attributions.size() != inst.input_ids.size()) {
            tag("attributions length " + std::to_string(inst.attributions.size()) +
                " != input_ids length " + std::to_string(inst.input_ids.size()));
        }
        if (inst.logits.size() != static_cast<std::size_t>(c)) {
            tag("logits length " + std::to_string(inst.logits.size()) + " != num_classes " +
                std::to_string(c));
        }
        if (inst.true_label < 0 || inst.true_label >= c) {
            tag("true_label " + std::to_string(inst.true_label) + " out of range");
        }
        for (const double v : inst.attributions) {
            if (!std::isfinite(v)) {
                tag("non-finite attribution");
                break;
            }
        }
        for (const double v : inst.logits) {
            if (!std::isfinite(v)) {
                tag("non-finite logit");
                break;
            }
        }
    }
    return out;
}

// Keeps original idx values; order-stable.
template <class Pred>
ExplanationDataset filter(const ExplanationDataset& ds, Pred&& pred) {
    ExplanationDataset out;
    out.config = ds.config;
    for (const auto& inst : ds.instances) {
        if (pred(inst)) out.instances.push_back(inst);
    }
    return out;
}

// Ascending by key; stable.
template <class Key>
ExplanationDataset sort_by(const ExplanationDataset& ds, Key&& key) {
    ExplanationDataset out = ds;
    std::stable_sort(out.instances.begin(), out.instances.end(),
                     [&](const Instance& a, const Instance& b) { return key(a) < key(b); });
    return out;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

// tokenize -> forward -> select argmax target -> explain, one Instance per
// corpus entry, in corpus order. Stochastic explainers get a per-instance
// seed mixed from the config seed and the instance index, so the result is
// independent of the number of workers.
inline ExplanationDataset generate_dataset(const std::vector<LabeledText>& corpus,
                                           const std::filesystem::path& model_file,
                                           const ExplainerConfig& explainer_config,
                                           const CoordinateId& coordinate,
                                           int workers = 1,
                                           std::vector<std::string> label_names = {}) {
    if (corpus.empty()) {
        throw std::invalid_argument("generate: empty corpus");
    }
    coordinate.check();
    validate_config(explainer_config);
    if (explainer_name(explainer_config.method) != coordinate.explainer) {
        throw std::invalid_argument("generate: explainer config tag '" +
                                    std::string(explainer_name(explainer_config.method)) +
                                    "' does not match coordinate explainer '" +
                                    coordinate.explainer + "'");
    }
    const ReferenceModel model = ReferenceModel::load(model_file);
    if (label_names.empty()) {
        for (int i = 0; i < model.num_classes(); ++i) {
            label_names.push_back(std::to_string(i));
        }
    }
    if (label_names.size() != static_cast<std::size_t>(model.num_classes())) {
        throw std::invalid_argument("generate: label_names size does not match num_classes");
    }

    ExplanationDataset ds;
    ds.config.coordinate = coordinate;
    ds.config.explainer_config = explainer_config;
    ds.config.model_file = model_file.string();
    ds.config.num_classes = model.num_classes();
    ds.config.label_names = std::move(label_names);
    ds.config.created = utc_timestamp();
    ds.config.tool_version = kToolVersion;
    ds.instances.resize(corpus.size());

    const auto explain_one = [&](std::size_t idx) {
        const auto& item = corpus[idx];
        if (item.label < 0 || item.label >= model.num_classes()) {
            throw std::invalid_argument("label " + std::to_string(item.label) +
                                        " out of range");
        }
        Instance inst;
        inst.idx = idx;
        inst.input_ids = tokenize(item.text, model.vocab());
        inst.logits = model.forward(inst.input_ids);
        inst.true_label = item.label;
        const int target = select_target(inst.logits);
        ExplainerConfig per_instance = explainer_config;
        per_instance.seed = mix_seed(explainer_config.seed, idx);
        inst.attributions = explain(model, inst.input_ids, target, per_instance).scores;
        ds.instances[idx] = std::move(inst);
    };

    const int thread_count = std::max(1, workers);
    if (thread_count == 1) {
        for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
            try {
                explain_one(idx);
            } catch (const std::exception& e) {
                throw std::runtime_error("generate: instance " + std::to_string(idx) + ": " +
                                         e.what());
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::optional<std::pair<std::size_t, std::string>> first_error;
        auto worker = [&] {
            for (;;) {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= corpus.size()) return;
                {
                    std::lock_guard lock(error_mutex);
                    if (first_error) return;
                }
                try {
                    explain_one(idx);
                } catch (const std::exception& e) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error || idx < first_error->first) {
                        first_error = {idx, e.what()};
                    }
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(thread_count));
        for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (first_error) {
            throw std::runtime_error("generate: instance " +
                                     std::to_string(first_error->first) + ": " +
                                     first_error->second);
        }
    }
    return ds;
}

} // namespace thermo
