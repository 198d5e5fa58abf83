#include "calm/checkpoint.h"

#include <fstream>

#include "json.hpp"

namespace calm {

template <typename T>
void save_checkpoint(ModelParams<T>& model, const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "calm-checkpoint";
    j["version"] = 1;
    j["variant"] = variant_name(model.variant);
    j["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
    nlohmann::ordered_json cfg;
    cfg["vocab_size"] = model.cfg.vocab_size;
    cfg["d_model"] = model.cfg.d_model;
    cfg["n_layers"] = model.cfg.n_layers;
    cfg["n_heads"] = model.cfg.n_heads;
    cfg["d_ff"] = model.cfg.d_ff;
    cfg["max_position"] = model.cfg.max_position;
    cfg["causal_within_segment"] = model.cfg.causal_within_segment;
    j["config"] = cfg;
    j["n_classes"] = model.n_classes;
    j["max_component_length"] = model.max_component_length;
    if (model.inter) {
        j["rank"] = model.inter->rank;
        j["beta"] = static_cast<double>(model.inter->beta);
    }
    if (model.f1_threshold) j["f1_threshold"] = *model.f1_threshold;
    j["schema"] = model.schema;
    j["vocab"] = model.vocab.tokens();

    nlohmann::ordered_json tensors;
    model.visit([&](const std::string& name, PTensor<T>& t) {
        if (!t.v.finite()) throw NumericError("checkpoint: non-finite values in " + name);
        nlohmann::ordered_json entry;
        entry["rows"] = t.v.rows;
        entry["cols"] = t.v.cols;
        entry["data"] = t.v.a;
        tensors[name] = std::move(entry);
    });
    j["tensors"] = std::move(tensors);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump(1) << '\n';
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("checkpoint parse error: ") + e.what());
    }
    if (j.value("format", "") != "calm-checkpoint")
        throw DataError("not a calm checkpoint: " + path);
    if (j.value("version", 0) != 1) throw DataError("unsupported checkpoint version");

    ModelParams<T> model;
    model.variant = variant_from_name(j.at("variant").get<std::string>());
    const auto& cfg = j.at("config");
    model.cfg.vocab_size = cfg.at("vocab_size").get<int>();
    model.cfg.d_model = cfg.at("d_model").get<int>();
    model.cfg.n_layers = cfg.at("n_layers").get<int>();
    model.cfg.n_heads = cfg.at("n_heads").get<int>();
    model.cfg.d_ff = cfg.at("d_ff").get<int>();
    model.cfg.max_position = cfg.at("max_position").get<int>();
    model.cfg.causal_within_segment = cfg.at("causal_within_segment").get<bool>();
    model.n_classes = j.at("n_classes").get<int>();
    model.max_component_length = j.at("max_component_length").get<int>();
    model.schema = j.at("schema").get<std::vector<std::string>>();

    auto tokens = j.at("vocab").get<std::vector<std::string>>();
    if (static_cast<int>(tokens.size()) < kNumReserved)
        throw DataError("checkpoint vocabulary is too small");
    for (int i = kNumReserved; i < static_cast<int>(tokens.size()); ++i)
        model.vocab.add(tokens[i]);
    if (model.vocab.size() != model.cfg.vocab_size)
        throw DataError("checkpoint vocab size does not match config");

    uint64_t dummy_seed = 0;
    if (model.variant == Variant::calm2) {
        model.init(model.variant, model.schema, model.vocab, model.cfg, dummy_seed,
                   j.at("rank").get<int>(), static_cast<T>(j.at("beta").get<double>()));
    } else {
        model.init(model.variant, model.schema, model.vocab, model.cfg, dummy_seed);
    }
    if (j.contains("f1_threshold")) model.f1_threshold = j["f1_threshold"].get<double>();

    const auto& tensors = j.at("tensors");
    model.visit([&](const std::string& name, PTensor<T>& t) {
        if (!tensors.contains(name)) throw DataError("checkpoint missing tensor: " + name);
        const auto& entry = tensors.at(name);
        if (entry.at("rows").get<int>() != t.v.rows || entry.at("cols").get<int>() != t.v.cols)
            throw DataError("checkpoint tensor shape mismatch: " + name);
        const auto& data = entry.at("data");
        if (data.size() != t.v.a.size()) throw DataError("checkpoint tensor size mismatch: " + name);
        for (size_t i = 0; i < t.v.a.size(); ++i)
            t.v.a[i] = static_cast<T>(data[i].get<double>());
        t.g.zero();
    });
    return model;
}

template void save_checkpoint<float>(ModelParams<float>&, const std::string&);
template void save_checkpoint<double>(ModelParams<double>&, const std::string&);
template ModelParams<float> load_checkpoint<float>(const std::string&);
template ModelParams<double> load_checkpoint<double>(const std::string&);

}  // namespace calm
