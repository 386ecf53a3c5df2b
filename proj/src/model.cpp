#include "gtee/model.hpp"

#include <algorithm>
#include <set>

#include "gtee/error.hpp"
#include "gtee/io.hpp"
#include "gtee/outparse.hpp"

namespace gtee {

using json = nlohmann::ordered_json;

PrefixMode parse_prefix_mode(const std::string& s) {
    if (s == "none") return PrefixMode::None;
    if (s == "static") return PrefixMode::Static;
    if (s == "dynamic") return PrefixMode::Dynamic;
    throw ContractError("unknown prefix mode '" + s + "'");
}

std::string to_string(PrefixMode m) {
    switch (m) {
        case PrefixMode::None: return "none";
        case PrefixMode::Static: return "static";
        case PrefixMode::Dynamic: return "dynamic";
    }
    return "none";
}

nn::ParamList GteeModel::parameters() const {
    nn::ParamList out = lm.parameters();
    const auto theta = prefix.parameters();
    out.insert(out.end(), theta.begin(), theta.end());
    return out;
}

Vocab build_vocab(const EventOntology& ontology, const Dataset& train) {
    std::vector<std::string> texts;
    for (const auto& def : ontology.types) texts.push_back(build_prompt(def).full_text);
    for (const auto& s : train) {
        texts.push_back(join_tokens(s.tokens));
        for (const auto& e : s.events) {
            texts.push_back(e.trigger_text);
            for (const auto& a : e.arguments) texts.push_back(a.text);
        }
    }
    return Vocab::build(texts);
}

GteeModel create_model(const EventOntology& ontology, Vocab vocab, ModelConfig lm_config, PrefixConfig prefix_config,
                       std::uint64_t seed) {
    GteeModel m;
    m.ontology = ontology;
    m.vocab = std::move(vocab);
    lm_config.vocab_size = m.vocab.size();
    prefix_config.n_types = ontology.size();
    prefix_config.context.vocab_size = m.vocab.size();
    Rng rng(seed);
    Rng lm_rng = rng.fork(1);
    Rng prefix_rng = rng.fork(2);
    m.lm = Seq2SeqModel(lm_config, lm_rng);
    m.prefix = PrefixModule(prefix_config, lm_config.n_layers, lm_config.d_model, prefix_rng);
    return m;
}

std::size_t default_max_steps(const EventOntology& ontology, const Dataset& train) {
    std::size_t longest = 0;
    for (const auto& inst : build_training_instances(train, ontology)) {
        longest = std::max(longest, split_whitespace(inst.target).size());
    }
    return longest + 8;
}

json to_json(const ModelConfig& c) {
    json j;
    j["vocab_size"] = c.vocab_size;
    j["d_model"] = c.d_model;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["d_ff"] = c.d_ff;
    j["max_len"] = c.max_len;
    j["cross_attention_prefix"] = c.cross_attention_prefix;
    j["tie_embeddings"] = c.tie_embeddings;
    return j;
}

json to_json(const PrefixConfig& c) {
    json j;
    j["n_types"] = c.n_types;
    j["length"] = c.length;
    j["d_prime"] = c.d_prime;
    j["dyn_heads"] = c.dyn_heads;
    j["reparametrize"] = c.reparametrize;
    j["context"] = {{"vocab_size", c.context.vocab_size}, {"d_model", c.context.d_model},
                    {"n_layers", c.context.n_layers},     {"n_heads", c.context.n_heads},
                    {"d_ff", c.context.d_ff},             {"max_len", c.context.max_len}};
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.cross_attention_prefix = j.value("cross_attention_prefix", false);
    c.tie_embeddings = j.value("tie_embeddings", true);
    return c;
}

PrefixConfig prefix_config_from_json(const json& j) {
    PrefixConfig c;
    c.n_types = j.at("n_types").get<std::size_t>();
    c.length = j.at("length").get<std::size_t>();
    c.d_prime = j.at("d_prime").get<std::size_t>();
    c.dyn_heads = j.at("dyn_heads").get<std::size_t>();
    c.reparametrize = j.at("reparametrize").get<bool>();
    const auto& ctx = j.at("context");
    c.context.vocab_size = ctx.at("vocab_size").get<std::size_t>();
    c.context.d_model = ctx.at("d_model").get<std::size_t>();
    c.context.n_layers = ctx.at("n_layers").get<std::size_t>();
    c.context.n_heads = ctx.at("n_heads").get<std::size_t>();
    c.context.d_ff = ctx.at("d_ff").get<std::size_t>();
    c.context.max_len = ctx.at("max_len").get<std::size_t>();
    return c;
}

namespace {

constexpr const char* kManifestFormat = "gtee-checkpoint-1";

void audit_partition(const nn::ParamList& params) {
    std::set<std::string> seen;
    for (const auto& p : params) {
        const bool phi = p.name.rfind("phi/", 0) == 0;
        const bool theta = p.name.rfind("theta/", 0) == 0;
        if (phi == theta) throw ContractError("parameter '" + p.name + "' is outside the phi/theta partition");
        if (!seen.insert(p.name).second) throw ContractError("parameter '" + p.name + "' registered twice");
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const GteeModel& model) {
    const auto params = model.parameters();
    audit_partition(params);
    std::filesystem::create_directories(dir);

    json m;
    m["format"] = kManifestFormat;
    m["stage"] = model.stage;
    m["max_steps"] = model.max_steps;
    m["lm"] = to_json(model.lm.config());
    m["prefix"] = to_json(model.prefix.config());
    json markers;
    for (const auto& t : Vocab::reserved_tokens()) markers[t] = model.vocab.id(t);
    m["markers"] = markers;
    m["vocab"] = model.vocab.tokens();
    m["ontology"] = json::parse(serialize_ontology(model.ontology));
    std::size_t n_phi = 0;
    for (const auto& p : params) n_phi += p.name.rfind("phi/", 0) == 0;
    m["tensors"] = {{"phi", n_phi}, {"theta", params.size() - n_phi}};

    num::write_tensors(dir / "tensors.bin", params);
    write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

GteeModel load_checkpoint(const std::filesystem::path& dir) {
    json m;
    try {
        m = json::parse(read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/manifest.json: " + e.what());
    }
    try {
        if (m.at("format").get<std::string>() != kManifestFormat) throw DataError("unsupported checkpoint format");
        GteeModel model = create_model(parse_ontology(m.at("ontology").dump()),
                                       Vocab::from_tokens(m.at("vocab").get<std::vector<std::string>>()),
                                       model_config_from_json(m.at("lm")), prefix_config_from_json(m.at("prefix")), 0);
        model.stage = m.at("stage").get<std::string>();
        model.max_steps = m.at("max_steps").get<std::size_t>();
        const auto tensors = num::read_tensors(dir / "tensors.bin");
        const auto params = model.parameters();
        if (tensors.size() != params.size()) {
            throw DataError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                            std::to_string(params.size()));
        }
        nn::load_params(params, tensors);
        return model;
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/manifest.json: " + e.what());
    }
}

std::vector<std::uint8_t> phi_bytes(const GteeModel& model) { return num::encode_tensors(model.lm.parameters()); }

std::vector<EncodedInstance> encode_instances(const GteeModel& model, const std::vector<TrainingInstance>& instances,
                                              const Dataset& data) {
    std::vector<std::vector<int>> contexts(data.size());
    std::vector<EncodedInstance> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        auto& ctx = contexts.at(inst.context_index);
        if (ctx.empty()) ctx = model.vocab.tokenize(join_tokens(data[inst.context_index].tokens));
        out.push_back({model.vocab.tokenize(inst.input), model.vocab.tokenize(inst.target), ctx, inst.type_index,
                       inst.context_index, inst.positive()});
    }
    return out;
}

std::optional<ActivationHistory> subtask_prefix(const GteeModel& model, PrefixMode mode, std::size_t type_index,
                                                std::span<const int> context_ids) {
    switch (mode) {
        case PrefixMode::None:
            return std::nullopt;
        case PrefixMode::Static: {
            // A one-type mask never looks at the context.
            const Tensor c = Tensor::zeros({1, model.prefix.config().context.d_model});
            return model.prefix.dynamic_prefix(c, std::vector<std::size_t>{type_index}).history;
        }
        case PrefixMode::Dynamic:
            return model.prefix.dynamic_prefix(model.prefix.context_vector(context_ids), std::nullopt).history;
    }
    return std::nullopt;
}

PredictionOutput predict(const GteeModel& model, const Dataset& contexts, const DecodeOptions& options,
                         const std::vector<char>* active) {
    if (active && active->size() != contexts.size()) throw ContractError("predict: filter size mismatch");
    std::vector<std::size_t> types;
    if (options.types) {
        types = *options.types;
        std::sort(types.begin(), types.end());
        types.erase(std::unique(types.begin(), types.end()), types.end());
        for (auto t : types)
            if (t >= model.ontology.size()) throw ContractError("predict: type index out of range");
    } else {
        for (std::size_t e = 0; e < model.ontology.size(); ++e) types.push_back(e);
    }
    std::vector<Prompt> prompts;
    for (const auto& def : model.ontology.types) prompts.push_back(build_prompt(def));
    const std::size_t max_steps = options.max_steps ? options.max_steps : model.max_steps;

    num::NoGradGuard guard;
    PredictionOutput out;
    out.generated.resize(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        SentenceInstance pred = contexts[i];
        pred.events.clear();
        if (active && !(*active)[i]) {
            out.predictions.push_back(std::move(pred));
            continue;
        }
        const auto ctx_ids = model.vocab.tokenize(join_tokens(pred.tokens));
        std::optional<ActivationHistory> shared;
        if (options.mode == PrefixMode::Dynamic) shared = subtask_prefix(model, options.mode, 0, ctx_ids);
        for (std::size_t e : types) {
            const auto x = model.vocab.tokenize(model_input(prompts[e], pred.tokens));
            std::optional<ActivationHistory> own;
            if (options.mode == PrefixMode::Static) own = subtask_prefix(model, options.mode, e, ctx_ids);
            const ActivationHistory* prefix = shared ? &*shared : own ? &*own : nullptr;
            const auto beam = model.lm.beam_search(x, prefix, options.beam, max_steps);
            const std::string text = model.vocab.detokenize(beam.ids);
            for (auto& r : decode_records(text, model.ontology.types[e], pred.tokens)) pred.events.push_back(std::move(r));
            out.generated[i].push_back(text);
        }
        out.predictions.push_back(std::move(pred));
    }
    return out;
}

}  // namespace gtee
