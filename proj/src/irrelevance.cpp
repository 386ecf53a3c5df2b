#include "gtee/irrelevance.hpp"

#include <json.hpp>

#include "gtee/error.hpp"
#include "gtee/io.hpp"
#include "gtee/log.hpp"
#include "gtee/model.hpp"

namespace gtee {

using json = nlohmann::ordered_json;

Tensor ICModel::logits(std::span<const int> ids) const { return out(num::gelu(hidden(encoder.pooled(ids)))); }

Tensor ICModel::probabilities(std::span<const int> ids) const { return num::softmax(logits(ids)); }

void ICModel::collect(const std::string& prefix, nn::ParamList& params) const {
    encoder.collect(prefix + "encoder/", params);
    hidden.collect(prefix + "hidden/", params);
    out.collect(prefix + "out/", params);
}

nn::ParamList ICModel::parameters() const {
    nn::ParamList p;
    collect("ic/", p);
    return p;
}

ICModel create_ic(Vocab vocab, nn::EncoderConfig config, std::uint64_t seed) {
    ICModel m;
    config.vocab_size = vocab.size();
    m.vocab = std::move(vocab);
    Rng rng = Rng(seed).fork(3);
    m.encoder = nn::PooledEncoder(config, rng);
    m.hidden = nn::Linear(config.d_model, config.d_model, rng);
    m.out = nn::Linear(config.d_model, 2, rng);
    return m;
}

bool is_relevant(const SentenceInstance& s) { return !s.events.empty(); }

TrainConfig ic_desk_config() {
    TrainConfig c;
    c.epochs = 8;
    c.learning_rate = 1e-3;
    c.batch_size = 16;
    return c;
}

TrainConfig ic_reference_config() {
    TrainConfig c;
    c.epochs = 12;
    c.learning_rate = 2e-5;
    c.batch_size = 128;
    return c;
}

namespace {

std::vector<int> context_ids(const ICModel& m, const SentenceInstance& s) { return m.vocab.tokenize(join_tokens(s.tokens)); }

}  // namespace

bool classify(const ICModel& model, const SentenceInstance& context) {
    num::NoGradGuard guard;
    const auto ids = context_ids(model, context);
    const Tensor l = model.logits(ids);
    return l.at(0, 1) >= l.at(0, 0);
}

double accuracy(const ICModel& model, const Dataset& data) {
    if (data.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& s : data) ok += classify(model, s) == is_relevant(s);
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

ICTrainResult train_ic(ICModel& model, const Dataset& train, const Dataset& dev, const TrainConfig& config) {
    config.validate();
    std::size_t pos = 0;
    for (const auto& s : train) pos += is_relevant(s);
    if (pos == 0 || pos == train.size()) throw DataError("train_ic: training labels contain a single class");

    std::vector<std::vector<int>> ids;
    std::vector<int> labels;
    for (const auto& s : train) {
        ids.push_back(context_ids(model, s));
        labels.push_back(is_relevant(s) ? 1 : 0);
    }
    const auto params = model.parameters();
    AdamW opt(params, config.weight_decay);
    Rng rng(config.seed);
    const std::size_t per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total = per_epoch * config.epochs;

    ICTrainResult res;
    std::vector<std::vector<double>> best;
    std::vector<std::size_t> order(train.size());
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t lo = b * config.batch_size, hi = std::min(order.size(), lo + config.batch_size);
            opt.zero_grad();
            for (std::size_t k = lo; k < hi; ++k) {
                const int target = labels[order[k]];
                const Tensor l = num::cross_entropy(model.logits(ids[order[k]]), std::span<const int>(&target, 1));
                loss_sum += l.item();
                num::scale(l, 1.0 / static_cast<double>(hi - lo)).backward();
            }
            opt.step(learning_rate_at(step, total, config.learning_rate, config.warmup_ratio), config.grad_clip_norm);
        }
        ICEpoch e{epoch, loss_sum / static_cast<double>(train.size()), accuracy(model, dev.empty() ? train : dev)};
        res.log.push_back(e);
        log_info("ic epoch " + std::to_string(epoch) + ": loss " + std::to_string(e.loss) + ", dev accuracy " +
                 std::to_string(e.dev_accuracy));
        if (best.empty() || e.dev_accuracy > res.best_dev_accuracy) {
            res.best_dev_accuracy = e.dev_accuracy;
            res.best_epoch = epoch;
            best.clear();
            for (const auto& p : params) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        std::copy(best[i].begin(), best[i].end(), t.mutable_data().begin());
    }
    return res;
}

ICMode parse_ic_mode(const std::string& s) {
    if (s == "none") return ICMode::None;
    if (s == "trained") return ICMode::Trained;
    if (s == "gold") return ICMode::Gold;
    throw ContractError("unknown IC mode '" + s + "'");
}

std::string to_string(ICMode m) {
    switch (m) {
        case ICMode::None: return "none";
        case ICMode::Trained: return "trained";
        case ICMode::Gold: return "gold";
    }
    return "none";
}

std::vector<char> filter_contexts(ICMode mode, const Dataset& contexts, const ICModel* model, const Dataset* gold) {
    std::vector<char> keep(contexts.size(), 1);
    switch (mode) {
        case ICMode::None:
            break;
        case ICMode::Trained:
            if (!model) throw ContractError("filter_contexts: trained mode needs a classifier");
            for (std::size_t i = 0; i < contexts.size(); ++i) keep[i] = classify(*model, contexts[i]) ? 1 : 0;
            break;
        case ICMode::Gold:
            if (!gold) throw ContractError("filter_contexts: gold mode needs gold records");
            if (gold->size() != contexts.size()) throw DataError("filter_contexts: gold and contexts differ in size");
            for (std::size_t i = 0; i < contexts.size(); ++i) {
                if ((*gold)[i].sent_id != contexts[i].sent_id) {
                    throw DataError("filter_contexts: gold context '" + (*gold)[i].sent_id + "' does not match '" +
                                    contexts[i].sent_id + "'");
                }
                keep[i] = is_relevant((*gold)[i]) ? 1 : 0;
            }
            break;
    }
    return keep;
}

void save_ic(const std::filesystem::path& dir, const ICModel& model) {
    std::filesystem::create_directories(dir);
    json m;
    m["format"] = "gtee-ic-1";
    const auto& c = model.encoder.config;
    m["encoder"] = {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers},
                    {"n_heads", c.n_heads},       {"d_ff", c.d_ff},       {"max_len", c.max_len}};
    m["vocab"] = model.vocab.tokens();
    num::write_tensors(dir / "tensors.bin", model.parameters());
    write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

ICModel load_ic(const std::filesystem::path& dir) {
    try {
        const json m = json::parse(read_text(dir / "manifest.json"));
        if (m.at("format").get<std::string>() != "gtee-ic-1") throw DataError("unsupported classifier format");
        const auto& e = m.at("encoder");
        nn::EncoderConfig c;
        c.d_model = e.at("d_model").get<std::size_t>();
        c.n_layers = e.at("n_layers").get<std::size_t>();
        c.n_heads = e.at("n_heads").get<std::size_t>();
        c.d_ff = e.at("d_ff").get<std::size_t>();
        c.max_len = e.at("max_len").get<std::size_t>();
        ICModel model = create_ic(Vocab::from_tokens(m.at("vocab").get<std::vector<std::string>>()), c, 0);
        const auto tensors = num::read_tensors(dir / "tensors.bin");
        const auto params = model.parameters();
        if (tensors.size() != params.size()) throw DataError("classifier checkpoint has the wrong tensor count");
        nn::load_params(params, tensors);
        return model;
    } catch (const json::exception& ex) {
        throw DataError(dir.string() + "/manifest.json: " + ex.what());
    }
}

}  // namespace gtee
