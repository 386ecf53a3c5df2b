#include "gtee/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "gtee/error.hpp"
#include "gtee/log.hpp"
#include "gtee/outparse.hpp"

namespace gtee {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ContractError("TrainConfig: warmup_ratio outside [0, 1]");
    if (!(neg_sample_rate >= 0.0 && neg_sample_rate <= 1.0)) throw ContractError("TrainConfig: neg_sample_rate outside [0, 1]");
    if (!(learning_rate >= 0.0)) throw ContractError("TrainConfig: negative learning rate");
    if (!(weight_decay >= 0.0)) throw ContractError("TrainConfig: negative weight decay");
    if (epochs == 0 || batch_size == 0) throw ContractError("TrainConfig: epochs and batch_size must be positive");
    if (dev_beam == 0) throw ContractError("TrainConfig: dev_beam must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("TrainConfig: dropout outside [0, 1)");
}

TrainConfig TrainConfig::desk(int stage) {
    TrainConfig c;
    switch (stage) {
        case 1: c.epochs = 60; c.learning_rate = 1e-3; c.dropout = 0.1; break;
        case 2: c.epochs = 5; c.learning_rate = 1e-3; break;
        case 3: c.epochs = 10; c.learning_rate = 1e-3; break;
        default: throw ContractError("unknown stage " + std::to_string(stage));
    }
    return c;
}

TrainConfig TrainConfig::reference(int stage) {
    TrainConfig c;
    c.weight_decay = 1e-5;
    c.grad_clip_norm = 5.0;
    c.warmup_ratio = 0.1;
    switch (stage) {
        case 1: c.epochs = 40; c.learning_rate = 1e-5; c.batch_size = 256; break;
        case 2:
        case 3: c.epochs = 30; c.learning_rate = 5e-5; c.batch_size = 256; break;
        default: throw ContractError("unknown stage " + std::to_string(stage));
    }
    return c;
}

json to_json(const TrainConfig& c) {
    json j;
    j["learning_rate"] = c.learning_rate;
    j["weight_decay"] = c.weight_decay;
    j["grad_clip_norm"] = c.grad_clip_norm;
    j["warmup_ratio"] = c.warmup_ratio;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["neg_sample_rate"] = c.neg_sample_rate;
    j["dev_beam"] = c.dev_beam;
    j["dropout"] = c.dropout;
    return j;
}

std::vector<TrainingInstance> sample_negatives(const std::vector<TrainingInstance>& instances, double rate,
                                               std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ContractError("sample_negatives: rate outside [0, 1]");
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < instances.size(); ++i)
        if (!instances[i].positive()) negatives.push_back(i);
    const auto keep = static_cast<std::size_t>(std::floor(rate * static_cast<double>(negatives.size())));
    Rng rng(seed);
    rng.shuffle(negatives);
    std::vector<char> kept(instances.size(), 0);
    for (std::size_t k = 0; k < keep; ++k) kept[negatives[k]] = 1;
    std::vector<TrainingInstance> out;
    for (std::size_t i = 0; i < instances.size(); ++i)
        if (instances[i].positive() || kept[i]) out.push_back(instances[i]);
    return out;
}

Tensor instance_nll(const GteeModel& model, const EncodedInstance& inst, PrefixMode mode) {
    const auto prefix = subtask_prefix(model, mode, inst.type_index, inst.context);
    return model.lm.sequence_nll(inst.x, inst.y, prefix ? &*prefix : nullptr);
}

Tensor nll_loss(const GteeModel& model, std::span<const EncodedInstance> batch, PrefixMode mode) {
    if (batch.empty()) throw ContractError("nll_loss: empty batch");
    Tensor total;
    for (const auto& inst : batch) {
        const Tensor l = instance_nll(model, inst, mode);
        total = total.defined() ? num::add(total, l) : l;
    }
    return num::scale(total, 1.0 / static_cast<double>(batch.size()));
}

double learning_rate_at(std::size_t step, std::size_t total_steps, double peak, double warmup_ratio) {
    const double warm = warmup_ratio * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (s < warm) return peak * s / warm;
    const double rest = static_cast<double>(total_steps) - warm;
    if (rest <= 0.0) return 0.0;
    return peak * std::max(0.0, (static_cast<double>(total_steps) - s) / rest);
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        if (p.tensor.has_grad())
            for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
        const double s = max_norm / norm;
        for (const auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            Tensor t = p.tensor;
            for (double& g : t.mutable_grad()) g *= s;
        }
    }
    return norm;
}

AdamW::AdamW(nn::ParamList params, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (const auto& p : params_) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
}

bool AdamW::step(double lr, double clip_norm) {
    const double norm = clip_grad_norm(params_, clip_norm);
    if (!std::isfinite(norm)) {
        ++skipped_;
        log_warn("non-finite gradient; optimizer step skipped");
        zero_grad();
        return false;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor t = params_[i].tensor;
        auto w = t.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        const bool has = t.has_grad();
        const auto g = has ? t.grad() : std::span<const double>{};
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = has ? g[k] : 0.0;
            w[k] -= lr * weight_decay_ * w[k];
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
            w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
        }
    }
    return true;
}

std::string log_row(const EpochLog& row) {
    char buf[256];
    if (row.scored) {
        std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", row.epoch, row.split.c_str(), row.loss,
                      row.score.trg.precision, row.score.trg.recall, row.score.trg.f1, row.score.arg.precision,
                      row.score.arg.recall, row.score.arg.f1);
    } else {
        std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,,,,,,", row.epoch, row.split.c_str(), row.loss);
    }
    return buf;
}

void reset_prefix(GteeModel& model, PrefixConfig config, std::uint64_t seed) {
    config.n_types = model.ontology.size();
    config.context.vocab_size = model.vocab.size();
    Rng rng = Rng(seed).fork(2);
    model.prefix = PrefixModule(config, model.lm.config().n_layers, model.lm.config().d_model, rng);
}

PrefixMode stage_mode(int stage) {
    switch (stage) {
        case 1: return PrefixMode::None;
        case 2: return PrefixMode::Static;
        case 3: return PrefixMode::Dynamic;
    }
    throw ContractError("unknown stage " + std::to_string(stage));
}

ScoreReport score_subtasks(const GteeModel& model, const std::vector<EncodedInstance>& subtasks, const Dataset& data,
                           PrefixMode mode, std::size_t beam) {
    num::NoGradGuard guard;
    ScoreReport r;
    for (const auto& inst : subtasks) {
        const auto& ctx = data.at(inst.context_index);
        const auto& def = model.ontology.types.at(inst.type_index);
        std::vector<EventRecord> gold;
        for (const auto& e : ctx.events)
            if (e.event_type == def.type_id) gold.push_back(e);
        const auto prefix = subtask_prefix(model, mode, inst.type_index, inst.context);
        const auto out = model.lm.beam_search(inst.x, prefix ? &*prefix : nullptr, beam, model.max_steps);
        const auto pred = decode_records(model.vocab.detokenize(out.ids), def, ctx.tokens);
        r.trg_counts.tp += match_triggers(pred, gold);
        r.trg_counts.pred += pred.size();
        r.trg_counts.gold += gold.size();
        r.arg_counts.tp += match_arguments(pred, gold);
        r.arg_counts.pred += count_arguments(pred);
        r.arg_counts.gold += count_arguments(gold);
    }
    r.trg = prf(r.trg_counts);
    r.arg = prf(r.arg_counts);
    return r;
}

namespace {

struct FreezeGuard {
    nn::ParamList params;
    explicit FreezeGuard(nn::ParamList p) : params(std::move(p)) {
        for (auto& t : params) t.tensor.set_requires_grad(false);
    }
    ~FreezeGuard() {
        for (auto& t : params) t.tensor.set_requires_grad(true);
    }
};

std::vector<std::vector<double>> snapshot(const nn::ParamList& params) {
    std::vector<std::vector<double>> out;
    for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

void restore(const nn::ParamList& params, const std::vector<std::vector<double>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
    }
}

double mean_loss(const GteeModel& model, const std::vector<EncodedInstance>& data, PrefixMode mode) {
    if (data.empty()) return 0.0;
    num::NoGradGuard guard;
    double s = 0.0;
    for (const auto& inst : data) s += instance_nll(model, inst, mode).item();
    return s / static_cast<double>(data.size());
}

bool better(const ScoreReport& a, const ScoreReport& b) {
    if (a.arg.f1 != b.arg.f1) return a.arg.f1 > b.arg.f1;
    return a.trg.f1 > b.trg.f1;
}

}  // namespace

StageResult train_stage(int stage, GteeModel& model, const Dataset& train, const Dataset& dev, const TrainConfig& config,
                        std::ostream* csv) {
    config.validate();
    const PrefixMode mode = stage_mode(stage);
    if (stage == 2 && model.stage != "stage1") {
        throw ContractError("stage 2 needs a stage-1 model, got '" + model.stage + "'");
    }
    if (stage == 3 && model.stage != "stage2") {
        throw ContractError("stage 3 needs a stage-2 model, got '" + model.stage + "'");
    }
    if (train.empty()) throw ContractError("train_stage: empty training split");

    const nn::ParamList trainable = stage == 1 ? model.lm.parameters() : model.prefix.parameters();
    std::optional<FreezeGuard> frozen;
    if (stage == 1) {
        frozen.emplace(model.prefix.parameters());
    } else {
        frozen.emplace(model.lm.parameters());
    }

    Rng rng(config.seed);
    const auto train_inst = encode_instances(
        model, sample_negatives(build_training_instances(train, model.ontology), config.neg_sample_rate, rng.next()), train);
    const auto dev_inst = encode_instances(
        model, sample_negatives(build_training_instances(dev, model.ontology), config.neg_sample_rate, rng.next()), dev);
    if (train_inst.empty()) throw ContractError("train_stage: no training instances after sampling");

    const std::size_t per_epoch = (train_inst.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total = per_epoch * config.epochs;
    AdamW opt(trainable, config.weight_decay);
    log_info("stage " + std::to_string(stage) + ": " + std::to_string(train_inst.size()) + " train / " +
             std::to_string(dev_inst.size()) + " dev subtasks, " + std::to_string(total) + " steps");

    Rng drop_rng = rng.fork(7);
    StageResult result;
    auto best_values = snapshot(trainable);
    bool have_best = false;
    std::vector<std::size_t> order(train_inst.size());
    std::size_t step = 0;
    if (csv) *csv << kTrainLogHeader << '\n';
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t lo = b * config.batch_size, hi = std::min(order.size(), lo + config.batch_size);
            opt.zero_grad();
            std::optional<nn::DropoutScope> drop;
            if (stage == 1) drop.emplace(config.dropout, drop_rng);
            // Backward per instance; the gradient of the batch mean is the sum of scaled parts.
            for (std::size_t k = lo; k < hi; ++k) {
                const Tensor l = instance_nll(model, train_inst[order[k]], mode);
                epoch_loss += l.item();
                num::scale(l, 1.0 / static_cast<double>(hi - lo)).backward();
            }
            opt.step(learning_rate_at(step, total, config.learning_rate, config.warmup_ratio), config.grad_clip_norm);
        }
        EpochLog tr{epoch, "train", epoch_loss / static_cast<double>(train_inst.size()), false, {}};
        result.log.push_back(tr);
        if (csv) *csv << log_row(tr) << '\n';

        EpochLog dv{epoch, "dev", mean_loss(model, dev_inst, mode), true,
                    score_subtasks(model, dev_inst, dev, mode, config.dev_beam)};
        result.log.push_back(dv);
        if (csv) *csv << log_row(dv) << '\n' << std::flush;
        log_info("stage " + std::to_string(stage) + " epoch " + std::to_string(epoch) + ": train loss " +
                 std::to_string(tr.loss) + ", dev loss " + std::to_string(dv.loss) + ", dev trg F1 " +
                 std::to_string(dv.score.trg.f1) + ", arg F1 " + std::to_string(dv.score.arg.f1));
        if (!have_best || better(dv.score, result.best_dev)) {
            have_best = true;
            result.best_dev = dv.score;
            result.best_epoch = epoch;
            best_values = snapshot(trainable);
        }
    }
    restore(trainable, best_values);
    result.skipped_steps = opt.skipped();
    result.steps = opt.steps();
    model.stage = "stage" + std::to_string(stage);
    return result;
}

TrainConfig pretrain_desk_config() {
    TrainConfig c;
    c.epochs = 40;
    c.learning_rate = 1e-3;
    c.dropout = 0.1;
    return c;
}

std::vector<double> pretrain_denoise(GteeModel& model, const Dataset& contexts, const TrainConfig& config,
                                     double mask_rate) {
    config.validate();
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ContractError("pretrain_denoise: mask_rate outside [0, 1)");
    if (contexts.empty()) throw ContractError("pretrain_denoise: no contexts");
    FreezeGuard frozen(model.prefix.parameters());
    const nn::ParamList trainable = model.lm.parameters();
    std::vector<std::vector<int>> clean;
    for (const auto& s : contexts) {
        auto ids = model.vocab.tokenize(join_tokens(s.tokens));
        if (ids.size() > model.lm.config().max_len) ids.resize(model.lm.config().max_len);
        clean.push_back(std::move(ids));
    }
    Rng rng(config.seed);
    const std::size_t per_epoch = (clean.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total = per_epoch * config.epochs;
    AdamW opt(trainable, config.weight_decay);
    Rng drop_rng = rng.fork(7);
    std::vector<double> losses;
    std::vector<std::size_t> order(clean.size());
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t lo = b * config.batch_size, hi = std::min(order.size(), lo + config.batch_size);
            opt.zero_grad();
            nn::DropoutScope drop(config.dropout, drop_rng);
            for (std::size_t k = lo; k < hi; ++k) {
                const auto& y = clean[order[k]];
                std::vector<int> x = y;
                for (int& t : x)
                    if (rng.uniform() < mask_rate) t = Vocab::kUnk;
                const Tensor l = model.lm.sequence_nll(x, y);
                epoch_loss += l.item();
                num::scale(l, 1.0 / static_cast<double>(hi - lo)).backward();
            }
            opt.step(learning_rate_at(step, total, config.learning_rate, config.warmup_ratio), config.grad_clip_norm);
        }
        losses.push_back(epoch_loss / static_cast<double>(clean.size()));
        log_info("pretrain epoch " + std::to_string(epoch) + ": loss " + std::to_string(losses.back()));
    }
    return losses;
}

}  // namespace gtee
