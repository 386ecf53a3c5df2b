// gtee: command-line driver for data generation, training, decoding and scoring.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtee/corpus.hpp"
#include "gtee/error.hpp"
#include "gtee/evalmetrics.hpp"
#include "gtee/experiment.hpp"
#include "gtee/io.hpp"
#include "gtee/irrelevance.hpp"
#include "gtee/log.hpp"
#include "gtee/manifest.hpp"
#include "gtee/model.hpp"
#include "gtee/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gtee;

namespace {

struct Common {
    std::uint64_t seed = 13;
    bool quiet = false;
};

// Flags shared by every training subcommand; unset values keep the preset.
struct TrainFlags {
    std::optional<std::size_t> epochs, batch_size;
    std::optional<double> lr, weight_decay, clip, warmup, neg_rate, dropout;
    bool reference = false;

    void add(CLI::App* app, bool subtasks = true) {
        app->add_option("--epochs", epochs, "training epochs");
        app->add_option("--batch-size", batch_size, "instances per optimizer step");
        app->add_option("--lr", lr, "peak learning rate");
        app->add_option("--weight-decay", weight_decay, "decoupled weight decay");
        app->add_option("--clip", clip, "global gradient-norm clip (0 disables)");
        app->add_option("--warmup", warmup, "warm-up fraction of all steps");
        if (subtasks) {
            app->add_option("--neg-rate", neg_rate, "fraction of negative subtasks kept");
            app->add_option("--dropout", dropout, "LM dropout while training phi");
        }
        app->add_flag("--reference", reference, "start from the large-model reference preset");
    }

    TrainConfig apply(TrainConfig c, std::uint64_t seed) const {
        if (epochs) c.epochs = *epochs;
        if (batch_size) c.batch_size = *batch_size;
        if (lr) c.learning_rate = *lr;
        if (weight_decay) c.weight_decay = *weight_decay;
        if (clip) c.grad_clip_norm = *clip;
        if (warmup) c.warmup_ratio = *warmup;
        if (neg_rate) c.neg_sample_rate = *neg_rate;
        if (dropout) c.dropout = *dropout;
        c.seed = seed;
        c.validate();
        return c;
    }
};

class Timer {
   public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

   private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void finish(const fs::path& artifact, const std::string& command, json config, std::uint64_t seed,
            std::vector<std::string> inputs, const Timer& timer) {
    RunManifest m;
    m.command = command;
    m.config = std::move(config);
    m.seed = seed;
    m.version = version_string();
    m.inputs = std::move(inputs);
    m.outputs = {artifact.string()};
    m.wall_seconds = timer.seconds();
    write_manifest(artifact, m);
    log_info(command + ": wrote " + artifact.string());
}

std::vector<std::size_t> parse_values(const std::string& csv) {
    std::vector<std::size_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size() || v == 0) throw CLI::ValidationError("--values", "bad value '" + item + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw CLI::ValidationError("--values", "no values given");
    return out;
}

std::string mode_for_stage(const std::string& stage) {
    if (stage == "stage3") return "dynamic";
    if (stage == "stage2") return "static";
    return "none";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Template-based event extraction with type-aware prefixes"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--seed", common.seed, "seed for every random choice")->capture_default_str();
    app.add_flag("-q,--quiet", common.quiet, "only print warnings");

    std::function<void()> run;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    fs::path gen_ontology = "data/ontologies/toy.json", gen_out;
    std::size_t gen_n = 1000;
    double gen_rate = 0.8, gen_two = 0.3;
    std::string gen_prefix = "synth";
    gen->add_option("--ontology", gen_ontology, "ontology JSON")->capture_default_str();
    gen->add_option("--n", gen_n, "number of sentences")->capture_default_str();
    gen->add_option("--irrelevant-rate", gen_rate, "fraction of event-free sentences")->capture_default_str();
    gen->add_option("--two-event-rate", gen_two, "fraction of relevant sentences with two events")->capture_default_str();
    gen->add_option("--id-prefix", gen_prefix, "prefix of doc and sentence ids")->capture_default_str();
    gen->add_option("--out", gen_out, "output JSONL")->required();
    gen->callback([&] {
        run = [&] {
            Timer t;
            SyntheticOptions o;
            o.n_sents = gen_n;
            o.irrelevant_rate = gen_rate;
            o.two_event_rate = gen_two;
            o.seed = common.seed;
            o.id_prefix = gen_prefix;
            const Dataset d = generate_synthetic(load_ontology(gen_ontology), o);
            write_jsonl(gen_out, d);
            log_info(stats_table({{gen_out.filename().string(), corpus_stats(d)}}));
            finish(gen_out, "gen-data",
                   {{"n", gen_n}, {"irrelevant_rate", gen_rate}, {"two_event_rate", gen_two}, {"id_prefix", gen_prefix}},
                   common.seed, {gen_ontology.string()}, t);
        };
    });

    // train-base
    auto* base = app.add_subcommand("train-base", "stage 1: train the LM without prefixes");
    const ToyRunConfig desk = ToyRunConfig::desk();
    fs::path base_ontology = "data/ontologies/toy.json", base_train, base_dev, base_out;
    ModelConfig lm = desk.lm;
    PrefixConfig pc = desk.prefix;
    TrainFlags base_flags;
    std::size_t pretrain_epochs = desk.pretrain.epochs;
    base->add_option("--ontology", base_ontology, "ontology JSON")->capture_default_str();
    base->add_option("--train", base_train, "training JSONL")->required();
    base->add_option("--dev", base_dev, "dev JSONL")->required();
    base->add_option("--out", base_out, "checkpoint directory")->required();
    base->add_option("--d-model", lm.d_model, "LM width")->capture_default_str();
    base->add_option("--layers", lm.n_layers, "LM layers per stack")->capture_default_str();
    base->add_option("--heads", lm.n_heads, "LM attention heads")->capture_default_str();
    base->add_option("--d-ff", lm.d_ff, "LM feed-forward width")->capture_default_str();
    base->add_option("--max-len", lm.max_len, "LM maximum sequence length")->capture_default_str();
    base->add_option("--prefix-length", pc.length, "prefix length L")->capture_default_str();
    base->add_option("--dprime", pc.d_prime, "prefix bottleneck width D'")->capture_default_str();
    base->add_option("--pretrain-epochs", pretrain_epochs, "denoising warm-up epochs (0 skips)")->capture_default_str();
    base_flags.add(base);
    base->callback([&] {
        run = [&] {
            Timer t;
            const auto ont = load_ontology(base_ontology);
            const Dataset train = read_jsonl(base_train), dev = read_jsonl(base_dev);
            const TrainConfig cfg =
                base_flags.apply(base_flags.reference ? TrainConfig::reference(1) : TrainConfig::desk(1), common.seed);
            GteeModel model = create_model(ont, build_vocab(ont, train), lm, pc, common.seed);
            model.max_steps = default_max_steps(ont, train);
            TrainConfig pre = pretrain_desk_config();
            pre.epochs = pretrain_epochs;
            pre.seed = common.seed;
            if (pre.epochs > 0) pretrain_denoise(model, train, pre);
            fs::create_directories(base_out);
            std::ofstream csv(base_out / "train_log.csv");
            const auto res = train_stage(1, model, train, dev, cfg, &csv);
            save_checkpoint(base_out, model);
            finish(base_out, "train-base",
                   {{"train", to_json(cfg)},
                    {"pretrain_epochs", pretrain_epochs},
                    {"lm", to_json(model.lm.config())},
                    {"prefix", to_json(model.prefix.config())},
                    {"best_epoch", res.best_epoch}},
                   common.seed, {base_ontology.string(), base_train.string(), base_dev.string()}, t);
        };
    });

    // train-ic
    auto* tic = app.add_subcommand("train-ic", "train the irrelevance classifier");
    fs::path ic_train, ic_dev, ic_out, ic_vocab_model;
    nn::EncoderConfig ic_enc = desk.ic_encoder;
    TrainFlags ic_flags;
    tic->add_option("--train", ic_train, "training JSONL")->required();
    tic->add_option("--dev", ic_dev, "dev JSONL")->required();
    tic->add_option("--out", ic_out, "classifier directory")->required();
    tic->add_option("--model", ic_vocab_model, "reuse this checkpoint's vocabulary");
    tic->add_option("--d-model", ic_enc.d_model, "encoder width")->capture_default_str();
    tic->add_option("--layers", ic_enc.n_layers, "encoder layers")->capture_default_str();
    ic_flags.add(tic, false);
    tic->callback([&] {
        run = [&] {
            Timer t;
            const Dataset train = read_jsonl(ic_train), dev = read_jsonl(ic_dev);
            Vocab vocab;
            if (!ic_vocab_model.empty()) {
                vocab = load_checkpoint(ic_vocab_model).vocab;
            } else {
                std::vector<std::string> texts;
                for (const auto& s : train) texts.push_back(join_tokens(s.tokens));
                vocab = Vocab::build(texts);
            }
            const TrainConfig cfg = ic_flags.apply(ic_flags.reference ? ic_reference_config() : ic_desk_config(), common.seed);
            ICModel ic = create_ic(std::move(vocab), ic_enc, common.seed);
            const auto res = train_ic(ic, train, dev, cfg);
            save_ic(ic_out, ic);
            finish(ic_out, "train-ic",
                   {{"train", to_json(cfg)}, {"best_epoch", res.best_epoch}, {"dev_accuracy", res.best_dev_accuracy}},
                   common.seed, {ic_train.string(), ic_dev.string()}, t);
        };
    });

    // train-prefix
    auto* tp = app.add_subcommand("train-prefix", "stage 2 (static) or stage 3 (dynamic) prefix training");
    fs::path tp_model, tp_train, tp_dev, tp_out;
    int tp_stage = 0;
    std::string tp_mode;
    TrainFlags tp_flags;
    tp->add_option("--model", tp_model, "checkpoint from the previous stage")->required();
    tp->add_option("--train", tp_train, "training JSONL")->required();
    tp->add_option("--dev", tp_dev, "dev JSONL")->required();
    tp->add_option("--out", tp_out, "checkpoint directory")->required();
    auto* stage_opt = tp->add_option("--stage", tp_stage, "2 = static prefix, 3 = dynamic prefix")
                          ->check(CLI::IsMember({2, 3}));
    tp->add_option("--mode", tp_mode, "static (stage 2) or dynamic (stage 3)")
        ->check(CLI::IsMember({"static", "dynamic"}))
        ->excludes(stage_opt);
    tp_flags.add(tp);
    tp->callback([&] {
        if (tp_stage == 0 && tp_mode.empty()) throw CLI::RequiredError("--stage or --mode");
        if (!tp_mode.empty()) tp_stage = tp_mode == "static" ? 2 : 3;
        run = [&] {
            Timer t;
            GteeModel model = load_checkpoint(tp_model);
            const Dataset train = read_jsonl(tp_train), dev = read_jsonl(tp_dev);
            const TrainConfig cfg = tp_flags.apply(
                tp_flags.reference ? TrainConfig::reference(tp_stage) : TrainConfig::desk(tp_stage), common.seed);
            fs::create_directories(tp_out);
            std::ofstream csv(tp_out / "train_log.csv");
            const auto res = train_stage(tp_stage, model, train, dev, cfg, &csv);
            save_checkpoint(tp_out, model);
            finish(tp_out, "train-prefix", {{"stage", tp_stage}, {"train", to_json(cfg)}, {"best_epoch", res.best_epoch}},
                   common.seed, {tp_model.string(), tp_train.string(), tp_dev.string()}, t);
        };
    });

    // predict
    auto* pr = app.add_subcommand("predict", "decode event records");
    fs::path pr_model, pr_input, pr_out, pr_ic_model, pr_gold;
    std::string pr_ic = "none", pr_mode, pr_types;
    std::size_t pr_beam = 6, pr_max_steps = 0;
    pr->add_option("--model", pr_model, "checkpoint directory")->required();
    pr->add_option("--input", pr_input, "contexts JSONL (records are ignored)")->required();
    pr->add_option("--out", pr_out, "predictions JSONL (contexts with records only)")->required();
    pr->add_option("--ic", pr_ic, "context filter")->check(CLI::IsMember({"none", "trained", "gold"}))->capture_default_str();
    pr->add_option("--ic-model", pr_ic_model, "classifier directory for --ic trained");
    pr->add_option("--gold", pr_gold, "gold JSONL for --ic gold (default: --input)");
    pr->add_option("--beam", pr_beam, "beam size")->check(CLI::PositiveNumber)->capture_default_str();
    pr->add_option("--mode", pr_mode, "prefix mode (default follows the checkpoint stage)")
        ->check(CLI::IsMember({"none", "static", "dynamic"}));
    pr->add_option("--types", pr_types, "comma-separated event types to decode");
    pr->add_option("--max-steps", pr_max_steps, "decode length limit (0: checkpoint default)");
    pr->callback([&] {
        if (pr_ic == "trained" && pr_ic_model.empty()) throw CLI::RequiredError("--ic-model");
        run = [&] {
            Timer t;
            const GteeModel model = load_checkpoint(pr_model);
            const Dataset input = read_jsonl(pr_input);
            const ICMode icm = parse_ic_mode(pr_ic);
            std::optional<ICModel> ic;
            if (icm == ICMode::Trained) ic = load_ic(pr_ic_model);
            Dataset gold;
            if (icm == ICMode::Gold) gold = pr_gold.empty() ? input : read_jsonl(pr_gold);
            const auto keep = filter_contexts(icm, input, ic ? &*ic : nullptr, icm == ICMode::Gold ? &gold : nullptr);
            DecodeOptions o;
            o.mode = parse_prefix_mode(pr_mode.empty() ? mode_for_stage(model.stage) : pr_mode);
            o.beam = pr_beam;
            o.max_steps = pr_max_steps;
            if (!pr_types.empty()) {
                std::vector<std::size_t> idx;
                std::stringstream ss(pr_types);
                std::string ty;
                while (std::getline(ss, ty, ',')) {
                    const auto i = model.ontology.index_of(ty);
                    if (!i) throw OntologyError(ty, "--types names an unknown event type");
                    idx.push_back(*i);
                }
                o.types = idx;
            }
            const auto out = predict(model, input, o, &keep);
            write_jsonl(pr_out, with_events(out.predictions));
            std::vector<std::string> inputs = {pr_model.string(), pr_input.string()};
            if (ic) inputs.push_back(pr_ic_model.string());
            if (!pr_gold.empty()) inputs.push_back(pr_gold.string());
            finish(pr_out, "predict",
                   {{"ic", pr_ic}, {"mode", to_string(o.mode)}, {"beam", pr_beam}, {"types", pr_types},
                    {"max_steps", pr_max_steps}},
                   common.seed, inputs, t);
        };
    });

    // score
    auto* sc = app.add_subcommand("score", "Trg-C / Arg-C precision, recall and F1");
    fs::path sc_pred, sc_gold, sc_out;
    sc->add_option("--pred", sc_pred, "predictions JSONL")->required();
    sc->add_option("--gold", sc_gold, "gold JSONL")->required();
    sc->add_option("--out", sc_out, "score JSON")->required();
    sc->callback([&] {
        run = [&] {
            Timer t;
            const Dataset gold = read_jsonl(sc_gold);
            const ScoreReport r = score_dataset(align_predictions(read_jsonl(sc_pred), gold), gold);
            write_text_atomic(sc_out, report_json(r));
            log_info("\n" + report_table(r));
            finish(sc_out, "score", json::object(), common.seed, {sc_pred.string(), sc_gold.string()}, t);
        };
    });

    // sweep
    auto* sw = app.add_subcommand("sweep", "retrain the prefix stages over L or D' values");
    fs::path sw_model, sw_train, sw_dev, sw_test, sw_out, sw_ic_model;
    std::string sw_param, sw_values;
    std::size_t sw_beam = 6;
    TrainFlags sw2, sw3;
    std::optional<std::size_t> sw_epochs2, sw_epochs3;
    sw->add_option("--model", sw_model, "stage-1 checkpoint")->required();
    sw->add_option("--param", sw_param, "swept quantity")->check(CLI::IsMember({"L", "Dprime"}))->required();
    sw->add_option("--values", sw_values, "comma-separated values, e.g. 2,4,8")->required();
    sw->add_option("--train", sw_train, "training JSONL")->required();
    sw->add_option("--dev", sw_dev, "dev JSONL")->required();
    sw->add_option("--test", sw_test, "test JSONL")->required();
    sw->add_option("--out", sw_out, "output CSV")->required();
    sw->add_option("--ic-model", sw_ic_model, "classifier applied to test contexts");
    sw->add_option("--beam", sw_beam, "beam size")->check(CLI::PositiveNumber)->capture_default_str();
    sw->add_option("--stage2-epochs", sw_epochs2, "stage-2 epochs per value");
    sw->add_option("--stage3-epochs", sw_epochs3, "stage-3 epochs per value");
    sw->callback([&] {
        const auto values = parse_values(sw_values);
        run = [&, values] {
            Timer t;
            const GteeModel model = load_checkpoint(sw_model);
            const Dataset train = read_jsonl(sw_train), dev = read_jsonl(sw_dev), test = read_jsonl(sw_test);
            sw2.epochs = sw_epochs2;
            sw3.epochs = sw_epochs3;
            const TrainConfig c2 = sw2.apply(TrainConfig::desk(2), common.seed);
            const TrainConfig c3 = sw3.apply(TrainConfig::desk(3), common.seed);
            std::optional<std::vector<char>> keep;
            if (!sw_ic_model.empty()) {
                const ICModel ic = load_ic(sw_ic_model);
                keep = filter_contexts(ICMode::Trained, test, &ic, nullptr);
            }
            const auto rows = sweep_prefix(model, sw_param, values, model.prefix.config(), train, dev, test, c2, c3,
                                           sw_beam, keep ? &*keep : nullptr);
            write_text_atomic(sw_out, sweep_csv(sw_param, rows));
            std::vector<std::string> inputs = {sw_model.string(), sw_train.string(), sw_dev.string(), sw_test.string()};
            if (!sw_ic_model.empty()) inputs.push_back(sw_ic_model.string());
            finish(sw_out, "sweep",
                   {{"param", sw_param}, {"values", values}, {"beam", sw_beam}, {"stage2", to_json(c2)},
                    {"stage3", to_json(c3)}},
                   common.seed, inputs, t);
        };
    });

    // split-transfer
    auto* st = app.add_subcommand("split-transfer", "source/target split by type frequency");
    fs::path st_input, st_ontology = "data/ontologies/ace05.json", st_out;
    std::size_t st_min_tokens = 8;
    st->add_option("--input", st_input, "corpus JSONL")->required();
    st->add_option("--ontology", st_ontology, "ontology JSON")->capture_default_str();
    st->add_option("--out-dir", st_out, "output directory")->required();
    st->add_option("--min-tokens", st_min_tokens, "drop shorter contexts")->capture_default_str();
    st->callback([&] {
        run = [&] {
            Timer t;
            const auto split = transfer_split(read_jsonl(st_input), load_ontology(st_ontology), common.seed, st_min_tokens);
            fs::create_directories(st_out);
            write_jsonl(st_out / "src_train.jsonl", split.src_train);
            write_jsonl(st_out / "src_test.jsonl", split.src_test);
            write_jsonl(st_out / "tgt_train.jsonl", split.tgt_train);
            write_jsonl(st_out / "tgt_test.jsonl", split.tgt_test);
            json types{{"src", split.src_types}, {"tgt", split.tgt_types}, {"fallback", split.fallback}};
            write_text_atomic(st_out / "types.json", types.dump(2) + "\n");
            finish(st_out, "split-transfer", {{"min_tokens", st_min_tokens}}, common.seed,
                   {st_input.string(), st_ontology.string()}, t);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "gtee: " << e.what() << "\n";
        return 2;
    }

    set_quiet(common.quiet);
    try {
        run();
    } catch (const CLI::ParseError& e) {
        std::cerr << "gtee: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "gtee: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
