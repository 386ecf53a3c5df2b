#include "gtee/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gtee/error.hpp"
#include "gtee/io.hpp"
#include "gtee/log.hpp"

namespace gtee {

using json = nlohmann::ordered_json;

ToyRunConfig ToyRunConfig::desk() {
    ToyRunConfig c;
    c.lm.d_model = 48;
    c.lm.n_layers = 2;
    c.lm.n_heads = 4;
    c.lm.d_ff = 128;
    c.lm.max_len = 96;
    c.prefix.length = 8;
    c.prefix.d_prime = 32;
    c.prefix.context.d_model = 32;
    c.prefix.context.n_layers = 2;
    c.prefix.context.n_heads = 4;
    c.prefix.context.d_ff = 64;
    c.ic_encoder = c.prefix.context;
    return c;
}

json ToyRunConfig::to_json() const {
    json j;
    j["n_train"] = n_train;
    j["n_dev"] = n_dev;
    j["n_test"] = n_test;
    j["irrelevant_rate"] = irrelevant_rate;
    j["seed"] = seed;
    j["beam"] = beam;
    j["lm"] = gtee::to_json(lm);
    j["prefix"] = gtee::to_json(prefix);
    j["pretrain"] = gtee::to_json(pretrain);
    j["stage1"] = gtee::to_json(stage1);
    j["stage2"] = gtee::to_json(stage2);
    j["stage3"] = gtee::to_json(stage3);
    j["ic"] = gtee::to_json(ic);
    return j;
}

Dataset apply_filter(const Dataset& predictions, const std::vector<char>& keep) {
    if (keep.size() != predictions.size()) throw ContractError("apply_filter: size mismatch");
    Dataset out = predictions;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!keep[i]) out[i].events.clear();
    return out;
}

namespace {

class Clock {
   public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

   private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::ofstream open_log(const std::filesystem::path& dir, const std::string& name) {
    if (dir.empty()) return {};
    std::filesystem::create_directories(dir);
    return std::ofstream(dir / name, std::ios::trunc);
}

}  // namespace

ToyRunResult run_toy(const EventOntology& ontology, const ToyRunConfig& config) {
    ToyRunResult r;
    Clock total, clock;
    Rng rng(config.seed);
    auto gen = [&](std::size_t n, const char* prefix) {
        SyntheticOptions o;
        o.n_sents = n;
        o.irrelevant_rate = config.irrelevant_rate;
        o.seed = rng.next();
        o.id_prefix = prefix;
        return generate_synthetic(ontology, o);
    };
    r.train = gen(config.n_train, "train");
    r.dev = gen(config.n_dev, "dev");
    r.test = gen(config.n_test, "test");
    const auto& out = config.out_dir;
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        write_jsonl(out / "train.jsonl", r.train);
        write_jsonl(out / "dev.jsonl", r.dev);
        write_jsonl(out / "test.jsonl", r.test);
    }

    GteeModel model = create_model(ontology, build_vocab(ontology, r.train), config.lm, config.prefix, rng.next());
    model.max_steps = default_max_steps(ontology, r.train);
    r.timings.emplace_back("data", clock.lap());

    if (config.pretrain.epochs > 0) {
        pretrain_denoise(model, r.train, config.pretrain);
        r.timings.emplace_back("pretrain", clock.lap());
    }

    {
        auto csv = open_log(out, "stage1_log.csv");
        train_stage(1, model, r.train, r.dev, config.stage1, out.empty() ? nullptr : &csv);
    }
    if (!out.empty()) save_checkpoint(out / "stage1", model);
    r.timings.emplace_back("stage1", clock.lap());

    ICModel ic = create_ic(model.vocab, config.ic_encoder, rng.next());
    const auto ic_res = train_ic(ic, r.train, r.dev, config.ic);
    r.ic_dev_accuracy = ic_res.best_dev_accuracy;
    r.ic_test_accuracy = accuracy(ic, r.test);
    if (!out.empty()) save_ic(out / "ic", ic);
    const auto keep_trained = filter_contexts(ICMode::Trained, r.test, &ic, nullptr);
    const auto keep_gold = filter_contexts(ICMode::Gold, r.test, nullptr, &r.test);
    r.timings.emplace_back("ic", clock.lap());

    DecodeOptions opts;
    opts.beam = config.beam;
    opts.mode = PrefixMode::None;
    r.base = score_dataset(predict(model, r.test, opts, &keep_trained).predictions, r.test);
    r.timings.emplace_back("decode_base", clock.lap());

    {
        auto csv = open_log(out, "stage2_log.csv");
        train_stage(2, model, r.train, r.dev, config.stage2, out.empty() ? nullptr : &csv);
    }
    if (!out.empty()) save_checkpoint(out / "stage2", model);
    r.timings.emplace_back("stage2", clock.lap());
    opts.mode = PrefixMode::Static;
    r.stapref = score_dataset(predict(model, r.test, opts, &keep_trained).predictions, r.test);
    r.timings.emplace_back("decode_stapref", clock.lap());

    {
        auto csv = open_log(out, "stage3_log.csv");
        train_stage(3, model, r.train, r.dev, config.stage3, out.empty() ? nullptr : &csv);
    }
    if (!out.empty()) save_checkpoint(out / "stage3", model);
    r.timings.emplace_back("stage3", clock.lap());
    opts.mode = PrefixMode::Dynamic;
    const Dataset all = predict(model, r.test, opts).predictions;
    r.dynpref_predictions = apply_filter(all, keep_trained);
    r.ic_none = score_dataset(all, r.test);
    r.ic_trained = score_dataset(r.dynpref_predictions, r.test);
    r.ic_gold = score_dataset(apply_filter(all, keep_gold), r.test);
    r.dynpref = r.ic_trained;
    r.timings.emplace_back("decode_dynpref", clock.lap());

    r.seconds = total.lap();
    if (!out.empty()) {
        write_jsonl(out / "predictions.jsonl", with_events(r.dynpref_predictions));
        write_text_atomic(out / "ablation.txt", ablation_table(r));
        write_text_atomic(out / "ic_modes.txt", ic_table(r));
        write_text_atomic(out / "score.json", report_json(r.dynpref));
    }
    return r;
}

namespace {

std::string score_rows(const std::vector<std::pair<std::string, ScoreReport>>& rows) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-22s %7s %7s %7s %7s %7s %7s\n", "model", "Trg-P", "Trg-R", "Trg-F1", "Arg-P", "Arg-R",
                  "Arg-F1");
    os << buf;
    for (const auto& [name, s] : rows) {
        std::snprintf(buf, sizeof buf, "%-22s %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f\n", name.c_str(),
                      100 * s.trg.precision, 100 * s.trg.recall, 100 * s.trg.f1, 100 * s.arg.precision, 100 * s.arg.recall,
                      100 * s.arg.f1);
        os << buf;
    }
    return os.str();
}

}  // namespace

std::string ablation_table(const ToyRunResult& r) {
    std::string s = score_rows({{"GTEE-Base", r.base}, {"GTEE-StaPref", r.stapref}, {"GTEE-DynPref", r.dynpref}});
    const bool ordered = r.dynpref.arg.f1 >= r.stapref.arg.f1 && r.stapref.arg.f1 >= r.base.arg.f1 &&
                         r.dynpref.trg.f1 >= r.stapref.trg.f1 && r.stapref.trg.f1 >= r.base.trg.f1;
    s += std::string("ordering DynPref >= StaPref >= Base: ") + (ordered ? "holds" : "does not hold") + "\n";
    return s;
}

std::string ic_table(const ToyRunResult& r) {
    std::string s = score_rows({{"w/o IC", r.ic_none}, {"w/ IC (trained)", r.ic_trained}, {"w/ IC (gold)", r.ic_gold}});
    char buf[120];
    std::snprintf(buf, sizeof buf, "IC accuracy: dev %.2f%%, test %.2f%%\n", 100 * r.ic_dev_accuracy,
                  100 * r.ic_test_accuracy);
    return s + buf;
}

std::vector<SweepRow> sweep_prefix(const GteeModel& stage1, const std::string& param, std::span<const std::size_t> values,
                                   const PrefixConfig& base_prefix, const Dataset& train, const Dataset& dev,
                                   const Dataset& test, const TrainConfig& stage2, const TrainConfig& stage3,
                                   std::size_t beam, const std::vector<char>* active) {
    if (param != "L" && param != "Dprime") throw ContractError("sweep: --param must be L or Dprime");
    if (stage1.stage != "stage1") throw ContractError("sweep needs a stage-1 model, got '" + stage1.stage + "'");
    std::vector<SweepRow> rows;
    for (std::size_t v : values) {
        GteeModel m = stage1;  // phi is shared and stays frozen; theta is replaced below
        PrefixConfig pc = base_prefix;
        (param == "L" ? pc.length : pc.d_prime) = v;
        reset_prefix(m, pc, stage2.seed);
        train_stage(2, m, train, dev, stage2);
        train_stage(3, m, train, dev, stage3);
        DecodeOptions opts;
        opts.mode = PrefixMode::Dynamic;
        opts.beam = beam;
        rows.push_back({v, score_dataset(predict(m, test, opts, active).predictions, test)});
        log_info("sweep " + param + "=" + std::to_string(v) + ": trg F1 " + std::to_string(rows.back().report.trg.f1) +
                 ", arg F1 " + std::to_string(rows.back().report.arg.f1));
    }
    return rows;
}

std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << param << ",trg_f1,arg_f1\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", r.value, r.report.trg.f1, r.report.arg.f1);
        os << buf;
    }
    return os.str();
}

}  // namespace gtee
