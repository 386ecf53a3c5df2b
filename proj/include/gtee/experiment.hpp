#pragma once

// End-to-end runs on synthetic data: base LM, irrelevance classifier, the two
// prefix stages, and the Base / StaPref / DynPref and IC-mode comparisons.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gtee/evalmetrics.hpp"
#include "gtee/irrelevance.hpp"
#include "gtee/model.hpp"
#include "gtee/trainer.hpp"

namespace gtee {

struct ToyRunConfig {
    std::size_t n_train = 2000;
    std::size_t n_dev = 200;
    std::size_t n_test = 300;
    double irrelevant_rate = 0.8;
    std::uint64_t seed = 13;
    std::size_t beam = 6;
    ModelConfig lm;
    PrefixConfig prefix;
    nn::EncoderConfig ic_encoder;
    TrainConfig pretrain = pretrain_desk_config();  // epochs == 0 skips the warm-up
    TrainConfig stage1 = TrainConfig::desk(1);
    TrainConfig stage2 = TrainConfig::desk(2);
    TrainConfig stage3 = TrainConfig::desk(3);
    TrainConfig ic = ic_desk_config();
    std::filesystem::path out_dir;  // empty: keep everything in memory

    // The tuned desk setting used by the toy acceptance run.
    static ToyRunConfig desk();
    nlohmann::ordered_json to_json() const;
};

struct ToyRunResult {
    Dataset train, dev, test;
    // Test scores with the trained classifier in front of each variant.
    ScoreReport base, stapref, dynpref;
    // DynPref under each IC mode.
    ScoreReport ic_none, ic_trained, ic_gold;
    double ic_dev_accuracy = 0.0;
    double ic_test_accuracy = 0.0;
    Dataset dynpref_predictions;  // trained IC
    std::vector<std::pair<std::string, double>> timings;  // phase -> seconds
    double seconds = 0.0;
};

ToyRunResult run_toy(const EventOntology& ontology, const ToyRunConfig& config);

std::string ablation_table(const ToyRunResult& r);
std::string ic_table(const ToyRunResult& r);

// Predicts with every context decoded, then zeroes contexts the filter drops.
Dataset apply_filter(const Dataset& predictions, const std::vector<char>& keep);

struct SweepRow {
    std::size_t value = 0;
    ScoreReport report;
};

// Retrains stages 2 and 3 from the stage-1 model for each value of L
// ("L") or D' ("Dprime") and scores DynPref on `test`.
std::vector<SweepRow> sweep_prefix(const GteeModel& stage1, const std::string& param, std::span<const std::size_t> values,
                                   const PrefixConfig& base_prefix, const Dataset& train, const Dataset& dev,
                                   const Dataset& test, const TrainConfig& stage2, const TrainConfig& stage3,
                                   std::size_t beam, const std::vector<char>* active);
std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows);

}  // namespace gtee
