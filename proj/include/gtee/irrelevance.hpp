#pragma once

// Binary context classifier deciding whether a sentence holds any event, and
// the context filter applied before generation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtee/nn.hpp"
#include "gtee/records.hpp"
#include "gtee/seq2seq.hpp"
#include "gtee/trainer.hpp"

namespace gtee {

struct ICModel {
    Vocab vocab;
    nn::PooledEncoder encoder;
    nn::Linear hidden;  // d -> d, GELU
    nn::Linear out;     // d -> 2; index 1 = relevant

    // [1, 2] logits / probabilities.
    Tensor logits(std::span<const int> ids) const;
    Tensor probabilities(std::span<const int> ids) const;

    void collect(const std::string& prefix, nn::ParamList& params) const;
    nn::ParamList parameters() const;  // under "ic/"
};

ICModel create_ic(Vocab vocab, nn::EncoderConfig config, std::uint64_t seed);

// Relevant iff the sentence carries at least one event record.
bool is_relevant(const SentenceInstance& s);

TrainConfig ic_desk_config();
TrainConfig ic_reference_config();

struct ICEpoch {
    std::size_t epoch = 0;
    double loss = 0.0;
    double dev_accuracy = 0.0;
};

struct ICTrainResult {
    std::vector<ICEpoch> log;
    std::size_t best_epoch = 0;
    double best_dev_accuracy = 0.0;
};

// Cross-entropy training on every sentence of `train` (no sampling); keeps the
// epoch with the best dev accuracy (ties: earlier). Throws DataError when the
// training labels are all one class.
ICTrainResult train_ic(ICModel& model, const Dataset& train, const Dataset& dev, const TrainConfig& config);

// Argmax of the two-way head; ties go to relevant.
bool classify(const ICModel& model, const SentenceInstance& context);
double accuracy(const ICModel& model, const Dataset& data);

enum class ICMode { None, Trained, Gold };
ICMode parse_ic_mode(const std::string& s);
std::string to_string(ICMode m);

// 1 = run generation on this context. Trained mode needs `model`; gold mode
// reads the gold events of `gold` (aligned with contexts).
std::vector<char> filter_contexts(ICMode mode, const Dataset& contexts, const ICModel* model, const Dataset* gold);

void save_ic(const std::filesystem::path& dir, const ICModel& model);
ICModel load_ic(const std::filesystem::path& dir);

}  // namespace gtee
