#pragma once

// The full extractor: ontology + vocabulary + LM (phi) + prefix module (theta),
// checkpoint I/O, and per-type subtask decoding into event records.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtee/corpus.hpp"
#include "gtee/ontology.hpp"
#include "gtee/prefix.hpp"
#include "gtee/promptgen.hpp"
#include "gtee/seq2seq.hpp"

namespace gtee {

enum class PrefixMode { None, Static, Dynamic };

PrefixMode parse_prefix_mode(const std::string& s);
std::string to_string(PrefixMode m);

struct GteeModel {
    EventOntology ontology;
    Vocab vocab;
    Seq2SeqModel lm;
    PrefixModule prefix;
    std::size_t max_steps = 64;
    std::string stage = "init";

    // phi followed by theta; every trainable tensor exactly once.
    nn::ParamList parameters() const;
};

// Vocabulary over every prompt of the ontology plus the dataset's inputs and targets.
Vocab build_vocab(const EventOntology& ontology, const Dataset& train);

GteeModel create_model(const EventOntology& ontology, Vocab vocab, ModelConfig lm_config, PrefixConfig prefix_config,
                       std::uint64_t seed);

// Longest serialized target (in tokens) over the dataset + 8.
std::size_t default_max_steps(const EventOntology& ontology, const Dataset& train);

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const PrefixConfig& c);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);
PrefixConfig prefix_config_from_json(const nlohmann::ordered_json& j);

// Directory with manifest.json and tensors.bin. Every tensor name must lie in
// the "phi/" or "theta/" namespace and match the model's parameter list.
void save_checkpoint(const std::filesystem::path& dir, const GteeModel& model);
GteeModel load_checkpoint(const std::filesystem::path& dir);
// Raw bytes of the phi tensors in checkpoint encoding.
std::vector<std::uint8_t> phi_bytes(const GteeModel& model);

struct EncodedInstance {
    std::vector<int> x;
    std::vector<int> y;
    std::vector<int> context;
    std::size_t type_index = 0;
    std::size_t context_index = 0;
    bool positive = false;
};

std::vector<EncodedInstance> encode_instances(const GteeModel& model, const std::vector<TrainingInstance>& instances,
                                              const Dataset& data);

// Prefix for one subtask; nullopt for PrefixMode::None. Static mode uses the
// one-type mask, dynamic mode the unmasked mixture conditioned on the context.
std::optional<ActivationHistory> subtask_prefix(const GteeModel& model, PrefixMode mode, std::size_t type_index,
                                                std::span<const int> context_ids);

struct DecodeOptions {
    PrefixMode mode = PrefixMode::None;
    std::size_t beam = 6;
    std::size_t max_steps = 0;  // 0: the model's default
    std::optional<std::vector<std::size_t>> types;  // restrict the fan-out
};

struct PredictionOutput {
    Dataset predictions;  // same contexts, predicted events
    std::vector<std::vector<std::string>> generated;  // [context][type slot] raw text
};

// Runs every (context, type) subtask in ontology order. Contexts with
// active[i] == 0 are skipped and get no records.
PredictionOutput predict(const GteeModel& model, const Dataset& contexts, const DecodeOptions& options,
                         const std::vector<char>* active = nullptr);

}  // namespace gtee
