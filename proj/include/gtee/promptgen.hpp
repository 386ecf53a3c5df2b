#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gtee/ontology.hpp"
#include "gtee/records.hpp"

namespace gtee {

struct Prompt {
    std::string event_type;
    std::string instruction;    // "Event type is <surface>."
    std::string template_text;  // "Trigger <trg> <IN_SEP> <arg> ..."
    std::string full_text;      // instruction + " " + template_text
};

Prompt build_prompt(const EventTypeDef& def);

// Target sequence for one (context, event type) subtask. Records must all be of
// def's type and have spans inside the context.
std::string serialize_ground_truth(const std::vector<EventRecord>& records, const EventTypeDef& def,
                                   const std::vector<std::string>& context);

struct TrainingInstance {
    std::string input;   // prompt + " [SEP] " + context
    std::string target;  // serialized ground truth
    std::size_t type_index = 0;
    std::size_t context_index = 0;

    bool positive() const;
};

// One instance per (context, type) pair, contexts outer, ontology order inner.
std::vector<TrainingInstance> build_training_instances(const Dataset& dataset, const EventOntology& ontology);

std::string model_input(const Prompt& prompt, const std::vector<std::string>& context);

}  // namespace gtee
