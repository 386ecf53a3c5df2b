#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gtee/records.hpp"

namespace gtee {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t pred = 0;
    std::size_t gold = 0;
};

PRF prf(const MatchCounts& c);

struct ScoreReport {
    PRF trg;
    PRF arg;
    MatchCounts trg_counts;
    MatchCounts arg_counts;
};

// Trg-C: a predicted trigger counts when (span, type) equals a gold trigger not
// yet consumed by an earlier prediction.
std::size_t match_triggers(const std::vector<EventRecord>& pred, const std::vector<EventRecord>& gold);

// Arg-C: one-to-one on (argument span, event type, role); unresolved spans
// never match.
std::size_t match_arguments(const std::vector<EventRecord>& pred, const std::vector<EventRecord>& gold);

std::size_t count_arguments(const std::vector<EventRecord>& records);

// Micro-averaged over contexts; the two datasets must list the same sent_ids
// in the same order.
ScoreReport score_dataset(const Dataset& predictions, const Dataset& gold);

// Reorders `predictions` to follow `gold` by (doc_id, sent_id); gold contexts
// without a prediction get no records. Unknown or repeated ids are DataErrors.
Dataset align_predictions(const Dataset& predictions, const Dataset& gold);

std::string report_json(const ScoreReport& r);
std::string report_table(const ScoreReport& r);

}  // namespace gtee
