#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gtee/ontology.hpp"
#include "gtee/records.hpp"

namespace gtee {

// JSONL: one {"doc_id","sent_id","tokens","events"} object per line; spans are
// token-indexed and end-exclusive. Argument spans may be (-1,-1) (unresolved
// predictions); every other span must satisfy 0 <= start < end <= |tokens|.
Dataset read_jsonl(std::istream& in);
Dataset read_jsonl(const std::filesystem::path& path);
void write_jsonl(std::ostream& out, const Dataset& data);
void write_jsonl(const std::filesystem::path& path, const Dataset& data);

std::string to_json_line(const SentenceInstance& s);
SentenceInstance from_json_line(const std::string& line, std::size_t line_no = 0);

// The contexts that carry at least one record, in order.
Dataset with_events(const Dataset& data);

// Checks span bounds; throws DataError naming the sentence.
void validate_instance(const SentenceInstance& s);

struct SyntheticOptions {
    std::size_t n_sents = 1000;
    double irrelevant_rate = 0.8;
    std::uint64_t seed = 13;
    double two_event_rate = 0.3;
    std::string id_prefix = "synth";
};

// Templated sentences whose gold triggers and arguments appear verbatim and
// uniquely in the token sequence. Exactly round(irrelevant_rate * n) sentences
// carry no event; those contain a cue word that relevant sentences never use.
Dataset generate_synthetic(const EventOntology& ontology, const SyntheticOptions& options);

// Cue words planted in event-free synthetic sentences.
const std::vector<std::string>& irrelevance_cues();

// True when every argument text of every record occurs exactly once in the
// context, contains no " and ", and contains none of its template's literal
// anchors (the conditions under which parsing inverts serialization).
bool roundtrip_safe(const SentenceInstance& s, const EventOntology& ontology);

struct TransferSplit {
    Dataset src_train, src_test, tgt_train, tgt_test;
    std::vector<std::string> src_types, tgt_types;
    bool fallback = false;  // fewer than 11 types: src took the top half
};

// Keeps contexts of at least `min_tokens` tokens; the 10 most frequent types go
// to src (ties in ontology order), the rest to tgt; each side is split 4:1.
TransferSplit transfer_split(const Dataset& data, const EventOntology& ontology, std::uint64_t seed,
                             std::size_t min_tokens = 8);

struct CorpusStats {
    std::size_t sentences = 0;
    std::size_t events = 0;
    std::size_t arguments = 0;
    std::size_t event_free = 0;
};

CorpusStats corpus_stats(const Dataset& data);
std::string stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows);

}  // namespace gtee
