#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gtee/ontology.hpp"
#include "gtee/records.hpp"

namespace gtee {

struct ParsedChunk {
    std::string trigger_text;
    std::vector<std::vector<std::string>> arg_texts;  // per slot, template order; empty when !valid
    bool valid = false;                               // false: trigger only
};

// Splits a generated answer into chunks and matches each against def's
// template. Never throws; malformed chunks degrade to trigger-only or vanish.
std::vector<ParsedChunk> parse_output(std::string_view generated, const EventTypeDef& def);

// Matches an argument part against a stripped template. Literal text between
// "<arg>" placeholders anchors the match; anchors are taken leftmost so each
// capture is as short as possible. Returns one capture per placeholder, with a
// literal "<arg>" capture mapped to "".
std::optional<std::vector<std::string>> align_template(std::string_view chunk_args, std::string_view tmpl);

// All start indices where `needle` occurs as a token subsequence of `context`.
std::vector<int> find_occurrences(const std::vector<std::string>& context, const std::vector<std::string>& needle);

// The k-th chunk with a given trigger string gets that string's k-th occurrence
// (the last one once occurrences run out). Chunks whose trigger never occurs
// get nullopt.
std::vector<std::optional<Span>> resolve_trigger_offsets(const std::vector<ParsedChunk>& chunks,
                                                         const std::vector<std::string>& context);

// Maps each argument text to the occurrence whose start is nearest the
// trigger start (ties: leftmost); texts that never occur keep Span(-1,-1).
EventRecord resolve_argument_offsets(const EventTypeDef& def, const Span& trigger, const ParsedChunk& chunk,
                                     const std::vector<std::string>& context);

// parse_output followed by both offset resolutions.
std::vector<EventRecord> decode_records(std::string_view generated, const EventTypeDef& def,
                                        const std::vector<std::string>& context);

}  // namespace gtee
