#pragma once

#include <string>
#include <vector>

namespace gtee {

// Token span [start, end). (-1, -1) marks an argument whose text could not be
// located in the context.
struct Span {
    int start = -1;
    int end = -1;

    bool resolved() const { return start >= 0 && end > start; }
    static Span unresolved() { return {-1, -1}; }
    friend bool operator==(const Span&, const Span&) = default;
    friend auto operator<=>(const Span&, const Span&) = default;
};

struct Argument {
    std::string role;
    Span span;
    std::string text;

    friend bool operator==(const Argument&, const Argument&) = default;
};

struct EventRecord {
    std::string event_type;
    Span trigger;
    std::string trigger_text;
    std::vector<Argument> arguments;

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct SentenceInstance {
    std::string doc_id;
    std::string sent_id;
    std::vector<std::string> tokens;
    std::vector<EventRecord> events;

    friend bool operator==(const SentenceInstance&, const SentenceInstance&) = default;
};

using Dataset = std::vector<SentenceInstance>;

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end);
inline std::string join_tokens(const std::vector<std::string>& tokens) { return join_tokens(tokens, 0, tokens.size()); }
std::vector<std::string> split_whitespace(const std::string& text);

}  // namespace gtee
