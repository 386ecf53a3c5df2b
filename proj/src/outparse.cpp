#include "gtee/outparse.hpp"

#include <cstdlib>
#include <map>

namespace gtee {

namespace {

std::vector<std::string_view> split_on(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t last = 0, pos;
    while ((pos = s.find(sep, last)) != std::string_view::npos) {
        out.push_back(s.substr(last, pos - last));
        last = pos + sep.size();
    }
    out.push_back(s.substr(last));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<std::vector<std::string>> align_template(std::string_view chunk_args, std::string_view tmpl) {
    const auto segs = split_on(tmpl, kArgMarker);
    const std::size_t slots = segs.size() - 1;
    if (chunk_args.substr(0, segs[0].size()) != segs[0]) return std::nullopt;
    std::size_t pos = segs[0].size();
    std::vector<std::string> caps;
    caps.reserve(slots);
    for (std::size_t k = 1; k <= slots; ++k) {
        std::size_t found;
        if (k < slots) {
            found = chunk_args.find(segs[k], pos);
            if (found == std::string_view::npos) return std::nullopt;
        } else {
            // The last literal must close the chunk.
            const auto& tail = segs[k];
            if (chunk_args.size() < pos + tail.size()) return std::nullopt;
            found = chunk_args.size() - tail.size();
            if (chunk_args.substr(found) != tail) return std::nullopt;
        }
        std::string cap(chunk_args.substr(pos, found - pos));
        caps.push_back(cap == kArgMarker ? std::string() : std::move(cap));
        pos = found + segs[k].size();
    }
    if (slots == 0 && pos != chunk_args.size()) return std::nullopt;
    return caps;
}

std::vector<ParsedChunk> parse_output(std::string_view generated, const EventTypeDef& def) {
    const std::string tmpl = strip_numeric_labels(def.raw_template);
    const std::string in_sep = " " + std::string(kInSep) + " ";
    constexpr std::string_view head = "Trigger ";
    std::vector<ParsedChunk> out;
    for (auto chunk : split_on(trim(generated), " " + std::string(kOutSep) + " ")) {
        chunk = trim(chunk);
        if (chunk.substr(0, head.size()) != head) continue;
        chunk.remove_prefix(head.size());
        const auto sep = chunk.find(in_sep);
        ParsedChunk pc;
        pc.trigger_text = std::string(trim(chunk.substr(0, sep)));
        if (pc.trigger_text.empty() || pc.trigger_text == kTrgMarker ||
            pc.trigger_text.find('<') != std::string::npos) {
            continue;
        }
        if (sep != std::string_view::npos) {
            if (auto caps = align_template(chunk.substr(sep + in_sep.size()), tmpl)) {
                pc.valid = true;
                for (const auto& c : *caps) {
                    std::vector<std::string> vals;
                    if (!c.empty()) {
                        for (auto v : split_on(c, " and ")) {
                            v = trim(v);
                            if (!v.empty()) vals.emplace_back(v);
                        }
                    }
                    pc.arg_texts.push_back(std::move(vals));
                }
            }
        }
        out.push_back(std::move(pc));
    }
    return out;
}

std::vector<int> find_occurrences(const std::vector<std::string>& context, const std::vector<std::string>& needle) {
    std::vector<int> out;
    if (needle.empty() || needle.size() > context.size()) return out;
    for (std::size_t i = 0; i + needle.size() <= context.size(); ++i) {
        bool ok = true;
        for (std::size_t j = 0; ok && j < needle.size(); ++j) ok = context[i + j] == needle[j];
        if (ok) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<std::optional<Span>> resolve_trigger_offsets(const std::vector<ParsedChunk>& chunks,
                                                         const std::vector<std::string>& context) {
    std::map<std::string, std::size_t> seen;
    std::vector<std::optional<Span>> out;
    for (const auto& c : chunks) {
        const auto words = split_whitespace(c.trigger_text);
        const auto occ = find_occurrences(context, words);
        const std::size_t k = seen[c.trigger_text]++;
        if (occ.empty()) {
            out.push_back(std::nullopt);
            continue;
        }
        const int start = occ[std::min(k, occ.size() - 1)];
        out.push_back(Span{start, start + static_cast<int>(words.size())});
    }
    return out;
}

EventRecord resolve_argument_offsets(const EventTypeDef& def, const Span& trigger, const ParsedChunk& chunk,
                                     const std::vector<std::string>& context) {
    EventRecord rec;
    rec.event_type = def.type_id;
    rec.trigger = trigger;
    rec.trigger_text = chunk.trigger_text;
    if (!chunk.valid) return rec;
    const auto roles = slot_order(def);
    for (std::size_t k = 0; k < chunk.arg_texts.size() && k < roles.size(); ++k) {
        for (const auto& text : chunk.arg_texts[k]) {
            const auto words = split_whitespace(text);
            Span best = Span::unresolved();
            int best_dist = 0;
            for (int start : find_occurrences(context, words)) {
                const int dist = std::abs(start - trigger.start);
                if (!best.resolved() || dist < best_dist) {
                    best = {start, start + static_cast<int>(words.size())};
                    best_dist = dist;
                }
            }
            rec.arguments.push_back({roles[k], best, text});
        }
    }
    return rec;
}

std::vector<EventRecord> decode_records(std::string_view generated, const EventTypeDef& def,
                                        const std::vector<std::string>& context) {
    const auto chunks = parse_output(generated, def);
    const auto spans = resolve_trigger_offsets(chunks, context);
    std::vector<EventRecord> out;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (!spans[i]) continue;
        out.push_back(resolve_argument_offsets(def, *spans[i], chunks[i], context));
    }
    return out;
}

}  // namespace gtee
