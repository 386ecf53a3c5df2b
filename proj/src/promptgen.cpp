#include "gtee/promptgen.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "gtee/error.hpp"

namespace gtee {

namespace {

std::string trigger_part(std::string_view trigger) { return "Trigger " + std::string(trigger); }

void check_span(const Span& s, std::size_t n, const std::string& what) {
    if (s.start < 0 || s.end <= s.start || static_cast<std::size_t>(s.end) > n) {
        throw ContractError(what + " span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                            ") outside context of " + std::to_string(n) + " tokens");
    }
}

// Splits a stripped template on "<arg>"; K placeholders give K+1 literals.
std::vector<std::string> literal_segments(const std::string& tmpl) {
    std::vector<std::string> segs;
    std::size_t last = 0, pos;
    while ((pos = tmpl.find(kArgMarker, last)) != std::string::npos) {
        segs.push_back(tmpl.substr(last, pos - last));
        last = pos + kArgMarker.size();
    }
    segs.push_back(tmpl.substr(last));
    return segs;
}

std::string fill_record(const EventRecord& rec, const EventTypeDef& def, const std::vector<std::string>& context) {
    const auto roles = slot_order(def);
    // Slots sharing a role receive that role's arguments in span order, one per
    // slot; the last such slot takes any overflow joined by " and ".
    std::map<std::string, std::vector<const Argument*>> by_role;
    for (const auto& a : rec.arguments) {
        check_span(a.span, context.size(), def.type_id + " argument '" + a.role + "'");
        by_role[a.role].push_back(&a);
    }
    for (auto& [role, args] : by_role) {
        std::stable_sort(args.begin(), args.end(), [](const Argument* x, const Argument* y) {
            return std::tie(x->span.start, x->span.end) < std::tie(y->span.start, y->span.end);
        });
    }
    std::map<std::string, std::size_t> slots_left;
    for (const auto& r : roles) ++slots_left[r];
    std::map<std::string, std::size_t> next;

    const auto segs = literal_segments(strip_numeric_labels(def.raw_template));
    std::string out = segs[0];
    for (std::size_t k = 0; k < roles.size(); ++k) {
        const auto& role = roles[k];
        auto it = by_role.find(role);
        std::string fill;
        if (it != by_role.end()) {
            auto& i = next[role];
            const std::size_t remaining_slots = slots_left[role]--;
            const std::size_t take = remaining_slots == 1 ? it->second.size() - std::min(i, it->second.size()) : 1;
            for (std::size_t j = 0; j < take && i < it->second.size(); ++j, ++i) {
                if (!fill.empty()) fill += " and ";
                const auto* a = it->second[i];
                fill += join_tokens(context, static_cast<std::size_t>(a->span.start), static_cast<std::size_t>(a->span.end));
            }
        }
        out += fill.empty() ? std::string(kArgMarker) : fill;
        out += segs[k + 1];
    }
    return out;
}

}  // namespace

Prompt build_prompt(const EventTypeDef& def) {
    Prompt p;
    p.event_type = def.type_id;
    p.instruction = "Event type is " + def.surface_name + ".";
    p.template_text = trigger_part(kTrgMarker) + " " + std::string(kInSep) + " " + strip_numeric_labels(def.raw_template);
    p.full_text = p.instruction + " " + p.template_text;
    return p;
}

std::string serialize_ground_truth(const std::vector<EventRecord>& records, const EventTypeDef& def,
                                   const std::vector<std::string>& context) {
    if (records.empty()) return trigger_part(kTrgMarker);
    struct Rendered {
        Span trigger;
        std::string text;
    };
    std::vector<Rendered> chunks;
    for (const auto& rec : records) {
        if (rec.event_type != def.type_id) {
            throw ContractError("record of type '" + rec.event_type + "' serialized with template of '" + def.type_id + "'");
        }
        check_span(rec.trigger, context.size(), def.type_id + " trigger");
        const auto trig = join_tokens(context, static_cast<std::size_t>(rec.trigger.start),
                                      static_cast<std::size_t>(rec.trigger.end));
        chunks.push_back({rec.trigger, trigger_part(trig) + " " + std::string(kInSep) + " " + fill_record(rec, def, context)});
    }
    std::sort(chunks.begin(), chunks.end(), [](const Rendered& a, const Rendered& b) {
        return std::tie(a.trigger.start, a.trigger.end, a.text) < std::tie(b.trigger.start, b.trigger.end, b.text);
    });
    std::string out;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (i) out += " " + std::string(kOutSep) + " ";
        out += chunks[i].text;
    }
    return out;
}

bool TrainingInstance::positive() const { return target != trigger_part(kTrgMarker); }

std::string model_input(const Prompt& prompt, const std::vector<std::string>& context) {
    std::string x = prompt.full_text + " " + std::string(kSepToken);
    if (!context.empty()) x += " " + join_tokens(context);
    return x;
}

std::vector<TrainingInstance> build_training_instances(const Dataset& dataset, const EventOntology& ontology) {
    std::vector<Prompt> prompts;
    for (const auto& def : ontology.types) prompts.push_back(build_prompt(def));
    std::vector<TrainingInstance> out;
    out.reserve(dataset.size() * ontology.size());
    for (std::size_t c = 0; c < dataset.size(); ++c) {
        const auto& sent = dataset[c];
        std::vector<std::vector<EventRecord>> per_type(ontology.size());
        for (const auto& ev : sent.events) {
            const auto idx = ontology.index_of(ev.event_type);
            if (!idx) throw OntologyError(ev.event_type, "gold record of unknown event type in " + sent.sent_id);
            per_type[*idx].push_back(ev);
        }
        for (std::size_t t = 0; t < ontology.size(); ++t) {
            out.push_back({model_input(prompts[t], sent.tokens),
                           serialize_ground_truth(per_type[t], ontology.types[t], sent.tokens), t, c});
        }
    }
    return out;
}

}  // namespace gtee
