#include "gtee/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "gtee/error.hpp"
#include "gtee/log.hpp"
#include "gtee/outparse.hpp"
#include "gtee/rng.hpp"

namespace gtee {

using json = nlohmann::ordered_json;

// ---- JSONL -------------------------------------------------------------------

namespace {

json span_json(const Span& s, const std::string& text) {
    json j;
    j["start"] = s.start;
    j["end"] = s.end;
    j["text"] = text;
    return j;
}

void check_span(const Span& s, std::size_t n, bool allow_unresolved, const std::string& where) {
    if (allow_unresolved && s == Span::unresolved()) return;
    if (s.start < 0 || s.end <= s.start || static_cast<std::size_t>(s.end) > n) {
        throw DataError(where + ": span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                        ") invalid for " + std::to_string(n) + " tokens");
    }
}

}  // namespace

Dataset with_events(const Dataset& data) {
    Dataset out;
    for (const auto& s : data)
        if (!s.events.empty()) out.push_back(s);
    return out;
}

void validate_instance(const SentenceInstance& s) {
    for (const auto& e : s.events) {
        check_span(e.trigger, s.tokens.size(), false, s.sent_id + " trigger of " + e.event_type);
        for (const auto& a : e.arguments) check_span(a.span, s.tokens.size(), true, s.sent_id + " argument " + a.role);
    }
}

std::string to_json_line(const SentenceInstance& s) {
    json j;
    j["doc_id"] = s.doc_id;
    j["sent_id"] = s.sent_id;
    j["tokens"] = s.tokens;
    j["events"] = json::array();
    for (const auto& e : s.events) {
        json ev;
        ev["type"] = e.event_type;
        ev["trigger"] = span_json(e.trigger, e.trigger_text);
        ev["args"] = json::array();
        for (const auto& a : e.arguments) {
            json aj = span_json(a.span, a.text);
            aj["role"] = a.role;
            ev["args"].push_back(std::move(aj));
        }
        j["events"].push_back(std::move(ev));
    }
    return j.dump();
}

SentenceInstance from_json_line(const std::string& line, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no);
    SentenceInstance s;
    try {
        const json j = json::parse(line);
        s.doc_id = j.at("doc_id").get<std::string>();
        s.sent_id = j.at("sent_id").get<std::string>();
        s.tokens = j.at("tokens").get<std::vector<std::string>>();
        for (const auto& ev : j.at("events")) {
            EventRecord r;
            r.event_type = ev.at("type").get<std::string>();
            const auto& t = ev.at("trigger");
            r.trigger = {t.at("start").get<int>(), t.at("end").get<int>()};
            r.trigger_text = t.at("text").get<std::string>();
            for (const auto& a : ev.at("args")) {
                r.arguments.push_back({a.at("role").get<std::string>(), {a.at("start").get<int>(), a.at("end").get<int>()},
                                       a.at("text").get<std::string>()});
            }
            s.events.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw DataError(where + ": " + e.what());
    }
    try {
        validate_instance(s);
    } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
    }
    return s;
}

Dataset read_jsonl(std::istream& in) {
    Dataset out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(from_json_line(line, n));
    }
    return out;
}

Dataset read_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path.string());
    return read_jsonl(f);
}

void write_jsonl(std::ostream& out, const Dataset& data) {
    for (const auto& s : data) out << to_json_line(s) << '\n';
}

void write_jsonl(const std::filesystem::path& path, const Dataset& data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw DataError("cannot write " + tmp);
        write_jsonl(f, data);
        if (!f) throw DataError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

// ---- synthetic generator -------------------------------------------------------

namespace {

const std::vector<std::string> kPeople = {
    "Alice",        "Bob",         "Carlos",      "Diana",       "Ethan",        "Fatima",
    "George",       "Hana",        "Ivan",        "Julia",       "Kenji",        "Laura",
    "the man",      "the woman",   "bounty hunters", "the soldiers", "the police", "the rebels",
    "the senator",  "the lawyer",  "the minister", "the militants", "the doctor", "the reporters"};
const std::vector<std::string> kPlaces = {"Mexico", "Los Angeles", "Paris",  "Baghdad", "Cairo",  "Berlin",
                                          "Tokyo",  "New York",    "Moscow", "Lagos",   "Lima",   "Seoul",
                                          "Madrid", "Kabul",       "Nairobi", "Boston"};
const std::vector<std::string> kVehicles = {"a truck", "the plane", "a boat", "the train", "a helicopter", "a bus"};
const std::vector<std::string> kInstruments = {"rockets", "a knife", "grenades", "rifles", "a bomb", "artillery"};
const std::vector<std::string> kGoods = {"the weapons", "the documents", "the cargo", "the supplies", "the crates",
                                         "the files"};
const std::vector<std::string> kPrefixes = {"", "", "Officials said", "Reports said", "Witnesses said"};
const std::vector<std::string> kSuffixes = {"", "on Tuesday", "last week", "on Friday", "this morning", "yesterday"};
const std::vector<std::string> kJoiners = {"after", "before", "while", "and then"};
const std::vector<std::string> kCues = {"weather", "recipe", "concert", "forecast", "budget", "festival", "museum",
                                        "football"};
const std::vector<std::string> kCueVerbs = {"discussed", "praised", "reviewed", "ignored"};
const std::vector<std::string> kAdjectives = {"calm", "busy", "quiet", "crowded"};

struct TriggerWord {
    std::string aux;  // e.g. "was" in "was born"; not part of the trigger span
    std::string word;
};

std::vector<TriggerWord> trigger_lexicon(const EventTypeDef& def) {
    static const std::map<std::string, std::vector<TriggerWord>> known = {
        {"Movement:Transport", {{"", "returned"}, {"", "traveled"}, {"", "moved"}, {"", "arrived"}}},
        {"Justice:Arrest-Jail", {{"", "captured"}, {"", "arrested"}, {"", "detained"}, {"", "jailed"}}},
        {"Contact:Meet", {{"", "met"}, {"", "talked"}, {"", "conferred"}}},
        {"Conflict:Attack", {{"", "attacked"}, {"", "bombed"}, {"", "raided"}, {"", "shelled"}}},
        {"Life:Be-Born", {{"was", "born"}}},
    };
    if (auto it = known.find(def.type_id); it != known.end()) return it->second;
    std::string w = def.surface_name;
    for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return {{"", w}, {"", w + "s"}};
}

enum class RoleKind { Participant, Location, Tool };

struct RoleInfo {
    RoleKind kind;
    std::string prep;  // connector for locations, tools and third+ participants
    const std::vector<std::string>* pool;
};

RoleInfo role_info(const std::string& role) {
    if (role == "Place") return {RoleKind::Location, "in", &kPlaces};
    if (role == "Origin") return {RoleKind::Location, "from", &kPlaces};
    if (role == "Destination") return {RoleKind::Location, "to", &kPlaces};
    if (role == "Vehicle") return {RoleKind::Tool, "by", &kVehicles};
    if (role == "Instrument") return {RoleKind::Tool, "with", &kInstruments};
    if (role == "Artifact" || role == "Thing") return {RoleKind::Participant, "with", &kGoods};
    if (role == "Victim") return {RoleKind::Participant, "wounding", &kPeople};
    if (role == "Beneficiary") return {RoleKind::Participant, "for", &kPeople};
    if (role == "Adjudicator") return {RoleKind::Participant, "before", &kPeople};
    if (role == "Buyer" || role == "Recipient") return {RoleKind::Participant, "to", &kPeople};
    return {RoleKind::Participant, "with", &kPeople};
}

std::string object_prep(const EventTypeDef& def) { return def.type_id == "Contact:Meet" ? "with" : ""; }

struct Piece {
    std::vector<std::string> words;
    int role_slot = -1;  // >= 0: argument for that slot; -2: trigger
};

struct Clause {
    std::vector<Piece> pieces;
    std::size_t type_index = 0;
    std::vector<std::string> roles;  // slot roles of the type
};

void push_words(std::vector<Piece>& out, const std::string& text, int slot = -1) {
    if (!text.empty()) out.push_back({split_whitespace(text), slot});
}

// Fillers are drawn without replacement from `used` so every argument string is
// unique in the sentence.
std::string draw(Rng& rng, const std::vector<std::string>& pool, std::set<std::string>& used) {
    for (int tries = 0; tries < 64; ++tries) {
        const auto& v = rng.pick(pool);
        if (used.insert(v).second) return v;
    }
    return {};
}

Clause make_clause(const EventOntology& ont, std::size_t type_index, Rng& rng, std::set<std::string>& used,
                   std::set<std::string>& used_triggers) {
    const auto& def = ont.types[type_index];
    Clause c;
    c.type_index = type_index;
    c.roles = slot_order(def);
    // Pick a subset of slots, at least one.
    std::vector<int> chosen;
    for (std::size_t k = 0; k < c.roles.size(); ++k)
        if (rng.uniform() < 0.7) chosen.push_back(static_cast<int>(k));
    if (chosen.empty() && !c.roles.empty()) chosen.push_back(static_cast<int>(rng.below(c.roles.size())));

    std::vector<std::pair<int, std::string>> participants, extras;
    for (int k : chosen) {
        const auto info = role_info(c.roles[static_cast<std::size_t>(k)]);
        std::string filler = draw(rng, *info.pool, used);
        if (filler.empty()) continue;
        if (info.kind == RoleKind::Participant) {
            participants.emplace_back(k, filler);
        } else {
            extras.emplace_back(k, filler);
        }
    }

    const auto lex = trigger_lexicon(def);
    TriggerWord trig = rng.pick(lex);
    for (int tries = 0; tries < 16 && used_triggers.count(trig.word); ++tries) trig = rng.pick(lex);
    used_triggers.insert(trig.word);

    // The first participant role of the template is the subject and the second
    // the object. A clause never has an object without its subject.
    int subject_slot = -1, object_slot = -1;
    for (std::size_t k = 0; k < c.roles.size(); ++k) {
        if (role_info(c.roles[k]).kind != RoleKind::Participant) continue;
        if (subject_slot < 0) {
            subject_slot = static_cast<int>(k);
        } else if (object_slot < 0) {
            object_slot = static_cast<int>(k);
        }
    }
    const std::string* subject = nullptr;
    const std::string* object = nullptr;
    for (const auto& [k, filler] : participants) {
        if (k == subject_slot) subject = &filler;
        if (k == object_slot) object = &filler;
    }
    if (object && !subject) {
        std::string filler = draw(rng, *role_info(c.roles[static_cast<std::size_t>(subject_slot)]).pool, used);
        if (!filler.empty()) {
            participants.emplace_back(subject_slot, std::move(filler));
            subject = &participants.back().second;
            object = nullptr;
            for (const auto& [k, f] : participants)
                if (k == object_slot) object = &f;
        }
    }
    if (subject) {
        push_words(c.pieces, *subject, subject_slot);
        push_words(c.pieces, trig.aux);
        c.pieces.push_back({{trig.word}, -2});
        if (object) {
            push_words(c.pieces, object_prep(def));
            push_words(c.pieces, *object, object_slot);
        }
    } else {
        push_words(c.pieces, trig.aux);
        c.pieces.push_back({{trig.word}, -2});
        if (object) push_words(c.pieces, *object, object_slot);
    }
    for (const auto& [k, filler] : participants) {
        if (k == subject_slot || k == object_slot) continue;
        push_words(c.pieces, role_info(c.roles[static_cast<std::size_t>(k)]).prep);
        push_words(c.pieces, filler, k);
    }
    rng.shuffle(extras);
    for (const auto& [k, filler] : extras) {
        push_words(c.pieces, role_info(c.roles[static_cast<std::size_t>(k)]).prep);
        push_words(c.pieces, filler, k);
    }
    return c;
}

void append_clause(SentenceInstance& s, const Clause& c, const EventTypeDef& def) {
    EventRecord rec;
    rec.event_type = def.type_id;
    for (const auto& p : c.pieces) {
        const int start = static_cast<int>(s.tokens.size());
        s.tokens.insert(s.tokens.end(), p.words.begin(), p.words.end());
        const Span span{start, static_cast<int>(s.tokens.size())};
        const std::string text = join_tokens(p.words);
        if (p.role_slot == -2) {
            rec.trigger = span;
            rec.trigger_text = text;
        } else if (p.role_slot >= 0) {
            rec.arguments.push_back({c.roles[static_cast<std::size_t>(p.role_slot)], span, text});
        }
    }
    s.events.push_back(std::move(rec));
}

void append_text(SentenceInstance& s, const std::string& text) {
    for (auto& w : split_whitespace(text)) s.tokens.push_back(std::move(w));
}

SentenceInstance make_relevant(const EventOntology& ont, Rng& rng, double two_event_rate) {
    for (;;) {
        SentenceInstance s;
        std::set<std::string> used, used_triggers;
        const std::size_t n_events = rng.uniform() < two_event_rate ? 2 : 1;
        append_text(s, rng.pick(kPrefixes));
        for (std::size_t e = 0; e < n_events; ++e) {
            if (e > 0) append_text(s, rng.pick(kJoiners));
            const auto t = static_cast<std::size_t>(rng.below(ont.size()));
            append_clause(s, make_clause(ont, t, rng, used, used_triggers), ont.types[t]);
        }
        append_text(s, rng.pick(kSuffixes));
        bool ok = true;
        for (const auto& ev : s.events) {
            ok = ok && find_occurrences(s.tokens, split_whitespace(ev.trigger_text)).size() == 1;
        }
        if (ok && roundtrip_safe(s, ont)) return s;
    }
}

SentenceInstance make_irrelevant(Rng& rng) {
    SentenceInstance s;
    std::set<std::string> used;
    append_text(s, rng.pick(kPrefixes));
    switch (rng.below(3)) {
        case 0:
            append_text(s, draw(rng, kPeople, used) + " " + rng.pick(kCueVerbs) + " the " + rng.pick(kCues) + " in " +
                               draw(rng, kPlaces, used));
            break;
        case 1:
            append_text(s, "the " + rng.pick(kCues) + " in " + draw(rng, kPlaces, used) + " was " + rng.pick(kAdjectives));
            break;
        default:
            append_text(s, draw(rng, kPeople, used) + " and " + draw(rng, kPeople, used) + " " + rng.pick(kCueVerbs) +
                               " the " + rng.pick(kCues));
            break;
    }
    append_text(s, rng.pick(kSuffixes));
    return s;
}

bool contains_anchor(const std::string& text, const EventTypeDef& def) {
    const std::string padded = " " + text + " ";
    const std::string tmpl = strip_numeric_labels(def.raw_template);
    std::size_t last = 0, pos;
    auto check = [&](const std::string& seg) {
        const auto t = seg.find_first_not_of(' ');
        if (t == std::string::npos) return false;
        return padded.find(seg) != std::string::npos;
    };
    while ((pos = tmpl.find(kArgMarker, last)) != std::string::npos) {
        if (check(tmpl.substr(last, pos - last))) return true;
        last = pos + kArgMarker.size();
    }
    return check(tmpl.substr(last));
}

}  // namespace

const std::vector<std::string>& irrelevance_cues() { return kCues; }

bool roundtrip_safe(const SentenceInstance& s, const EventOntology& ontology) {
    for (const auto& ev : s.events) {
        const auto idx = ontology.index_of(ev.event_type);
        if (!idx) return false;
        for (const auto& a : ev.arguments) {
            if (a.text.find(" and ") != std::string::npos || a.text == "and") return false;
            if (find_occurrences(s.tokens, split_whitespace(a.text)).size() != 1) return false;
            if (contains_anchor(a.text, ontology.types[*idx])) return false;
        }
    }
    return true;
}

Dataset generate_synthetic(const EventOntology& ontology, const SyntheticOptions& opt) {
    if (!(opt.irrelevant_rate >= 0.0 && opt.irrelevant_rate <= 1.0)) {
        throw ContractError("generate_synthetic: irrelevant_rate must lie in [0, 1]");
    }
    if (ontology.types.empty()) throw ContractError("generate_synthetic: empty ontology");
    Rng rng(opt.seed);
    const auto n_irr = static_cast<std::size_t>(std::llround(opt.irrelevant_rate * static_cast<double>(opt.n_sents)));
    std::vector<char> irrelevant(opt.n_sents, 0);
    std::fill_n(irrelevant.begin(), std::min(n_irr, opt.n_sents), 1);
    rng.shuffle(irrelevant);

    Dataset out;
    out.reserve(opt.n_sents);
    char id[64];
    for (std::size_t i = 0; i < opt.n_sents; ++i) {
        SentenceInstance s = irrelevant[i] ? make_irrelevant(rng) : make_relevant(ontology, rng, opt.two_event_rate);
        std::snprintf(id, sizeof id, "-doc%04zu", i / 20);
        s.doc_id = opt.id_prefix + id;
        std::snprintf(id, sizeof id, "-s%06zu", i);
        s.sent_id = opt.id_prefix + id;
        out.push_back(std::move(s));
    }
    return out;
}

// ---- transfer split ----------------------------------------------------------------

namespace {

void split_four_to_one(Dataset items, Rng& rng, Dataset& train, Dataset& test) {
    rng.shuffle(items);
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(items.size()) * 4.0 / 5.0));
    train.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.assign(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
}

Dataset restrict_types(const Dataset& data, const std::set<std::string>& keep) {
    Dataset out;
    for (const auto& s : data) {
        SentenceInstance t = s;
        t.events.clear();
        for (const auto& e : s.events)
            if (keep.count(e.event_type)) t.events.push_back(e);
        if (!t.events.empty()) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TransferSplit transfer_split(const Dataset& data, const EventOntology& ontology, std::uint64_t seed,
                             std::size_t min_tokens) {
    Dataset kept;
    for (const auto& s : data)
        if (s.tokens.size() >= min_tokens) kept.push_back(s);
    std::map<std::string, std::size_t> freq;
    for (const auto& s : kept)
        for (const auto& e : s.events) ++freq[e.event_type];
    if (freq.size() < 2) throw ContractError("transfer_split: needs at least 2 distinct event types");

    std::vector<std::string> types;
    for (const auto& def : ontology.types)
        if (freq.count(def.type_id)) types.push_back(def.type_id);
    for (const auto& [t, n] : freq)
        if (!ontology.index_of(t)) throw OntologyError(t, "transfer_split: event type missing from ontology");
    std::stable_sort(types.begin(), types.end(),
                     [&](const std::string& a, const std::string& b) { return freq[a] > freq[b]; });

    TransferSplit res;
    std::size_t n_src = 10;
    if (types.size() < 11) {
        n_src = (types.size() + 1) / 2;
        res.fallback = true;
        log_warn("transfer_split: only " + std::to_string(types.size()) + " event types; src takes the top " +
                 std::to_string(n_src));
    }
    res.src_types.assign(types.begin(), types.begin() + static_cast<std::ptrdiff_t>(n_src));
    res.tgt_types.assign(types.begin() + static_cast<std::ptrdiff_t>(n_src), types.end());

    Rng rng(seed);
    split_four_to_one(restrict_types(kept, {res.src_types.begin(), res.src_types.end()}), rng, res.src_train,
                      res.src_test);
    split_four_to_one(restrict_types(kept, {res.tgt_types.begin(), res.tgt_types.end()}), rng, res.tgt_train,
                      res.tgt_test);
    return res;
}

CorpusStats corpus_stats(const Dataset& data) {
    CorpusStats st;
    st.sentences = data.size();
    for (const auto& s : data) {
        st.events += s.events.size();
        if (s.events.empty()) ++st.event_free;
        for (const auto& e : s.events) st.arguments += e.arguments.size();
    }
    return st;
}

std::string stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %10s %8s %8s %10s\n", "split", "#Sents", "#Events", "#Roles", "event-free");
    os << buf;
    for (const auto& [name, st] : rows) {
        const double pct = st.sentences ? 100.0 * static_cast<double>(st.event_free) / static_cast<double>(st.sentences) : 0.0;
        std::snprintf(buf, sizeof buf, "%-10s %10zu %8zu %8zu %9.2f%%\n", name.c_str(), st.sentences, st.events,
                      st.arguments, pct);
        os << buf;
    }
    return os.str();
}

}  // namespace gtee
