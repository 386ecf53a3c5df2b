#include "gtee/ontology.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "gtee/error.hpp"

namespace gtee {

namespace {

struct Placeholder {
    std::size_t begin;
    std::size_t end;  // one past '>'
    int number;
};

// Finds "<arg" digits ">" occurrences.
std::vector<Placeholder> scan_placeholders(std::string_view s) {
    std::vector<Placeholder> out;
    constexpr std::string_view open = "<arg";
    std::size_t pos = 0;
    while ((pos = s.find(open, pos)) != std::string_view::npos) {
        std::size_t i = pos + open.size();
        int number = 0;
        std::size_t digits = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9' && digits < 9) {
            number = number * 10 + (s[i] - '0');
            ++i;
            ++digits;
        }
        if (digits > 0 && i < s.size() && s[i] == '>') {
            out.push_back({pos, i + 1, number});
            pos = i + 1;
        } else {
            pos += 1;
        }
    }
    return out;
}

std::string surface_of(const std::string& type_id) {
    const auto colon = type_id.rfind(':');
    return colon == std::string::npos ? type_id : type_id.substr(colon + 1);
}

}  // namespace

std::vector<int> EventTypeDef::placeholder_order() const {
    std::vector<int> out;
    for (const auto& p : scan_placeholders(raw_template)) out.push_back(p.number);
    return out;
}

std::optional<std::size_t> EventOntology::index_of(std::string_view type_id) const {
    for (std::size_t i = 0; i < types.size(); ++i)
        if (types[i].type_id == type_id) return i;
    return std::nullopt;
}

const EventTypeDef& EventOntology::at(std::string_view type_id) const {
    const auto i = index_of(type_id);
    if (!i) throw OntologyError(std::string(type_id), "unknown event type in ontology '" + name + "'");
    return types[*i];
}

EventTypeDef make_type_def(std::string type_id, std::string raw_template, std::map<int, std::string> slot_map) {
    if (type_id.empty()) throw OntologyError("", "event type with empty identifier");
    const auto found = scan_placeholders(raw_template);
    std::set<int> numbers;
    for (const auto& p : found) {
        if (!numbers.insert(p.number).second) {
            throw OntologyError(type_id, "placeholder <arg" + std::to_string(p.number) + "> appears twice");
        }
        if (!slot_map.count(p.number)) {
            throw OntologyError(type_id, "placeholder <arg" + std::to_string(p.number) + "> has no slot mapping");
        }
    }
    for (const auto& [n, role] : slot_map) {
        if (!numbers.count(n)) {
            throw OntologyError(type_id, "slot mapping arg" + std::to_string(n) + " has no placeholder in template");
        }
        if (role.empty()) throw OntologyError(type_id, "slot mapping arg" + std::to_string(n) + " has an empty role");
    }
    int expect = 1;
    for (int n : numbers) {
        if (n != expect) throw OntologyError(type_id, "placeholders are not numbered contiguously from 1");
        ++expect;
    }
    EventTypeDef def;
    def.surface_name = surface_of(type_id);
    def.type_id = std::move(type_id);
    def.raw_template = std::move(raw_template);
    def.slot_map = std::move(slot_map);
    return def;
}

EventOntology parse_ontology(std::string_view json_text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw OntologyError("", std::string("malformed ontology JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string() || !j.contains("types") ||
        !j["types"].is_array()) {
        throw OntologyError("", "ontology must be an object with string 'name' and array 'types'");
    }
    EventOntology ont;
    ont.name = j["name"].get<std::string>();
    std::set<std::string> seen;
    for (const auto& t : j["types"]) {
        const std::string id = t.contains("type") && t["type"].is_string() ? t["type"].get<std::string>() : "";
        if (!t.is_object() || id.empty() || !t.contains("template") || !t["template"].is_string() ||
            !t.contains("roles") || !t["roles"].is_object()) {
            throw OntologyError(id, "type entry needs string 'type', string 'template' and object 'roles'");
        }
        if (!seen.insert(id).second) throw OntologyError(id, "duplicate event type");
        std::map<int, std::string> slots;
        for (const auto& [key, role] : t["roles"].items()) {
            int n = 0;
            bool ok = key.size() > 3 && key.compare(0, 3, "arg") == 0 && role.is_string();
            for (std::size_t i = 3; ok && i < key.size(); ++i) {
                ok = key[i] >= '0' && key[i] <= '9' && i < 12;
                if (ok) n = n * 10 + (key[i] - '0');
            }
            if (!ok) throw OntologyError(id, "bad role entry '" + key + "'");
            slots[n] = role.get<std::string>();
        }
        ont.types.push_back(make_type_def(id, t["template"].get<std::string>(), std::move(slots)));
    }
    return ont;
}

std::string serialize_ontology(const EventOntology& ontology) {
    nlohmann::ordered_json j;
    j["name"] = ontology.name;
    j["types"] = nlohmann::ordered_json::array();
    for (const auto& t : ontology.types) {
        nlohmann::ordered_json e;
        e["type"] = t.type_id;
        e["template"] = t.raw_template;
        e["roles"] = nlohmann::ordered_json::object();
        for (const auto& [n, role] : t.slot_map) e["roles"]["arg" + std::to_string(n)] = role;
        j["types"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

EventOntology load_ontology(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw OntologyError("", "cannot open ontology file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_ontology(ss.str());
}

std::string strip_numeric_labels(std::string_view raw_template) {
    std::string out;
    std::size_t last = 0;
    for (const auto& p : scan_placeholders(raw_template)) {
        out.append(raw_template.substr(last, p.begin - last));
        out.append(kArgMarker);
        last = p.end;
    }
    out.append(raw_template.substr(last));
    return out;
}

std::vector<std::string> slot_order(const EventTypeDef& def) {
    std::vector<std::string> roles;
    for (int n : def.placeholder_order()) roles.push_back(def.slot_map.at(n));
    return roles;
}

}  // namespace gtee
