#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gtee {

// Reserved marker strings used in prompts and generated answers.
inline constexpr std::string_view kTrgMarker = "<trg>";
inline constexpr std::string_view kArgMarker = "<arg>";
inline constexpr std::string_view kInSep = "<IN_SEP>";
inline constexpr std::string_view kOutSep = "<OUT_SEP>";
inline constexpr std::string_view kSepToken = "[SEP]";

struct EventTypeDef {
    std::string type_id;                  // e.g. "Movement:Transport"
    std::string surface_name;             // e.g. "Transport"
    std::string raw_template;             // with <arg1>..<argK>
    std::map<int, std::string> slot_map;  // placeholder number -> role

    // Placeholder numbers in left-to-right template order.
    std::vector<int> placeholder_order() const;
    std::size_t slot_count() const { return slot_map.size(); }

    friend bool operator==(const EventTypeDef&, const EventTypeDef&) = default;
};

struct EventOntology {
    std::string name;
    std::vector<EventTypeDef> types;  // order fixes the type index

    std::size_t size() const { return types.size(); }
    std::optional<std::size_t> index_of(std::string_view type_id) const;
    const EventTypeDef& at(std::string_view type_id) const;

    friend bool operator==(const EventOntology&, const EventOntology&) = default;
};

// Builds and validates a type definition; throws OntologyError naming the type.
EventTypeDef make_type_def(std::string type_id, std::string raw_template, std::map<int, std::string> slot_map);

EventOntology parse_ontology(std::string_view json_text);
std::string serialize_ontology(const EventOntology& ontology);
EventOntology load_ontology(const std::filesystem::path& path);

// Replaces every <argN> with <arg>; everything else is kept byte for byte.
std::string strip_numeric_labels(std::string_view raw_template);

// Roles in the order their placeholders appear in the template.
std::vector<std::string> slot_order(const EventTypeDef& def);

}  // namespace gtee
