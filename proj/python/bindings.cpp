#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "gtee/corpus.hpp"
#include "gtee/error.hpp"
#include "gtee/evalmetrics.hpp"
#include "gtee/manifest.hpp"
#include "gtee/model.hpp"
#include "gtee/outparse.hpp"
#include "gtee/promptgen.hpp"

namespace py = pybind11;
using namespace gtee;
using json = nlohmann::ordered_json;

namespace {

Dataset parse_lines(const std::vector<std::string>& lines) {
    Dataset d;
    d.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) d.push_back(from_json_line(lines[i], i + 1));
    return d;
}

std::vector<std::string> to_lines(const Dataset& d) {
    std::vector<std::string> out;
    out.reserve(d.size());
    for (const auto& s : d) out.push_back(to_json_line(s));
    return out;
}

// Events of a record list in the corpus schema.
std::string events_json(const std::vector<EventRecord>& records, const std::vector<std::string>& tokens) {
    const auto line = json::parse(to_json_line({"", "", tokens, records}));
    return line["events"].dump();
}

json merged(json defaults, const std::string& overrides) {
    if (!overrides.empty()) defaults.update(json::parse(overrides), true);
    return defaults;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Template-based event extraction with dynamic prefixes";
    m.attr("__version__") = version_string();

    auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<OntologyError>(m, "OntologyError", data_error.ptr());
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

    py::class_<EventOntology>(m, "Ontology")
        .def_static("load", [](const std::filesystem::path& p) { return load_ontology(p); })
        .def_static("parse", [](const std::string& text) { return parse_ontology(text); })
        .def_readonly("name", &EventOntology::name)
        .def_property_readonly("type_ids",
                               [](const EventOntology& o) {
                                   std::vector<std::string> ids;
                                   for (const auto& t : o.types) ids.push_back(t.type_id);
                                   return ids;
                               })
        .def("roles", [](const EventOntology& o, const std::string& type) { return slot_order(o.at(type)); })
        .def("prompt",
             [](const EventOntology& o, const std::string& type) {
                 const Prompt p = build_prompt(o.at(type));
                 return py::dict(py::arg("event_type") = p.event_type, py::arg("instruction") = p.instruction,
                                 py::arg("template") = p.template_text, py::arg("text") = p.full_text);
             })
        .def("to_json", [](const EventOntology& o) { return serialize_ontology(o); })
        .def("__len__", &EventOntology::size);

    m.def(
        "generate_synthetic",
        [](const EventOntology& o, std::size_t n, double irrelevant_rate, std::uint64_t seed, double two_event_rate,
           const std::string& id_prefix) {
            SyntheticOptions so;
            so.n_sents = n;
            so.irrelevant_rate = irrelevant_rate;
            so.seed = seed;
            so.two_event_rate = two_event_rate;
            so.id_prefix = id_prefix;
            return to_lines(generate_synthetic(o, so));
        },
        py::arg("ontology"), py::arg("n"), py::arg("irrelevant_rate") = 0.8, py::arg("seed") = 13,
        py::arg("two_event_rate") = 0.3, py::arg("id_prefix") = "synth");

    m.def(
        "serialize_ground_truth",
        [](const EventOntology& o, const std::string& type, const std::string& sentence) {
            const auto s = from_json_line(sentence);
            std::vector<EventRecord> records;
            for (const auto& e : s.events)
                if (e.event_type == type) records.push_back(e);
            return serialize_ground_truth(records, o.at(type), s.tokens);
        },
        py::arg("ontology"), py::arg("type_id"), py::arg("sentence"));

    m.def(
        "decode",
        [](const EventOntology& o, const std::string& type, const std::string& generated,
           const std::vector<std::string>& tokens) {
            return events_json(decode_records(generated, o.at(type), tokens), tokens);
        },
        py::arg("ontology"), py::arg("type_id"), py::arg("generated"), py::arg("tokens"));

    m.def(
        "score",
        [](const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
            const Dataset g = parse_lines(gold);
            return report_json(score_dataset(align_predictions(parse_lines(pred), g), g));
        },
        py::arg("predictions"), py::arg("gold"));

    py::class_<GteeModel>(m, "Model")
        .def_static(
            "create",
            [](const EventOntology& o, const std::vector<std::string>& train, const std::string& lm,
               const std::string& prefix, std::uint64_t seed) {
                const Dataset d = parse_lines(train);
                return create_model(o, build_vocab(o, d), model_config_from_json(merged(to_json(ModelConfig{}), lm)),
                                    prefix_config_from_json(merged(to_json(PrefixConfig{}), prefix)), seed);
            },
            py::arg("ontology"), py::arg("train"), py::arg("lm_config") = "", py::arg("prefix_config") = "",
            py::arg("seed") = 13)
        .def_static("load", [](const std::filesystem::path& dir) { return load_checkpoint(dir); })
        .def("save", [](const GteeModel& model, const std::filesystem::path& dir) { save_checkpoint(dir, model); })
        .def_readonly("stage", &GteeModel::stage)
        .def_property_readonly("n_parameters",
                               [](const GteeModel& model) {
                                   std::size_t n = 0;
                                   for (const auto& p : model.parameters()) n += p.tensor.numel();
                                   return n;
                               })
        .def(
            "predict",
            [](const GteeModel& model, const std::vector<std::string>& contexts, const std::string& mode,
               std::size_t beam, std::size_t max_steps) {
                DecodeOptions opt;
                opt.mode = parse_prefix_mode(mode);
                opt.beam = beam;
                opt.max_steps = max_steps;
                const Dataset d = parse_lines(contexts);
                py::gil_scoped_release release;
                return to_lines(predict(model, d, opt).predictions);
            },
            py::arg("contexts"), py::arg("mode") = "dynamic", py::arg("beam") = 6, py::arg("max_steps") = 0);
}
