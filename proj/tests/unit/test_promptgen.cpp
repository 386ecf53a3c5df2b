#include "gtee/error.hpp"
#include "gtee/promptgen.hpp"
#include "helpers.hpp"

using namespace gtee;
using namespace gtee::testing;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

std::vector<std::string> words(const std::string& s) { return split_whitespace(s); }

EventRecord rec(const std::string& type, Span trig, const std::vector<std::string>& ctx,
                std::vector<std::pair<std::string, Span>> args = {}) {
    EventRecord r{type, trig, join_tokens(ctx, trig.start, trig.end), {}};
    for (auto& [role, s] : args) r.arguments.push_back({role, s, join_tokens(ctx, s.start, s.end)});
    return r;
}

}  // namespace

TEST_SUITE("promptgen") {
    TEST_CASE("prompts") {
        const auto ace = ace_ontology();
        CHECK(build_prompt(ace.at("Contact:Meet")).full_text ==
              "Event type is Meet. Trigger <trg> <IN_SEP> <arg> met with <arg> in <arg> place");
        CHECK(build_prompt(ace.at("Life:Be-Born")).full_text ==
              "Event type is Be-Born. Trigger <trg> <IN_SEP> <arg> was born in <arg> place");
        const auto noop = make_type_def("Toy:Noop", "<arg1> acted", {{1, "Agent"}});
        const auto p = build_prompt(noop);
        CHECK(p.full_text == "Event type is Noop. Trigger <trg> <IN_SEP> <arg> acted");
        CHECK(p.instruction == "Event type is Noop.");
        CHECK(p.template_text.rfind("Trigger <trg>", 0) == 0);
        for (const auto& t : ace.types) {
            const auto full = build_prompt(t).full_text;
            CHECK(count_of(full, "<arg>") == t.slot_count());
            CHECK(count_of(full, "<trg>") == 1);
        }
    }

    TEST_CASE("transport ground truth") {
        const auto ace = ace_ontology();
        const auto ctx = words("the man returned from Mexico to Los Angeles where police arrested him");
        const auto r = rec("Movement:Transport", {2, 3}, ctx,
                           {{"Artifact", {0, 2}}, {"Destination", {6, 8}}, {"Origin", {4, 5}}});
        CHECK(serialize_ground_truth({r}, ace.at("Movement:Transport"), ctx) ==
              "Trigger returned <IN_SEP> <arg> transported the man in <arg> vehicle from Mexico place to Los Angeles "
              "place");
        CHECK(serialize_ground_truth({}, ace.at("Movement:Transport"), ctx) == "Trigger <trg>");
    }

    TEST_CASE("same-role arguments are joined in span order") {
        const auto def = make_type_def("Toy:Pay", "<arg1> paid <arg2>", {{1, "Giver"}, {2, "Recipient"}});
        const auto ctx = words("Ann paid Bob Cy and Dee");
        const auto r = rec("Toy:Pay", {1, 2}, ctx, {{"Recipient", {5, 6}}, {"Giver", {0, 1}}, {"Recipient", {2, 3}}});
        CHECK(serialize_ground_truth({r}, def, ctx) == "Trigger paid <IN_SEP> Ann paid Bob and Dee");
    }

    TEST_CASE("duplicate role slots fill positionally") {
        const auto ace = ace_ontology();
        const auto ctx = words("Ann met Bob in Rome");
        const auto r = rec("Contact:Meet", {1, 2}, ctx, {{"Entity", {2, 3}}, {"Entity", {0, 1}}, {"Place", {4, 5}}});
        CHECK(serialize_ground_truth({r}, ace.at("Contact:Meet"), ctx) ==
              "Trigger met <IN_SEP> Ann met with Bob in Rome place");
    }

    TEST_CASE("records are emitted in trigger-span order") {
        const auto ace = ace_ontology();
        const auto& meet = ace.at("Contact:Meet");
        const auto ctx = words("a b c d e f g h i j k l");
        Rng rng(7);
        for (int trial = 0; trial < 500; ++trial) {
            std::vector<EventRecord> recs;
            const auto n = 1 + rng.below(4);
            for (std::uint64_t k = 0; k < n; ++k) {
                const int s = static_cast<int>(rng.below(10));
                const int e = s + 1 + static_cast<int>(rng.below(2));
                recs.push_back(rec("Contact:Meet", {s, e}, ctx, {{"Place", {11, 12}}}));
            }
            // Oracle: repeatedly pick the smallest (start, end, rendered chunk).
            std::vector<std::string> single;
            for (const auto& r : recs) single.push_back(serialize_ground_truth({r}, meet, ctx));
            std::vector<bool> used(recs.size(), false);
            std::string expect;
            for (std::size_t round = 0; round < recs.size(); ++round) {
                std::size_t best = recs.size();
                for (std::size_t i = 0; i < recs.size(); ++i) {
                    if (used[i]) continue;
                    if (best == recs.size()) {
                        best = i;
                        continue;
                    }
                    const auto& a = recs[i].trigger;
                    const auto& b = recs[best].trigger;
                    if (a.start < b.start || (a.start == b.start && (a.end < b.end || (a.end == b.end && single[i] < single[best]))))
                        best = i;
                }
                used[best] = true;
                if (round) expect += " <OUT_SEP> ";
                expect += single[best];
            }
            const auto got = serialize_ground_truth(recs, meet, ctx);
            CHECK(got == expect);
            CHECK(count_of(got, " <OUT_SEP> ") == recs.size() - 1);
            rng.shuffle(recs);
            CHECK(serialize_ground_truth(recs, meet, ctx) == got);
        }
    }

    TEST_CASE("serialization preconditions") {
        const auto ace = ace_ontology();
        const auto ctx = words("Ann met Bob");
        CHECK_THROWS_AS(serialize_ground_truth({EventRecord{"Contact:Meet", {2, 5}, "x", {}}}, ace.at("Contact:Meet"), ctx),
                        ContractError);
        CHECK_THROWS_AS(serialize_ground_truth({EventRecord{"Life:Die", {1, 2}, "met", {}}}, ace.at("Contact:Meet"), ctx),
                        ContractError);
    }

    TEST_CASE("training instances") {
        const auto ace = ace_ontology();
        const auto ctx = words("the man returned from Mexico to Los Angeles where police arrested him");
        SentenceInstance s{"d", "s1", ctx, {}};
        s.events.push_back(rec("Movement:Transport", {2, 3}, ctx, {{"Artifact", {0, 2}}, {"Origin", {4, 5}}, {"Destination", {6, 8}}}));
        s.events.push_back(rec("Justice:Arrest-Jail", {10, 11}, ctx, {{"Agent", {9, 10}}, {"Person", {11, 12}}}));
        const auto inst = build_training_instances({s}, ace);
        REQUIRE(inst.size() == 33);
        std::size_t positives = 0;
        for (std::size_t t = 0; t < 33; ++t) {
            CHECK(inst[t].type_index == t);
            CHECK(inst[t].context_index == 0);
            CHECK(inst[t].input == build_prompt(ace.types[t]).full_text + " [SEP] " + join_tokens(ctx));
            positives += inst[t].positive();
        }
        CHECK(positives == 2);
        CHECK(inst[*ace.index_of("Justice:Arrest-Jail")].target ==
              "Trigger arrested <IN_SEP> police arrested him in <arg> place");
        CHECK(inst[*ace.index_of("Movement:Transport")].target ==
              "Trigger returned <IN_SEP> <arg> transported the man in <arg> vehicle from Mexico place to Los Angeles "
              "place");
        CHECK(build_training_instances({}, ace).empty());

        s.events.push_back(rec("Made:Up", {0, 1}, ctx));
        CHECK_THROWS_AS(build_training_instances({s}, ace), OntologyError);
    }
}
