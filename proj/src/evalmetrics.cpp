#include "gtee/evalmetrics.hpp"

#include <cstdio>
#include <json.hpp>
#include <map>
#include <tuple>

#include "gtee/error.hpp"

namespace gtee {

namespace {

// Greedy consumption is optimal here because matching is key equality.
template <typename Key>
std::size_t match_keys(const std::vector<Key>& pred, const std::vector<Key>& gold) {
    std::map<Key, std::size_t> avail;
    for (const auto& g : gold) ++avail[g];
    std::size_t tp = 0;
    for (const auto& p : pred) {
        auto it = avail.find(p);
        if (it != avail.end() && it->second > 0) {
            --it->second;
            ++tp;
        }
    }
    return tp;
}

using TrgKey = std::tuple<int, int, std::string>;
using ArgKey = std::tuple<int, int, std::string, std::string>;

std::vector<TrgKey> trigger_keys(const std::vector<EventRecord>& recs) {
    std::vector<TrgKey> out;
    for (const auto& r : recs) out.emplace_back(r.trigger.start, r.trigger.end, r.event_type);
    return out;
}

std::vector<ArgKey> argument_keys(const std::vector<EventRecord>& recs, bool resolved_only) {
    std::vector<ArgKey> out;
    for (const auto& r : recs)
        for (const auto& a : r.arguments)
            if (!resolved_only || a.span.resolved()) out.emplace_back(a.span.start, a.span.end, r.event_type, a.role);
    return out;
}

}  // namespace

PRF prf(const MatchCounts& c) {
    PRF r;
    r.precision = c.pred ? static_cast<double>(c.tp) / static_cast<double>(c.pred) : 0.0;
    r.recall = c.gold ? static_cast<double>(c.tp) / static_cast<double>(c.gold) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

std::size_t match_triggers(const std::vector<EventRecord>& pred, const std::vector<EventRecord>& gold) {
    return match_keys(trigger_keys(pred), trigger_keys(gold));
}

std::size_t match_arguments(const std::vector<EventRecord>& pred, const std::vector<EventRecord>& gold) {
    return match_keys(argument_keys(pred, true), argument_keys(gold, true));
}

std::size_t count_arguments(const std::vector<EventRecord>& records) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.arguments.size();
    return n;
}

ScoreReport score_dataset(const Dataset& predictions, const Dataset& gold) {
    if (predictions.size() != gold.size()) {
        throw DataError("score: " + std::to_string(predictions.size()) + " predicted contexts vs " +
                        std::to_string(gold.size()) + " gold contexts");
    }
    ScoreReport r;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (predictions[i].sent_id != gold[i].sent_id || predictions[i].doc_id != gold[i].doc_id) {
            throw DataError("score: context " + std::to_string(i) + " is '" + predictions[i].sent_id +
                            "' in predictions but '" + gold[i].sent_id + "' in gold");
        }
        const auto& p = predictions[i].events;
        const auto& g = gold[i].events;
        r.trg_counts.tp += match_triggers(p, g);
        r.trg_counts.pred += p.size();
        r.trg_counts.gold += g.size();
        r.arg_counts.tp += match_arguments(p, g);
        r.arg_counts.pred += count_arguments(p);
        r.arg_counts.gold += count_arguments(g);
    }
    r.trg = prf(r.trg_counts);
    r.arg = prf(r.arg_counts);
    return r;
}

Dataset align_predictions(const Dataset& predictions, const Dataset& gold) {
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (!index.emplace(std::pair{gold[i].doc_id, gold[i].sent_id}, i).second) {
            throw DataError("score: gold repeats context '" + gold[i].sent_id + "'");
        }
    }
    Dataset out = gold;
    for (auto& s : out) s.events.clear();
    std::vector<char> seen(gold.size(), 0);
    for (const auto& p : predictions) {
        auto it = index.find({p.doc_id, p.sent_id});
        if (it == index.end()) throw DataError("score: predicted context '" + p.sent_id + "' is not in gold");
        if (seen[it->second]++) throw DataError("score: context '" + p.sent_id + "' is predicted twice");
        out[it->second].events = p.events;
    }
    return out;
}

std::string report_json(const ScoreReport& r) {
    auto block = [](const PRF& s, const MatchCounts& c) {
        nlohmann::ordered_json j;
        j["p"] = s.precision;
        j["r"] = s.recall;
        j["f1"] = s.f1;
        j["tp"] = c.tp;
        j["pred"] = c.pred;
        j["gold"] = c.gold;
        return j;
    };
    nlohmann::ordered_json j;
    j["trg_c"] = block(r.trg, r.trg_counts);
    j["arg_c"] = block(r.arg, r.arg_counts);
    return j.dump(2) + "\n";
}

std::string report_table(const ScoreReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "metric      P       R       F1      TP     pred   gold\n"
                  "Trg-C   %7.2f %7.2f %7.2f %6zu %6zu %6zu\n"
                  "Arg-C   %7.2f %7.2f %7.2f %6zu %6zu %6zu\n",
                  100 * r.trg.precision, 100 * r.trg.recall, 100 * r.trg.f1, r.trg_counts.tp, r.trg_counts.pred,
                  r.trg_counts.gold, 100 * r.arg.precision, 100 * r.arg.recall, 100 * r.arg.f1, r.arg_counts.tp,
                  r.arg_counts.pred, r.arg_counts.gold);
    return buf;
}

}  // namespace gtee
