#include "aciec/sampler.hpp"

#include <map>

namespace aciec::anp {

std::vector<BatchTriple> sample_hierarchical_batch(
    const std::vector<core::ImageRecord>& dataset,
    const core::LabelHierarchy& hierarchy, size_t batch_size,
    std::mt19937_64& rng, EpochState& state) {
    if (batch_size < 3) throw DataError("sample_hierarchical_batch: batch size < 3");

    // Unvisited ids grouped by ANP, in dataset order for determinism.
    std::map<core::ANPLabel, std::vector<std::string>> by_anp;
    for (const auto& r : dataset) {
        if (!r.anp_label)
            throw DataError("sample_hierarchical_batch: record '" + r.id + "' has no ANP label");
        if (hierarchy.groups.find(r.anp_label->noun) == hierarchy.groups.end())
            throw DataError("sample_hierarchical_batch: record '" + r.id +
                            "' not covered by the hierarchy");
        if (!state.visited.count(r.id)) by_anp[*r.anp_label].push_back(r.id);
    }

    auto pick = [&rng](const std::vector<std::string>& pool) -> const std::string& {
        std::uniform_int_distribution<size_t> dist(0, pool.size() - 1);
        return pool[dist(rng)];
    };

    std::vector<BatchTriple> triples;
    std::set<std::string> batch_ids;
    while (batch_ids.size() + 3 <= batch_size) {
        // An anchor is valid when its ANP still holds a positive partner and
        // some sibling ANP under the same noun holds a negative.
        std::vector<core::ANPLabel> anchor_anps;
        for (const auto& [anp, ids] : by_anp) {
            if (ids.size() < 2) continue;
            bool sibling = false;
            for (const auto& other : hierarchy.groups.at(anp.noun))
                if (!(other == anp) && by_anp.count(other) && !by_anp.at(other).empty()) {
                    sibling = true;
                    break;
                }
            if (sibling) anchor_anps.push_back(anp);
        }
        if (anchor_anps.empty()) {
            if (triples.empty()) throw EpochExhausted();
            break;
        }

        std::uniform_int_distribution<size_t> dist(0, anchor_anps.size() - 1);
        const core::ANPLabel anchor_anp = anchor_anps[dist(rng)];

        std::string anchor = pick(by_anp.at(anchor_anp));
        std::string positive;
        do {
            positive = pick(by_anp.at(anchor_anp));
        } while (positive == anchor);

        std::vector<const std::vector<std::string>*> sibling_pools;
        for (const auto& other : hierarchy.groups.at(anchor_anp.noun))
            if (!(other == anchor_anp) && by_anp.count(other) && !by_anp.at(other).empty())
                sibling_pools.push_back(&by_anp.at(other));
        std::vector<std::string> negatives;
        for (const auto* pool : sibling_pools)
            negatives.insert(negatives.end(), pool->begin(), pool->end());
        std::string negative = pick(negatives);

        triples.push_back({anchor, positive, negative});
        for (const auto& id : {anchor, positive, negative}) {
            state.visited.insert(id);
            batch_ids.insert(id);
        }
        // Drop consumed ids from the pools.
        for (auto it = by_anp.begin(); it != by_anp.end();) {
            auto& ids = it->second;
            std::erase_if(ids, [&](const std::string& id) {
                return id == anchor || id == positive || id == negative;
            });
            it = ids.empty() ? by_anp.erase(it) : std::next(it);
        }
    }
    return triples;
}

std::vector<std::string> flatten_triples(const std::vector<BatchTriple>& triples) {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& t : triples)
        for (const auto& id : {t.anchor, t.positive, t.negative})
            if (seen.insert(id).second) ids.push_back(id);
    return ids;
}

}  // namespace aciec::anp
