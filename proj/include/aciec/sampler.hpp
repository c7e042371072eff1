#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "aciec/core.hpp"

namespace aciec::anp {

// Anchor/positive share the ANP label; the negative shares the noun but not
// the ANP. All three ids are distinct.
struct BatchTriple {
    std::string anchor;
    std::string positive;
    std::string negative;
};

// Tracks which record ids have been consumed this epoch.
struct EpochState {
    std::set<std::string> visited;

    void reset() { visited.clear(); }
};

// One batch of triples per call. Each returned id is marked visited; total
// distinct ids per batch never exceed batch_size. Throws EpochExhausted when
// no valid triple can be formed from unvisited records.
std::vector<BatchTriple> sample_hierarchical_batch(
    const std::vector<core::ImageRecord>& dataset,
    const core::LabelHierarchy& hierarchy, size_t batch_size,
    std::mt19937_64& rng, EpochState& state);

// Unique ids of a batch in first-appearance order; the flat batch fed to the
// contrastive loss.
std::vector<std::string> flatten_triples(const std::vector<BatchTriple>& triples);

}  // namespace aciec::anp
