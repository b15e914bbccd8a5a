#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bundlembed/core.hpp"
#include "bundlembed/rng.hpp"

namespace bundlembed {

struct SamplingState {
    SamplingState() = default;
    SamplingState(SamplingStrategy strategy, std::optional<MultiEmbedding> embedding, int phase,
                  std::size_t neighborhood_factor = 5);

    SamplingStrategy strategy = SamplingStrategy::random;
    std::optional<MultiEmbedding> current_embedding;
    int phase = 0;
    std::size_t neighborhood_factor = 5;
};

std::vector<ItemIndex> sample_random(std::size_t n_items, std::size_t query_size, Rng& rng);

struct LocalQuery {
    std::vector<ItemIndex> items;  // anchor first
    std::optional<std::size_t> space;
    bool padded = false;  // neighbourhood was too small and uniform draws filled the rest
};

// Anchor plus query_size-1 draws from its neighborhood_factor*query_size
// nearest neighbours in a uniformly chosen space. Phase 0 or a missing
// embedding falls back to sample_random.
LocalQuery sample_local(const SamplingState& state, std::size_t n_items, std::size_t query_size, Rng& rng);

// C(N,2) tuples with i < j: theta = 1 for same-cluster pairs, 0 otherwise.
std::vector<Tuple> derive_tuples(std::span<const ItemIndex> items, const Partition& clusters);

Bundle make_bundle(QueryId query_id, std::vector<ItemIndex> items, Partition clusters,
                   std::optional<int> source_aspect = std::nullopt, int phase = 0);

// One bundle per triplet holding (i,j,1) and (i,k,0).
std::vector<Bundle> triplets_to_tuples(std::span<const Triplet> triplets, QueryId first_query_id = 0);

}  // namespace bundlembed
