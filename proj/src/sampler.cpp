#include "bundlembed/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "bundlembed/optimizer.hpp"

namespace bundlembed {

SamplingState::SamplingState(SamplingStrategy strategy, std::optional<MultiEmbedding> embedding,
                             int phase, std::size_t neighborhood_factor)
    : strategy(strategy),
      current_embedding(std::move(embedding)),
      phase(phase),
      neighborhood_factor(neighborhood_factor) {
    if (strategy == SamplingStrategy::local && phase > 0 && !current_embedding)
        throw std::invalid_argument("SamplingState: local strategy needs an embedding after phase 0");
}

std::vector<ItemIndex> sample_random(std::size_t n_items, std::size_t query_size, Rng& rng) {
    if (query_size > n_items) throw std::invalid_argument("sample_random: query_size > n_items");
    auto drawn = rng.sample_without_replacement(n_items, query_size);
    return {drawn.begin(), drawn.end()};
}

LocalQuery sample_local(const SamplingState& state, std::size_t n_items, std::size_t query_size, Rng& rng) {
    if (query_size > n_items) throw std::invalid_argument("sample_local: query_size > n_items");
    if (state.phase == 0 || !state.current_embedding) return {sample_random(n_items, query_size, rng), {}, false};

    const MultiEmbedding& emb = *state.current_embedding;
    if (emb.n_items() != n_items) throw std::invalid_argument("sample_local: embedding size mismatch");

    LocalQuery q;
    q.space = rng.uniform_index(emb.n_spaces());
    const CoordTable& space = emb.spaces[*q.space];
    const auto anchor = static_cast<ItemIndex>(rng.uniform_index(n_items));

    std::vector<std::pair<double, ItemIndex>> ranked;
    ranked.reserve(n_items - 1);
    for (std::size_t i = 0; i < n_items; ++i) {
        if (i == anchor) continue;
        ranked.emplace_back(pair_distance(space.row(anchor), space.row(i)), static_cast<ItemIndex>(i));
    }
    const std::size_t pool_size = std::min(state.neighborhood_factor * query_size, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(pool_size), ranked.end());

    const std::size_t wanted = query_size - 1;
    q.items.push_back(anchor);
    const std::size_t from_pool = std::min(wanted, pool_size);
    for (std::size_t idx : rng.sample_without_replacement(pool_size, from_pool)) q.items.push_back(ranked[idx].second);

    if (from_pool < wanted) {
        q.padded = true;
        std::vector<ItemIndex> rest;
        for (std::size_t idx = pool_size; idx < ranked.size(); ++idx) rest.push_back(ranked[idx].second);
        for (std::size_t idx : rng.sample_without_replacement(rest.size(), wanted - from_pool))
            q.items.push_back(rest[idx]);
    }
    return q;
}

std::vector<Tuple> derive_tuples(std::span<const ItemIndex> items, const Partition& clusters) {
    if (!is_partition_of(items, clusters))
        throw std::invalid_argument("derive_tuples: clusters do not partition the query items");
    std::unordered_map<ItemIndex, std::size_t> cluster_of;
    for (std::size_t c = 0; c < clusters.size(); ++c)
        for (ItemIndex v : clusters[c]) cluster_of[v] = c;

    std::vector<ItemIndex> sorted(items.begin(), items.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<Tuple> out;
    out.reserve(sorted.size() * (sorted.size() - 1) / 2);
    for (std::size_t a = 0; a < sorted.size(); ++a) {
        for (std::size_t b = a + 1; b < sorted.size(); ++b) {
            const bool same = cluster_of[sorted[a]] == cluster_of[sorted[b]];
            out.push_back({sorted[a], sorted[b], static_cast<std::uint8_t>(same ? 1 : 0)});
        }
    }
    return out;
}

Bundle make_bundle(QueryId query_id, std::vector<ItemIndex> items, Partition clusters,
                   std::optional<int> source_aspect, int phase) {
    Bundle b;
    b.query_id = query_id;
    b.tuples = derive_tuples(items, clusters);
    b.items = std::move(items);
    b.clusters = std::move(clusters);
    b.source_aspect = source_aspect;
    b.phase = phase;
    return b;
}

std::vector<Bundle> triplets_to_tuples(std::span<const Triplet> triplets, QueryId first_query_id) {
    std::vector<Bundle> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        if (t.i == t.j || t.i == t.k || t.j == t.k)
            throw std::invalid_argument("triplets_to_tuples: degenerate triplet");
        Bundle b;
        b.query_id = first_query_id + out.size();
        b.items = {t.i, t.j, t.k};
        b.tuples = {{std::min(t.i, t.j), std::max(t.i, t.j), 1}, {std::min(t.i, t.k), std::max(t.i, t.k), 0}};
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace bundlembed
