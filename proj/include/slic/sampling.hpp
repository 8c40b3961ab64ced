#pragma once

#include "slic/clustering.hpp"
#include "slic/core.hpp"
#include "slic/dataset.hpp"

#include <optional>
#include <vector>

namespace slic {

struct SamplingConfig {
    double p_alpha = 0.2; // P(positive from the same video)
    double p_beta = 0.75; // P(positive keeps the primary view)
    double m1 = 0.2;
    double m2 = 0.04;

    void validate(int num_views) const;
};

// video ids per cluster, ascending
struct ClusterIndex {
    std::vector<std::vector<int>> members;

    explicit ClusterIndex(const Partition& labels);
};

struct PositiveFlags {
    bool same_instance = false;
    bool flow_view = false;
    bool augment = true;
};

struct PositiveChoice {
    ClipRef ref;
    PositiveFlags flags;
};

// Same-video clip with probability p_alpha, otherwise a random clip of
// another same-cluster video; the view flips to the secondary one with
// probability 1 - p_beta. A singleton cluster forces the same-video branch.
PositiveChoice sample_positive(const ClipRef& anchor, const Dataset& ds, const Partition& labels,
                               const ClusterIndex& index, const SamplingConfig& cfg, RngStream& rng);

struct TemporalNegative {
    ClipRef ref;
    bool cross_instance = false;
};

// Equal-probability choice between a temporally distinct clip of the anchor's
// video and any clip of another same-cluster video; a singleton cluster
// forces the former. Primary view.
TemporalNegative sample_temporal_negative(const ClipRef& anchor, const Dataset& ds,
                                          const Partition& labels, const ClusterIndex& index,
                                          RngStream& rng);

struct NegativePick {
    int batch_index = -1;
    bool fallback = false;
    double anchor_positive_dist = 0.0;
    double anchor_negative_dist = 0.0;
};

// Uniform choice among batch items with a different pseudo-label whose
// distance satisfies d(a, n) <= d(a, p) + m1 (boundary included). When no
// candidate qualifies, falls back to the closest different-label item; when
// every item shares the anchor's label, returns nothing.
std::optional<NegativePick> mine_semi_hard_negative(std::span<const double> anchor_emb,
                                                    std::span<const double> pos_emb,
                                                    const Matrix& batch_embs,
                                                    std::span<const int> batch_labels,
                                                    int anchor_label, double m1, RngStream& rng);

struct TripletItem {
    ClipRef anchor;
    ClipRef positive;
    PositiveFlags positive_flags;
    TemporalNegative temporal_negative;
    // mined against fresh embeddings during the training step
    std::optional<int> negative_batch_index;
    bool negative_fallback = false;
};

struct TripletBatch {
    std::vector<TripletItem> items;
};

// Anchors in the given order, a uniformly random clip each, primary view;
// positives and temporal negatives sampled per item. Semi-hard negatives are
// left for the training step.
TripletBatch build_batch(const Dataset& ds, const Partition& labels,
                         std::span<const int> anchor_videos, const SamplingConfig& cfg,
                         RngStream& rng);

// Shuffles all videos and anchors the first batch_size of them.
TripletBatch build_batch(const Dataset& ds, const Partition& labels, int batch_size,
                         const SamplingConfig& cfg, RngStream& rng);

} // namespace slic
