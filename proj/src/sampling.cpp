#include "slic/sampling.hpp"

#include <algorithm>
#include <numeric>

namespace slic {

void SamplingConfig::validate(int num_views) const {
    if (p_alpha < 0.0 || p_alpha > 1.0)
        throw std::invalid_argument("SamplingConfig: p_alpha outside [0, 1]");
    if (p_beta < 0.0 || p_beta > 1.0)
        throw std::invalid_argument("SamplingConfig: p_beta outside [0, 1]");
    if (m1 <= 0.0 || m2 <= 0.0) throw std::invalid_argument("SamplingConfig: margins must be > 0");
    if (m2 >= m1) throw std::invalid_argument("SamplingConfig: m2 must be < m1");
    if (num_views < 2 && p_beta < 1.0)
        throw std::invalid_argument(
            "SamplingConfig: p_beta < 1 requires a secondary view in the dataset");
}

ClusterIndex::ClusterIndex(const Partition& labels) {
    members.resize(labels.num_clusters);
    for (int v = 0; v < labels.size(); ++v) members[labels.assignment[v]].push_back(v);
}

namespace {

// uniform value in [0, n) excluding `skip`
int draw_excluding(int n, int skip, RngStream& rng) {
    int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    return x >= skip ? x + 1 : x;
}

// uniform member of the cluster other than `self`
int draw_other_member(const std::vector<int>& members, int self, RngStream& rng) {
    int self_pos = static_cast<int>(std::lower_bound(members.begin(), members.end(), self) -
                                    members.begin());
    int pos = draw_excluding(static_cast<int>(members.size()), self_pos, rng);
    return members[pos];
}

} // namespace

PositiveChoice sample_positive(const ClipRef& anchor, const Dataset& ds, const Partition& labels,
                               const ClusterIndex& index, const SamplingConfig& cfg, RngStream& rng) {
    const auto& cluster = index.members[labels.assignment[anchor.video_id]];
    const bool singleton = cluster.size() == 1;
    const bool alpha = rng.bernoulli(cfg.p_alpha);
    const bool same_instance = alpha || singleton;

    PositiveChoice out;
    out.flags.same_instance = same_instance;
    out.flags.augment = true;
    if (same_instance) {
        out.ref.video_id = anchor.video_id;
        out.ref.clip_index = draw_excluding(ds.clips_per_video(), anchor.clip_index, rng);
    } else {
        out.ref.video_id = draw_other_member(cluster, anchor.video_id, rng);
        out.ref.clip_index = static_cast<int>(rng.below(ds.clips_per_video()));
    }
    const bool beta = rng.bernoulli(cfg.p_beta);
    out.flags.flow_view = !beta;
    out.ref.view_index = out.flags.flow_view ? 1 : 0;
    return out;
}

TemporalNegative sample_temporal_negative(const ClipRef& anchor, const Dataset& ds,
                                          const Partition& labels, const ClusterIndex& index,
                                          RngStream& rng) {
    const auto& cluster = index.members[labels.assignment[anchor.video_id]];
    const bool singleton = cluster.size() == 1;
    const bool same_video = rng.bernoulli(0.5) || singleton;

    TemporalNegative out;
    out.cross_instance = !same_video;
    out.ref.view_index = 0;
    if (same_video) {
        out.ref.video_id = anchor.video_id;
        out.ref.clip_index = draw_excluding(ds.clips_per_video(), anchor.clip_index, rng);
    } else {
        out.ref.video_id = draw_other_member(cluster, anchor.video_id, rng);
        out.ref.clip_index = static_cast<int>(rng.below(ds.clips_per_video()));
    }
    return out;
}

std::optional<NegativePick> mine_semi_hard_negative(std::span<const double> anchor_emb,
                                                    std::span<const double> pos_emb,
                                                    const Matrix& batch_embs,
                                                    std::span<const int> batch_labels,
                                                    int anchor_label, double m1, RngStream& rng) {
    if (batch_embs.rows() != static_cast<int>(batch_labels.size()))
        throw std::invalid_argument("mine_semi_hard_negative: label count mismatch");

    const double d_ap = cosine_distance(anchor_emb, pos_emb);
    std::vector<int> eligible;
    int closest = -1;
    double closest_dist = 0.0;
    std::vector<double> dists(batch_embs.rows(), 0.0);
    for (int j = 0; j < batch_embs.rows(); ++j) {
        if (batch_labels[j] == anchor_label) continue;
        const double d = cosine_distance(anchor_emb, batch_embs.row_span(j));
        dists[j] = d;
        if (d <= d_ap + m1) eligible.push_back(j);
        if (closest < 0 || d < closest_dist) {
            closest = j;
            closest_dist = d;
        }
    }
    if (closest < 0) return std::nullopt;

    NegativePick pick;
    pick.anchor_positive_dist = d_ap;
    if (!eligible.empty()) {
        pick.batch_index = eligible[rng.below(eligible.size())];
        pick.fallback = false;
        pick.anchor_negative_dist = dists[pick.batch_index];
    } else {
        pick.batch_index = closest;
        pick.fallback = true;
        pick.anchor_negative_dist = closest_dist;
    }
    return pick;
}

TripletBatch build_batch(const Dataset& ds, const Partition& labels,
                         std::span<const int> anchor_videos, const SamplingConfig& cfg,
                         RngStream& rng) {
    if (labels.size() != ds.num_videos())
        throw std::invalid_argument("build_batch: partition does not cover the dataset");
    cfg.validate(ds.num_views());
    ClusterIndex index(labels);

    TripletBatch batch;
    batch.items.reserve(anchor_videos.size());
    for (int video : anchor_videos) {
        TripletItem item;
        item.anchor.video_id = video;
        item.anchor.clip_index = static_cast<int>(rng.below(ds.clips_per_video()));
        item.anchor.view_index = 0;
        auto pos = sample_positive(item.anchor, ds, labels, index, cfg, rng);
        item.positive = pos.ref;
        item.positive_flags = pos.flags;
        item.temporal_negative = sample_temporal_negative(item.anchor, ds, labels, index, rng);
        batch.items.push_back(item);
    }
    return batch;
}

TripletBatch build_batch(const Dataset& ds, const Partition& labels, int batch_size,
                         const SamplingConfig& cfg, RngStream& rng) {
    if (batch_size < 1 || batch_size > ds.num_videos())
        throw std::invalid_argument("build_batch: batch_size must be in [1, num_videos]");
    std::vector<int> order(ds.num_videos());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    order.resize(batch_size);
    return build_batch(ds, labels, order, cfg, rng);
}

} // namespace slic
