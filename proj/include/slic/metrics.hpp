#pragma once

#include "slic/clustering.hpp"
#include "slic/core.hpp"

#include <map>
#include <vector>

namespace slic {

// recall@k for k in {1, 5, 10, 20}; non-decreasing in k.
struct RetrievalReport {
    std::map<int, double> recall;
};

struct EpochDiagnostics {
    int epoch = 0;
    double mean_loss = 0.0;
    double nmi = 0.0;
    int num_clusters = 0;
    double fp_rate = 0.0;
    double fn_rate = 0.0;
    double recall1 = 0.0;
    double recall5 = 0.0;
};

// One record per mined triplet; distances captured at mining time.
struct TripletRecord {
    int anchor_video = -1;
    int positive_video = -1;
    bool same_instance = false;
    bool flow_view = false;
    int negative_video = -1; // -1 when no negative existed
    bool fallback = false;
    double anchor_positive_dist = 0.0;
    double anchor_negative_dist = 0.0;
    int temporal_negative_video = -1;
    bool temporal_cross_instance = false;
};

// NMI(a, b) = I(a, b) / sqrt(H(a) H(b)) with natural logs. When either
// entropy is zero: 1.0 iff the assignments induce identical partitions,
// else 0.0.
double nmi(const Partition& a, const Partition& b);

// Gallery ranked per query by cosine distance, ties toward the smaller
// gallery index; recall@k = fraction of queries whose top-k contains a
// same-label item.
RetrievalReport recall_at_k(const Matrix& query_embs, const std::vector<int>& query_labels,
                            const Matrix& gallery_embs, const std::vector<int>& gallery_labels,
                            const std::vector<int>& ks);

struct FalseSamplingRates {
    double fp_rate = 0.0;
    double fn_rate = 0.0;
    bool fp_undefined = false; // no cross-instance positives this epoch
};

// fp: cross-instance positives whose ground-truth label differs from the
// anchor's, over all cross-instance positives. fn: mined negatives (semi-hard
// plus cross-instance temporal ones) whose ground-truth label equals the
// anchor's, over all such negatives.
FalseSamplingRates false_sampling_rates(const std::vector<TripletRecord>& records,
                                        const std::vector<int>& gt_labels);

} // namespace slic
