#include "slic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slic {

namespace {

std::vector<double> cluster_fractions(const Partition& p) {
    std::vector<double> counts(p.num_clusters, 0.0);
    for (int id : p.assignment) ++counts[id];
    const double n = static_cast<double>(p.size());
    for (double& c : counts) c /= n;
    return counts;
}

double entropy(const std::vector<double>& fractions) {
    double h = 0.0;
    for (double f : fractions)
        if (f > 0.0) h -= f * std::log(f);
    return h;
}

// identical partitions up to relabeling
bool same_partition(const Partition& a, const Partition& b) {
    if (a.size() != b.size() || a.num_clusters != b.num_clusters) return false;
    std::vector<int> a_to_b(a.num_clusters, -1);
    for (int i = 0; i < a.size(); ++i) {
        int& mapped = a_to_b[a.assignment[i]];
        if (mapped < 0)
            mapped = b.assignment[i];
        else if (mapped != b.assignment[i])
            return false;
    }
    return true;
}

} // namespace

double nmi(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) throw std::invalid_argument("nmi: partition length mismatch");
    if (a.size() == 0) throw std::invalid_argument("nmi: empty partitions");
    // canonical argument order makes the accumulation bitwise symmetric
    if (b.assignment < a.assignment) return nmi(b, a);
    if (same_partition(a, b)) return 1.0;

    const auto pa = cluster_fractions(a);
    const auto pb = cluster_fractions(b);
    const double ha = entropy(pa);
    const double hb = entropy(pb);
    if (ha == 0.0 || hb == 0.0) return same_partition(a, b) ? 1.0 : 0.0;

    // contingency table
    std::vector<std::vector<double>> joint(a.num_clusters, std::vector<double>(b.num_clusters, 0.0));
    const double n = static_cast<double>(a.size());
    for (int i = 0; i < a.size(); ++i) joint[a.assignment[i]][b.assignment[i]] += 1.0 / n;

    double info = 0.0;
    for (int i = 0; i < a.num_clusters; ++i)
        for (int j = 0; j < b.num_clusters; ++j) {
            double pij = joint[i][j];
            if (pij > 0.0) info += pij * std::log(pij / (pa[i] * pb[j]));
        }
    double value = info / std::sqrt(ha * hb);
    if (value < 0.0) value = 0.0;
    if (value > 1.0) value = 1.0;
    return value;
}

RetrievalReport recall_at_k(const Matrix& query_embs, const std::vector<int>& query_labels,
                            const Matrix& gallery_embs, const std::vector<int>& gallery_labels,
                            const std::vector<int>& ks) {
    if (query_embs.rows() != static_cast<int>(query_labels.size()))
        throw std::invalid_argument("recall_at_k: query labels missing or mismatched");
    if (gallery_embs.rows() != static_cast<int>(gallery_labels.size()))
        throw std::invalid_argument("recall_at_k: gallery labels missing or mismatched");
    if (query_embs.cols() != gallery_embs.cols())
        throw std::invalid_argument("recall_at_k: embedding dim mismatch");
    if (gallery_embs.rows() == 0) throw std::invalid_argument("recall_at_k: empty gallery");

    const int nq = query_embs.rows();
    const int ng = gallery_embs.rows();
    const int max_k = std::min(ng, *std::max_element(ks.begin(), ks.end()));

    // normalize up front: zero-norm rows throw here, outside the parallel loop
    const Matrix qn = l2_normalize_rows(query_embs, "queries");
    const Matrix gn = l2_normalize_rows(gallery_embs, "gallery");
    const int dim = qn.cols();

    std::vector<std::vector<int>> hits_per_query(nq);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int q = 0; q < nq; ++q) {
        const double* qr = qn.row(q);
        std::vector<std::pair<double, int>> order(ng);
        for (int g = 0; g < ng; ++g) {
            const double* gr = gn.row(g);
            double dot = 0.0;
            for (int k = 0; k < dim; ++k) dot += qr[k] * gr[k];
            order[g] = {1.0 - dot, g};
        }
        std::partial_sort(order.begin(), order.begin() + max_k, order.end());
        std::vector<int> top;
        top.reserve(max_k);
        for (int r = 0; r < max_k; ++r) top.push_back(order[r].second);
        hits_per_query[q] = std::move(top);
    }

    RetrievalReport report;
    for (int k : ks) {
        int effective = std::min(k, ng);
        int hit = 0;
        for (int q = 0; q < nq; ++q) {
            bool found = false;
            for (int r = 0; r < effective && !found; ++r)
                found = gallery_labels[hits_per_query[q][r]] == query_labels[q];
            hit += found ? 1 : 0;
        }
        report.recall[k] = static_cast<double>(hit) / nq;
    }
    return report;
}

FalseSamplingRates false_sampling_rates(const std::vector<TripletRecord>& records,
                                        const std::vector<int>& gt_labels) {
    std::int64_t fp_num = 0, fp_den = 0, fn_num = 0, fn_den = 0;
    for (const auto& r : records) {
        const int anchor_label = gt_labels.at(r.anchor_video);
        if (!r.same_instance) {
            ++fp_den;
            if (gt_labels.at(r.positive_video) != anchor_label) ++fp_num;
        }
        if (r.negative_video >= 0) {
            ++fn_den;
            if (gt_labels.at(r.negative_video) == anchor_label) ++fn_num;
        }
        if (r.temporal_cross_instance && r.temporal_negative_video >= 0) {
            ++fn_den;
            if (gt_labels.at(r.temporal_negative_video) == anchor_label) ++fn_num;
        }
    }
    FalseSamplingRates out;
    out.fp_undefined = fp_den == 0;
    out.fp_rate = fp_den == 0 ? 0.0 : static_cast<double>(fp_num) / fp_den;
    out.fn_rate = fn_den == 0 ? 0.0 : static_cast<double>(fn_num) / fn_den;
    return out;
}

} // namespace slic
