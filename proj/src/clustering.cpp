#include "slic/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slic {

namespace {

class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    int find(int x) {
        int root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) {
            int next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

private:
    std::vector<int> parent_;
    std::vector<std::uint8_t> rank_;
};

struct NearestCandidate {
    double dot = -std::numeric_limits<double>::infinity();
    int index = -1;
};

// Keeps the larger dot product (smaller cosine distance); exact ties resolve
// toward the smaller index, which makes the merge order-independent.
inline void better(NearestCandidate& best, double dot, int index) {
    if (dot > best.dot || (dot == best.dot && index < best.index)) {
        best.dot = dot;
        best.index = index;
    }
}

} // namespace

FirstNeighborArray first_neighbors(const Matrix& emb) {
    const int n = emb.rows();
    if (n < 2) throw std::invalid_argument("first_neighbors: need at least 2 rows");
    const int d = emb.cols();
    Matrix nm = l2_normalize_rows(emb, "embeddings");

    constexpr int kBlock = 128;
    const int num_blocks = (n + kBlock - 1) / kBlock;

    std::vector<NearestCandidate> best(n);

#ifdef _OPENMP
    const int num_threads = omp_get_max_threads();
#else
    const int num_threads = 1;
#endif
    // Each thread owns the row-side argmins of its blocks and accumulates the
    // column-side candidates locally; candidates are merged with an
    // order-independent min, so results do not depend on the thread count.
    std::vector<std::vector<NearestCandidate>> col_side(num_threads);

#ifdef _OPENMP
#pragma omp parallel num_threads(num_threads)
#endif
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        auto& local = col_side[tid];
        local.assign(n, NearestCandidate{});

#ifdef _OPENMP
#pragma omp for schedule(dynamic, 1)
#endif
        for (int bi = 0; bi < num_blocks; ++bi) {
            const int i0 = bi * kBlock;
            const int i1 = std::min(i0 + kBlock, n);
            for (int j0 = i0; j0 < n; j0 += kBlock) {
                const int j1 = std::min(j0 + kBlock, n);
                for (int i = i0; i < i1; ++i) {
                    const double* ri = nm.row(i);
                    const int jstart = std::max(j0, i + 1);
                    NearestCandidate row_best;
                    for (int j = jstart; j < j1; ++j) {
                        const double* rj = nm.row(j);
                        double dot = 0.0;
                        for (int k = 0; k < d; ++k) dot += ri[k] * rj[k];
                        better(row_best, dot, j);
                        better(local[j], dot, i);
                    }
                    if (row_best.index >= 0) better(local[i], row_best.dot, row_best.index);
                }
            }
        }
    }

    for (int t = 0; t < num_threads; ++t)
        for (int i = 0; i < n; ++i)
            if (col_side[t][i].index >= 0) better(best[i], col_side[t][i].dot, col_side[t][i].index);

    FirstNeighborArray fn;
    fn.kappa.resize(n);
    for (int i = 0; i < n; ++i) fn.kappa[i] = best[i].index;
    return fn;
}

Partition link_components(const FirstNeighborArray& fn) {
    const int n = static_cast<int>(fn.kappa.size());
    UnionFind uf(n);
    // union(i, kappa[i]) already realizes the full link relation: kappa[j] = i
    // joins j to i, and kappa[i] = kappa[j] joins both to the shared neighbor.
    for (int i = 0; i < n; ++i) {
        int j = fn.kappa[i];
        if (j < 0 || j >= n || j == i)
            throw std::invalid_argument("link_components: invalid first-neighbor index");
        uf.unite(i, j);
    }
    std::vector<int> roots(n);
    for (int i = 0; i < n; ++i) roots[i] = uf.find(i);
    return compact_partition(roots);
}

Partition compact_partition(std::span<const int> raw_ids) {
    const int n = static_cast<int>(raw_ids.size());
    std::vector<int> remap;
    Partition p;
    p.assignment.resize(n);
    // first-occurrence relabel; raw ids may be arbitrary non-negative values
    int max_id = -1;
    for (int id : raw_ids) {
        if (id < 0) throw std::invalid_argument("compact_partition: negative cluster id");
        max_id = std::max(max_id, id);
    }
    remap.assign(static_cast<std::size_t>(max_id) + 1, -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        int id = raw_ids[i];
        if (remap[id] < 0) remap[id] = next++;
        p.assignment[i] = remap[id];
    }
    p.num_clusters = next;
    return p;
}

Matrix cluster_means(const Matrix& emb, const Partition& p) {
    Matrix means(p.num_clusters, emb.cols());
    std::vector<int> counts(p.num_clusters, 0);
    for (int i = 0; i < emb.rows(); ++i) {
        const double* r = emb.row(i);
        double* m = means.row(p.assignment[i]);
        for (int j = 0; j < emb.cols(); ++j) m[j] += r[j];
        ++counts[p.assignment[i]];
    }
    for (int c = 0; c < p.num_clusters; ++c) {
        double* m = means.row(c);
        double ss = 0.0;
        for (int j = 0; j < emb.cols(); ++j) {
            m[j] /= counts[c];
            ss += m[j] * m[j];
        }
        if (std::sqrt(ss) <= 1e-9)
            throw std::domain_error("cluster " + std::to_string(c) + " mean has zero norm");
    }
    return means;
}

PartitionHierarchy finch(const Matrix& emb) {
    if (emb.rows() < 2) throw std::invalid_argument("finch: need at least 2 samples");

    PartitionHierarchy h;
    Partition current = link_components(first_neighbors(emb));
    h.partitions.push_back(current);

    while (current.num_clusters > 1) {
        Matrix means = cluster_means(emb, current);
        Partition meta = link_components(first_neighbors(means));
        if (meta.num_clusters >= current.num_clusters) break; // no merge
        std::vector<int> composed(current.size());
        for (int i = 0; i < current.size(); ++i)
            composed[i] = meta.assignment[current.assignment[i]];
        Partition next = compact_partition(composed);
        h.partitions.push_back(next);
        current = std::move(next);
    }
    return h;
}

const Partition& pseudo_labels(const PartitionHierarchy& h, int partition_index) {
    if (partition_index < 0 || partition_index >= static_cast<int>(h.partitions.size()))
        throw std::invalid_argument("pseudo_labels: partition index " +
                                    std::to_string(partition_index) + " out of range (hierarchy has " +
                                    std::to_string(h.partitions.size()) + " partitions)");
    return h.partitions[partition_index];
}

namespace {

// Shared Lloyd loop: squared Euclidean for kmeans, cosine on unit vectors for
// the spherical variant.
Partition lloyd(const Matrix& emb, int k, RngStream& rng, const KMeansOptions& opt, bool spherical,
                KMeansDiagnostics* diag) {
    const int n = emb.rows(), d = emb.cols();
    if (k < 2 || k > n) throw std::invalid_argument("kmeans: K must be in [2, N]");

    Matrix normalized;
    const Matrix* data = &emb;
    if (spherical) {
        normalized = l2_normalize_rows(emb, "embeddings");
        data = &normalized;
    }

    auto sq_dist = [&](const double* a, const double* b) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = a[j] - b[j];
            s += diff * diff;
        }
        return s;
    };

    // k-means++ seeding
    Matrix centroids(k, d);
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    {
        int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        std::copy_n(data->row(first), d, centroids.row(0));
        for (int c = 1; c < k; ++c) {
            const double* prev = centroids.row(c - 1);
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                dist2[i] = std::min(dist2[i], sq_dist(data->row(i), prev));
                total += dist2[i];
            }
            int chosen;
            if (total > 0.0) {
                double target = rng.uniform() * total;
                double acc = 0.0;
                chosen = n - 1;
                for (int i = 0; i < n; ++i) {
                    acc += dist2[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                chosen = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            }
            std::copy_n(data->row(chosen), d, centroids.row(c));
        }
    }
    if (spherical) centroids = l2_normalize_rows(centroids, "centroids");

    std::vector<int> assignment(n, 0);
    std::vector<double> assign_dist(n, 0.0);
    std::vector<int> counts(k, 0);
    Matrix next(k, d);

    // parallel with disjoint writes; the inertia sum stays serial so results
    // do not depend on the thread count
    auto assign_all = [&]() {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int i = 0; i < n; ++i) {
            const double* p = data->row(i);
            double best_val = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                const double* ct = centroids.row(c);
                double v;
                if (spherical) {
                    double dot = 0.0;
                    for (int j = 0; j < d; ++j) dot += p[j] * ct[j];
                    v = 1.0 - dot;
                } else {
                    v = sq_dist(p, ct);
                }
                if (v < best_val) {
                    best_val = v;
                    best_c = c;
                }
            }
            assignment[i] = best_c;
            assign_dist[i] = best_val;
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) inertia += assign_dist[i];
        if (diag) diag->inertia_per_iter.push_back(inertia);
    };

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        assign_all();

        // update phase (serial, fixed point order)
        std::fill(next.data().begin(), next.data().end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            double* m = next.row(assignment[i]);
            const double* p = data->row(i);
            for (int j = 0; j < d; ++j) m[j] += p[j];
            ++counts[assignment[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // re-seed to the point farthest from its centroid
                int far = 0;
                double far_val = -1.0;
                for (int i = 0; i < n; ++i) {
                    if (assign_dist[i] > far_val) {
                        far_val = assign_dist[i];
                        far = i;
                    }
                }
                std::copy_n(data->row(far), d, next.row(c));
                assign_dist[far] = -1.0; // avoid reusing the same point for another empty cluster
                counts[c] = 1;
            } else {
                double* m = next.row(c);
                for (int j = 0; j < d; ++j) m[j] /= counts[c];
            }
        }
        if (spherical) {
            for (int c = 0; c < k; ++c) {
                double* m = next.row(c);
                double ss = 0.0;
                for (int j = 0; j < d; ++j) ss += m[j] * m[j];
                double norm = std::sqrt(ss);
                if (norm <= kNormEps) {
                    // degenerate mean: fall back to the previous centroid
                    std::copy_n(centroids.row(c), d, m);
                } else {
                    for (int j = 0; j < d; ++j) m[j] /= norm;
                }
            }
        }

        // relative centroid movement
        double moved = 0.0, scale = 0.0;
        for (int c = 0; c < k; ++c) {
            moved += sq_dist(centroids.row(c), next.row(c));
            const double* m = next.row(c);
            for (int j = 0; j < d; ++j) scale += m[j] * m[j];
        }
        std::swap(centroids, next);
        if (scale > 0.0 && std::sqrt(moved / scale) < opt.tol) break;
    }

    // final assignment against the converged centroids
    assign_all();
    if (diag) diag->centroids = centroids;
    return compact_partition(assignment);
}

} // namespace

Partition kmeans(const Matrix& emb, int k, RngStream& rng, const KMeansOptions& opt,
                 KMeansDiagnostics* diag) {
    return lloyd(emb, k, rng, opt, /*spherical=*/false, diag);
}

Partition spherical_kmeans(const Matrix& emb, int k, RngStream& rng, const KMeansOptions& opt,
                           KMeansDiagnostics* diag) {
    return lloyd(emb, k, rng, opt, /*spherical=*/true, diag);
}

} // namespace slic
