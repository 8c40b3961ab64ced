#pragma once

#include "slic/core.hpp"

#include <vector>

namespace slic {

// kappa[i] = index of sample i's nearest neighbor under cosine distance,
// ties broken toward the smallest index; kappa[i] != i.
struct FirstNeighborArray {
    std::vector<int> kappa;
};

// Complete assignment of N samples to clusters. Ids are compacted in order of
// smallest member index: the cluster containing sample 0 is id 0, the next
// cluster found while scanning upward is id 1, and so on.
struct Partition {
    std::vector<int> assignment;
    int num_clusters = 0;

    int size() const { return static_cast<int>(assignment.size()); }
};

// Partitions ordered fine to coarse; cluster counts strictly decrease and each
// coarser cluster is a union of whole finer clusters.
struct PartitionHierarchy {
    std::vector<Partition> partitions;
};

FirstNeighborArray first_neighbors(const Matrix& emb);

// Connected components of the first-neighbor link graph: i and j are linked
// iff j = kappa[i], kappa[j] = i, or kappa[i] = kappa[j].
Partition link_components(const FirstNeighborArray& fn);

// First-neighbor agglomerative hierarchy: partition 1 links first neighbors of
// the samples; each further level links first neighbors of the current
// clusters' mean vectors, stopping at a single cluster (included) or when no
// merge occurs.
PartitionHierarchy finch(const Matrix& emb);

// Returns the selected partition unchanged; index 0 is the finest.
const Partition& pseudo_labels(const PartitionHierarchy& h, int partition_index);

struct KMeansOptions {
    int max_iter = 100;
    double tol = 1e-6; // relative centroid movement
};

struct KMeansDiagnostics {
    Matrix centroids;
    std::vector<double> inertia_per_iter; // per assignment phase; non-increasing
};

// Lloyd's algorithm with k-means++ seeding; Euclidean metric. Empty clusters
// are re-seeded to the point farthest from its current centroid.
Partition kmeans(const Matrix& emb, int k, RngStream& rng, const KMeansOptions& opt = {},
                 KMeansDiagnostics* diag = nullptr);

// Cosine variant: unit-norm centroids, dot-product assignment.
Partition spherical_kmeans(const Matrix& emb, int k, RngStream& rng, const KMeansOptions& opt = {},
                           KMeansDiagnostics* diag = nullptr);

// Relabels an arbitrary id array into a compacted Partition.
Partition compact_partition(std::span<const int> raw_ids);

// Per-cluster mean rows; throws std::domain_error naming a cluster whose mean
// norm falls below 1e-9.
Matrix cluster_means(const Matrix& emb, const Partition& p);

} // namespace slic
