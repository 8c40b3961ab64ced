"""Clustering-driven self-supervised metric learning on feature-vector videos."""

from ._slic import (  # noqa: F401
    compute_embeddings,
    cosine_distance,
    evaluate,
    finch,
    generate_dataset,
    kmeans,
    l2_normalize,
    load_features,
    nmi,
    pairwise_cosine_distances,
    recall_at_k,
    spherical_kmeans,
    split_dataset,
    train,
)
