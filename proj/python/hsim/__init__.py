"""Python bindings for the hsim hierarchical-margin metric learning core."""

from ._hsim import (  # noqa: F401
    HsimError,
    MarginTable,
    build_margin_table,
    class_similarity_matrix,
    cosine_sim,
    embedding_similarity,
    exp_map,
    generate_hierarchical,
    inject_label_noise,
    lifted_loss,
    min_intra_similarity,
    ms_loss,
    ms_star_loss,
    pairwise_similarity,
    poincare_distance,
    recall_at_k,
    rescale_to_unit_fifth,
    run_experiment,
    triplet_loss,
)
