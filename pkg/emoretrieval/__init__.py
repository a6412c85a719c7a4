"""emoretrieval - Emotion-based speech-to-music retrieval."""
from .exceptions import (
    EmoRetrievalError,
    ConfigError,
    DataFormatError,
    ShapeError,
    StaleTapeError,
    CheckpointError,
    NonFiniteError,
)
from .emotion_space import (
    VAPoint,
    Taxonomy,
    SimilarityMatrix,
    load_lexicon,
    load_taxonomy,
    va_similarity,
    similarity_matrix,
    most_similar_label,
    label_mapping,
)
from .container import FeatureRecord, FeatureSet, DatasetBundle
from .data_io import load_features, write_features, fuse_modalities, load_bundle
from .nn import ProjectionNet, AdamW, forward, backward, adamw_step, cosine_distance
from .objective import (
    LossConfig,
    Objective,
    Triplet,
    TripletSP,
    TripletEmoSim,
    triplet_loss,
    cross_loss,
    sp_losses,
    combined_sp_loss,
    emosim_loss,
    feature_similarity_matrix,
)
from .sampling import TripletBatch, TripletSampler, sample_triplets, epoch_batches
from .synthetic import SyntheticSpec, gen_synthetic
from .evaluation import (
    RankedResult,
    Retriever,
    retrieve,
    mrr,
    precision_at_k,
    ndcg_at_k,
    evaluate,
    export_embeddings,
)
from .trainer import TrainConfig, TrainReport, Trainer, train, resume, seed_sweep

__all__ = [
    "EmoRetrievalError",
    "ConfigError",
    "DataFormatError",
    "ShapeError",
    "StaleTapeError",
    "CheckpointError",
    "NonFiniteError",
    "VAPoint",
    "Taxonomy",
    "SimilarityMatrix",
    "load_lexicon",
    "load_taxonomy",
    "va_similarity",
    "similarity_matrix",
    "most_similar_label",
    "label_mapping",
    "FeatureRecord",
    "FeatureSet",
    "DatasetBundle",
    "load_features",
    "write_features",
    "fuse_modalities",
    "load_bundle",
    "ProjectionNet",
    "AdamW",
    "forward",
    "backward",
    "adamw_step",
    "cosine_distance",
    "LossConfig",
    "Objective",
    "Triplet",
    "TripletSP",
    "TripletEmoSim",
    "triplet_loss",
    "cross_loss",
    "sp_losses",
    "combined_sp_loss",
    "emosim_loss",
    "feature_similarity_matrix",
    "TripletBatch",
    "TripletSampler",
    "sample_triplets",
    "epoch_batches",
    "SyntheticSpec",
    "gen_synthetic",
    "RankedResult",
    "Retriever",
    "retrieve",
    "mrr",
    "precision_at_k",
    "ndcg_at_k",
    "evaluate",
    "export_embeddings",
    "TrainConfig",
    "TrainReport",
    "Trainer",
    "train",
    "resume",
    "seed_sweep",
]


__version__ = "1.0.0"
