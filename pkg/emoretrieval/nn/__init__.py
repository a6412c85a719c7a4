"""Projection networks, their optimizer and checkpoint format"""
from .base import (
    ACTIVATIONS,
    Layer,
    ProjectionNet,
    Tape,
    Gradients,
    forward,
    backward,
)
from .distance import (
    cosine_distance,
    cosine_distance_rows,
    cosine_similarity_matrix,
    cosine_similarity_matrix_backward,
)
from .optimizer import AdamW, adamw_step
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint

__all__ = [
    "ACTIVATIONS",
    "Layer",
    "ProjectionNet",
    "Tape",
    "Gradients",
    "forward",
    "backward",
    "cosine_distance",
    "cosine_distance_rows",
    "cosine_similarity_matrix",
    "cosine_similarity_matrix_backward",
    "AdamW",
    "adamw_step",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
