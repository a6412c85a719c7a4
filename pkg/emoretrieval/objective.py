"""Metric-learning objectives of the joint speech-music embedding space,
with their exact gradients"""
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Tuple
import numpy as np

from emoretrieval.common.basic import hinge, unique_first_mask
from emoretrieval.exceptions import ConfigError, ShapeError
from emoretrieval.nn.distance import (
    cosine_distance_rows,
    cosine_similarity_matrix,
    cosine_similarity_matrix_backward,
)
from emoretrieval.sampling import TripletBatch, Triplets

__all__ = [
    "LossConfig",
    "ObjectiveResult",
    "SPGradients",
    "triplet_loss",
    "batch_triplet_loss",
    "cross_loss",
    "sp_losses",
    "combined_sp_loss",
    "feature_similarity_matrix",
    "feature_similarity_backward",
    "emosim_loss",
    "symmetric_emosim_loss",
    "Objective",
    "Triplet",
    "TripletSP",
    "TripletEmoSim",
    "OBJECTIVE_ALIASES",
]

OBJECTIVE_ALIASES = {
    "triplet": "Triplet",
    "triplet-sp": "TripletSP",
    "triplet-emosim": "TripletEmoSim",
}


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters of the objectives.

    margin : hinge margin of every triplet loss
    sp_weights : weights of the cross, SP-speech and SP-music terms
    emosim_lambda : weight of the emotion similarity regularizer
    objective : Triplet, TripletSP or TripletEmoSim (CLI aliases accepted)
    emosim_symmetric : also regularize the music-to-speech direction
    """

    margin: float = 0.4
    sp_weights: Tuple[float, float, float] = (0.4, 0.3, 0.3)
    emosim_lambda: float = 0.5
    objective: str = "Triplet"
    emosim_symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sp_weights", tuple(float(w) for w in self.sp_weights))
        object.__setattr__(
            self, "objective", OBJECTIVE_ALIASES.get(self.objective, self.objective)
        )
        if self.margin < 0:
            raise ConfigError(f"margin must be non-negative, got {self.margin}")
        if self.emosim_lambda < 0:
            raise ConfigError(f"emosim_lambda must be non-negative, got {self.emosim_lambda}")
        if len(self.sp_weights) != 3 or min(self.sp_weights) < 0:
            raise ConfigError(f"sp_weights must be 3 non-negative values: {self.sp_weights}")
        if self.objective not in OBJECTIVE_ALIASES.values():
            raise ConfigError(f"No objective named {self.objective}")


class SPGradients(NamedTuple):
    """Gradients of the two structure-preserving losses"""

    tag_speech: np.ndarray
    speech: np.ndarray
    tag_music: np.ndarray
    music: np.ndarray


@dataclass
class ObjectiveResult:
    """Loss value, its named components and the gradients with respect to
    the speech, music and tag embeddings of the batch"""

    loss: float
    components: Dict[str, float]
    grad_speech: np.ndarray
    grad_music: np.ndarray
    grad_tags: Optional[np.ndarray] = field(default=None)


def triplet_loss(
    z: np.ndarray, z_pos: np.ndarray, z_neg: np.ndarray, margin: float = 0.4
) -> Tuple[float, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """``max(0, D(z, z_pos) - D(z, z_neg) + margin)`` with cosine distance D

    Returns
    -------
    loss : float
    grads : tuple of ndarray
        Gradients with respect to z, z_pos and z_neg
    """
    z, z_pos, z_neg = (np.asarray(v, dtype=np.float64) for v in (z, z_pos, z_neg))
    if not z.shape == z_pos.shape == z_neg.shape or z.ndim != 1:
        raise ShapeError(
            f"Embedding shapes differ: {z.shape}, {z_pos.shape}, {z_neg.shape}"
        )
    losses, grad_z, grad_pos, grad_neg = batch_triplet_loss(
        z[None], z_pos[None], z_neg[None], margin
    )
    return float(losses[0]), (grad_z[0], grad_pos[0], grad_neg[0])


def batch_triplet_loss(
    anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray, margin: float
):
    """Triplet loss of every row of three (n, d) matrices

    Returns
    -------
    losses : ndarray
        Shape (n,)
    grad_anchor, grad_positive, grad_negative : ndarray
        Shape (n, d), gradient of losses[i] with respect to row i
    """
    d_pos, grad_a_pos, grad_p = cosine_distance_rows(anchor, positive)
    d_neg, grad_a_neg, grad_n = cosine_distance_rows(anchor, negative)
    argument = d_pos - d_neg + margin
    losses = hinge(argument)
    active = (argument > 0)[:, None]
    grad_anchor = np.where(active, grad_a_pos - grad_a_neg, 0.0)
    grad_positive = np.where(active, grad_p, 0.0)
    grad_negative = np.where(active, -grad_n, 0.0)
    return losses, grad_anchor, grad_positive, grad_negative


def _check_indices(indices: np.ndarray, n_rows: int, name: str):
    if indices.size and (indices.min() < 0 or indices.max() >= n_rows):
        raise ShapeError(f"{name} index out of range for {n_rows} embeddings")


def _mean_triplet_loss(
    anchor_emb: np.ndarray,
    item_emb: np.ndarray,
    triplets: Triplets,
    margin: float,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean triplet loss whose anchors index ``anchor_emb`` and whose
    positives and negatives index ``item_emb``"""
    if anchor_emb.shape[1] != item_emb.shape[1]:
        raise ShapeError(
            f"Embedding dims differ: {anchor_emb.shape} vs {item_emb.shape}"
        )
    n = len(triplets)
    if n == 0:
        raise ShapeError("Cannot average over an empty set of triplets")
    _check_indices(triplets.anchor, anchor_emb.shape[0], "anchor")
    _check_indices(triplets.positive, item_emb.shape[0], "positive")
    _check_indices(triplets.negative, item_emb.shape[0], "negative")

    losses, g_a, g_p, g_n = batch_triplet_loss(
        anchor_emb[triplets.anchor],
        item_emb[triplets.positive],
        item_emb[triplets.negative],
        margin,
    )
    grad_anchor = np.zeros_like(anchor_emb)
    grad_items = np.zeros_like(item_emb)
    np.add.at(grad_anchor, triplets.anchor, g_a / n)
    np.add.at(grad_items, triplets.positive, g_p / n)
    np.add.at(grad_items, triplets.negative, g_n / n)
    return float(losses.mean()), grad_anchor, grad_items


def cross_loss(
    speech_emb: np.ndarray,
    music_emb: np.ndarray,
    triplets: Triplets,
    margin: float = 0.4,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-domain triplet loss: speech anchors, music positives and
    negatives

    Returns
    -------
    loss : float
    grad_speech : ndarray
        Same shape as speech_emb
    grad_music : ndarray
        Same shape as music_emb
    """
    return _mean_triplet_loss(speech_emb, music_emb, triplets, margin)


def sp_losses(
    tag_emb: np.ndarray,
    speech_emb: np.ndarray,
    music_emb: np.ndarray,
    triplets: Tuple[Triplets, Triplets],
    margin: float = 0.4,
):
    """Structure-preserving losses: triplets anchored at emotion tag
    embeddings with same-domain positives and negatives

    Parameters
    ----------
    tag_emb : ndarray
        Embedded emotion tags
    speech_emb, music_emb : ndarray
        Embedded speech and music items
    triplets : (Triplets, Triplets)
        Speech triplets and music triplets, anchors indexing tag_emb

    Returns
    -------
    sp_speech, sp_music : float
    grads : SPGradients
        Gradients of sp_speech (tag_speech, speech) and of sp_music
        (tag_music, music)
    """
    speech_triplets, music_triplets = triplets
    sp_speech, grad_tag_s, grad_speech = _mean_triplet_loss(
        tag_emb, speech_emb, speech_triplets, margin
    )
    sp_music, grad_tag_m, grad_music = _mean_triplet_loss(
        tag_emb, music_emb, music_triplets, margin
    )
    grads = SPGradients(grad_tag_s, grad_speech, grad_tag_m, grad_music)
    return sp_speech, sp_music, grads


def combined_sp_loss(
    cross: float, sp_speech: float, sp_music: float, weights=(0.4, 0.3, 0.3)
) -> float:
    """``w1 cross + w2 sp_speech + w3 sp_music``"""
    w1, w2, w3 = weights
    return w1 * cross + w2 * sp_speech + w3 * sp_music


def feature_similarity_matrix(speech_emb: np.ndarray, music_emb: np.ndarray) -> np.ndarray:
    """``(1 + cos(z_s_i, z_m_j)) / 2`` for every speech row i and music row j"""
    return (1.0 + cosine_similarity_matrix(speech_emb, music_emb)) / 2.0


def feature_similarity_backward(
    speech_emb: np.ndarray, music_emb: np.ndarray, grad: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients with respect to the embeddings, given dLoss/dS_z"""
    return cosine_similarity_matrix_backward(speech_emb, music_emb, grad / 2.0)


def emosim_loss(
    S_y: np.ndarray, S_z: np.ndarray, unique_mask: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """Emotion similarity regularizer: mean over rows of the squared error
    between label and feature similarities, restricted per row to the
    retained (unique label similarity) entries

    Parameters
    ----------
    S_y : ndarray
        (N, N) VA similarity of the labels
    S_z : ndarray
        (N, N) feature similarity, in [0, 1]
    unique_mask : ndarray
        (N, N) boolean selection; first occurrence of every distinct S_y
        value per row if None

    Returns
    -------
    loss : float
    grad : ndarray
        dLoss/dS_z, zero outside the mask
    """
    if S_y.shape != S_z.shape or S_y.ndim != 2:
        raise ShapeError(f"S_y {S_y.shape} and S_z {S_z.shape} must be equal 2D shapes")
    if unique_mask is None:
        unique_mask = unique_first_mask(S_y)
    if unique_mask.shape != S_y.shape:
        raise ShapeError(f"Mask shape {unique_mask.shape} differs from {S_y.shape}")
    n_rows = S_y.shape[0]
    counts = unique_mask.sum(axis=1)
    if (counts == 0).any():
        raise ShapeError("Every row of the unique mask must retain an entry")
    diff = np.where(unique_mask, S_z - S_y, 0.0)
    row_mse = np.sum(diff * diff, axis=1) / counts
    loss = float(row_mse.mean())
    grad = 2.0 * diff / (n_rows * counts[:, None])
    return loss, grad


def symmetric_emosim_loss(
    S_y: np.ndarray, S_z: np.ndarray, unique_mask: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """Average of the speech-row and music-row regularizers"""
    loss_rows, grad_rows = emosim_loss(S_y, S_z, unique_mask)
    loss_cols, grad_cols = emosim_loss(S_y.T.copy(), S_z.T.copy())
    return 0.5 * (loss_rows + loss_cols), 0.5 * (grad_rows + grad_cols.T)


class Objective(metaclass=ABCMeta):
    requires_tags = False

    def __init__(self, config: Optional[LossConfig] = None):
        """Training objective evaluated on the embeddings of one TripletBatch.

        The speech embeddings are the rows of ``batch.speech_rows``, the
        music embeddings the rows of ``batch.music_rows`` and the tag
        embeddings the rows of the tag table.

        Parameters
        ----------
        config : LossConfig
            Hyperparameters; defaults if None
        """
        self.config = config if config is not None else LossConfig()

    @abstractmethod
    def __call__(
        self,
        speech_emb: np.ndarray,
        music_emb: np.ndarray,
        batch: TripletBatch,
        tag_emb: Optional[np.ndarray] = None,
    ) -> ObjectiveResult:
        """Evaluate the loss and its gradients"""

    @property
    def name(self) -> str:
        return self.__class__.__name__

    @classmethod
    def from_name(cls, name: str, *args, **kwargs):
        """Factory method to obtain subclass by class name or CLI alias"""
        name = OBJECTIVE_ALIASES.get(name, name)
        for subclass in cls.__subclasses__():
            if subclass.__name__ == name:
                return subclass(*args, **kwargs)
        raise ValueError(f"No Objective class with the name: {name}")


class Triplet(Objective):
    """Cross-domain triplet loss alone"""

    def __call__(self, speech_emb, music_emb, batch, tag_emb=None):
        cross, grad_speech, grad_music = cross_loss(
            speech_emb, music_emb, batch.cross_triplets(), self.config.margin
        )
        return ObjectiveResult(cross, dict(cross=cross), grad_speech, grad_music)


class TripletSP(Objective):
    """Weighted sum of the cross-domain loss and the two
    structure-preserving losses"""

    requires_tags = True

    def __call__(self, speech_emb, music_emb, batch, tag_emb=None):
        if tag_emb is None:
            raise ConfigError("TripletSP requires emotion tag embeddings")
        w1, w2, w3 = self.config.sp_weights
        cross, grad_speech, grad_music = cross_loss(
            speech_emb, music_emb, batch.cross_triplets(), self.config.margin
        )
        sp_speech, sp_music, sp_grads = sp_losses(
            tag_emb, speech_emb, music_emb, batch.sp_triplets(), self.config.margin
        )
        loss = combined_sp_loss(cross, sp_speech, sp_music, self.config.sp_weights)
        return ObjectiveResult(
            loss,
            dict(cross=cross, sp_speech=sp_speech, sp_music=sp_music),
            w1 * grad_speech + w2 * sp_grads.speech,
            w1 * grad_music + w3 * sp_grads.music,
            w2 * sp_grads.tag_speech + w3 * sp_grads.tag_music,
        )


class TripletEmoSim(Objective):
    """Cross-domain triplet loss plus the emotion similarity regularizer
    between the anchors and the positives of the batch"""

    def __call__(self, speech_emb, music_emb, batch, tag_emb=None):
        cross, grad_speech, grad_music = cross_loss(
            speech_emb, music_emb, batch.cross_triplets(), self.config.margin
        )
        n = len(batch)
        anchors, positives = speech_emb[:n], music_emb[:n]
        S_z = feature_similarity_matrix(anchors, positives)
        regularizer = (
            symmetric_emosim_loss if self.config.emosim_symmetric else emosim_loss
        )
        emosim, grad_S_z = regularizer(batch.S_y, S_z, batch.unique_mask)
        lambda_ = self.config.emosim_lambda
        loss = cross + lambda_ * emosim
        if lambda_ > 0:
            grad_anchors, grad_positives = feature_similarity_backward(
                anchors, positives, lambda_ * grad_S_z
            )
            grad_speech[:n] += grad_anchors
            grad_music[:n] += grad_positives
        return ObjectiveResult(
            loss, dict(cross=cross, emosim=emosim), grad_speech, grad_music
        )
