"""
Synthetic speech/music feature bundles whose class geometry follows the
valence-arousal similarity of the labels, for desk-scale experiments
without pre-trained encoders
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import numpy as np

from emoretrieval.container import DatasetBundle, FeatureRecord
from emoretrieval.emotion_space import (
    NEUTRAL_LABEL,
    NOISE_LABEL,
    Taxonomy,
    VAPoint,
    default_lexicon_path,
    load_lexicon,
)
from emoretrieval.exceptions import ConfigError

__all__ = ["SyntheticSpec", "classical_mds", "synthetic_anchors", "gen_synthetic"]


@dataclass
class SyntheticSpec:
    """Shape of a synthetic bundle.

    A ``neutral`` speech class is paired with ``noise`` music items that
    share its VA coordinate.
    """

    speech_labels: Sequence[str] = ("angry", "happy", "sad", "neutral")
    music_labels: Sequence[str] = (
        "happy",
        "funny",
        "sad",
        "tender",
        "exciting",
        "angry",
        "scary",
    )
    lexicon: Optional[Mapping[str, VAPoint]] = field(default=None, repr=False)
    n_speech_per_class: int = 100
    n_music_per_class: int = 100
    n_noise: Optional[int] = None
    speech_dim: int = 32
    music_dim: int = 32
    tag_dim: int = 16
    separation: float = 10.0
    noise_sigma: float = 1.0
    valid_fraction: float = 0.1
    test_fraction: float = 0.1

    def __post_init__(self):
        if len(self.speech_labels) == 0 or len(self.music_labels) == 0:
            raise ConfigError("Synthetic bundle needs at least one speech and one music class")
        if min(self.speech_dim, self.music_dim, self.tag_dim) <= 0:
            raise ConfigError("Synthetic feature dims must be positive")
        if min(self.n_speech_per_class, self.n_music_per_class) <= 0:
            raise ConfigError("Synthetic per-class counts must be positive")
        if self.separation <= 0 or self.noise_sigma < 0:
            raise ConfigError("separation must be positive and noise_sigma non-negative")
        if not 0 <= self.valid_fraction + self.test_fraction < 1:
            raise ConfigError("valid_fraction + test_fraction must lie in [0, 1)")
        if self.lexicon is None:
            self.lexicon = load_lexicon(default_lexicon_path())

    @property
    def with_noise(self) -> bool:
        return NEUTRAL_LABEL in self.speech_labels

    @property
    def noise_count(self) -> int:
        return self.n_music_per_class if self.n_noise is None else self.n_noise

    def taxonomies(self) -> Tuple[Taxonomy, Taxonomy]:
        music_labels = list(self.music_labels)
        if self.with_noise and NOISE_LABEL not in music_labels:
            music_labels.append(NOISE_LABEL)
        speech = Taxonomy.from_lexicon("speech", self.speech_labels, self.lexicon)
        music = Taxonomy.from_lexicon("music", music_labels, self.lexicon)
        return speech, music


def classical_mds(distances: np.ndarray, n_components: int) -> np.ndarray:
    """Classical (Torgerson) multidimensional scaling

    Parameters
    ----------
    distances : ndarray
        Symmetric (n, n) matrix of pairwise distances
    n_components : int
        Maximum dimension of the embedding. Components with a non-positive
        eigenvalue are dropped.

    Returns
    -------
    ndarray
        Shape (n, r) with r <= n_components
    """
    n = distances.shape[0]
    centering = np.eye(n) - np.ones((n, n)) / n
    gram = -0.5 * centering @ (distances ** 2) @ centering
    eigenvalues, eigenvectors = np.linalg.eigh(gram)
    order = np.argsort(eigenvalues)[::-1][:n_components]
    keep = order[eigenvalues[order] > 1e-12]
    return eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])


def _random_rotation(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    """(n_in, n_out) matrix with orthonormal rows"""
    q, r = np.linalg.qr(rng.normal(size=(n_out, n_in)))
    q = q * np.sign(np.diag(r))
    return q.T


def _joint_labels(speech: Taxonomy, music: Taxonomy) -> List[str]:
    labels = list(speech.labels)
    labels += [l for l in music.labels if l not in labels]
    return labels


def _anchors(spec: SyntheticSpec, rng: np.random.Generator):
    speech_tax, music_tax = spec.taxonomies()
    labels = _joint_labels(speech_tax, music_tax)
    coords = {**music_tax.coords, **speech_tax.coords}
    va = np.array([[coords[l].valence, coords[l].arousal] for l in labels])
    distances = np.linalg.norm(va[:, None] - va[None], axis=-1)
    layout = classical_mds(distances, n_components=2)
    if layout.shape[1] == 0:
        # All labels coincide in VA space
        layout = np.zeros((len(labels), 1))

    anchors = {}
    for domain, dim in (
        ("speech", spec.speech_dim),
        ("music", spec.music_dim),
        ("tag", spec.tag_dim),
    ):
        if dim < layout.shape[1]:
            raise ConfigError(f"{domain} dim {dim} below the MDS rank {layout.shape[1]}")
        rotation = _random_rotation(rng, layout.shape[1], dim)
        points = spec.separation * layout @ rotation
        anchors[domain] = {label: points[i] for i, label in enumerate(labels)}
    return speech_tax, music_tax, anchors


def synthetic_anchors(spec: SyntheticSpec, seed: int) -> Dict[str, Dict[str, np.ndarray]]:
    """Class anchors (domain -> label -> vector) that ``gen_synthetic``
    draws its items around for the same spec and seed"""
    return _anchors(spec, np.random.default_rng(seed))[2]


def _draw(rng, anchor, count, sigma):
    return anchor + rng.normal(0.0, sigma, size=(count, anchor.size))


def _assign_splits(
    rng: np.random.Generator, ids: List[str], spec: SyntheticSpec, splits: Dict[str, str]
):
    n = len(ids)
    n_test = int(round(n * spec.test_fraction))
    n_valid = int(round(n * spec.valid_fraction))
    if n - n_test - n_valid < 1:
        raise ConfigError(f"Class of {n} items leaves no training items")
    order = rng.permutation(n)
    for rank, index in enumerate(order):
        if rank < n_test:
            splits[ids[index]] = "test"
        elif rank < n_test + n_valid:
            splits[ids[index]] = "valid"
        else:
            splits[ids[index]] = "train"


def gen_synthetic(spec: Optional[SyntheticSpec] = None, seed: int = 0) -> DatasetBundle:
    """Generate a DatasetBundle with isotropic Gaussian classes.

    Class anchors are placed by classical MDS of the VA distances between
    all labels, then rotated into each domain's feature space by an
    independent random orthonormal map and scaled by ``spec.separation``.
    Items are drawn around their anchor with standard deviation
    ``spec.noise_sigma``; tag vectors likewise, one per label.
    Every class is split into train/valid/test.

    Parameters
    ----------
    spec : SyntheticSpec
        Defaults to SyntheticSpec()
    seed : int
        Seed of the PRNG; the bundle is a pure function of (spec, seed)

    Returns
    -------
    DatasetBundle
    """
    spec = SyntheticSpec() if spec is None else spec
    rng = np.random.default_rng(seed)
    speech_tax, music_tax, anchors = _anchors(spec, rng)

    speech, music, tags = [], [], []
    splits: Dict[str, str] = {}
    for label in speech_tax.labels:
        vectors = _draw(rng, anchors["speech"][label], spec.n_speech_per_class, spec.noise_sigma)
        ids = [f"speech-{label}-{i:04d}" for i in range(len(vectors))]
        speech += [FeatureRecord(i, "speech", "audio", v, label) for i, v in zip(ids, vectors)]
        _assign_splits(rng, ids, spec, splits)

    for label in music_tax.labels:
        count = spec.noise_count if label == NOISE_LABEL else spec.n_music_per_class
        vectors = _draw(rng, anchors["music"][label], count, spec.noise_sigma)
        ids = [f"music-{label}-{i:04d}" for i in range(len(vectors))]
        music += [FeatureRecord(i, "music", "audio", v, label) for i, v in zip(ids, vectors)]
        _assign_splits(rng, ids, spec, splits)

    for label, anchor in anchors["tag"].items():
        vector = _draw(rng, anchor, 1, spec.noise_sigma)[0]
        tags.append(FeatureRecord(f"tag-{label}", "tag", "tag", vector, label))

    return DatasetBundle(
        speech=speech,
        music=music,
        speech_taxonomy=speech_tax,
        music_taxonomy=music_tax,
        splits=splits,
        tags=tags,
    )
