"""Valence-arousal coordinates of emotion labels and the similarity between
the label taxonomies of the speech and music domains"""
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union
import warnings
import numpy as np

from emoretrieval.common.basic import va_similarity_kernel
from emoretrieval.exceptions import DataFormatError

__all__ = [
    "VAPoint",
    "Taxonomy",
    "SimilarityMatrix",
    "NEUTRAL_LABEL",
    "NOISE_LABEL",
    "DEFAULT_ALIASES",
    "default_lexicon_path",
    "load_lexicon",
    "load_taxonomy",
    "va_similarity",
    "similarity_matrix",
    "most_similar_label",
    "label_mapping",
    "plot_similarity_matrix",
]

NEUTRAL_LABEL = "neutral"
NOISE_LABEL = "noise"

# Labels that borrow the coordinate of another label. Music corpora lack a
# neutral class, so noise recordings stand in as the positive of neutral speech.
DEFAULT_ALIASES = {NOISE_LABEL: NEUTRAL_LABEL}


@dataclass(frozen=True)
class VAPoint:
    valence: float
    arousal: float

    def __post_init__(self):
        for name in ("valence", "arousal"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataFormatError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class Taxonomy:
    """Ordered emotion vocabulary of one dataset, with the VA coordinate of
    every label"""

    name: str
    labels: Tuple[str, ...]
    coords: Mapping[str, VAPoint] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise DataFormatError(f"Duplicate labels in taxonomy {self.name}")
        missing = [label for label in self.labels if label not in self.coords]
        if missing:
            raise DataFormatError(
                f"Labels without VA coordinate in taxonomy {self.name}: {missing}"
            )
        object.__setattr__(
            self, "coords", {label: self.coords[label] for label in self.labels}
        )

    @classmethod
    def from_lexicon(
        cls,
        name: str,
        labels: Iterable[str],
        lexicon: Mapping[str, VAPoint],
        aliases: Optional[Mapping[str, str]] = None,
    ):
        """Resolve the coordinate of every label from a VA lexicon.

        Parameters
        ----------
        name : str
            Name of the taxonomy
        labels : iterable of str
            Emotion labels, in taxonomy order
        lexicon : dict
            Word to VAPoint
        aliases : dict
            Label to the lexicon word whose coordinate it takes. Defaults to
            ``DEFAULT_ALIASES`` (noise takes the coordinate of neutral).
            A neutral label missing from the lexicon is placed at (0.5, 0.5)
            with a warning. Any other missing label is an error.

        Returns
        -------
        Taxonomy
        """
        aliases = DEFAULT_ALIASES if aliases is None else aliases
        labels = tuple(labels)
        coords = {}
        missing = []
        for label in labels:
            word = aliases.get(label, label)
            if word in lexicon:
                coords[label] = lexicon[word]
            elif word == NEUTRAL_LABEL:
                warnings.warn(
                    f"'{NEUTRAL_LABEL}' not in lexicon, placing {label} at (0.5, 0.5)"
                )
                coords[label] = VAPoint(0.5, 0.5)
            else:
                missing.append(word)
        if missing:
            raise DataFormatError(f"Words missing from the VA lexicon: {missing}")
        return cls(name, labels, coords)

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.coords

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"No label {label} in taxonomy {self.name}") from None

    @property
    def valence(self) -> np.ndarray:
        return np.array([self.coords[l].valence for l in self.labels])

    @property
    def arousal(self) -> np.ndarray:
        return np.array([self.coords[l].arousal for l in self.labels])


@dataclass(frozen=True)
class SimilarityMatrix:
    """VA similarity between every label of ``row_taxonomy`` (rows) and
    every label of ``col_taxonomy`` (columns)"""

    row_taxonomy: Taxonomy
    col_taxonomy: Taxonomy
    values: np.ndarray = field(repr=False)

    def lookup(self, row_label: str, col_label: str) -> float:
        i = self.row_taxonomy.index(row_label)
        j = self.col_taxonomy.index(col_label)
        return float(self.values[i, j])


def default_lexicon_path() -> Path:
    """VA lexicon shipped with the package"""
    return Path(__file__).parent / "resources" / "va_lexicon.txt"


def load_lexicon(
    path: Union[str, PathLike], words: Optional[Iterable[str]] = None
) -> Dict[str, VAPoint]:
    """Read a VA(D) lexicon file.

    One record per line, whitespace separated ``word valence arousal
    [dominance]``, values in [0, 1]. Lines starting with ``#`` are comments.
    The dominance column is ignored. For a word listed twice the last
    occurrence wins.

    Parameters
    ----------
    path : str or PathLike
        Lexicon file (UTF-8)
    words : iterable of str
        If given, every word must be present in the file

    Returns
    -------
    lexicon : dict
        Word to VAPoint
    """
    lexicon = {}
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) not in (3, 4):
                raise DataFormatError(
                    f"{path}:{line_number}: expected 'word valence arousal "
                    f"[dominance]', got {line!r}"
                )
            word = fields[0]
            try:
                valence, arousal = float(fields[1]), float(fields[2])
            except ValueError:
                raise DataFormatError(
                    f"{path}:{line_number}: non-numeric coordinate for {word}"
                ) from None
            if word in lexicon:
                warnings.warn(f"Duplicate lexicon word {word}, last occurrence wins")
            lexicon[word] = VAPoint(valence, arousal)

    if words is not None:
        missing = [w for w in words if w not in lexicon]
        if missing:
            raise DataFormatError(f"Words missing from lexicon {path}: {missing}")
    return lexicon


def load_taxonomy(
    path: Union[str, PathLike],
    lexicon: Mapping[str, VAPoint],
    name: Optional[str] = None,
    aliases: Optional[Mapping[str, str]] = None,
) -> Taxonomy:
    """Read a taxonomy file (one label per line, ``#`` comments) and resolve
    its coordinates with ``Taxonomy.from_lexicon``. The name defaults to the
    file stem."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        labels = [l.strip() for l in f if l.strip() and not l.startswith("#")]
    return Taxonomy.from_lexicon(name or path.stem, labels, lexicon, aliases)


def va_similarity(a: VAPoint, b: VAPoint) -> float:
    """``1 - d(a, b) / sqrt(2)`` where d is the Euclidean distance in the unit
    VA square"""
    return float(va_similarity_kernel(a.valence, a.arousal, b.valence, b.arousal))


def similarity_matrix(row_taxonomy: Taxonomy, col_taxonomy: Taxonomy) -> SimilarityMatrix:
    """VA similarity of every (row label, column label) pair"""
    values = va_similarity_kernel(
        row_taxonomy.valence[:, None],
        row_taxonomy.arousal[:, None],
        col_taxonomy.valence[None, :],
        col_taxonomy.arousal[None, :],
    )
    return SimilarityMatrix(row_taxonomy, col_taxonomy, np.asarray(values))


def most_similar_label(label: str, source: Taxonomy, target: Taxonomy) -> str:
    """Label of ``target`` with the highest VA similarity to ``label`` of
    ``source``. Ties go to the lexicographically smallest label."""
    if label not in source:
        raise ValueError(f"No label {label} in taxonomy {source.name}")
    point = source.coords[label]
    scored = [(-va_similarity(point, target.coords[l]), l) for l in target.labels]
    return min(scored)[1]


def label_mapping(source: Taxonomy, target: Taxonomy) -> Dict[str, str]:
    """``most_similar_label`` for every label of ``source``"""
    return {label: most_similar_label(label, source, target) for label in source.labels}


def plot_similarity_matrix(similarity: SimilarityMatrix, ax=None):
    """Heat map of a SimilarityMatrix, annotated with its values

    Parameters
    ----------
    similarity : SimilarityMatrix
    ax : matplotlib.axes.Axes
        Axes to draw on. A new figure is created if None.

    Returns
    -------
    matplotlib.axes.Axes
    """
    import matplotlib.pyplot as plt

    n_rows, n_cols = similarity.values.shape
    if ax is None:
        _, ax = plt.subplots(figsize=(1 + 0.8 * n_cols, 1 + 0.6 * n_rows))
    image = ax.imshow(similarity.values, vmin=0, vmax=1, cmap="viridis")
    ax.set_xticks(range(len(similarity.col_taxonomy)))
    ax.set_xticklabels(similarity.col_taxonomy.labels, rotation=45, ha="right")
    ax.set_yticks(range(len(similarity.row_taxonomy)))
    ax.set_yticklabels(similarity.row_taxonomy.labels)
    ax.set_xlabel(similarity.col_taxonomy.name)
    ax.set_ylabel(similarity.row_taxonomy.name)
    for (i, j), value in np.ndenumerate(similarity.values):
        ax.text(j, i, f"{value:.2f}", ha="center", va="center", fontsize=7, color="w")
    ax.figure.colorbar(image, ax=ax)
    return ax
