"""Triplet sampling across mismatched emotion taxonomies"""
from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Sequence
import numpy as np

from emoretrieval.common.basic import unique_first_mask
from emoretrieval.container import FeatureSet
from emoretrieval.emotion_space import label_mapping, similarity_matrix
from emoretrieval.exceptions import DataFormatError

__all__ = [
    "Triplets",
    "TripletBatch",
    "TripletSampler",
    "sample_triplets",
    "epoch_batches",
]


class Triplets(NamedTuple):
    """Row indices of (anchor, positive, negative) triples into the
    embedding matrices a loss function receives"""

    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __len__(self):
        return self.anchor.size


@dataclass(frozen=True)
class TripletBatch:
    """One mini-batch of N cross-domain triplets.

    ``anchors`` index the speech FeatureSet, ``positives`` and ``negatives``
    the music FeatureSet. ``speech_negatives`` (speech items whose label
    differs from the anchor's) and the tag indices feed the
    structure-preserving losses. ``S_y[i, j]`` is the VA similarity between
    the label of anchor i and the label of positive j.
    """

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    speech_negatives: Optional[np.ndarray]
    anchor_tags: np.ndarray
    positive_tags: np.ndarray
    S_y: np.ndarray
    unique_mask: np.ndarray

    def __len__(self):
        return self.anchors.size

    @property
    def speech_rows(self) -> np.ndarray:
        """Speech items to embed: the anchors, then the speech negatives"""
        if self.speech_negatives is None:
            return self.anchors
        return np.concatenate([self.anchors, self.speech_negatives])

    @property
    def music_rows(self) -> np.ndarray:
        """Music items to embed: the positives, then the negatives"""
        return np.concatenate([self.positives, self.negatives])

    def cross_triplets(self) -> Triplets:
        """Indices into the embeddings of ``speech_rows`` and ``music_rows``"""
        n = len(self)
        return Triplets(np.arange(n), np.arange(n), np.arange(n, 2 * n))

    def sp_triplets(self):
        """Structure-preserving triplets (speech, music), anchored at the tag
        embeddings"""
        if self.speech_negatives is None:
            raise DataFormatError(
                "Structure-preserving loss needs at least two speech labels"
            )
        n = len(self)
        speech = Triplets(self.anchor_tags, np.arange(n), np.arange(n, 2 * n))
        music = Triplets(self.positive_tags, np.arange(n), np.arange(n, 2 * n))
        return speech, music


class TripletSampler:
    def __init__(
        self,
        speech: FeatureSet,
        music: FeatureSet,
        tag_labels: Optional[Sequence[str]] = None,
    ):
        """Draws triplets whose positive carries the music label most similar
        (in VA space) to the anchor's speech label

        Parameters
        ----------
        speech : FeatureSet
            Speech items available as anchors
        music : FeatureSet
            Music items available as positives and negatives
        tag_labels : sequence of str
            Order of the emotion tag table. Defaults to the speech labels
            followed by the music labels not already listed.
        """
        if len(speech) == 0 or len(music) == 0:
            raise DataFormatError("Sampling needs speech and music items")
        self.speech = speech
        self.music = music
        speech_tax, music_tax = speech.taxonomy, music.taxonomy

        if tag_labels is None:
            tag_labels = list(speech_tax.labels)
            tag_labels += [l for l in music_tax.labels if l not in tag_labels]
        self.tag_labels = list(tag_labels)
        tag_position = {label: i for i, label in enumerate(self.tag_labels)}
        self._speech_tag = np.array(
            [tag_position.get(l, -1) for l in speech_tax.labels], dtype=np.int64
        )
        self._music_tag = np.array(
            [tag_position.get(l, -1) for l in music_tax.labels], dtype=np.int64
        )

        present = np.unique(music.label_index)
        if present.size < 2:
            raise DataFormatError("Sampling needs at least two distinct music labels")

        self.mapping = label_mapping(speech_tax, music_tax)
        self._label_similarity = similarity_matrix(speech_tax, music_tax).values

        # Item pools per label
        self._music_pool = {
            i: np.flatnonzero(music.label_index == i) for i in range(len(music_tax))
        }
        self._music_other = {
            i: np.flatnonzero(music.label_index != i) for i in range(len(music_tax))
        }
        self._speech_other = {
            i: np.flatnonzero(speech.label_index != i) for i in range(len(speech_tax))
        }
        self._has_speech_negatives = np.unique(speech.label_index).size >= 2

        self._positive_label = np.empty(len(speech_tax), dtype=np.int64)
        for i, label in enumerate(speech_tax.labels):
            self._positive_label[i] = music_tax.index(self.mapping[label])
        for i in np.unique(speech.label_index):
            target = self._positive_label[i]
            if self._music_pool[target].size == 0:
                raise DataFormatError(
                    f"No music item with label {music_tax.labels[target]} "
                    f"(most similar to speech label {speech_tax.labels[i]})"
                )

    def sample(self, anchors: np.ndarray, rng: np.random.Generator) -> TripletBatch:
        """Complete the given speech anchors into a TripletBatch.

        Draw order per triplet (fixed, so runs are reproducible): positive,
        music negative, speech negative.
        """
        anchors = np.asarray(anchors, dtype=np.int64)
        n = anchors.size
        positives = np.empty(n, dtype=np.int64)
        negatives = np.empty(n, dtype=np.int64)
        speech_negatives = np.empty(n, dtype=np.int64)
        for k, anchor in enumerate(anchors):
            speech_label = self.speech.label_index[anchor]
            target = self._positive_label[speech_label]
            pool = self._music_pool[target]
            other = self._music_other[target]
            positives[k] = pool[rng.integers(pool.size)]
            negatives[k] = other[rng.integers(other.size)]
            if self._has_speech_negatives:
                speech_other = self._speech_other[speech_label]
                speech_negatives[k] = speech_other[rng.integers(speech_other.size)]

        anchor_labels = self.speech.label_index[anchors]
        positive_labels = self.music.label_index[positives]
        S_y = self._label_similarity[anchor_labels][:, positive_labels]
        return TripletBatch(
            anchors=anchors,
            positives=positives,
            negatives=negatives,
            speech_negatives=speech_negatives if self._has_speech_negatives else None,
            anchor_tags=self._speech_tag[anchor_labels],
            positive_tags=self._music_tag[positive_labels],
            S_y=S_y,
            unique_mask=unique_first_mask(S_y),
        )

    def epoch_batches(
        self, batch_size: int, rng: np.random.Generator
    ) -> Iterator[TripletBatch]:
        """Shuffle every speech item once and cut the permutation into
        batches; the final short batch is kept"""
        if batch_size <= 0:
            raise ValueError(f"Invalid batch_size: {batch_size}")
        order = rng.permutation(len(self.speech))
        for start in range(0, order.size, batch_size):
            yield self.sample(order[start : start + batch_size], rng)


def sample_triplets(
    speech: FeatureSet, music: FeatureSet, rng: np.random.Generator, n: int
) -> TripletBatch:
    """Draw ``n`` anchors uniformly (with replacement) from the speech items
    and complete them into triplets"""
    sampler = TripletSampler(speech, music)
    anchors = rng.integers(len(speech), size=n)
    return sampler.sample(anchors, rng)


def epoch_batches(
    speech: FeatureSet,
    music: FeatureSet,
    batch_size: int,
    rng: np.random.Generator,
) -> List[TripletBatch]:
    """All batches of one epoch over the speech items"""
    return list(TripletSampler(speech, music).epoch_batches(batch_size, rng))
