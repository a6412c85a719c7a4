from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence
import hashlib
import numpy as np

from emoretrieval.emotion_space import Taxonomy
from emoretrieval.exceptions import DataFormatError

__all__ = [
    "DOMAINS",
    "MODALITIES",
    "SPLITS",
    "FeatureRecord",
    "FeatureSet",
    "DatasetBundle",
]

DOMAINS = ("speech", "music", "tag")
MODALITIES = ("audio", "text", "fusion", "tag", "embedding")
SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class FeatureRecord:
    """One item: the frozen-encoder feature vector of a speech or music
    recording, or the word vector of an emotion tag"""

    id: str
    domain: str
    modality: str
    vector: np.ndarray = field(repr=False, compare=False)
    label: str

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise DataFormatError(f"{self.id}: unknown domain {self.domain}")
        if self.modality not in MODALITIES:
            raise DataFormatError(f"{self.id}: unknown modality {self.modality}")
        vector = np.array(self.vector, dtype=np.float64)
        if vector.ndim != 1:
            raise DataFormatError(f"{self.id}: feature vector must be 1D")
        vector.setflags(write=False)
        object.__setattr__(self, "vector", vector)

    @property
    def dim(self) -> int:
        return self.vector.size


class FeatureSet:
    def __init__(self, records: Sequence[FeatureRecord], taxonomy: Taxonomy):
        """Container to pass the records of one domain and split to the
        sampler, the trainer and the retrieval runner. Stacks the feature
        vectors into a read-only matrix and indexes the labels in the
        taxonomy.

        Parameters
        ----------
        records : sequence of FeatureRecord
            Records of a single domain, all of the same dimension
        taxonomy : Taxonomy
            Taxonomy the record labels belong to
        """
        dims = {r.dim for r in records}
        if len(dims) > 1:
            raise DataFormatError(f"Records of mixed dimension: {sorted(dims)}")
        self.taxonomy = taxonomy
        self.ids = [r.id for r in records]
        self.labels = [r.label for r in records]
        unknown = sorted(set(self.labels) - set(taxonomy.labels))
        if unknown:
            raise DataFormatError(f"Labels not in taxonomy {taxonomy.name}: {unknown}")
        self.label_index = np.array(
            [taxonomy.index(l) for l in self.labels], dtype=np.int64
        )
        dim = dims.pop() if dims else 0
        self.matrix = np.array([r.vector for r in records], dtype=np.float64)
        self.matrix = self.matrix.reshape(len(records), dim)
        self.matrix.setflags(write=False)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def subset(self, mask: np.ndarray) -> "FeatureSet":
        """FeatureSet of the items selected by a boolean mask"""
        obj = self.__class__.__new__(self.__class__)
        obj.taxonomy = self.taxonomy
        obj.ids = [i for i, keep in zip(self.ids, mask) if keep]
        obj.labels = [l for l, keep in zip(self.labels, mask) if keep]
        obj.label_index = self.label_index[mask]
        obj.matrix = self.matrix[mask]
        obj.matrix.setflags(write=False)
        return obj


@dataclass
class DatasetBundle:
    """Everything a training or evaluation run consumes.

    ``splits`` assigns ids to train/valid/test. Records without an
    assignment belong to no split.
    """

    speech: List[FeatureRecord]
    music: List[FeatureRecord]
    speech_taxonomy: Taxonomy
    music_taxonomy: Taxonomy
    splits: Dict[str, str]
    tags: List[FeatureRecord] = field(default_factory=list)

    def __post_init__(self):
        for records, domain, taxonomy in (
            (self.speech, "speech", self.speech_taxonomy),
            (self.music, "music", self.music_taxonomy),
        ):
            for record in records:
                if record.domain != domain:
                    raise DataFormatError(
                        f"{record.id}: {record.domain} record among {domain} records"
                    )
                if record.label not in taxonomy:
                    raise DataFormatError(
                        f"{record.id}: label {record.label} not in taxonomy "
                        f"{taxonomy.name}"
                    )
        ids = [r.id for r in self.speech + self.music]
        if len(set(ids)) != len(ids):
            raise DataFormatError("Speech and music record ids must be unique")
        known = set(ids)
        for item_id, split in self.splits.items():
            if split not in SPLITS:
                raise DataFormatError(f"{item_id}: unknown split {split}")
            if item_id not in known:
                raise DataFormatError(f"Split manifest references unknown id {item_id}")

    def feature_set(self, domain: str, split: Optional[str] = None) -> FeatureSet:
        """Records of ``domain`` (speech or music) assigned to ``split``, or
        all records if split is None"""
        if domain == "speech":
            records, taxonomy = self.speech, self.speech_taxonomy
        elif domain == "music":
            records, taxonomy = self.music, self.music_taxonomy
        else:
            raise ValueError(f"No feature set for domain {domain}")
        if split is not None:
            if split not in SPLITS:
                raise ValueError(f"Unknown split {split}")
            records = [r for r in records if self.splits.get(r.id) == split]
        return FeatureSet(records, taxonomy)

    def tag_matrix(self, labels: Sequence[str]) -> np.ndarray:
        """Word vectors of the emotion tags, one row per label"""
        vectors: Mapping[str, np.ndarray] = {r.label: r.vector for r in self.tags}
        missing = [l for l in labels if l not in vectors]
        if missing:
            raise DataFormatError(f"Emotion tags without ingested word vector: {missing}")
        matrix = np.array([vectors[l] for l in labels], dtype=np.float64)
        matrix.setflags(write=False)
        return matrix

    @property
    def tag_labels(self) -> List[str]:
        """Union of the speech and music labels, speech labels first"""
        labels = list(self.speech_taxonomy.labels)
        labels += [l for l in self.music_taxonomy.labels if l not in labels]
        return labels

    def checksum(self) -> str:
        """SHA-256 over every feature vector, in record order"""
        digest = hashlib.sha256()
        for record in self.speech + self.music + self.tags:
            digest.update(record.id.encode("utf-8"))
            digest.update(np.ascontiguousarray(record.vector, dtype="<f8").tobytes())
        return digest.hexdigest()
