"""Reading and writing of feature files, taxonomies, split manifests and
dataset bundle directories.

Feature files come in two variants sharing one header:

Binary (little-endian)::

    b"EMF1", u32 version, u32 dim, u32 count, str domain, str modality, str taxonomy
    count x { str id, str label, dim x f64 }

where ``str`` is a u32 byte length followed by UTF-8 bytes.

Text (for hand-written fixtures), one record per line::

    #EMF1 dim=4 domain=speech modality=audio taxonomy=hikia
    <id> <label> <v1> ... <v_dim>
"""
from collections import OrderedDict
from os import PathLike
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union
import io
import struct
import numpy as np

from emoretrieval.container import DatasetBundle, FeatureRecord
from emoretrieval.emotion_space import (
    DEFAULT_ALIASES,
    Taxonomy,
    VAPoint,
    load_lexicon,
    load_taxonomy,
)
from emoretrieval.exceptions import DataFormatError

__all__ = [
    "FEATURE_MAGIC",
    "FEATURE_VERSION",
    "encode_features",
    "decode_features",
    "write_features",
    "load_features",
    "fuse_modalities",
    "fuse_all",
    "read_split_manifest",
    "write_split_manifest",
    "write_taxonomy",
    "write_lexicon",
    "load_bundle",
    "write_bundle",
    "BUNDLE_FILES",
]

FEATURE_MAGIC = b"EMF1"
FEATURE_VERSION = 1
TEXT_MAGIC = "#EMF1"

PathType = Union[str, PathLike]

BUNDLE_FILES = dict(
    lexicon="lexicon.txt",
    speech_taxonomy="speech_taxonomy.txt",
    music_taxonomy="music_taxonomy.txt",
    speech_features="speech.emf",
    music_features="music.emf",
    tag_features="tags.emf",
    splits="splits.tsv",
    config="bundle.cfg",
)


def _header_fields(records: Sequence[FeatureRecord], taxonomy: str):
    if not records:
        raise DataFormatError("Cannot write a feature file without records")
    first = records[0]
    for record in records:
        if record.dim != first.dim:
            raise DataFormatError(
                f"{record.id}: dim {record.dim} differs from header dim {first.dim}"
            )
        if (record.domain, record.modality) != (first.domain, first.modality):
            raise DataFormatError(f"{record.id}: mixed domain or modality in one file")
    return first.dim, first.domain, first.modality, taxonomy


def _pack_str(value: str) -> bytes:
    data = value.encode("utf-8")
    return struct.pack("<I", len(data)) + data


def encode_features(
    records: Sequence[FeatureRecord], taxonomy: str = "", text: bool = False
) -> bytes:
    """Serialise records into the binary (default) or text feature format"""
    dim, domain, modality, taxonomy = _header_fields(records, taxonomy)
    if text:
        header = f"dim={dim} domain={domain} modality={modality} taxonomy={taxonomy}"
        lines = [f"{TEXT_MAGIC} {header}"]
        for record in records:
            values = " ".join(repr(float(v)) for v in record.vector)
            lines.append(f"{record.id} {record.label} {values}")
        return ("\n".join(lines) + "\n").encode("utf-8")

    buffer = io.BytesIO()
    buffer.write(FEATURE_MAGIC)
    buffer.write(struct.pack("<III", FEATURE_VERSION, dim, len(records)))
    for value in (domain, modality, taxonomy):
        buffer.write(_pack_str(value))
    for record in records:
        buffer.write(_pack_str(record.id))
        buffer.write(_pack_str(record.label))
        buffer.write(np.ascontiguousarray(record.vector, dtype="<f8").tobytes())
    return buffer.getvalue()


class _Reader:
    def __init__(self, data: bytes, path: str):
        self._data = data
        self._offset = 0
        self._path = path

    def take(self, n: int, context: str) -> bytes:
        if self._offset + n > len(self._data):
            raise DataFormatError(
                f"{self._path}: truncated while reading {context} at byte {self._offset}"
            )
        chunk = self._data[self._offset : self._offset + n]
        self._offset += n
        return chunk

    def read_str(self, context: str) -> str:
        start = self._offset
        (length,) = struct.unpack("<I", self.take(4, context))
        try:
            return self.take(length, context).decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError(
                f"{self._path}: {context} at byte {start} is not valid UTF-8"
            ) from None

    @property
    def offset(self) -> int:
        return self._offset

    @property
    def remaining(self) -> int:
        return len(self._data) - self._offset


def _validate(records: List[FeatureRecord], labels: Optional[Sequence[str]], path: str):
    seen = set()
    for record in records:
        if record.id in seen:
            raise DataFormatError(f"{path}: duplicate id {record.id}")
        seen.add(record.id)
        if labels is not None and record.label not in labels:
            raise DataFormatError(f"{path}: record {record.id} has unknown label {record.label}")


def _decode_binary(data: bytes, path: str):
    reader = _Reader(data, path)
    reader.take(4, "magic")
    version, dim, count = struct.unpack("<III", reader.take(12, "header"))
    if version != FEATURE_VERSION:
        raise DataFormatError(f"{path}: unsupported feature file version {version}")
    domain = reader.read_str("header")
    modality = reader.read_str("header")
    taxonomy = reader.read_str("header")
    records = []
    for _ in range(count):
        start = reader.offset
        record_id = reader.read_str("record id")
        label = reader.read_str(f"label of {record_id}")
        try:
            raw = reader.take(8 * dim, f"vector of {record_id}")
        except DataFormatError:
            raise DataFormatError(
                f"{path}: record {record_id} at byte {start} is shorter than "
                f"header dim {dim}"
            ) from None
        vector = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        records.append(FeatureRecord(record_id, domain, modality, vector, label))
    if reader.remaining:
        raise DataFormatError(
            f"{path}: {reader.remaining} trailing bytes after {count} records, "
            f"from byte {reader.offset}"
        )
    return records, taxonomy


def _decode_text(data: bytes, path: str):
    lines = data.decode("utf-8").splitlines()
    header = dict(item.split("=", 1) for item in lines[0].split()[1:])
    try:
        dim = int(header["dim"])
        domain, modality = header["domain"], header["modality"]
    except KeyError as err:
        raise DataFormatError(f"{path}: header lacks {err}") from None
    taxonomy = header.get("taxonomy", "")
    records = []
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split()
        record_id = fields[0]
        if len(fields) - 2 != dim:
            raise DataFormatError(
                f"{path}: record {record_id} has {max(len(fields) - 2, 0)} values, "
                f"header dim is {dim}"
            )
        vector = np.array([float(v) for v in fields[2:]], dtype=np.float64)
        records.append(FeatureRecord(record_id, domain, modality, vector, fields[1]))
    return records, taxonomy


def decode_features(
    data: bytes, labels: Optional[Sequence[str]] = None, path: str = "<bytes>"
):
    """Parse either feature file variant.

    Returns
    -------
    records : list of FeatureRecord
    taxonomy : str
        Taxonomy name stored in the header
    """
    if data.startswith(FEATURE_MAGIC):
        records, taxonomy = _decode_binary(data, path)
    elif data.startswith(TEXT_MAGIC.encode()):
        records, taxonomy = _decode_text(data, path)
    else:
        raise DataFormatError(f"{path}: not an EMF1 feature file")
    _validate(records, labels, path)
    return records, taxonomy


def write_features(
    path: PathType,
    records: Sequence[FeatureRecord],
    taxonomy: str = "",
    text: bool = False,
):
    with open(path, "wb") as f:
        f.write(encode_features(records, taxonomy, text))


def load_features(
    path: PathType, taxonomy: Optional[Taxonomy] = None
) -> List[FeatureRecord]:
    """Read a feature file, validating every record against the header dim,
    id uniqueness and (if given) the labels of ``taxonomy``.

    Binary records carry no length of their own, so a record with fewer
    values than the header dim shifts every later record. The error then
    surfaces further on (usually at the last record or as trailing bytes)
    and names the byte offset where decoding failed rather than the
    offending record. Text files are checked line by line and name the id.
    """
    with open(path, "rb") as f:
        data = f.read()
    labels = None if taxonomy is None else taxonomy.labels
    records, _ = decode_features(data, labels, str(path))
    return records


def fuse_modalities(
    records_by_modality: Mapping[str, Sequence[FeatureRecord]], item_id: str
) -> FeatureRecord:
    """Late fusion: concatenate the feature vectors of one item across
    modalities, in the order of ``records_by_modality``

    Parameters
    ----------
    records_by_modality : dict
        Modality name to the records of that modality
    item_id : str
        Id of the item to fuse

    Returns
    -------
    FeatureRecord
        A fusion record, or the record itself if only one modality is listed
    """
    parts = []
    for modality, records in records_by_modality.items():
        match = [r for r in records if r.id == item_id]
        if not match:
            raise DataFormatError(f"{item_id} missing from modality {modality}")
        parts.append(match[0])
    if len(parts) == 1:
        return parts[0]
    labels = {p.label for p in parts}
    if len(labels) != 1:
        raise DataFormatError(f"{item_id}: labels disagree across modalities: {sorted(labels)}")
    vector = np.concatenate([p.vector for p in parts])
    return FeatureRecord(item_id, parts[0].domain, "fusion", vector, parts[0].label)


def fuse_all(
    records_by_modality: Mapping[str, Sequence[FeatureRecord]]
) -> List[FeatureRecord]:
    """``fuse_modalities`` for every id of the first modality, in its order"""
    if not records_by_modality:
        return []
    lookup = {m: {r.id: r for r in records} for m, records in records_by_modality.items()}
    first = next(iter(records_by_modality.values()))
    fused = []
    for record in first:
        parts = OrderedDict()
        for modality, by_id in lookup.items():
            if record.id not in by_id:
                raise DataFormatError(f"{record.id} missing from modality {modality}")
            parts[modality] = [by_id[record.id]]
        fused.append(fuse_modalities(parts, record.id))
    return fused


def read_split_manifest(path: PathType) -> Dict[str, str]:
    """Lines ``id<TAB>split``; an id listed twice is an error"""
    splits = {}
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataFormatError(f"{path}:{line_number}: expected 'id<TAB>split'")
            item_id, split = fields
            if item_id in splits:
                raise DataFormatError(f"{path}:{line_number}: {item_id} assigned twice")
            splits[item_id] = split
    return splits


def write_split_manifest(path: PathType, splits: Mapping[str, str]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for item_id, split in splits.items():
            f.write(f"{item_id}\t{split}\n")


def write_taxonomy(path: PathType, taxonomy: Taxonomy):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for label in taxonomy.labels:
            f.write(f"{label}\n")


def write_lexicon(path: PathType, lexicon: Mapping[str, VAPoint]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# word valence arousal\n")
        for word, point in lexicon.items():
            f.write(f"{word} {point.valence!r} {point.arousal!r}\n")


def load_bundle(
    lexicon: PathType,
    speech_taxonomy: PathType,
    music_taxonomy: PathType,
    speech_features: Sequence[PathType],
    music_features: PathType,
    splits: PathType,
    tag_features: Optional[PathType] = None,
) -> DatasetBundle:
    """Assemble a DatasetBundle from its files.

    Several speech feature files are fused (late fusion) in the given order.
    """
    lexicon = load_lexicon(lexicon)
    speech_tax = load_taxonomy(speech_taxonomy, lexicon, name="speech")
    music_tax = load_taxonomy(music_taxonomy, lexicon, name="music")

    by_modality = OrderedDict()
    for path in speech_features:
        records = load_features(path, speech_tax)
        modality = records[0].modality if records else Path(path).stem
        if modality in by_modality:
            modality = f"{modality}:{path}"
        by_modality[modality] = records
    speech = fuse_all(by_modality)
    music = load_features(music_features, music_tax)
    tags = load_features(tag_features) if tag_features else []
    return DatasetBundle(
        speech=speech,
        music=music,
        speech_taxonomy=speech_tax,
        music_taxonomy=music_tax,
        splits=read_split_manifest(splits),
        tags=tags,
    )


def _bundle_lexicon(bundle: DatasetBundle) -> Dict[str, VAPoint]:
    """Lexicon entries reproducing the coordinates of both taxonomies"""
    lexicon = {}
    for taxonomy in (bundle.speech_taxonomy, bundle.music_taxonomy):
        for label, point in taxonomy.coords.items():
            word = DEFAULT_ALIASES.get(label, label)
            lexicon.setdefault(word, point)
    return lexicon


def write_bundle(directory: PathType, bundle: DatasetBundle) -> Dict[str, Path]:
    """Write every file of a bundle into ``directory`` (created if needed)
    under the names of ``BUNDLE_FILES``

    Returns
    -------
    paths : dict
        Key of ``BUNDLE_FILES`` to the written path. The ``config`` entry is
        the path the caller may write a run configuration to.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {key: directory / name for key, name in BUNDLE_FILES.items()}
    write_lexicon(paths["lexicon"], _bundle_lexicon(bundle))
    write_taxonomy(paths["speech_taxonomy"], bundle.speech_taxonomy)
    write_taxonomy(paths["music_taxonomy"], bundle.music_taxonomy)
    write_features(paths["speech_features"], bundle.speech, bundle.speech_taxonomy.name)
    write_features(paths["music_features"], bundle.music, bundle.music_taxonomy.name)
    if bundle.tags:
        write_features(paths["tag_features"], bundle.tags, "tags")
    else:
        del paths["tag_features"]
    write_split_manifest(paths["splits"], bundle.splits)
    return paths
