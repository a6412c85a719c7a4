"""Sectioned run configuration file with command-line overrides.

Example::

    [data]
    lexicon = lexicon.txt
    speech_taxonomy = speech_taxonomy.txt
    music_taxonomy = music_taxonomy.txt
    speech_features = speech_audio.emf, speech_text.emf
    music_features = music.emf
    tag_features = tags.emf
    splits = splits.tsv

    [loss]
    objective = triplet-emosim

    [train]
    seed = 7
    checkpoint = model.emr

Relative paths resolve against the directory of the configuration file.
"""
from configparser import ConfigParser, Error as ConfigParserError
from os import PathLike
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Union

from emoretrieval.container import DatasetBundle
from emoretrieval.data_io import load_bundle
from emoretrieval.exceptions import ConfigError
from emoretrieval.objective import LossConfig
from emoretrieval.trainer import TrainConfig

__all__ = ["RunConfig", "DEFAULTS", "write_bundle_config"]

PathType = Union[str, PathLike]


def _str(value: str) -> str:
    return value.strip()


def _int(value: str) -> int:
    return int(value)


def _positive_int(value: str) -> int:
    number = int(value)
    if number <= 0:
        raise ValueError("must be positive")
    return number


def _float(value: str) -> float:
    return float(value)


def _bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _list(convert: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(value: str) -> List[Any]:
        return [convert(v) for v in value.split(",") if v.strip()]

    return parse


# Every accepted key with its parser and default ("" = unset)
SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "data": dict(
        lexicon=_str,
        speech_taxonomy=_str,
        music_taxonomy=_str,
        speech_features=_list(_str),
        music_features=_str,
        tag_features=_str,
        splits=_str,
    ),
    "model": dict(hidden_dims=_list(_int), output_dim=_int, activation=_str),
    "loss": dict(
        objective=_str,
        margin=_float,
        sp_weights=_list(_float),
        emosim_lambda=_float,
        emosim_symmetric=_bool,
    ),
    "train": dict(
        lr=_float,
        batch_size=_int,
        max_epochs=_int,
        patience=_int,
        weight_decay=_float,
        beta1=_float,
        beta2=_float,
        eps=_float,
        seed=_int,
        seeds=_list(_int),
        n_processes=_int,
        checkpoint=_str,
        report=_str,
        progress=_bool,
    ),
    "evaluation": dict(
        k=_positive_int, include_noise=_bool, noise_label=_str, report=_str
    ),
}

DEFAULTS: Dict[str, Dict[str, str]] = {
    "data": dict(
        lexicon="",
        speech_taxonomy="",
        music_taxonomy="",
        speech_features="",
        music_features="",
        tag_features="",
        splits="",
    ),
    "model": dict(hidden_dims="256", output_dim="128", activation="relu"),
    "loss": dict(
        objective="triplet",
        margin="0.4",
        sp_weights="0.4, 0.3, 0.3",
        emosim_lambda="0.5",
        emosim_symmetric="false",
    ),
    "train": dict(
        lr="1e-4",
        batch_size="64",
        max_epochs="50",
        patience="10",
        weight_decay="0.01",
        beta1="0.9",
        beta2="0.999",
        eps="1e-8",
        seed="0",
        seeds="",
        n_processes="1",
        checkpoint="",
        report="",
        progress="false",
    ),
    "evaluation": dict(k="5", include_noise="true", noise_label="noise", report=""),
}

PATH_KEYS = {
    ("data", "lexicon"),
    ("data", "speech_taxonomy"),
    ("data", "music_taxonomy"),
    ("data", "speech_features"),
    ("data", "music_features"),
    ("data", "tag_features"),
    ("data", "splits"),
    ("train", "checkpoint"),
    ("train", "report"),
    ("evaluation", "report"),
}

REQUIRED_DATA = (
    "lexicon",
    "speech_taxonomy",
    "music_taxonomy",
    "speech_features",
    "music_features",
    "splits",
)


class RunConfig:
    def __init__(
        self,
        sections: Optional[Mapping[str, Mapping[str, str]]] = None,
        base_dir: Optional[PathType] = None,
        source: Optional[str] = None,
    ):
        """Typed view of a run configuration

        Parameters
        ----------
        sections : dict
            Section name to raw string values. Missing keys take ``DEFAULTS``.
        base_dir : str or PathLike
            Directory relative paths resolve against. The working directory
            if None.
        source : str
            Path of the file the values were read from, for messages
        """
        self.base_dir = Path(base_dir if base_dir is not None else ".").resolve()
        self.source = source or "<config>"
        self._raw = {section: dict(values) for section, values in DEFAULTS.items()}
        for section, values in (sections or {}).items():
            for key, value in values.items():
                self.set(section, key, value)

    @classmethod
    def from_file(cls, path: PathType) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Configuration file not found: {path}")
        parser = ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except ConfigParserError as err:
            raise ConfigError(f"{path}: {err}") from err
        sections = {s: dict(parser.items(s)) for s in parser.sections()}
        return cls(sections, base_dir=path.parent, source=str(path))

    def set(self, section: str, key: str, value: Any):
        """Set one raw value, validating section, key and type"""
        if section not in SCHEMA:
            raise ConfigError(f"{self.source}: unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"{self.source}: unknown key '{key}' in [{section}]")
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        value = str(value)
        self._parse(section, key, value)
        self._raw[section][key] = value

    def override(self, overrides: Mapping[str, Mapping[str, Any]]):
        """Apply flag overrides; None values are ignored"""
        for section, values in overrides.items():
            for key, value in values.items():
                if value is not None:
                    self.set(section, key, value)
        return self

    def _parse(self, section: str, key: str, value: str):
        try:
            return SCHEMA[section][key](value)
        except ValueError as err:
            raise ConfigError(
                f"{self.source}: invalid value {value!r} for [{section}] {key}: {err}"
            ) from None

    def get(self, section: str, key: str):
        value = self._parse(section, key, self._raw[section][key])
        if (section, key) in PATH_KEYS:
            if isinstance(value, list):
                return [self._resolve(v) for v in value]
            return self._resolve(value) if value else None
        return value

    def _resolve(self, value: str) -> Path:
        path = Path(value).expanduser()
        return path if path.is_absolute() else self.base_dir / path

    @property
    def seeds(self) -> List[int]:
        """Seeds of a sweep, or the single seed"""
        return self.get("train", "seeds") or [self.get("train", "seed")]

    def loss_config(self) -> LossConfig:
        return LossConfig(
            margin=self.get("loss", "margin"),
            sp_weights=tuple(self.get("loss", "sp_weights")),
            emosim_lambda=self.get("loss", "emosim_lambda"),
            objective=self.get("loss", "objective"),
            emosim_symmetric=self.get("loss", "emosim_symmetric"),
        )

    def train_config(self) -> TrainConfig:
        checkpoint = self.get("train", "checkpoint")
        report = self.get("train", "report")
        return TrainConfig(
            loss=self.loss_config(),
            lr=self.get("train", "lr"),
            batch_size=self.get("train", "batch_size"),
            max_epochs=self.get("train", "max_epochs"),
            patience=self.get("train", "patience"),
            weight_decay=self.get("train", "weight_decay"),
            beta1=self.get("train", "beta1"),
            beta2=self.get("train", "beta2"),
            eps=self.get("train", "eps"),
            seed=self.get("train", "seed"),
            hidden_dims=tuple(self.get("model", "hidden_dims")),
            output_dim=self.get("model", "output_dim"),
            activation=self.get("model", "activation"),
            include_noise=self.get("evaluation", "include_noise"),
            noise_label=self.get("evaluation", "noise_label"),
            checkpoint=None if checkpoint is None else str(checkpoint),
            report=None if report is None else str(report),
            progress=self.get("train", "progress"),
        )

    def check_paths(self):
        """Every input file of the [data] section must exist"""
        for key in REQUIRED_DATA:
            if not self._raw["data"][key].strip():
                raise ConfigError(f"{self.source}: [data] {key} is not set")
        for key in SCHEMA["data"]:
            value = self.get("data", key)
            for path in value if isinstance(value, list) else [value]:
                if path is not None and not path.exists():
                    raise ConfigError(f"[data] {key}: file not found: {path}")

    def load_bundle(self) -> DatasetBundle:
        self.check_paths()
        return load_bundle(
            lexicon=self.get("data", "lexicon"),
            speech_taxonomy=self.get("data", "speech_taxonomy"),
            music_taxonomy=self.get("data", "music_taxonomy"),
            speech_features=self.get("data", "speech_features"),
            music_features=self.get("data", "music_features"),
            splits=self.get("data", "splits"),
            tag_features=self.get("data", "tag_features"),
        )

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        """Fully resolved configuration, paths as strings"""
        resolved = {}
        for section, keys in SCHEMA.items():
            resolved[section] = {}
            for key in keys:
                value = self.get(section, key)
                if isinstance(value, Path):
                    value = str(value)
                elif isinstance(value, list):
                    value = [str(v) if isinstance(v, Path) else v for v in value]
                resolved[section][key] = value
        return resolved

    def write(self, path: PathType):
        """Write the raw values as a configuration file"""
        parser = ConfigParser(interpolation=None)
        for section, values in self._raw.items():
            parser[section] = values
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            parser.write(f)


def write_bundle_config(paths: Mapping[str, Path], **overrides) -> Path:
    """Write a ready-to-run ``bundle.cfg`` next to the files written by
    ``data_io.write_bundle``, referencing them by relative name

    Parameters
    ----------
    paths : dict
        Result of ``data_io.write_bundle``
    overrides : dict
        Section name to raw values, e.g. ``train=dict(max_epochs=20)``

    Returns
    -------
    Path
        The configuration file
    """
    config_path = Path(paths["config"])
    data = {
        key: Path(paths[key]).name if key in paths else ""
        for key in SCHEMA["data"]
    }
    config = RunConfig(dict(data=data), base_dir=config_path.parent)
    config.set("train", "checkpoint", "model.emr")
    config.set("train", "report", "train_report.json")
    config.override(overrides)
    config.write(config_path)
    return config_path
