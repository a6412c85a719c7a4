from dataclasses import asdict, dataclass, field, replace
from functools import partial
from multiprocessing import Pool
from os import PathLike
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import json
import logging
import time
import numpy as np
from tqdm.auto import trange

from emoretrieval.common.stats import format_mean_std, mean_std
from emoretrieval.container import DatasetBundle
from emoretrieval.emotion_space import NOISE_LABEL
from emoretrieval.evaluation import emotion_structure_correlation, evaluate
from emoretrieval.exceptions import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    EmoRetrievalError,
    NonFiniteError,
)
from emoretrieval.nn.base import ACTIVATIONS, ProjectionNet, backward, forward
from emoretrieval.nn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from emoretrieval.nn.optimizer import AdamW
from emoretrieval.objective import LossConfig, Objective
from emoretrieval.sampling import TripletSampler

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainReport",
    "Trainer",
    "train",
    "resume",
    "resume_path",
    "SweepReport",
    "seed_sweep",
]

logger = logging.getLogger(__name__)

PathType = Union[str, PathLike]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run

    ``max_epochs`` counts epochs from the start of the run, so a resumed run
    continues until the same total. ``checkpoint`` receives the nets of the
    selected epoch, ``resume_path(checkpoint)`` the complete state after
    every epoch. ``report`` receives the TrainReport as JSON.
    ``provenance`` is echoed into reports and checkpoints unchanged.
    """

    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 10
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden_dims: Tuple[int, ...] = (256,)
    output_dim: int = 128
    activation: str = "relu"
    include_noise: bool = True
    noise_label: str = NOISE_LABEL
    checkpoint: Optional[str] = None
    report: Optional[str] = None
    progress: bool = False
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be non-negative, got {self.max_epochs}")
        if self.patience <= 0:
            raise ConfigError(f"patience must be positive, got {self.patience}")
        if self.output_dim <= 0 or any(d <= 0 for d in self.hidden_dims):
            raise ConfigError("Layer widths must be positive")
        if self.weight_decay < 0 or self.eps < 0:
            raise ConfigError(
                f"weight_decay and eps must be non-negative, got {self.weight_decay}, "
                f"{self.eps}"
            )
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1): ({self.beta1}, {self.beta2})")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"No activation named {self.activation}")

    def with_seed(self, seed: int) -> "TrainConfig":
        """Copy for another seed, with per-seed checkpoint and report paths"""
        return replace(
            self,
            seed=seed,
            checkpoint=_seed_path(self.checkpoint, seed),
            report=_seed_path(self.report, seed),
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["loss"]["sp_weights"] = list(self.loss.sp_weights)
        return d


def _seed_path(path: Optional[str], seed: int) -> Optional[str]:
    if path is None:
        return None
    path = Path(path)
    return str(path.with_name(f"{path.stem}.seed{seed}{path.suffix}"))


def resume_path(checkpoint: PathType) -> Path:
    """File holding the full training state next to a selected-epoch
    checkpoint"""
    path = Path(checkpoint)
    return path.with_name(f"{path.stem}.last{path.suffix or '.emr'}")


@dataclass
class EpochRecord:
    """Mean training loss (and its components) of one epoch and the
    validation MRR after it. Epoch 0 is the untrained baseline."""

    epoch: int
    loss: Optional[float]
    components: Dict[str, float]
    valid_mrr: float


@dataclass
class TrainReport:
    objective: str
    seed: int
    epochs: List[EpochRecord] = field(default_factory=list)
    selected_epoch: int = 0
    best_valid_mrr: float = float("-inf")
    stopped_early: bool = False
    feature_checksum: str = ""
    config: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def valid_mrr(self) -> List[float]:
        return [e.valid_mrr for e in self.epochs]

    @property
    def train_loss(self) -> List[Optional[float]]:
        return [e.loss for e in self.epochs]

    def as_dict(self) -> dict:
        """Serialisable content; the wall-clock is left out so that
        identical runs give identical reports"""
        return dict(
            objective=self.objective,
            seed=self.seed,
            epochs=[asdict(e) for e in self.epochs],
            selected_epoch=self.selected_epoch,
            best_valid_mrr=self.best_valid_mrr,
            stopped_early=self.stopped_early,
            feature_checksum=self.feature_checksum,
            config=self.config,
        )

    def write(self, path: PathType):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.as_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


class Trainer:
    def __init__(self, bundle: DatasetBundle, config: Optional[TrainConfig] = None):
        """Trains the speech and music projection networks (and the emotion
        tag network for TripletSP) on the train split of a bundle, selecting
        the epoch of highest validation MRR

        The PRNG seeded with ``config.seed`` initialises the speech, music
        and tag networks in that order, then drives the sampling.

        Parameters
        ----------
        bundle : DatasetBundle
            Frozen features; never modified
        config : TrainConfig
            Defaults if None
        """
        self.bundle = bundle
        self.config = config if config is not None else TrainConfig()
        self.objective = Objective.from_name(self.config.loss.objective, self.config.loss)

        self.train_speech = bundle.feature_set("speech", "train")
        self.train_music = bundle.feature_set("music", "train")
        if len(self.train_speech) == 0 or len(self.train_music) == 0:
            raise DataFormatError("Training needs speech and music items in the train split")
        self.sampler = TripletSampler(self.train_speech, self.train_music, bundle.tag_labels)
        self.tag_matrix = None
        if self.objective.requires_tags:
            self.tag_matrix = bundle.tag_matrix(self.sampler.tag_labels)

        self.valid_split = "valid"
        if len(bundle.feature_set("speech", "valid")) == 0:
            logger.warning("No speech items in the valid split, selecting on train MRR")
            self.valid_split = "train"

        self.rng = np.random.default_rng(self.config.seed)
        self.nets: Dict[str, ProjectionNet] = {}
        for name, input_dim in self._input_dims().items():
            self.nets[name] = ProjectionNet.initialize(
                input_dim,
                self.config.output_dim,
                self.config.hidden_dims,
                self.config.activation,
                rng=self.rng,
            )
        self.optimizer = AdamW(
            self.parameters(),
            lr=self.config.lr,
            beta1=self.config.beta1,
            beta2=self.config.beta2,
            eps=self.config.eps,
            weight_decay=self.config.weight_decay,
        )
        self.epoch = 0
        self.best_nets = {k: v.copy() for k, v in self.nets.items()}
        self.bad_epochs = 0
        self.checksum = bundle.checksum()
        self.report = TrainReport(
            objective=self.objective.name,
            seed=self.config.seed,
            feature_checksum=self.checksum,
            config=self.config.as_dict(),
        )

    def _input_dims(self) -> Dict[str, int]:
        dims = dict(speech=self.train_speech.dim, music=self.train_music.dim)
        if self.tag_matrix is not None:
            dims["tag"] = self.tag_matrix.shape[1]
        return dims

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for name, net in self.nets.items():
            params.update(net.parameters(f"{name}."))
        return params

    def validation_mrr(self) -> float:
        report = evaluate(
            self.nets,
            self.bundle,
            split=self.valid_split,
            include_noise=self.config.include_noise,
            noise_label=self.config.noise_label,
        )
        return report.metrics["MRR"]

    def _step(self, batch):
        speech_emb, speech_tape = forward(
            self.nets["speech"], self.train_speech.matrix[batch.speech_rows]
        )
        music_emb, music_tape = forward(
            self.nets["music"], self.train_music.matrix[batch.music_rows]
        )
        tag_emb = tag_tape = None
        if self.tag_matrix is not None:
            tag_emb, tag_tape = forward(self.nets["tag"], self.tag_matrix)

        result = self.objective(speech_emb, music_emb, batch, tag_emb)
        if not np.isfinite(result.loss):
            raise NonFiniteError(f"Non-finite {self.objective.name} loss")

        grads = backward(self.nets["speech"], speech_tape, result.grad_speech).as_dict(
            "speech."
        )
        grads.update(
            backward(self.nets["music"], music_tape, result.grad_music).as_dict("music.")
        )
        if tag_tape is not None:
            grads.update(
                backward(self.nets["tag"], tag_tape, result.grad_tags).as_dict("tag.")
            )
        self.optimizer.step(self.parameters(), grads)
        for net in self.nets.values():
            net.mark_updated()
        return result

    def run_epoch(self, epoch: int) -> EpochRecord:
        losses = []
        components: Dict[str, List[float]] = {}
        batches = self.sampler.epoch_batches(self.config.batch_size, self.rng)
        for index, batch in enumerate(batches):
            try:
                result = self._step(batch)
            except NonFiniteError as err:
                raise NonFiniteError(f"{err} at epoch {epoch}, batch {index}") from err
            losses.append(result.loss)
            for key, value in result.components.items():
                components.setdefault(key, []).append(value)
        return EpochRecord(
            epoch=epoch,
            loss=float(np.mean(losses)),
            components={k: float(np.mean(v)) for k, v in components.items()},
            valid_mrr=self.validation_mrr(),
        )

    def _select(self, record: EpochRecord) -> bool:
        """Track the best epoch (ties go to the earliest)"""
        self.report.epochs.append(record)
        if record.valid_mrr > self.report.best_valid_mrr:
            self.report.best_valid_mrr = record.valid_mrr
            self.report.selected_epoch = record.epoch
            self.best_nets = {k: v.copy() for k, v in self.nets.items()}
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    def _metadata(self) -> dict:
        return dict(
            objective=self.objective.name,
            seed=self.config.seed,
            epoch=self.report.selected_epoch,
            valid_mrr=self.report.best_valid_mrr,
            feature_checksum=self.checksum,
            config=self.config.as_dict(),
        )

    def _resume_state(self) -> Checkpoint:
        nets = dict(self.nets)
        nets.update({f"best.{k}": v for k, v in self.best_nets.items()})
        metadata = self._metadata()
        metadata.update(
            last_epoch=self.epoch,
            bad_epochs=self.bad_epochs,
            stopped_early=self.report.stopped_early,
            rng_state=self.rng.bit_generator.state,
            history=[asdict(e) for e in self.report.epochs],
        )
        return Checkpoint(nets, self.optimizer, metadata)

    def save(self, selected: bool = True):
        if self.config.checkpoint is None:
            return
        if selected:
            save_checkpoint(
                self.config.checkpoint, Checkpoint(dict(self.best_nets), None, self._metadata())
            )
        save_checkpoint(resume_path(self.config.checkpoint), self._resume_state())

    def train(self) -> Tuple[Dict[str, ProjectionNet], TrainReport]:
        """Run epochs up to ``config.max_epochs`` or until the validation MRR
        has not improved for ``config.patience`` epochs

        Returns
        -------
        nets : dict
            Networks of the selected epoch
        report : TrainReport
        """
        start = time.perf_counter()
        if not self.report.epochs:
            baseline = EpochRecord(0, None, {}, self.validation_mrr())
            self._select(baseline)
            logger.info(f"Epoch 0 (baseline): valid MRR {baseline.valid_mrr:.4f}")
            self.save()

        epochs = trange(
            self.epoch + 1,
            self.config.max_epochs + 1,
            desc=f"{self.objective.name} seed {self.config.seed}",
            disable=not self.config.progress,
        )
        for epoch in epochs:
            if self.report.stopped_early:
                break
            record = self.run_epoch(epoch)
            self.epoch = epoch
            improved = self._select(record)
            logger.info(
                f"Epoch {epoch}: loss {record.loss:.6f} valid MRR {record.valid_mrr:.4f}"
            )
            if self.bad_epochs >= self.config.patience:
                logger.info(f"Early stopping after epoch {epoch}")
                self.report.stopped_early = True
            self.save(selected=improved)

        if self.bundle.checksum() != self.checksum:
            raise EmoRetrievalError("Input features were modified during training")
        self.report.wall_clock += time.perf_counter() - start
        logger.info(
            f"Selected epoch {self.report.selected_epoch} "
            f"(valid MRR {self.report.best_valid_mrr:.4f}) "
            f"in {self.report.wall_clock:.1f} s"
        )
        if self.config.report is not None:
            self.report.write(self.config.report)
        return {k: v.copy() for k, v in self.best_nets.items()}, self.report

    @classmethod
    def resume(
        cls,
        checkpoint: PathType,
        bundle: DatasetBundle,
        config: Optional[TrainConfig] = None,
    ) -> "Trainer":
        """Restore a Trainer from the full training state written by
        ``save`` (the ``resume_path`` of a selected-epoch checkpoint, or that
        checkpoint's path itself, which is then redirected)

        Networks, optimizer moments and step counter, PRNG state, history and
        early-stopping state are restored, so that the continued run is
        identical to an uninterrupted one.
        """
        path = Path(checkpoint)
        state_path = path if ".last" in path.suffixes else resume_path(path)
        if not state_path.exists():
            raise FileNotFoundError(f"No training state at {state_path}")
        state = load_checkpoint(state_path)
        if state.optimizer is None or "rng_state" not in state.metadata:
            raise CheckpointError(f"{state_path} holds no resumable training state")

        trainer = cls(bundle, config)
        for name, net in trainer.nets.items():
            for stored_name in (name, f"best.{name}"):
                stored = state.nets.get(stored_name)
                if stored is None or stored.layer_spec != net.layer_spec:
                    raise CheckpointError(
                        f"Network {stored_name} in {state_path} does not match the "
                        f"configuration: {None if stored is None else stored.layer_spec} "
                        f"vs {net.layer_spec}"
                    )
        if set(state.optimizer.parameter_names) != set(trainer.optimizer.parameter_names):
            raise CheckpointError("Optimizer state does not match the networks")

        metadata = state.metadata
        if metadata.get("feature_checksum") != trainer.checksum:
            logger.warning("Features differ from those the checkpoint was trained on")
        trainer.nets = {name: state.nets[name] for name in trainer.nets}
        trainer.best_nets = {name: state.nets[f"best.{name}"] for name in trainer.nets}
        state.optimizer.lr = trainer.config.lr
        state.optimizer.weight_decay = trainer.config.weight_decay
        trainer.optimizer = state.optimizer
        trainer.rng.bit_generator.state = metadata["rng_state"]
        trainer.epoch = metadata["last_epoch"]
        trainer.bad_epochs = metadata["bad_epochs"]
        trainer.report.epochs = [EpochRecord(**e) for e in metadata["history"]]
        trainer.report.selected_epoch = metadata["epoch"]
        trainer.report.best_valid_mrr = metadata["valid_mrr"]
        trainer.report.stopped_early = metadata["stopped_early"]
        logger.info(f"Resumed from {state_path} after epoch {trainer.epoch}")
        return trainer


def train(
    bundle: DatasetBundle, config: Optional[TrainConfig] = None
) -> Tuple[Dict[str, ProjectionNet], TrainReport]:
    """Train from scratch; see ``Trainer``"""
    return Trainer(bundle, config).train()


def resume(
    checkpoint: PathType, bundle: DatasetBundle, config: Optional[TrainConfig] = None
) -> Tuple[Dict[str, ProjectionNet], TrainReport]:
    """Continue a run from its saved training state up to
    ``config.max_epochs``"""
    return Trainer.resume(checkpoint, bundle, config).train()


@dataclass
class SweepReport:
    """Test metrics of every seed and their ``mean±std`` summary"""

    objective: str
    seeds: List[int]
    runs: Dict[int, Dict[str, float]]
    selected_epochs: Dict[int, int]
    config: dict

    @property
    def metric_names(self) -> List[str]:
        return list(next(iter(self.runs.values())).keys()) if self.runs else []

    def mean_std(self, metric: str) -> Tuple[float, float]:
        return mean_std([self.runs[s][metric] for s in self.seeds])

    @property
    def summary(self) -> Dict[str, str]:
        return {
            m: format_mean_std([self.runs[s][m] for s in self.seeds])
            for m in self.metric_names
        }

    def as_dict(self) -> dict:
        return dict(
            objective=self.objective,
            seeds=list(self.seeds),
            runs={str(s): self.runs[s] for s in self.seeds},
            selected_epochs={str(s): self.selected_epochs[s] for s in self.seeds},
            summary=self.summary,
            config=self.config,
        )

    def write(self, path: PathType):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.as_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def _train_seed(bundle: DatasetBundle, config: TrainConfig, k: int, seed: int):
    seed_config = config.with_seed(seed)
    nets, report = Trainer(bundle, seed_config).train()
    test = evaluate(
        nets,
        bundle,
        split="test",
        k=k,
        include_noise=config.include_noise,
        noise_label=config.noise_label,
    )
    metrics = dict(test.metrics)
    metrics["Spearman"] = emotion_structure_correlation(nets, bundle, "test")
    return seed, metrics, report.selected_epoch


def seed_sweep(
    bundle: DatasetBundle,
    config: TrainConfig,
    seeds: Sequence[int],
    k: int = 5,
    n_processes: int = 1,
    report: Optional[PathType] = None,
) -> SweepReport:
    """Train once per seed and evaluate each selected model on the test
    split

    Parameters
    ----------
    bundle : DatasetBundle
    config : TrainConfig
        Shared configuration; checkpoint and report paths get a
        ``.seed<N>`` infix per seed
    seeds : sequence of int
    k : int
        Cut-off rank of the test metrics
    n_processes : int
        Number of processes to spawn. Runs in series if 1.
    report : str or PathLike
        Where to write the aggregate report

    Returns
    -------
    SweepReport
    """
    seeds = list(seeds)
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError(f"Seeds must be a non-empty list of distinct values: {seeds}")
    apply = partial(_train_seed, bundle, config, k)
    if n_processes > 1:
        logger.info(f"Multiprocessing seed sweep (n_processes = {n_processes})")
        with Pool(n_processes) as pool:
            outcomes = pool.map(apply, seeds)
    else:
        outcomes = [apply(seed) for seed in seeds]

    sweep = SweepReport(
        objective=Objective.from_name(config.loss.objective, config.loss).name,
        seeds=seeds,
        runs={seed: metrics for seed, metrics, _ in outcomes},
        selected_epochs={seed: epoch for seed, _, epoch in outcomes},
        config=config.as_dict(),
    )
    for metric, value in sweep.summary.items():
        logger.info(f"{metric}: {value}")
    if report is not None:
        sweep.write(report)
    return sweep
