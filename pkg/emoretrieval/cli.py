"""Command-line entry point ``emoretrieval``

Exit codes: 0 success, 1 runtime failure (including a failed gradient
check), 2 usage, configuration, data or checkpoint error.
"""
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import argparse
import json
import logging
import sys

from emoretrieval import __version__
from emoretrieval.config import RunConfig, write_bundle_config
from emoretrieval.container import DatasetBundle
from emoretrieval.data_io import load_features, write_bundle
from emoretrieval.evaluation import (
    Retriever,
    embed,
    evaluate,
    export_embeddings,
    retrieve,
)
from emoretrieval.exceptions import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    EmoRetrievalError,
    ShapeError,
)
from emoretrieval.gradcheck import run_gradcheck
from emoretrieval.nn.base import ProjectionNet
from emoretrieval.nn.checkpoint import load_checkpoint
from emoretrieval.synthetic import SyntheticSpec, gen_synthetic
from emoretrieval.trainer import Trainer, seed_sweep

__all__ = ["main", "build_parser"]

logger = logging.getLogger(__name__)

USAGE_ERRORS = (
    ConfigError,
    DataFormatError,
    ShapeError,
    CheckpointError,
    FileNotFoundError,
)

RUNTIME_ERRORS = (EmoRetrievalError, ArithmeticError, RuntimeError, OSError, ValueError)


def _comma_list(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _comma_ints(value: str) -> List[int]:
    try:
        return [int(v) for v in _comma_list(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {value}")


def _positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        number = 0
    if number <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer: {value}")
    return number


def _absolute(value: Optional[str]) -> Optional[str]:
    return None if value is None else str(Path(value).resolve())


def _load_run_config(args, overrides: Dict[str, Dict]) -> RunConfig:
    config = RunConfig.from_file(args.config)
    return config.override(overrides)


def _load_nets(path, bundle: DatasetBundle) -> Dict[str, ProjectionNet]:
    """Networks of a checkpoint, checked against the bundle feature dims"""
    checkpoint = load_checkpoint(path)
    nets = checkpoint.nets
    for domain in ("speech", "music"):
        if domain not in nets:
            raise CheckpointError(f"{path} holds no {domain} network")
        dim = bundle.feature_set(domain).dim
        if nets[domain].input_dim != dim:
            raise CheckpointError(
                f"{domain} network of {path} expects dim {nets[domain].input_dim}, "
                f"features have dim {dim}"
            )
    if nets["speech"].output_dim != nets["music"].output_dim:
        raise CheckpointError(f"{path}: speech and music embedding dims differ")
    return nets


def _checkpoint_path(args, config: RunConfig) -> Path:
    path = args.checkpoint or config.get("train", "checkpoint")
    if path is None:
        raise ConfigError("No checkpoint given (--checkpoint or [train] checkpoint)")
    return Path(path)


def _write_json(path, content: dict):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(content, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_train(args) -> int:
    config = _load_run_config(
        args,
        dict(
            loss=dict(objective=args.objective, emosim_lambda=args.emosim_lambda),
            train=dict(
                seed=args.seed,
                seeds=args.seeds,
                max_epochs=args.max_epochs,
                lr=args.lr,
                batch_size=args.batch_size,
                checkpoint=_absolute(args.checkpoint),
                report=_absolute(args.report),
                n_processes=args.processes,
                progress=args.progress,
            ),
        ),
    )
    bundle = config.load_bundle()
    train_config = config.train_config()
    train_config = replace(train_config, provenance=config.as_dict())
    seeds = config.seeds
    if len(seeds) > 1:
        sweep = seed_sweep(
            bundle,
            train_config,
            seeds,
            k=config.get("evaluation", "k"),
            n_processes=config.get("train", "n_processes"),
            report=train_config.report,
        )
        for metric, value in sweep.summary.items():
            print(f"{metric}\t{value}")
        return 0

    train_config = replace(train_config, seed=seeds[0])
    if args.resume:
        trainer = Trainer.resume(args.resume, bundle, train_config)
    else:
        trainer = Trainer(bundle, train_config)
    _, report = trainer.train()
    print(f"objective\t{report.objective}")
    print(f"seed\t{report.seed}")
    print(f"selected_epoch\t{report.selected_epoch}")
    print(f"valid_MRR\t{report.best_valid_mrr:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_run_config(
        args,
        dict(
            evaluation=dict(
                k=args.k,
                report=_absolute(args.report),
                include_noise=False if args.no_noise else None,
            )
        ),
    )
    bundle = config.load_bundle()
    path = _checkpoint_path(args, config)
    nets = _load_nets(path, bundle)
    report = evaluate(
        nets,
        bundle,
        split=args.split,
        k=config.get("evaluation", "k"),
        include_noise=config.get("evaluation", "include_noise"),
        noise_label=config.get("evaluation", "noise_label"),
    )
    for name, value in report.metrics.items():
        print(f"{name}\t{value:.4f}")
    report_path = config.get("evaluation", "report")
    if report_path is not None:
        content = report.as_dict()
        content.update(checkpoint=str(path), config=config.as_dict())
        _write_json(report_path, content)
    return 0


def cmd_retrieve(args) -> int:
    config = _load_run_config(args, {})
    bundle = config.load_bundle()
    nets = _load_nets(_checkpoint_path(args, config), bundle)
    queries = load_features(args.query)
    if args.query_id is not None:
        queries = [q for q in queries if q.id == args.query_id]
        if not queries:
            raise DataFormatError(f"No query {args.query_id} in {args.query}")
    elif len(queries) != 1:
        raise DataFormatError(f"{args.query} holds {len(queries)} records, pass --query-id")
    query = queries[0]
    if query.dim != nets["speech"].input_dim:
        raise ShapeError(
            f"Query {query.id} has dim {query.dim}, the speech network expects "
            f"{nets['speech'].input_dim}"
        )
    corpus = bundle.feature_set("music", args.split)
    retriever = Retriever(corpus, embed(nets["music"], corpus), bundle.speech_taxonomy)
    query_emb = nets["speech"](query.vector[None])
    label = query.label if query.label in bundle.speech_taxonomy else None
    if label is None:
        (result,) = retrieve(query_emb, retriever.corpus_emb, args.k, corpus.ids, [query.id])
    else:
        (result,) = retriever.retrieve(query_emb, [query.id], [label], args.k)
    for candidate, score in zip(result.candidate_ids, result.scores):
        print(f"{candidate}\t{score:.6f}")
    return 0


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        speech_labels=_comma_list(args.speech_labels),
        music_labels=_comma_list(args.music_labels),
        n_speech_per_class=args.per_class,
        n_music_per_class=args.per_class,
        n_noise=args.noise_items,
        speech_dim=args.dim,
        music_dim=args.dim,
        tag_dim=args.tag_dim,
        separation=args.separation,
        noise_sigma=args.noise_sigma,
    )
    bundle = gen_synthetic(spec, seed=args.seed)
    paths = write_bundle(args.out, bundle)
    config_path = write_bundle_config(paths)
    logger.info(
        f"Wrote {len(bundle.speech)} speech and {len(bundle.music)} music items "
        f"to {args.out}"
    )
    print(config_path)
    return 0


def cmd_gradcheck(args) -> int:
    loss_config = None
    if args.config is not None:
        loss_config = RunConfig.from_file(args.config).loss_config()
    results = run_gradcheck(n_trials=args.trials, seed=args.seed, loss_config=loss_config)
    for result in results:
        status = "ok" if result.passed else "FAILED"
        print(f"{result.name}\t{result.max_error:.3e}\t{status}")
    return 0 if all(r.passed for r in results) else 1


def cmd_export(args) -> int:
    config = _load_run_config(args, {})
    bundle = config.load_bundle()
    nets = _load_nets(_checkpoint_path(args, config), bundle)
    paths = export_embeddings(nets, bundle, args.out, split=args.split)
    for path in paths.values():
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emoretrieval",
        description="Emotion-based speech-to-music retrieval",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("train", help="Train the projection networks")
    p.add_argument("--config", type=Path, required=True, help="Run configuration file")
    p.add_argument(
        "--objective",
        choices=["triplet", "triplet-sp", "triplet-emosim"],
        help="Training objective",
    )
    p.add_argument("--seed", type=int, help="PRNG seed")
    p.add_argument("--seeds", type=_comma_ints, help="Seed sweep, e.g. 1,2,3,4,5")
    p.add_argument("--max-epochs", type=int, help="Maximum number of epochs")
    p.add_argument("--lr", type=float, help="Learning rate")
    p.add_argument("--batch-size", type=int, help="Triplets per batch")
    p.add_argument("--emosim-lambda", type=float, help="Weight of the EmoSim term")
    p.add_argument("--checkpoint", help="Selected-epoch checkpoint path")
    p.add_argument("--report", help="Train (or sweep) report path")
    p.add_argument("--processes", type=int, help="Processes of a seed sweep")
    p.add_argument("--resume", help="Continue from this checkpoint's training state")
    p.add_argument(
        "--progress", action="store_true", default=None, help="Show a progress bar"
    )
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser("evaluate", help="Compute MRR, P@k and NDCG@k")
    p.add_argument("--config", type=Path, required=True, help="Run configuration file")
    p.add_argument("--checkpoint", help="Checkpoint to evaluate")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--k", type=_positive_int, help="Cut-off rank of P@k and NDCG@k")
    p.add_argument("--report", help="Evaluation report path")
    p.add_argument(
        "--no-noise", action="store_true", help="Leave noise items out of the corpus"
    )
    p.set_defaults(func=cmd_evaluate)

    p = subparsers.add_parser("retrieve", help="Rank the music corpus for one query")
    p.add_argument("--config", type=Path, required=True, help="Run configuration file")
    p.add_argument("--checkpoint", help="Checkpoint to use")
    p.add_argument("--query", type=Path, required=True, help="Speech feature file")
    p.add_argument("--query-id", help="Record of the feature file to use")
    p.add_argument("--k", type=_positive_int, default=5, help="Number of results")
    p.add_argument(
        "--split", choices=["train", "valid", "test"], help="Corpus split (all music if unset)"
    )
    p.set_defaults(func=cmd_retrieve)

    defaults = SyntheticSpec.__dataclass_fields__
    p = subparsers.add_parser("gen-synthetic", help="Write a synthetic bundle directory")
    p.add_argument("--out", type=Path, required=True, help="Output directory")
    p.add_argument("--seed", type=int, default=0, help="PRNG seed")
    p.add_argument(
        "--speech-labels",
        default=",".join(defaults["speech_labels"].default),
        help="Comma-separated speech classes",
    )
    p.add_argument(
        "--music-labels",
        default=",".join(defaults["music_labels"].default),
        help="Comma-separated music classes (noise is added for neutral speech)",
    )
    p.add_argument("--per-class", type=int, default=100, help="Items per class")
    p.add_argument("--noise-items", type=int, help="Noise items (default: per class)")
    p.add_argument("--dim", type=int, default=32, help="Speech and music feature dim")
    p.add_argument("--tag-dim", type=int, default=16, help="Emotion tag vector dim")
    p.add_argument("--separation", type=float, default=10.0, help="Class anchor scale")
    p.add_argument("--noise-sigma", type=float, default=1.0, help="Within-class std")
    p.set_defaults(func=cmd_gen_synthetic)

    p = subparsers.add_parser("gradcheck", help="Finite-difference gradient checks")
    p.add_argument("--config", type=Path, help="Take the loss settings from this file")
    p.add_argument(
        "--trials", type=_positive_int, default=100, help="Random configurations"
    )
    p.add_argument("--seed", type=int, default=0, help="PRNG seed")
    p.set_defaults(func=cmd_gradcheck)

    p = subparsers.add_parser("export", help="Write joint-space embeddings")
    p.add_argument("--config", type=Path, required=True, help="Run configuration file")
    p.add_argument("--checkpoint", help="Checkpoint to use")
    p.add_argument("--out", type=Path, required=True, help="Output directory")
    p.add_argument("--split", choices=["train", "valid", "test"], help="Only this split")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else 2
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except USAGE_ERRORS as err:
        print(f"emoretrieval {args.command}: error: {err}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as err:
        print(f"emoretrieval {args.command}: failed: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
