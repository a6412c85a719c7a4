from emoretrieval import __version__
from emoretrieval.cli import main, build_parser
from emoretrieval.data_io import load_features
from emoretrieval.trainer import Trainer
import pytest


def _gen(out, seed=0):
    return main(
        [
            "gen-synthetic",
            "--out", str(out),
            "--seed", str(seed),
            "--per-class", "10",
            "--dim", "6",
            "--tag-dim", "4",
        ]
    )


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    assert _gen(out) == 0
    return out


@pytest.fixture(scope="module")
def trained(bundle_dir):
    config = str(bundle_dir / "bundle.cfg")
    code = main(["train", "--config", config, "--max-epochs", "2", "--lr", "1e-3"])
    assert code == 0
    return config


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["train"]) == 2
    assert main(["train", "--config", "x.cfg", "--objective", "contrastive"]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2

    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\nepochs = 3\n")
    assert main(["train", "--config", str(bad)]) == 2
    bad.write_text("[train]\nmax_epochs = 3\n")
    assert main(["train", "--config", str(bad)]) == 2


def test_gen_synthetic(bundle_dir, tmp_path, capsys):
    assert _gen(tmp_path) == 0
    assert capsys.readouterr().out.strip() == str(tmp_path / "bundle.cfg")
    for name in ("speech.emf", "music.emf", "tags.emf", "splits.tsv", "lexicon.txt"):
        assert (tmp_path / name).read_bytes() == (bundle_dir / name).read_bytes()
    assert len(load_features(tmp_path / "music.emf")) == 80

    assert _gen(tmp_path / "other", seed=1) == 0
    other = (tmp_path / "other" / "speech.emf").read_bytes()
    assert other != (bundle_dir / "speech.emf").read_bytes()


def test_train(trained, bundle_dir, capsys):
    assert (bundle_dir / "model.emr").exists()
    assert (bundle_dir / "model.last.emr").exists()
    assert (bundle_dir / "train_report.json").exists()

    code = main(
        ["train", "--config", trained, "--max-epochs", "3", "--lr", "1e-3",
         "--resume", str(bundle_dir / "model.emr")]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "objective\tTriplet" in out
    assert "valid_MRR" in out


def test_train_sweep(trained, tmp_path, capsys):
    report = tmp_path / "sweep.json"
    code = main(
        ["train", "--config", trained, "--max-epochs", "1", "--seeds", "1,2",
         "--objective", "triplet-emosim", "--checkpoint", str(tmp_path / "m.emr"),
         "--report", str(report)]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "MRR\t" in out
    assert "±" in out
    assert report.exists()
    assert (tmp_path / "m.seed1.emr").exists()
    assert (tmp_path / "m.seed2.emr").exists()


def test_evaluate(trained, tmp_path, capsys):
    report = tmp_path / "eval.json"
    code = main(["evaluate", "--config", trained, "--k", "1", "--report", str(report)])
    assert code == 0
    out = capsys.readouterr().out
    names = [line.split("\t")[0] for line in out.strip().splitlines()]
    assert names == ["MRR", "P@1", "NDCG@1"]
    assert report.exists()

    assert main(["evaluate", "--config", trained, "--no-noise", "--split", "valid"]) == 0


def test_evaluate_bad_checkpoint(trained, bundle_dir, tmp_path):
    corrupt = tmp_path / "corrupt.emr"
    corrupt.write_bytes(b"EMR0" + (bundle_dir / "model.emr").read_bytes()[4:])
    assert main(["evaluate", "--config", trained, "--checkpoint", str(corrupt)]) == 2

    other = tmp_path / "other"
    assert main(["gen-synthetic", "--out", str(other), "--per-class", "10", "--dim", "5"]) == 0
    mismatch = str(other / "bundle.cfg")
    code = main(
        ["evaluate", "--config", mismatch, "--checkpoint", str(bundle_dir / "model.emr")]
    )
    assert code == 2
    assert main(["evaluate", "--config", trained, "--checkpoint", str(tmp_path / "none.emr")]) == 2


def test_retrieve(trained, bundle_dir, capsys):
    code = main(
        ["retrieve", "--config", trained, "--query", str(bundle_dir / "speech.emf"),
         "--query-id", "speech-happy-0000", "--k", "3"]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    scores = [float(line.split("\t")[1]) for line in lines]
    assert scores == sorted(scores, reverse=True)

    code = main(
        ["retrieve", "--config", trained, "--query", str(bundle_dir / "speech.emf")]
    )
    assert code == 2


def test_export(trained, tmp_path):
    out = tmp_path / "embeddings"
    assert main(["export", "--config", trained, "--out", str(out), "--split", "test"]) == 0
    speech = load_features(out / "speech.emf")
    assert speech[0].modality == "embedding"
    assert speech[0].dim == 128


def test_gradcheck(capsys):
    assert main(["gradcheck", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert "TripletEmoSim" in out
    assert "FAILED" not in out


def test_parser():
    args = build_parser().parse_args(["evaluate", "--config", "run.cfg"])
    assert args.split == "test"
    assert args.k is None


def test_exit_codes(trained, monkeypatch):
    assert main(["evaluate", "--config", trained, "--k", "0"]) == 2
    assert main(["retrieve", "--config", trained, "--query", "q.emf", "--k", "-1"]) == 2
    assert main(["gradcheck", "--trials", "none"]) == 2
    assert main(["train", "--config", trained, "--lr", "-1"]) == 2

    def fail(self):
        raise ValueError("diverged")

    monkeypatch.setattr(Trainer, "train", fail)
    assert main(["train", "--config", trained, "--max-epochs", "1"]) == 1
