from emoretrieval.config import RunConfig, DEFAULTS, write_bundle_config
from emoretrieval.data_io import write_bundle
from emoretrieval.exceptions import ConfigError
import pytest


def test_defaults():
    config = RunConfig()
    assert config.get("model", "hidden_dims") == [256]
    assert config.get("loss", "sp_weights") == [0.4, 0.3, 0.3]
    assert config.get("evaluation", "include_noise") is True
    assert config.get("train", "checkpoint") is None
    assert config.seeds == [0]
    train_config = config.train_config()
    assert train_config.lr == 1e-4
    assert train_config.batch_size == 64
    assert train_config.max_epochs == 50
    assert train_config.patience == 10
    assert train_config.output_dim == 128
    assert train_config.loss.margin == 0.4
    assert train_config.loss.emosim_lambda == 0.5
    assert set(config.as_dict()) == set(DEFAULTS)


def test_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "[data]\nspeech_features = a.emf, /abs/b.emf\n"
        "[loss]\nobjective = triplet-emosim\nemosim_symmetric = yes\n"
        "[train]\nseeds = 1, 2, 3\ncheckpoint = out/model.emr\n"
    )
    config = RunConfig.from_file(path)
    assert config.get("data", "speech_features")[0] == tmp_path.resolve() / "a.emf"
    assert str(config.get("data", "speech_features")[1]) == "/abs/b.emf"
    assert config.get("train", "checkpoint") == tmp_path.resolve() / "out" / "model.emr"
    assert config.seeds == [1, 2, 3]
    loss = config.loss_config()
    assert loss.objective == "TripletEmoSim"
    assert loss.emosim_symmetric

    config.override(dict(train=dict(seed=4, seeds=None, lr=0.01)))
    assert config.get("train", "seed") == 4
    assert config.train_config().lr == 0.01

    copy = tmp_path / "copy.cfg"
    config.write(copy)
    assert RunConfig.from_file(copy).as_dict() == config.as_dict()


def test_invalid(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "missing.cfg")
    path = tmp_path / "bad.cfg"
    path.write_text("no section header\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)
    path.write_text("[model]\nwidth = 3\n")
    with pytest.raises(ConfigError, match="width"):
        RunConfig.from_file(path)
    path.write_text("[optimizer]\nlr = 3\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)
    with pytest.raises(ConfigError, match="batch_size"):
        RunConfig(dict(train=dict(batch_size="many")))
    with pytest.raises(ConfigError):
        RunConfig(dict(evaluation=dict(include_noise="maybe")))
    with pytest.raises(ConfigError, match="k"):
        RunConfig(dict(evaluation=dict(k="0")))
    with pytest.raises(ConfigError, match="weight_decay"):
        RunConfig(dict(train=dict(weight_decay="-1"))).train_config()
    with pytest.raises(ConfigError):
        RunConfig(dict(loss=dict(objective="contrastive"))).loss_config()


def test_check_paths(tmp_path):
    with pytest.raises(ConfigError, match="lexicon"):
        RunConfig().check_paths()
    data = {key: "missing.txt" for key in DEFAULTS["data"]}
    with pytest.raises(ConfigError, match="not found"):
        RunConfig(dict(data=data), base_dir=tmp_path).check_paths()


def test_bundle_config(small_bundle, tmp_path):
    paths = write_bundle(tmp_path, small_bundle)
    path = write_bundle_config(paths, train=dict(max_epochs=7))
    config = RunConfig.from_file(path)
    assert config.get("train", "max_epochs") == 7
    assert config.get("train", "checkpoint") == tmp_path.resolve() / "model.emr"
    assert config.get("data", "tag_features") == tmp_path.resolve() / "tags.emf"
    assert config.load_bundle().checksum() == small_bundle.checksum()
