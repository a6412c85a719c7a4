from emoretrieval.objective import (
    LossConfig,
    Objective,
    Triplet,
    TripletSP,
    TripletEmoSim,
    triplet_loss,
    cross_loss,
    combined_sp_loss,
    feature_similarity_matrix,
    emosim_loss,
    symmetric_emosim_loss,
)
from emoretrieval.sampling import Triplets
from emoretrieval.gradcheck import check_objective, random_triplet_batch
from emoretrieval.exceptions import ConfigError, ShapeError
import numpy as np
from numpy.testing import assert_allclose
import pytest


def test_loss_config():
    assert LossConfig().objective == "Triplet"
    assert LossConfig(objective="triplet-emosim").objective == "TripletEmoSim"
    assert LossConfig(sp_weights=[1, 0, 0]).sp_weights == (1.0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        LossConfig(margin=-0.1)
    with pytest.raises(ConfigError):
        LossConfig(emosim_lambda=-1)
    with pytest.raises(ConfigError):
        LossConfig(sp_weights=(0.5, 0.5))
    with pytest.raises(ConfigError):
        LossConfig(objective="contrastive")


def test_from_name():
    assert isinstance(Objective.from_name("Triplet"), Triplet)
    assert isinstance(Objective.from_name("triplet-sp"), TripletSP)
    objective = Objective.from_name("triplet-emosim", LossConfig(emosim_lambda=2))
    assert isinstance(objective, TripletEmoSim)
    assert objective.config.emosim_lambda == 2
    assert objective.name == "TripletEmoSim"
    assert TripletSP.requires_tags
    assert not TripletEmoSim.requires_tags
    with pytest.raises(ValueError):
        Objective.from_name("NA")


def test_triplet_loss():
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    loss, grads = triplet_loss(x, x, y)
    assert loss == 0
    for grad in grads:
        assert (grad == 0).all()

    loss, _ = triplet_loss(x, y, x)
    assert_allclose(loss, 1.4)
    loss, _ = triplet_loss(x, y, x, margin=0)
    assert_allclose(loss, 1)
    loss, _ = triplet_loss(x, y, -y, margin=0)
    assert loss == 0

    with pytest.raises(ShapeError):
        triplet_loss(x, y, np.ones(3))


def test_cross_loss():
    rng = np.random.default_rng(0)
    speech = rng.normal(size=(3, 4))
    music = rng.normal(size=(6, 4))
    triplets = Triplets(np.arange(3), np.arange(3), np.arange(3, 6))
    loss, grad_speech, grad_music = cross_loss(speech, music, triplets)
    expected = np.mean(
        [triplet_loss(speech[i], music[i], music[i + 3])[0] for i in range(3)]
    )
    assert_allclose(loss, expected)
    assert grad_speech.shape == speech.shape
    assert grad_music.shape == music.shape

    with pytest.raises(ShapeError):
        cross_loss(speech, music, Triplets(np.arange(3), np.arange(3), np.arange(4, 7)))
    with pytest.raises(ShapeError):
        cross_loss(speech, music[:, :3], triplets)
    with pytest.raises(ShapeError):
        empty = np.array([], dtype=np.int64)
        cross_loss(speech, music, Triplets(empty, empty, empty))


def test_combined_sp_loss():
    assert_allclose(combined_sp_loss(1, 2, 3), 0.4 + 0.6 + 0.9)
    assert combined_sp_loss(1, 2, 3, (1, 0, 0)) == 1


def test_feature_similarity_matrix():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    S_z = feature_similarity_matrix(a, np.concatenate([a, -a]))
    assert_allclose(np.diag(S_z[:, :3]), 1)
    assert_allclose(np.diag(S_z[:, 3:]), 0, atol=1e-15)
    assert (S_z >= 0).all()
    assert (S_z <= 1).all()


def test_emosim_loss():
    S_y = np.array([[0.2, 0.2], [0.3, 0.7]])
    S_z = np.array([[0.5, 0.9], [0.3, 0.2]])
    loss, grad = emosim_loss(S_y, S_z)
    assert_allclose(loss, (0.09 + 0.125) / 2)
    assert_allclose(grad, [[0.3, 0], [0, -0.25]], atol=1e-15)

    loss, grad = emosim_loss(S_y, S_y)
    assert loss == 0
    assert (grad == 0).all()

    with pytest.raises(ShapeError):
        emosim_loss(S_y, S_z[:1])
    with pytest.raises(ShapeError):
        emosim_loss(S_y, S_z, np.zeros((2, 2), dtype=bool))


def test_symmetric_emosim_loss():
    rng = np.random.default_rng(0)
    S_y = rng.uniform(size=(4, 4))
    S_y = S_y + S_y.T
    S_z = rng.uniform(size=(4, 4))
    S_z = S_z + S_z.T
    loss, grad = symmetric_emosim_loss(S_y, S_z)
    expected, expected_grad = emosim_loss(S_y, S_z)
    assert_allclose(loss, expected)
    assert_allclose(grad, 0.5 * (expected_grad + expected_grad.T))


def test_emosim_lambda_zero(rng):
    batch = random_triplet_batch(rng)
    speech = rng.normal(size=(8, 5))
    music = rng.normal(size=(8, 5))
    plain = Triplet()(speech, music, batch)
    regularized = TripletEmoSim(LossConfig(emosim_lambda=0))(speech, music, batch)
    assert regularized.loss == plain.loss
    assert np.array_equal(regularized.grad_speech, plain.grad_speech)
    assert np.array_equal(regularized.grad_music, plain.grad_music)
    assert "emosim" in regularized.components


def test_sp_cross_only(rng):
    batch = random_triplet_batch(rng)
    speech = rng.normal(size=(8, 5))
    music = rng.normal(size=(8, 5))
    tags = rng.normal(size=(3, 5))
    plain = Triplet()(speech, music, batch)
    sp = TripletSP(LossConfig(sp_weights=(1, 0, 0)))(speech, music, batch, tags)
    assert sp.loss == plain.loss
    assert np.array_equal(sp.grad_speech, plain.grad_speech)
    assert set(sp.components) == {"cross", "sp_speech", "sp_music"}
    assert sp.grad_tags.shape == tags.shape
    with pytest.raises(ConfigError):
        TripletSP()(speech, music, batch)


@pytest.mark.parametrize("objective", Objective.__subclasses__())
@pytest.mark.parametrize("seed", range(100))
def test_objective_gradients(objective, seed):
    rng = np.random.default_rng(seed)
    assert check_objective(objective(), rng) < 1e-6


@pytest.mark.parametrize("seed", range(100))
def test_symmetric_emosim_gradients(seed):
    rng = np.random.default_rng(seed)
    objective = TripletEmoSim(LossConfig(emosim_symmetric=True, emosim_lambda=2))
    assert check_objective(objective, rng) < 1e-6


@pytest.mark.parametrize("seed", range(50))
def test_emosim_loss_permutation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    batch = random_triplet_batch(rng, n=n)
    S_y, mask = batch.S_y, batch.unique_mask
    S_z = rng.uniform(size=(n, n))
    rows, cols = rng.permutation(n), rng.permutation(n)
    loss, grad = emosim_loss(S_y, S_z, mask)
    permuted_loss, permuted_grad = emosim_loss(
        S_y[rows][:, cols], S_z[rows][:, cols], mask[rows][:, cols]
    )
    assert_allclose(permuted_loss, loss, rtol=0, atol=1e-12)
    assert_allclose(permuted_grad, grad[rows][:, cols], rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_triplet_loss_scale(seed):
    rng = np.random.default_rng(seed)
    z, z_pos, z_neg = rng.normal(size=(3, 6))
    scale = rng.uniform(1e-3, 1e3, size=3)
    loss, grads = triplet_loss(z, z_pos, z_neg)
    scaled_loss, scaled_grads = triplet_loss(
        scale[0] * z, scale[1] * z_pos, scale[2] * z_neg
    )
    assert_allclose(scaled_loss, loss, rtol=0, atol=1e-12)
    if loss > 1e-6:
        for grad, scaled_grad, factor in zip(grads, scaled_grads, scale):
            assert_allclose(scaled_grad * factor, grad, rtol=1e-9, atol=1e-12)
