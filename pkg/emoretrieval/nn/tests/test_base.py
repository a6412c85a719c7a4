from emoretrieval.nn.base import Layer, ProjectionNet, forward, backward
from emoretrieval.exceptions import ShapeError, StaleTapeError
from emoretrieval.gradcheck import check_projection_net
import numpy as np
from numpy.testing import assert_allclose
import pytest


def test_layer():
    layer = Layer(np.ones((3, 2)), np.zeros(2), "relu")
    assert layer.in_dim == 3
    assert layer.out_dim == 2
    with pytest.raises(ShapeError):
        Layer(np.ones((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        Layer(np.ones((3, 2)), np.zeros(2), "softplus")


def test_projection_net():
    net = ProjectionNet.initialize(10, rng=np.random.default_rng(0))
    assert net.input_dim == 10
    assert net.output_dim == 128
    assert net.layer_spec == [(10, 256, "relu"), (256, 128, "identity")]
    assert net.n_parameters == 10 * 256 + 256 + 256 * 128 + 128
    limit = np.sqrt(6 / (10 + 256))
    assert np.abs(net.layers[0].weight).max() <= limit
    assert (net.layers[0].bias == 0).all()

    same = ProjectionNet.initialize(10, rng=np.random.default_rng(0))
    assert net.equals(same)
    assert not net.equals(ProjectionNet.initialize(10, rng=np.random.default_rng(1)))

    with pytest.raises(ShapeError):
        ProjectionNet([Layer(np.ones((3, 2)), np.zeros(2)), Layer(np.ones((3, 2)), np.zeros(2))])
    with pytest.raises(ShapeError):
        ProjectionNet([Layer(np.ones((3, 2)), np.zeros(2), "relu")])


def test_forward_identity():
    net = ProjectionNet([Layer(np.eye(4), np.zeros(4))])
    x = np.random.default_rng(1).normal(size=(5, 4))
    output, _ = forward(net, x)
    assert np.array_equal(output, x)


def test_forward_zero_weights():
    bias = np.array([1.0, -2.0, 0.5])
    net = ProjectionNet([Layer(np.zeros((4, 3)), bias)])
    output, _ = forward(net, np.random.default_rng(1).normal(size=(6, 4)))
    assert np.array_equal(output, np.tile(bias, (6, 1)))


def test_forward_oracle():
    rng = np.random.default_rng(2)
    net = ProjectionNet.initialize(4, output_dim=2, hidden_dims=(5,), rng=rng)
    net.layers[0].bias[:] = rng.normal(size=5)
    x = rng.normal(size=(3, 4))
    output, _ = forward(net, x)

    w0, b0 = net.layers[0].weight, net.layers[0].bias
    w1, b1 = net.layers[1].weight, net.layers[1].bias
    expected = np.zeros((3, 2))
    for n in range(3):
        hidden = np.zeros(5)
        for j in range(5):
            hidden[j] = max(sum(x[n, i] * w0[i, j] for i in range(4)) + b0[j], 0)
        for k in range(2):
            expected[n, k] = sum(hidden[j] * w1[j, k] for j in range(5)) + b1[k]
    assert_allclose(output, expected, rtol=1e-12)

    output2, _ = forward(net, x)
    assert np.array_equal(output, output2)


def test_forward_shape_mismatch():
    net = ProjectionNet.initialize(4, output_dim=2, hidden_dims=())
    with pytest.raises(ShapeError, match=r"\(3, 5\)"):
        forward(net, np.zeros((3, 5)))


def test_backward_zero_grad():
    rng = np.random.default_rng(3)
    net = ProjectionNet.initialize(4, output_dim=3, hidden_dims=(5,), rng=rng)
    output, tape = forward(net, rng.normal(size=(2, 4)))
    grads = backward(net, tape, np.zeros_like(output))
    for gw, gb in zip(grads.weights, grads.biases):
        assert (gw == 0).all()
        assert (gb == 0).all()
    assert (grads.input == 0).all()


def test_backward_linear_sum():
    rng = np.random.default_rng(4)
    net = ProjectionNet.initialize(4, output_dim=3, hidden_dims=(), rng=rng)
    x = rng.normal(size=(6, 4))
    output, tape = forward(net, x)
    grads = backward(net, tape, np.ones_like(output))
    expected = np.tile(x.sum(axis=0)[:, None], (1, 3))
    assert_allclose(grads.weights[0], expected)
    assert_allclose(grads.biases[0], np.full(3, 6.0))
    for name, grad in grads.as_dict("speech.").items():
        assert grad.shape == net.parameters("speech.")[name].shape


@pytest.mark.parametrize("seed", range(100))
def test_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    assert check_projection_net(rng, "tanh") < 1e-6
    assert check_projection_net(rng, "relu") < 1e-6


def test_backward_stale_tape():
    rng = np.random.default_rng(5)
    net = ProjectionNet.initialize(4, output_dim=3, hidden_dims=(5,), rng=rng)
    output, tape = forward(net, rng.normal(size=(2, 4)))

    with pytest.raises(ShapeError):
        backward(net, tape, np.zeros((3, 3)))

    other = net.copy()
    with pytest.raises(StaleTapeError):
        backward(other, tape, np.zeros_like(output))

    net.mark_updated()
    with pytest.raises(StaleTapeError):
        backward(net, tape, np.zeros_like(output))


def test_backward_tape_of_discarded_net():
    rng = np.random.default_rng(6)
    batch = rng.normal(size=(2, 4))
    serials = set()
    for _ in range(50):
        net = ProjectionNet.initialize(4, output_dim=3, hidden_dims=(5,), rng=rng)
        output, tape = forward(net, batch)
        serials.add(net.serial)
        del net
        replacement = ProjectionNet.initialize(
            4, output_dim=3, hidden_dims=(5,), rng=rng
        )
        serials.add(replacement.serial)
        with pytest.raises(StaleTapeError):
            backward(replacement, tape, np.zeros_like(output))
    assert len(serials) == 100
