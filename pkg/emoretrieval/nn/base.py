from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np

from emoretrieval.exceptions import NonFiniteError, ShapeError, StaleTapeError

__all__ = [
    "Activation",
    "ACTIVATIONS",
    "Layer",
    "ProjectionNet",
    "Tape",
    "Gradients",
    "forward",
    "backward",
]


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity and its derivative (expressed in terms of the
    pre-activation ``z`` and the activation ``a``)"""

    name: str
    function: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray, np.ndarray], np.ndarray]


ACTIVATIONS: Dict[str, Activation] = {
    "relu": Activation(
        "relu",
        lambda z: np.maximum(z, 0.0),
        lambda z, a: (z > 0).astype(np.float64),
    ),
    "tanh": Activation("tanh", np.tanh, lambda z, a: 1.0 - a * a),
    "identity": Activation("identity", lambda z: z, lambda z, a: np.ones_like(z)),
}


def _get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"No activation named {name}") from None


@dataclass
class Layer:
    """Affine map ``x @ weight + bias`` followed by an activation.

    weight has shape (in_dim, out_dim); bias has shape (out_dim,)
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"Layer weight {self.weight.shape} incompatible "
                f"with bias {self.bias.shape}"
            )
        _get_activation(self.activation)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


class ProjectionNet:
    _serials = count()

    def __init__(self, layers: Sequence[Layer]):
        """Multilayer perceptron projecting frozen encoder features into the
        joint embedding space

        Parameters
        ----------
        layers : list of Layer
            Layers in application order. Dimensions must chain and the final
            layer must be linear (identity activation).
        """
        if len(layers) == 0:
            raise ShapeError("ProjectionNet requires at least one layer")
        for previous, layer in zip(layers[:-1], layers[1:]):
            if previous.out_dim != layer.in_dim:
                raise ShapeError(
                    f"Layer dims do not chain: {previous.weight.shape} "
                    f"-> {layer.weight.shape}"
                )
        if layers[-1].activation != "identity":
            raise ShapeError("Final layer of a ProjectionNet must be linear")
        self.layers = list(layers)
        self._version = 0
        self.serial = next(ProjectionNet._serials)

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        output_dim: int = 128,
        hidden_dims: Sequence[int] = (256,),
        activation: str = "relu",
        rng: Optional[np.random.Generator] = None,
    ):
        """Create a network with Glorot-uniform weights, drawn in layer order
        from ``rng``, and zero biases

        Parameters
        ----------
        input_dim : int
            Dimension of the ingested feature vectors
        output_dim : int
            Dimension of the joint embedding space
        hidden_dims : sequence of int
            Width of every hidden layer. Empty for a single linear layer.
        activation : str
            Nonlinearity of the hidden layers
        rng : numpy.random.Generator
            Source of randomness. A fresh default_rng(0) if None.

        Returns
        -------
        ProjectionNet
        """
        if rng is None:
            rng = np.random.default_rng(0)
        dims = [input_dim, *hidden_dims, output_dim]
        if min(dims) <= 0:
            raise ShapeError(f"All layer dims must be positive: {dims}")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            last = i == len(dims) - 2
            layers.append(
                Layer(weight, np.zeros(fan_out), "identity" if last else activation)
            )
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def layer_spec(self) -> List[Tuple[int, int, str]]:
        return [(l.in_dim, l.out_dim, l.activation) for l in self.layers]

    @property
    def n_parameters(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    @property
    def version(self) -> int:
        """Incremented every time the parameters are updated in place"""
        return self._version

    def mark_updated(self):
        self._version += 1

    def parameters(self, prefix: str = "") -> Dict[str, np.ndarray]:
        """Parameter arrays by name (the arrays themselves, not copies), so
        an optimizer can update them in place"""
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"{prefix}{i}.weight"] = layer.weight
            params[f"{prefix}{i}.bias"] = layer.bias
        return params

    def copy(self) -> "ProjectionNet":
        return ProjectionNet(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def equals(self, other: "ProjectionNet") -> bool:
        """Bitwise equality of architecture and parameters"""
        if self.layer_spec != other.layer_spec:
            return False
        return all(
            np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return forward(self, batch)[0]

    def __repr__(self):
        spec = " -> ".join(f"{i}x{o}({a})" for i, o, a in self.layer_spec)
        return f"ProjectionNet({spec})"


@dataclass
class Tape:
    """Intermediate values of one forward pass.

    ``inputs[l]`` is the input of layer l, ``pre_activations[l]`` and
    ``activations[l]`` its affine output before and after the nonlinearity.
    """

    net_serial: int
    version: int
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)

    @property
    def output_shape(self) -> Tuple[int, int]:
        return self.activations[-1].shape


@dataclass
class Gradients:
    """Gradients of a scalar loss with respect to the parameters of a
    ProjectionNet and to its input batch"""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input: np.ndarray

    def as_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        """Named like ``ProjectionNet.parameters``"""
        grads = {}
        for i, (gw, gb) in enumerate(zip(self.weights, self.biases)):
            grads[f"{prefix}{i}.weight"] = gw
            grads[f"{prefix}{i}.bias"] = gb
        return grads


def _as_batch(batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ShapeError(f"Expected a 2D batch, got shape {batch.shape}")
    return batch


def forward(net: ProjectionNet, batch: np.ndarray) -> Tuple[np.ndarray, Tape]:
    """Apply the network to a batch of feature vectors

    Parameters
    ----------
    net : ProjectionNet
    batch : ndarray
        Shape (n_items, net.input_dim)

    Returns
    -------
    output : ndarray
        Shape (n_items, net.output_dim)
    tape : Tape
        Record required by ``backward``
    """
    batch = _as_batch(batch)
    if batch.shape[1] != net.input_dim:
        raise ShapeError(
            f"Batch shape {batch.shape} does not match net input_dim {net.input_dim}"
        )
    tape = Tape(net_serial=net.serial, version=net.version)
    x = batch
    for layer in net.layers:
        activation = _get_activation(layer.activation)
        z = x @ layer.weight + layer.bias
        a = activation.function(z)
        tape.inputs.append(x)
        tape.pre_activations.append(z)
        tape.activations.append(a)
        x = a
    if not np.isfinite(x).all():
        raise NonFiniteError(f"Non-finite values in the output of {net!r}")
    return x, tape


def backward(net: ProjectionNet, tape: Tape, output_grad: np.ndarray) -> Gradients:
    """Backpropagate the gradient of a scalar loss with respect to the
    network output

    Parameters
    ----------
    net : ProjectionNet
        Network that produced ``tape``, unmodified since
    tape : Tape
        Record returned by ``forward``
    output_grad : ndarray
        dLoss/dOutput, same shape as the forward output

    Returns
    -------
    Gradients
    """
    if tape.net_serial != net.serial or tape.version != net.version:
        raise StaleTapeError("Tape was recorded on another network or parameter state")
    output_grad = _as_batch(output_grad)
    if output_grad.shape != tape.output_shape:
        raise ShapeError(
            f"output_grad shape {output_grad.shape} does not match "
            f"forward output shape {tape.output_shape}"
        )
    n_layers = len(net.layers)
    grad_weights = [None] * n_layers
    grad_biases = [None] * n_layers
    grad = output_grad
    for i in reversed(range(n_layers)):
        layer = net.layers[i]
        activation = _get_activation(layer.activation)
        dz = grad * activation.derivative(tape.pre_activations[i], tape.activations[i])
        grad_weights[i] = tape.inputs[i].T @ dz
        grad_biases[i] = dz.sum(axis=0)
        grad = dz @ layer.weight.T
    return Gradients(grad_weights, grad_biases, grad)
