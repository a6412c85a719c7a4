"""Finite-difference verification of the hand-derived gradients"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional
import logging
import numpy as np

from emoretrieval.common.basic import unique_first_mask
from emoretrieval.nn.base import ProjectionNet, backward, forward
from emoretrieval.objective import LossConfig, Objective
from emoretrieval.sampling import TripletBatch

__all__ = [
    "relative_error",
    "numeric_gradient",
    "GradcheckResult",
    "check_projection_net",
    "check_objective",
    "random_triplet_batch",
    "run_gradcheck",
]

logger = logging.getLogger(__name__)

STEP = 1e-6
TOLERANCE = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a|, |n|, 1e-8)`` with Euclidean norms"""
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(
    function: Callable[[], float], array: np.ndarray, h: float = STEP
) -> np.ndarray:
    """Central-difference gradient of ``function()`` with respect to the
    entries of ``array``, which is perturbed in place and restored"""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = function()
        flat[i] = original - h
        lower = function()
        flat[i] = original
        flat_grad[i] = (upper - lower) / (2 * h)
    return grad


@dataclass
class GradcheckResult:
    name: str
    max_error: float
    n_trials: int
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def check_projection_net(rng: np.random.Generator, activation: str = "tanh") -> float:
    """Largest relative error over every parameter and the input of a small
    random network, for the loss ``sum(output * weights)`` with random
    weights"""
    net = ProjectionNet.initialize(
        4, output_dim=3, hidden_dims=(5,), activation=activation, rng=rng
    )
    for layer in net.layers:
        layer.bias[:] = rng.normal(size=layer.bias.shape)
    batch = rng.normal(size=(3, 4))
    weights = rng.normal(size=(3, 3))

    def loss():
        return float(np.sum(forward(net, batch)[0] * weights))

    output, tape = forward(net, batch)
    grads = backward(net, tape, weights)
    errors = [relative_error(grads.input, numeric_gradient(loss, batch))]
    for name, param in net.parameters().items():
        analytic = grads.as_dict()[name]
        errors.append(relative_error(analytic, numeric_gradient(loss, param)))
    return max(errors)


def random_triplet_batch(
    rng: np.random.Generator, n: int = 4, n_labels: int = 3, n_tags: int = 3
) -> TripletBatch:
    """TripletBatch over embedding rows (anchors and positives first), with
    labels drawn from a small random label similarity table so that ``S_y``
    repeats values within rows"""
    label_similarity = rng.uniform(size=(n_labels, n_labels))
    anchor_labels = rng.integers(n_labels, size=n)
    positive_labels = rng.integers(n_labels, size=n)
    S_y = label_similarity[anchor_labels][:, positive_labels]
    rows = np.arange(n)
    return TripletBatch(
        anchors=rows,
        positives=rows,
        negatives=rows + n,
        speech_negatives=rows + n,
        anchor_tags=rng.integers(n_tags, size=n),
        positive_tags=rng.integers(n_tags, size=n),
        S_y=S_y,
        unique_mask=unique_first_mask(S_y),
    )


def check_objective(
    objective: Objective, rng: np.random.Generator, n: int = 4, dim: int = 5
) -> float:
    """Largest relative error of the speech, music and (if used) tag
    embedding gradients of ``objective`` on a random batch"""
    n_tags = 3
    batch = random_triplet_batch(rng, n=n, n_tags=n_tags)
    embeddings = dict(
        speech=rng.normal(size=(2 * n, dim)),
        music=rng.normal(size=(2 * n, dim)),
    )
    if objective.requires_tags:
        embeddings["tags"] = rng.normal(size=(n_tags, dim))

    def loss():
        return objective(
            embeddings["speech"], embeddings["music"], batch, embeddings.get("tags")
        ).loss

    result = objective(
        embeddings["speech"], embeddings["music"], batch, embeddings.get("tags")
    )
    analytic = dict(speech=result.grad_speech, music=result.grad_music, tags=result.grad_tags)
    return max(
        relative_error(analytic[name], numeric_gradient(loss, array))
        for name, array in embeddings.items()
    )


def run_gradcheck(
    n_trials: int = 100,
    seed: int = 0,
    loss_config: Optional[LossConfig] = None,
    tolerance: float = TOLERANCE,
) -> List[GradcheckResult]:
    """Run the suite: the projection network (tanh and ReLU hidden layers)
    and every Objective, each on ``n_trials`` random configurations

    Returns
    -------
    list of GradcheckResult
        One per checked component, with the worst error over the trials
    """
    loss_config = loss_config if loss_config is not None else LossConfig()
    rng = np.random.default_rng(seed)
    checks: Dict[str, Callable[[np.random.Generator], float]] = {
        "ProjectionNet[tanh]": lambda r: check_projection_net(r, "tanh"),
        "ProjectionNet[relu]": lambda r: check_projection_net(r, "relu"),
    }
    for subclass in Objective.__subclasses__():
        objective = subclass(loss_config)
        checks[objective.name] = lambda r, o=objective: check_objective(o, r)

    results = []
    for name, check in checks.items():
        worst = max(check(rng) for _ in range(n_trials))
        result = GradcheckResult(name, worst, n_trials, tolerance)
        log = logger.info if result.passed else logger.error
        log(f"{name}: max relative error {worst:.3e} over {n_trials} trials")
        results.append(result)
    return results
