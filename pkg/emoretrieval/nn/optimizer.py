"""AdamW with decoupled weight decay"""
from typing import Dict, Mapping
import logging
import numpy as np

from emoretrieval.exceptions import NonFiniteError, ShapeError

__all__ = ["AdamW", "adamw_step"]

logger = logging.getLogger(__name__)


class AdamW:
    def __init__(
        self,
        params: Mapping[str, np.ndarray],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        """State of the AdamW optimizer: first and second moment estimates
        per named parameter and the step counter

            m_t = beta1 m_{t-1} + (1 - beta1) g_t
            v_t = beta2 v_{t-1} + (1 - beta2) g_t^2
            theta_t = theta_{t-1} - lr weight_decay theta_{t-1}
                      - lr m_t / (1 - beta1^t) / (sqrt(v_t / (1 - beta2^t)) + eps)

        Parameters
        ----------
        params : dict
            Parameter arrays by name, used to shape the moments
        lr : float
            Learning rate
        beta1, beta2 : float
            Decay rates of the moment estimates, in [0, 1)
        eps : float
            Added to the denominator for numerical stability
        weight_decay : float
            Decoupled weight decay coefficient
        """
        if lr <= 0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError(f"Invalid betas: ({beta1}, {beta2})")
        if eps < 0 or weight_decay < 0:
            raise ValueError(f"Invalid eps {eps} or weight_decay {weight_decay}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.exp_avg: Dict[str, np.ndarray] = {}
        self.exp_avg_sq: Dict[str, np.ndarray] = {}
        for name, param in params.items():
            self.exp_avg[name] = np.zeros_like(param, dtype=np.float64)
            self.exp_avg_sq[name] = np.zeros_like(param, dtype=np.float64)

    @property
    def parameter_names(self):
        return list(self.exp_avg.keys())

    def step(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
    ) -> Mapping[str, np.ndarray]:
        """Update ``params`` in place from ``grads`` and return them.

        Every gradient is checked before any parameter is touched, so an
        aborted step leaves parameters and moments unchanged.
        """
        if set(params) != set(self.exp_avg) or set(grads) != set(self.exp_avg):
            raise ShapeError(
                "Parameter names do not match the optimizer state: "
                f"{sorted(set(params) ^ set(self.exp_avg))}"
            )
        for name in self.exp_avg:
            if grads[name].shape != params[name].shape:
                raise ShapeError(
                    f"Gradient of {name} has shape {grads[name].shape}, "
                    f"parameter has {params[name].shape}"
                )
            if params[name].shape != self.exp_avg[name].shape:
                raise ShapeError(
                    f"Parameter {name} has shape {params[name].shape}, "
                    f"optimizer state has {self.exp_avg[name].shape}"
                )
            if not np.isfinite(grads[name]).all():
                raise NonFiniteError(f"Non-finite gradient for parameter {name}")

        self.step_count += 1
        t = self.step_count
        bias_correction1 = 1.0 - self.beta1 ** t
        bias_correction2 = 1.0 - self.beta2 ** t
        for name, param in params.items():
            grad = grads[name]
            m = self.exp_avg[name]
            v = self.exp_avg_sq[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / bias_correction1
            v_hat = v / bias_correction2
            param -= self.lr * self.weight_decay * param
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def state_dict(self) -> dict:
        return dict(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
            step_count=self.step_count,
            exp_avg={k: v.copy() for k, v in self.exp_avg.items()},
            exp_avg_sq={k: v.copy() for k, v in self.exp_avg_sq.items()},
        )

    @classmethod
    def from_state_dict(cls, state: dict) -> "AdamW":
        obj = cls(
            state["exp_avg"],
            lr=state["lr"],
            beta1=state["beta1"],
            beta2=state["beta2"],
            eps=state["eps"],
            weight_decay=state["weight_decay"],
        )
        obj.step_count = state["step_count"]
        obj.exp_avg = {k: np.array(v, dtype=np.float64) for k, v in state["exp_avg"].items()}
        obj.exp_avg_sq = {
            k: np.array(v, dtype=np.float64) for k, v in state["exp_avg_sq"].items()
        }
        return obj


def adamw_step(
    state: AdamW, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
) -> Mapping[str, np.ndarray]:
    """Functional form of ``AdamW.step``"""
    return state.step(params, grads)
