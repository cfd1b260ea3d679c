"""Parameter update rules: plain SGD (optional momentum) and Adam.

The step functions mutate the parameter and state arrays in place and also
return them. Updates are elementwise and deterministic; an optional
max-norm gradient clip can be enabled per config.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass
class SgdConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if self.epsilon <= 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class AdamState:
    """Per-parameter Adam moments and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    config: AdamConfig = field(default_factory=AdamConfig)

    @classmethod
    def for_param(cls, param: np.ndarray, config: AdamConfig | None = None):
        return cls(m=np.zeros_like(param), v=np.zeros_like(param),
                   t=0, config=config or AdamConfig())


def _check_pair(params, grads):
    if params.shape != grads.shape:
        raise DimensionError(
            f"params shape {params.shape} != grads shape {grads.shape}"
        )


def _clipped(grads, clip_norm):
    if clip_norm is None:
        return grads
    norm = float(np.sqrt(np.sum(grads.astype(np.float64) ** 2)))
    if norm <= clip_norm:
        return grads
    return grads * grads.dtype.type(clip_norm / norm)


def sgd_step(params, grads, velocity, config: SgdConfig):
    """v <- momentum*v + g; theta <- theta - lr*v."""
    _check_pair(params, grads)
    _check_pair(params, velocity)
    g = _clipped(grads, config.clip_norm)
    velocity *= config.momentum
    velocity += g
    params -= config.learning_rate * velocity
    return params, velocity


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update; increments state.t by exactly 1."""
    _check_pair(params, grads)
    _check_pair(params, state.m)
    cfg = state.config
    g = _clipped(grads, cfg.clip_norm)
    state.t += 1
    state.m *= cfg.beta1
    state.m += (1.0 - cfg.beta1) * g
    state.v *= cfg.beta2
    state.v += (1.0 - cfg.beta2) * (g * g)
    m_hat = state.m / (1.0 - cfg.beta1 ** state.t)
    v_hat = state.v / (1.0 - cfg.beta2 ** state.t)
    params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params, state


class SGD:
    """SGD over a list of parameter arrays, with one velocity each."""

    def __init__(self, params: list, config: SgdConfig | None = None):
        self.params = list(params)
        self.config = config or SgdConfig()
        self.velocities = [np.zeros_like(p) for p in self.params]

    def step(self, grads: list) -> None:
        if len(grads) != len(self.params):
            raise DimensionError(
                f"expected {len(self.params)} gradients, got {len(grads)}"
            )
        for p, g, v in zip(self.params, grads, self.velocities):
            sgd_step(p, g, v, self.config)


class Adam:
    """Adam over a list of parameter arrays, with one state each."""

    def __init__(self, params: list, config: AdamConfig | None = None):
        self.params = list(params)
        self.config = config or AdamConfig()
        self.states = [AdamState.for_param(p, self.config) for p in self.params]

    def step(self, grads: list) -> None:
        if len(grads) != len(self.params):
            raise DimensionError(
                f"expected {len(self.params)} gradients, got {len(grads)}"
            )
        for p, g, s in zip(self.params, grads, self.states):
            adam_step(p, g, s)
