"""Per-weight optimizers: plain gradient descent, gradient descent with
momentum, and QuickProp.

QuickProp treats every weight independently. It fits a parabola through the
current and previous gradient of that weight (a secant estimate of the second
derivative) and jumps to the parabola's stationary point:

    step = g / (g_prev - g) * prev_step

Three situations are handled specially: a shrinking same-sign gradient takes
the parabola step as-is; opposite signs produce a backwards step into the
bracketed minimum; and a growing (or equal) same-sign gradient would give an
infinite or wrong-direction step, so it is replaced by ``mu`` times the
previous step. Any parabola step whose size exceeds ``mu`` times the previous
step is clamped the same way. A plain descent step is used to ignite the
process, whenever the gradient magnitude falls below ``gradient_threshold``,
and for weights whose previous step was exactly zero; on top of that, a
descent term is added whenever current and previous gradient share their sign.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStepError, DimensionError, NumericError, ParameterError


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 0.01
    mu: float = 1.75
    momentum: float = 0.9
    gradient_threshold: float = 1e-15
    # Ablation switch for the same-sign descent term added on top of the
    # parabola step (applied in both the plain and the clamped case).
    gradient_addition: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.mu <= 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.gradient_threshold <= 0:
            raise ParameterError(
                f"gradient_threshold must be > 0, got {self.gradient_threshold}"
            )


class StepCase(enum.Enum):
    QUADRATIC = "quadratic"
    REVERSAL = "reversal"
    CLAMPED = "clamped"


def gd_step(w, g, learning_rate: float):
    """Descent step w - learning_rate * g (scalar or elementwise on arrays)."""
    if learning_rate <= 0:
        raise ParameterError(f"learning_rate must be > 0, got {learning_rate}")
    return w - learning_rate * g


def momentum_step(w, g, prev_step, learning_rate: float, momentum: float):
    """Returns (new_w, step) with step = momentum * prev_step - lr * g."""
    if not 0.0 <= momentum < 1.0:
        raise ParameterError(f"momentum must be in [0, 1), got {momentum}")
    step = momentum * prev_step - learning_rate * g
    return w + step, step


def second_derivative_estimate(g_t: float, g_prev: float, dw_prev: float) -> float:
    """Secant estimate (g_t - g_prev) / dw_prev of the loss curvature."""
    if dw_prev == 0.0:
        raise DegenerateStepError("previous step is zero; secant estimate undefined")
    return (g_t - g_prev) / dw_prev


def _same_sign(a: float, b: float) -> bool:
    # Zero matches no sign, so a zero previous gradient disables both the
    # quadratic case and the same-sign descent addition.
    return (a > 0 and b > 0) or (a < 0 and b < 0)


def quickprop_raw_step(g_t: float, g_prev: float, dw_prev: float, mu: float):
    """One QuickProp parabola step for a single weight.

    Returns (step, case). ``dw_prev`` must be nonzero; the caller is expected
    to fall back to plain descent when it is not.
    """
    if dw_prev == 0.0:
        raise DegenerateStepError("previous step is zero; parabola step undefined")
    same = _same_sign(g_t, g_prev)
    if g_t == g_prev or (same and abs(g_t) >= abs(g_prev)):
        # Infinite or wrong-direction step; keep moving the way we came.
        return mu * dw_prev, StepCase.CLAMPED
    dw = g_t / (g_prev - g_t) * dw_prev
    if abs(dw) > mu * abs(dw_prev):
        return mu * dw_prev, StepCase.CLAMPED
    return dw, StepCase.QUADRATIC if same else StepCase.REVERSAL


@dataclass
class ParabolaCoeffs:
    """Local model p(z) = a*(z - w)^2 + b*(z - w) + c around the current w."""

    a: float
    b: float
    c: float

    def vertex_offset(self) -> float:
        """Offset of the stationary point from the current weight."""
        if self.a == 0.0:
            raise DegenerateStepError("flat parabola has no vertex")
        return -self.b / (2.0 * self.a)


def parabola_coefficients(loss_t: float, g_t: float, g_prev: float, dw_prev: float):
    if dw_prev == 0.0:
        raise DegenerateStepError("previous step is zero; parabola undefined")
    return ParabolaCoeffs(a=0.5 * (g_t - g_prev) / dw_prev, b=g_t, c=loss_t)


@dataclass
class QuickPropState:
    """Previous gradient and step per weight; unused until ignition."""

    prev_gradient: np.ndarray
    prev_step: np.ndarray
    ignited: bool = False

    @classmethod
    def zeros(cls, num_parameters: int) -> "QuickPropState":
        return cls(np.zeros(num_parameters), np.zeros(num_parameters))


def quickprop_update(weights, gradient, state: QuickPropState, cfg: OptimConfig):
    """Vectorized QuickProp update over a flat weight vector.

    Returns the new weights; ``state`` is updated in place. Every component
    follows the scalar case analysis of :func:`quickprop_raw_step` plus the
    descent fallback and same-sign addition.
    """
    weights = np.asarray(weights, dtype=np.float64)
    g = np.ascontiguousarray(gradient, dtype=np.float64)
    if weights.shape != g.shape or weights.shape != state.prev_step.shape:
        raise DimensionError(
            f"weights {weights.shape}, gradient {g.shape} and state "
            f"{state.prev_step.shape} must all have the same length"
        )
    bad = ~np.isfinite(g)
    if bad.any():
        idx = int(np.argmax(bad))
        raise NumericError(f"non-finite gradient component at index {idx}: {g[idx]}")

    lr = cfg.learning_rate
    if not state.ignited:
        step = -lr * g
    else:
        gp, sp = state.prev_gradient, state.prev_step
        fallback = (np.abs(g) < cfg.gradient_threshold) | (sp == 0.0)
        same = ((g > 0) & (gp > 0)) | ((g < 0) & (gp < 0))
        growing = (g == gp) | (same & (np.abs(g) >= np.abs(gp)))
        denom = gp - g
        # Overflow/NaN in the raw step only happens on lanes that the clamp
        # or the fallback overwrite below, so mute the warnings here.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            raw = g / np.where(denom == 0.0, 1.0, denom) * sp
            clamp = cfg.mu * sp
            oversized = np.abs(raw) > cfg.mu * np.abs(sp)
            step = np.where(growing | oversized, clamp, raw)
            if cfg.gradient_addition:
                step = step + np.where(same, -lr * g, 0.0)
            step = np.where(fallback, -lr * g, step)

    state.prev_gradient = g.copy()
    state.prev_step = step
    state.ignited = True
    return weights + step


class GradientDescentOptimizer:
    """Stateless fixed-rate descent."""

    name = "gd"

    def __init__(self, cfg: OptimConfig):
        self.cfg = cfg

    def update(self, weights, gradient):
        return gd_step(weights, gradient, self.cfg.learning_rate)


class MomentumOptimizer:
    name = "momentum"

    def __init__(self, cfg: OptimConfig, num_parameters: int):
        self.cfg = cfg
        self.prev_step = np.zeros(num_parameters)

    def update(self, weights, gradient):
        new_w, step = momentum_step(
            weights, gradient, self.prev_step, self.cfg.learning_rate, self.cfg.momentum
        )
        self.prev_step = step
        return new_w


class QuickPropOptimizer:
    name = "quickprop"

    def __init__(self, cfg: OptimConfig, num_parameters: int):
        self.cfg = cfg
        self.state = QuickPropState.zeros(num_parameters)

    def update(self, weights, gradient):
        return quickprop_update(weights, gradient, self.state, self.cfg)


OPTIMIZER_NAMES = ("gd", "momentum", "quickprop")


def make_optimizer(name: str, cfg: OptimConfig, num_parameters: int):
    if name == "gd":
        return GradientDescentOptimizer(cfg)
    if name == "momentum":
        return MomentumOptimizer(cfg, num_parameters)
    if name == "quickprop":
        return QuickPropOptimizer(cfg, num_parameters)
    raise ParameterError(f"unknown optimizer {name!r}; expected one of {OPTIMIZER_NAMES}")
