"""GEC-SR message passing: quantized denoiser -> linear -> prior denoiser -> linear."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .denoisers import GaussianMessage, PosteriorMoments, extrinsic, prior_denoise, quantized_denoise
from .linear import linear_estimate

log = logging.getLogger(__name__)


class DivergedError(FloatingPointError):
    """A message went non-finite; ``state`` holds the last finite state."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class GecConfig:
    max_iters: int = 50
    damping: float = 0.0
    convergence_tol: float = 1e-8
    record_history: bool = True
    linear_path: str = "auto"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0.0 <= self.damping <= 1.0):
            raise ValueError("damping must lie in [0, 1]")


@dataclass
class IterationRecord:
    iteration: int
    mse: float
    mse_db: float
    v_1x: float
    v_2x: float
    v_1z: float
    v_2z: float
    clamp_events: int
    x_hat: np.ndarray = None


@dataclass
class GecState:
    msg_1z: GaussianMessage
    msg_2z: GaussianMessage
    msg_1x: GaussianMessage
    msg_2x: GaussianMessage
    x_hat: np.ndarray
    iteration: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    @property
    def mse_db_trajectory(self):
        return np.array([h.mse_db for h in self.history])


def mse(x_true, x_hat):
    """||x - x_hat||^2 / N."""
    x_true = np.asarray(x_true)
    x_hat = np.asarray(x_hat)
    if x_true.shape != x_hat.shape:
        raise ValueError(f"length mismatch {x_true.shape} vs {x_hat.shape}")
    d = x_true - x_hat
    return float(np.vdot(d, d).real / len(d))


def to_db(value):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(value)


def _damp(new, old, d):
    """Blend precision and precision-weighted mean; keep the clamp flag."""
    if d == 0.0 or old is None:
        return new
    prec = (1.0 - d) / new.var + d / old.var
    pm = (1.0 - d) * new.mean / new.var + d * old.mean / old.var
    return GaussianMessage(pm / prec, 1.0 / prec, new.clamped)


def _finite(msg):
    return np.isfinite(msg.var) and bool(np.all(np.isfinite(msg.mean)))


def _checked(msg, name, state):
    if not _finite(msg):
        raise DivergedError(f"non-finite {name} at iteration {state.iteration + 1}", state)
    return msg


def initial_state(matrix, prior):
    P_x = prior.second_moment
    if matrix.has_svd:
        power = float(np.sum(matrix.spectrum))
    else:
        power = float(np.sum(np.abs(matrix.entries) ** 2))
    P_z = P_x * power / matrix.m
    msg_1z = GaussianMessage(np.zeros(matrix.m, dtype=complex), P_z)
    msg_2x = GaussianMessage(np.zeros(matrix.n, dtype=complex), P_x)
    return GecState(msg_1z=msg_1z, msg_2z=None, msg_1x=None, msg_2x=msg_2x,
                    x_hat=np.zeros(matrix.n, dtype=complex))


def gec_sr_step(state, matrix, y_quantized, quantizer, sigma2, prior, config):
    """One pass of the A -> C -> B -> C schedule. Returns (new_state, clamp_count)."""
    d = config.damping
    path = config.linear_path
    clamps = 0

    # A: quantized-output denoiser on z
    post_z = quantized_denoise(state.msg_1z, y_quantized, quantizer, sigma2)
    msg_2z = _checked(_damp(extrinsic(post_z, state.msg_1z), state.msg_2z, d), "msg_2z", state)
    clamps += msg_2z.clamped

    # C: x from the linear space
    lin = linear_estimate(matrix, state.msg_2x, msg_2z, path)
    msg_1x = _damp(extrinsic(PosteriorMoments(lin.x_mean, lin.x_avg_var), state.msg_2x), state.msg_1x, d)
    msg_1x = _checked(msg_1x, "msg_1x", state)
    clamps += msg_1x.clamped

    # B: prior denoiser on x
    post_x = prior_denoise(msg_1x, prior)
    msg_2x = _checked(_damp(extrinsic(post_x, msg_1x), state.msg_2x, d), "msg_2x", state)
    clamps += msg_2x.clamped

    # C again: x is re-estimated with the refreshed msg_2x before forming z
    lin = linear_estimate(matrix, msg_2x, msg_2z, path)
    msg_1z = _damp(extrinsic(PosteriorMoments(lin.z_mean, lin.z_avg_var), msg_2z), state.msg_1z, d)
    msg_1z = _checked(msg_1z, "msg_1z", state)
    clamps += msg_1z.clamped

    new = GecState(msg_1z=msg_1z, msg_2z=msg_2z, msg_1x=msg_1x, msg_2x=msg_2x,
                   x_hat=post_x.mean, iteration=state.iteration + 1, history=state.history)
    return new, int(clamps)


def gec_sr_run(matrix, y_quantized, quantizer, sigma2, prior, config=None, x_true=None):
    """Run GEC-SR until max_iters or until x_hat stops moving.

    Raises DivergedError carrying the last finite state if any message turns NaN/Inf.
    """
    config = GecConfig() if config is None else config
    y_quantized = np.asarray(y_quantized, dtype=complex)
    if y_quantized.shape != (matrix.m,):
        raise ValueError(f"y has shape {y_quantized.shape}, expected ({matrix.m},)")
    if x_true is not None and len(x_true) != matrix.n:
        raise ValueError("x_true length does not match the matrix")
    if config.damping > 0:
        log.info("running GEC-SR with damping %.3g", config.damping)

    state = initial_state(matrix, prior)
    for _ in range(config.max_iters):
        prev_x = state.x_hat
        with np.errstate(over="ignore", invalid="ignore"):
            new, clamps = gec_sr_step(state, matrix, y_quantized, quantizer, sigma2, prior, config)
        if not all(_finite(m) for m in (new.msg_1z, new.msg_2z, new.msg_1x, new.msg_2x)):
            raise DivergedError(f"non-finite message at iteration {new.iteration}", state)
        state = new
        if config.record_history:
            err = mse(x_true, state.x_hat) if x_true is not None else np.nan
            state.history.append(IterationRecord(
                state.iteration, err, to_db(err),
                state.msg_1x.var, state.msg_2x.var, state.msg_1z.var, state.msg_2z.var, clamps))
        norm = np.linalg.norm(state.x_hat)
        if config.convergence_tol > 0 and norm > 0 and state.iteration > 1:
            if np.linalg.norm(state.x_hat - prev_x) / norm < config.convergence_tol:
                state.converged = True
                break
    return state
