"""Time integrators for dynamical low-rank approximation.

Two first-order projector-splitting steppers share the factored state
``U G V^T``:

* :func:`ksl_step` updates ``K = U G``, then ``G`` backward in time, then
  ``L = V G^T``.
* :func:`chart_step` works in chart coordinates around the current point and
  updates ``H`` (forward), then ``X``, then ``Y``.

Neither stepper inverts the core matrix, so an over-estimated rank (singular
core) is fine. :func:`euler_step` is the full-rank explicit reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from . import linalg
from .errors import ConfigError, DimensionError, NonFiniteError
from .manifold import LowRankState

log = logging.getLogger(__name__)

METHODS = ("ksl", "chart", "euler")
STEP_COUNT_RTOL = 1e-9


@dataclass(frozen=True)
class FluxField:
    """Right-hand side ``F(Z, t)`` of the matrix ODE.

    With ``increment_mode`` set, ``eval(z, t, dt)`` must return the whole
    step increment ``dt * F`` itself (e.g. ``A(t + dt) - A(t)``); otherwise
    ``eval(z, t)`` returns ``F`` and the integrators scale it by ``dt``.
    """

    eval: Callable
    increment_mode: bool = False

    def scaled(self, z: np.ndarray, t: float, dt: float) -> np.ndarray:
        """Return ``dt * F(z, t)``."""
        if self.increment_mode:
            return self.eval(z, t, dt)
        return dt * self.eval(z, t)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str
    rank: int
    dt: float
    t_final: float
    seed: int = 0
    store_stride: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.dt <= 0 or self.t_final <= 0:
            raise ConfigError("dt and t_final must be positive")
        if self.rank < 1 and self.method != "euler":
            raise ConfigError("rank must be positive")
        if self.store_stride < 1:
            raise ConfigError("store_stride must be >= 1")
        self.num_steps  # validates divisibility

    @property
    def num_steps(self) -> int:
        k = int(round(self.t_final / self.dt))
        if k < 1 or abs(k * self.dt - self.t_final) > STEP_COUNT_RTOL * self.t_final:
            raise ConfigError(f"t_final={self.t_final} is not a multiple of dt={self.dt}")
        return k


@dataclass
class TrajectoryRecord:
    """Stored states of one integration run.

    ``states`` holds ``LowRankState`` for the splitting methods and dense
    arrays for Euler. ``sigma_min``/``sigma_max`` are the extreme singular
    values of the core (NaN for Euler). ``errors`` is filled when a
    reference was supplied to :func:`integrate`.
    """

    steps: np.ndarray
    times: np.ndarray
    states: list
    sigma_min: np.ndarray
    sigma_max: np.ndarray
    errors: Optional[np.ndarray] = None
    dt: float = 0.0
    method: str = ""
    rank: int = 0
    meta: dict = field(default_factory=dict)

    def dense(self, i: int) -> np.ndarray:
        s = self.states[i]
        return s.to_dense() if isinstance(s, LowRankState) else s

    @property
    def final(self) -> np.ndarray:
        return self.dense(-1)


class KslSubsteps(NamedTuple):
    k1: np.ndarray
    u1: np.ndarray
    g_hat: np.ndarray
    g_tilde: np.ndarray
    l1: np.ndarray
    state: LowRankState


class ChartSubsteps(NamedTuple):
    h_hat: np.ndarray
    k1: np.ndarray
    u1: np.ndarray
    h_tilde: np.ndarray
    l1: np.ndarray
    state: LowRankState


def initial_state(a0, r: int) -> LowRankState:
    """Best rank-``r`` approximation of ``a0``.

    For ``a0 == 0`` the factors are the first ``r`` canonical basis vectors
    and the core is zero.
    """
    a0 = linalg.as_matrix(a0, "a0")
    n, m = a0.shape
    if not 1 <= r <= min(n, m):
        raise DimensionError(f"rank {r} out of range for shape {a0.shape}")
    if not a0.any():
        return LowRankState(np.eye(n, r), np.zeros((r, r)), np.eye(m, r))
    return linalg.truncated_svd(a0, r)


def ksl_substeps(state: LowRankState, flux: FluxField, t: float, dt: float) -> KslSubsteps:
    """One KSL step, returning the intermediate quantities as well."""
    u0, g0, v0 = state.u, state.g, state.v
    # K-step
    k1 = u0 @ g0 + flux.scaled(state.to_dense(), t, dt) @ v0
    u1, g_hat = linalg.qr_thin(k1)
    # S-step, backward in time
    g_tilde = g_hat - u1.T @ flux.scaled(u1 @ g_hat @ v0.T, t, dt) @ v0
    # L-step
    l1 = v0 @ g_tilde.T + flux.scaled(u1 @ g_tilde @ v0.T, t, dt).T @ u1
    v1, g1t = linalg.qr_thin(l1)
    return KslSubsteps(k1, u1, g_hat, g_tilde, l1, LowRankState(u1, g1t.T, v1))


def ksl_step(state: LowRankState, flux: FluxField, t: float, dt: float) -> LowRankState:
    return ksl_substeps(state, flux, t, dt).state


def chart_substeps(state: LowRankState, flux: FluxField, t: float, dt: float) -> ChartSubsteps:
    """One chart-based step, returning the intermediate quantities as well.

    The complements ``U_perp``/``V_perp`` are never formed; their
    contributions go through ``I - U U^T`` and ``I - V V^T``.
    """
    u0, h0, v0 = state.u, state.g, state.v
    # H-step, forward in time
    h_hat = h0 + u0.T @ flux.scaled(u0 @ h0 @ v0.T, t, dt) @ v0
    # X-step
    fv = flux.scaled(u0 @ h_hat @ v0.T, t, dt) @ v0
    k1 = u0 @ h_hat + (fv - u0 @ (u0.T @ fv))
    u1, h_tilde = linalg.qr_thin(k1)
    # Y-step
    ftu = flux.scaled(u1 @ h_tilde @ v0.T, t, dt).T @ u1
    l1 = v0 @ h_tilde.T + (ftu - v0 @ (v0.T @ ftu))
    v1, h1t = linalg.qr_thin(l1)
    return ChartSubsteps(h_hat, k1, u1, h_tilde, l1, LowRankState(u1, h1t.T, v1))


def chart_step(state: LowRankState, flux: FluxField, t: float, dt: float) -> LowRankState:
    return chart_substeps(state, flux, t, dt).state


def euler_step(x, flux: FluxField, t: float, dt: float) -> np.ndarray:
    """Explicit Euler step ``x + dt * F(x, t)``."""
    x = np.asarray(x, dtype=np.float64)
    inc = flux.scaled(x, t, dt)
    if inc.shape != x.shape:
        raise DimensionError(f"flux returned shape {inc.shape}, expected {x.shape}")
    return x + inc


_STEPPERS = {"ksl": ksl_step, "chart": chart_step}

Reference = Union[Callable[[float], np.ndarray], TrajectoryRecord, None]


def _core_sigmas(state) -> tuple[float, float]:
    if not isinstance(state, LowRankState):
        return np.nan, np.nan
    s = np.linalg.svd(state.g, compute_uv=False)
    return float(s[-1]), float(s[0])


def integrate(problem, config: IntegratorConfig, reference: Reference = None,
              record_steps=None) -> TrajectoryRecord:
    """Integrate ``problem`` from 0 to ``config.t_final``.

    Every ``config.store_stride``-th step is stored, plus the final step and
    any step listed in ``record_steps``. Times are ``k * dt``. When
    ``reference`` is given, Frobenius errors against it are computed at the
    stored steps (see :func:`lowrank_flow.experiments.error_series`).

    Raises NonFiniteError, carrying the step index, as soon as a state
    stops being finite.
    """
    x0 = linalg.as_matrix(problem.x0, "x0")
    if x0.shape != (problem.n, problem.m):
        raise DimensionError(f"x0 shape {x0.shape} != ({problem.n}, {problem.m})")
    if config.method != "euler" and config.rank > min(x0.shape):
        raise ConfigError(f"rank {config.rank} exceeds min{x0.shape}")
    dt = config.dt
    num_steps = config.num_steps
    extra = set(record_steps or ())
    flux = problem.flux

    if config.method == "euler":
        state = x0.copy()
        step_fn = euler_step
        finite = lambda s: bool(np.isfinite(s).all())  # noqa: E731
    else:
        state = initial_state(x0, config.rank)
        step_fn = _STEPPERS[config.method]
        finite = LowRankState.is_finite

    steps, states = [0], [state]
    for k in range(1, num_steps + 1):
        msg = f"{config.method} produced non-finite values at step {k} (t={k * dt:g})"
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                state = step_fn(state, flux, (k - 1) * dt, dt)
        except NonFiniteError as exc:
            raise NonFiniteError(msg, step=k) from exc
        if not finite(state):
            raise NonFiniteError(msg, step=k)
        if k % config.store_stride == 0 or k == num_steps or k in extra:
            steps.append(k)
            states.append(state)

    sig = np.array([_core_sigmas(s) for s in states]).reshape(-1, 2)
    steps_arr = np.array(steps, dtype=np.int64)
    record = TrajectoryRecord(
        steps=steps_arr,
        times=steps_arr * dt,
        states=states,
        sigma_min=sig[:, 0],
        sigma_max=sig[:, 1],
        dt=dt,
        method=config.method,
        rank=config.rank if config.method != "euler" else 0,
    )
    if reference is not None:
        from .experiments import error_series

        record.errors = error_series(record, reference).errors
    log.debug("integrated %s r=%d dt=%g: %d steps", config.method, config.rank, dt, num_steps)
    return record
