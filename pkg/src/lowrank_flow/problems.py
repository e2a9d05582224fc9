"""Test problems: an analytic rank-10 matrix family and parametric viscous Burgers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import linalg
from .errors import ConfigError
from .integrators import FluxField

VISCOSITY_RANGE = (0.01, 0.06)
MULTI_BOX = ((0.01, 0.06), (2.0, 4.0), (0.01, 0.1))
SINGLE_FIXED = (4.0, 0.0)


@dataclass
class ProblemSpec:
    n: int
    m: int
    flux: FluxField
    x0: np.ndarray
    exact: Optional[Callable[[float], np.ndarray]] = None
    t_final: float = 1.0
    label: str = ""
    fluxes: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def with_flux(self, variant: str) -> "ProblemSpec":
        """Copy of the problem using the flux registered under ``variant``."""
        if variant not in self.fluxes:
            raise ConfigError(f"{self.label} has no flux variant {variant!r}")
        return ProblemSpec(self.n, self.m, self.fluxes[variant], self.x0, self.exact,
                           self.t_final, f"{self.label}/{variant}", self.fluxes, self.params)


def matrix_approx_problem(n: int = 100, seed: int = 0, flux_variant: str = "derivative",
                          t_final: float = 1.0, skew_scale: str = "unit") -> ProblemSpec:
    """``A(t) = e^t exp(t W1) D exp(t W2)`` with ``D = diag(2^-1, ..., 2^-10, 0, ...)``.

    ``W1``/``W2`` come from :func:`linalg.random_skew_symmetric` with seeds
    ``2*seed`` and ``2*seed + 1``. With ``skew_scale="unit"`` each is then
    divided by its spectral norm; ``"raw"`` keeps the generator output.
    Two flux variants are registered:

    ``derivative``
        ``F(Z, t) = W1 A(t) + A(t) + A(t) W2``
    ``increment``
        ``dt * F = A(t + dt) - A(t)`` (increment mode)
    """
    if n < 10:
        raise ConfigError("matrix approximation problem needs n >= 10")
    w1 = linalg.random_skew_symmetric(n, 2 * seed)
    w2 = linalg.random_skew_symmetric(n, 2 * seed + 1)
    if skew_scale == "unit":
        w1 = w1 / np.linalg.norm(w1, 2)
        w2 = w2 / np.linalg.norm(w2, 2)
    elif skew_scale != "raw":
        raise ConfigError(f"unknown skew_scale {skew_scale!r}")
    d = np.zeros((n, n))
    d[np.arange(10), np.arange(10)] = 2.0 ** -np.arange(1, 11)

    @lru_cache(maxsize=8)
    def _exact(t: float) -> np.ndarray:
        a = np.exp(t) * (linalg.matrix_exp(t * w1) @ d @ linalg.matrix_exp(t * w2))
        a.setflags(write=False)
        return a

    def exact(t):
        return _exact(float(t))

    def derivative(z, t):
        a = exact(t)
        return w1 @ a + a + a @ w2

    def increment(z, t, dt):
        return exact(t + dt) - exact(t)

    fluxes = {
        "derivative": FluxField(derivative),
        "increment": FluxField(increment, increment_mode=True),
    }
    if flux_variant not in fluxes:
        raise ConfigError(f"unknown flux variant {flux_variant!r}")
    return ProblemSpec(
        n=n, m=n, flux=fluxes[flux_variant], x0=np.array(exact(0.0)), exact=exact,
        t_final=t_final, label=f"matrix-approx/{flux_variant}", fluxes=fluxes,
        params={"w1": w1, "w2": w2, "d": d, "seed": seed, "skew_scale": skew_scale},
    )


def build_fd_operators(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet FD matrices on the interior nodes ``x_i = i/(n+1)``.

    Returns the second-difference Laplacian ``(1, -2, 1)/h^2`` and the
    centered first difference ``(-1, 0, 1)/(2h)``.
    """
    if n < 3:
        raise ConfigError("need at least 3 interior nodes")
    h = 1.0 / (n + 1)
    ones = np.ones(n - 1)
    d_x = (np.diag(-2.0 * np.ones(n)) + np.diag(ones, 1) + np.diag(ones, -1)) / h**2
    c_x = (np.diag(ones, 1) - np.diag(ones, -1)) / (2.0 * h)
    return d_x, c_x


def grid(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / (n + 1)


@dataclass(frozen=True)
class BurgersConfig:
    n: int = 100
    m: int = 60
    mode: str = "single"
    seed: int = 0
    advection_sign: float = -1.0
    t_final: float = 1.0

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ConfigError(f"unknown Burgers mode {self.mode!r}")
        if self.n < 3 or self.m < 1:
            raise ConfigError("Burgers needs n >= 3 and m >= 1")
        if self.advection_sign not in (-1.0, 1.0):
            raise ConfigError("advection_sign must be +1 or -1")


def sample_parameters(m: int, mode: str, seed: int = 0) -> np.ndarray:
    """``m x 3`` table of ``(viscosity, source/centre, amplitude)`` samples.

    Single mode: viscosities on a uniform grid over [0.01, 0.06], the other
    two fixed at (4, 0). Multi mode: i.i.d. uniform in the parameter box.
    """
    if m < 1:
        raise ConfigError("m must be positive")
    if mode == "single":
        table = np.empty((m, 3))
        table[:, 0] = np.linspace(*VISCOSITY_RANGE, m)
        table[:, 1:] = SINGLE_FIXED
        return table
    if mode == "multi":
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in MULTI_BOX])
        hi = np.array([b[1] for b in MULTI_BOX])
        return lo + (hi - lo) * rng.random((m, 3))
    raise ConfigError(f"unknown Burgers mode {mode!r}")


def burgers_source(x: np.ndarray, t: float, xi: np.ndarray) -> np.ndarray:
    """Source ``xi2 exp(-(x-0.2)^2/0.03^2) sin(xi2 pi t)`` on [0.1, 0.3], one column per sample."""
    bump = np.exp(-((x - 0.2) ** 2) / 0.03**2) * ((x >= 0.1) & (x <= 0.3))
    xi2 = xi[:, 1]
    return np.outer(bump, xi2 * np.sin(xi2 * np.pi * t))


def burgers_initial(x: np.ndarray, xi: np.ndarray, mode: str) -> np.ndarray:
    if mode == "single":
        xi1 = xi[:, 0]
        return np.sin(np.outer(x, xi1)) * np.exp(-100.0 * (x[:, None] - 10.0 * xi1) ** 2)
    xi2, xi3 = xi[:, 1], xi[:, 2]
    return xi3 * np.exp(-100.0 * (x[:, None] - 10.0 * xi2) ** 2)


def burgers_problem(config: BurgersConfig = BurgersConfig()) -> ProblemSpec:
    """Semi-discrete parametric Burgers system ``X' = D_x X M + s X*(C_x X) + S(t)``.

    Rows of ``X`` are interior grid nodes, columns are parameter samples,
    ``M`` is the diagonal of viscosities and ``s`` is
    ``config.advection_sign`` (-1 gives ``u_t + u u_x = mu u_xx + f``).
    """
    xi = sample_parameters(config.m, config.mode, config.seed)
    x = grid(config.n)
    d_x, c_x = build_fd_operators(config.n)
    visc = xi[:, 0]
    sign = config.advection_sign

    def flux(z, t):
        return (d_x @ z) * visc + sign * (z * (c_x @ z)) + burgers_source(x, t, xi)

    f = FluxField(flux)
    return ProblemSpec(
        n=config.n, m=config.m, flux=f, x0=burgers_initial(x, xi, config.mode),
        t_final=config.t_final, label=f"burgers-{config.mode}", fluxes={"default": f},
        params={"xi": xi, "x": x, "d_x": d_x, "c_x": c_x, "config": config},
    )
