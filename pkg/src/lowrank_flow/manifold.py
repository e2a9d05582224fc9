"""Geometry of the manifold of fixed-rank matrices.

A point is stored in factored form ``Z = U G V^T`` with orthonormal ``U``
(n x r) and ``V`` (m x r). Around a base point the chart

    (X, Y, H) -> (U + U_perp X) H (V + V_perp Y)^T

gives local coordinates; tangent vectors are parametrized by triples
``(dX, dY, dH)`` through the differential of that map at ``(0, 0, G)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionError, NotInNeighborhoodError, SingularityError

SINGULAR_RTOL = 1e-12
SPLIT_OPERATORS = ("Q1", "Q2", "Q3", "P1", "P2", "P3")


@dataclass(frozen=True)
class LowRankState:
    """Rank-r point ``U G V^T``.

    ``g`` may be singular (over-approximation); nothing in the integrators
    inverts it.
    """

    u: np.ndarray
    g: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        n, r = self.u.shape
        m, r2 = self.v.shape
        if r2 != r or self.g.shape != (r, r):
            raise DimensionError(
                f"inconsistent factor shapes u{self.u.shape} g{self.g.shape} v{self.v.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def to_dense(self) -> np.ndarray:
        return (self.u @ self.g) @ self.v.T

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.u).all() and np.isfinite(self.g).all() and np.isfinite(self.v).all()
        )

    def check(self, tol: float = 1e-10) -> "LowRankState":
        """Raise if ``u`` or ``v`` is not orthonormal to ``tol``."""
        linalg.check_orthonormal(self.u, tol, "u")
        linalg.check_orthonormal(self.v, tol, "v")
        return self


@dataclass(frozen=True)
class ChartBase:
    """Base point of a chart together with orthonormal complements.

    ``state.u`` and ``state.v`` only need full column rank here; the chart
    formulas go through pseudo-inverses. ``u_perp`` and ``v_perp`` are
    always orthonormal.
    """

    state: LowRankState
    u_perp: np.ndarray
    v_perp: np.ndarray

    @property
    def u(self):
        return self.state.u

    @property
    def v(self):
        return self.state.v

    @property
    def g(self):
        return self.state.g


@dataclass(frozen=True)
class ChartCoordinates:
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class TangentTriple:
    dx: np.ndarray
    dy: np.ndarray
    dh: np.ndarray


@dataclass(frozen=True)
class GaugeTriple:
    du: np.ndarray
    dg: np.ndarray
    dv: np.ndarray


def _inv_checked(a: np.ndarray, what: str, exc, scale: float = 0.0) -> np.ndarray:
    # ``scale`` bounds the size ``a`` would have without cancellation, so pure
    # roundoff (e.g. H of a matrix orthogonal to the base point) is caught
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < SINGULAR_RTOL * max(sv[0], scale):
        raise exc(f"{what} is numerically singular")
    return np.linalg.inv(a)


def _check_dims(base: ChartBase, n_m=None, coords=None, triple=None):
    n, m = base.state.shape
    r = base.state.rank
    if n_m is not None and n_m != (n, m):
        raise DimensionError(f"expected a {n}x{m} matrix, got {n_m}")
    expected = ((n - r, r), (m - r, r), (r, r))
    if coords is not None:
        got = (coords.x.shape, coords.y.shape, coords.h.shape)
        if got != expected:
            raise DimensionError(f"chart coordinates shapes {got} != {expected}")
    if triple is not None:
        got = (triple.dx.shape, triple.dy.shape, triple.dh.shape)
        if got != expected:
            raise DimensionError(f"tangent triple shapes {got} != {expected}")


def make_chart_base(state: LowRankState) -> ChartBase:
    """Attach orthonormal complements of ``U`` and ``V`` to ``state``."""
    n, m = state.shape
    r = state.rank
    if r >= n or r >= m:
        raise DimensionError(f"rank {r} leaves no complement in {n}x{m}")
    return ChartBase(
        state,
        linalg.orthonormal_complement(state.u),
        linalg.orthonormal_complement(state.v),
    )


def chart_inverse(base: ChartBase, coords: ChartCoordinates) -> np.ndarray:
    """Matrix ``(U + U_perp X) H (V + V_perp Y)^T`` with coordinates ``coords``."""
    _check_dims(base, coords=coords)
    left = base.u + base.u_perp @ coords.x
    right = base.v + base.v_perp @ coords.y
    return left @ coords.h @ right.T


def chart_forward(base: ChartBase, w) -> ChartCoordinates:
    """Chart coordinates ``(X, Y, H)`` of a matrix ``w`` near the base point.

    Raises NotInNeighborhoodError when ``H = U^+ W (V^+)^T`` is numerically
    singular.
    """
    w = linalg.as_matrix(w, "w")
    _check_dims(base, n_m=w.shape)
    u_pinv = linalg.pinv(base.u)
    v_pinv = linalg.pinv(base.v)
    h = u_pinv @ w @ v_pinv.T
    scale = np.linalg.norm(u_pinv, 2) * np.linalg.norm(w, 2) * np.linalg.norm(v_pinv, 2)
    h_inv = _inv_checked(h, "H = U^+ W (V^+)^T", NotInNeighborhoodError, scale)
    x = base.u_perp.T @ w @ v_pinv.T @ h_inv
    ht = v_pinv @ w.T @ u_pinv.T
    y = base.v_perp.T @ w.T @ u_pinv.T @ np.linalg.inv(ht)
    return ChartCoordinates(x, y, h)


def tangent_map(base: ChartBase, t: TangentTriple) -> np.ndarray:
    """Tangent vector ``U_perp dX G V^T + U G (V_perp dY)^T + U dH V^T``."""
    _check_dims(base, triple=t)
    u, g, v = base.u, base.g, base.v
    horizontal_u = base.u_perp @ t.dx @ g @ v.T
    horizontal_v = u @ g @ (base.v_perp @ t.dy).T
    vertical = u @ t.dh @ v.T
    return horizontal_u + horizontal_v + vertical


def tangent_map_inverse(base: ChartBase, dw) -> TangentTriple:
    """Inverse of :func:`tangent_map`.

    Exact for ``dw`` in the tangent space; for other input the same
    formulas are applied verbatim. Requires an invertible core ``G``.
    """
    dw = linalg.as_matrix(dw, "dw")
    _check_dims(base, n_m=dw.shape)
    g_inv = _inv_checked(base.g, "core G", SingularityError)
    u_pinv = linalg.pinv(base.u)
    v_pinv = linalg.pinv(base.v)
    dx = base.u_perp.T @ dw @ v_pinv.T @ g_inv
    dy = base.v_perp.T @ dw.T @ u_pinv.T @ g_inv.T
    dh = u_pinv @ dw @ v_pinv.T
    return TangentTriple(dx, dy, dh)


def tangent_project(state: LowRankState, a) -> np.ndarray:
    """Orthogonal projection of ``a`` onto the tangent space at ``state``.

    Sum of ``P_U^perp a P_V``, ``P_U a P_V^perp`` and ``P_U a P_V``, evaluated
    with the factors so no n x n or m x m projector is formed.
    """
    a = linalg.as_matrix(a, "a")
    if a.shape != state.shape:
        raise DimensionError(f"expected shape {state.shape}, got {a.shape}")
    u, v = state.u, state.v
    pu_a = u @ (u.T @ a)
    a_pv = (a @ v) @ v.T
    pu_a_pv = u @ ((u.T @ a) @ v) @ v.T
    return (a_pv - pu_a_pv) + (pu_a - pu_a_pv) + pu_a_pv


def split_project(state: LowRankState, a, which: str) -> np.ndarray:
    """Apply one term of the KSL splitting (Q1, Q2, Q3) or chart splitting (P1, P2, P3).

    ==== ==========================
    Q1   ``A P_V``
    Q2   ``P_U A P_V``
    Q3   ``P_U A``
    P1   ``P_U A P_V``
    P2   ``P_U^perp A P_V``
    P3   ``P_U A P_V^perp``
    ==== ==========================
    """
    a = linalg.as_matrix(a, "a")
    if a.shape != state.shape:
        raise DimensionError(f"expected shape {state.shape}, got {a.shape}")
    u, v = state.u, state.v
    if which == "Q1":
        return (a @ v) @ v.T
    if which in ("Q2", "P1"):
        return u @ ((u.T @ a) @ v) @ v.T
    if which == "Q3":
        return u @ (u.T @ a)
    if which == "P2":
        av = a @ v
        return (av - u @ (u.T @ av)) @ v.T
    if which == "P3":
        ua = u.T @ a
        return u @ (ua - (ua @ v) @ v.T)
    raise ValueError(f"unknown split operator {which!r}; expected one of {SPLIT_OPERATORS}")


def gauge_triple(state: LowRankState, dz) -> GaugeTriple:
    """Gauge-fixed factor derivatives of a tangent vector ``dz``.

    ``dU = (I - U U^T) dz V G^{-1}``, ``dV = (I - V V^T) dz^T U G^{-T}`` and
    ``dG = U^T dz V``, so that ``U^T dU = 0`` and ``V^T dV = 0``.
    """
    dz = linalg.as_matrix(dz, "dz")
    if dz.shape != state.shape:
        raise DimensionError(f"expected shape {state.shape}, got {dz.shape}")
    u, g, v = state.u, state.g, state.v
    g_inv = _inv_checked(g, "core G", SingularityError)
    dz_v = dz @ v
    dzt_u = dz.T @ u
    du = (dz_v - u @ (u.T @ dz_v)) @ g_inv
    dv = (dzt_u - v @ (v.T @ dzt_u)) @ g_inv.T
    dg = u.T @ dz_v
    return GaugeTriple(du, dg, dv)
