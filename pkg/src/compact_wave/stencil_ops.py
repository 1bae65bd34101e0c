"""Three-point difference operators and the Numerov line solver.

Array-level kernels (leading underscore) take full nodal arrays and return
values on the interior nodes only; the public Field-level functions embed
those into full fields (boundary zeroed for second differences, copied for
the Numerov average).
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .grid import Axis, Field, Grid, TimeMesh, _is_uniform

DOMINANCE_MARGIN = 1e-10
POWER_TOL = 1e-10
POWER_MAXITER = 10_000


class ConfigError(ValueError):
    """Invalid scheme parameters (speeds, margins, variants)."""


class MeshQualityError(ValueError):
    """A Numerov line system is not diagonally dominant."""

    def __init__(self, axis: int, node: int, margin: float, line: tuple | None = None):
        self.axis = axis
        self.node = node
        self.margin = margin
        self.line = line
        where = f" on line {line}" if line is not None else ""
        super().__init__(
            f"Numerov system on axis {axis} loses diagonal dominance at node {node}"
            f" (margin {margin:.3e}){where}; the mesh is graded too strongly"
        )


# ---------------------------------------------------------------------------
# coefficients


def numerov_weights(h_left: NDArray, h_right: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """Non-uniform Numerov weights ``(alpha, gamma, beta)`` for step pairs.

    ``h_left`` is the step ending at the node, ``h_right`` the step starting
    there. ``alpha + 10 gamma + beta = 12`` and equal steps give ``(1, 1, 1)``.
    """
    h_left = np.asarray(h_left, dtype=float)
    h_right = np.asarray(h_right, dtype=float)
    h_star = 0.5 * (h_left + h_right)
    alpha = 2.0 - h_right**2 / (h_left * h_star)
    beta = 2.0 - h_left**2 / (h_right * h_star)
    gamma = 1.0 + (h_right - h_left) ** 2 / (5.0 * h_left * h_right)
    return alpha, gamma, beta


@dataclass(frozen=True, eq=False)
class NumerovLineCoeffs:
    """Tridiagonal rows ``(alpha/12, 10 gamma/12, beta/12)`` of ``s_kN`` on one axis.

    The Thomas factorisation (modified super-diagonal and pivots) is computed
    once here, since the matrix does not change between time steps.
    """

    lower: NDArray[np.float64]
    diag: NDArray[np.float64]
    upper: NDArray[np.float64]
    axis: int = -1

    def __post_init__(self) -> None:
        n = self.diag.size
        if n < 1:
            raise ValueError("a Numerov line needs at least one interior node")
        margin = 12.0 * (self.diag - np.abs(self.lower) - np.abs(self.upper))
        bad = np.flatnonzero(margin < DOMINANCE_MARGIN)
        if bad.size:
            l = int(bad[0])
            raise MeshQualityError(self.axis, l + 1, float(margin[l]))
        pivot = np.empty(n)
        cmod = np.empty(n)
        pivot[0] = self.diag[0]
        cmod[0] = self.upper[0] / pivot[0]
        for i in range(1, n):
            pivot[i] = self.diag[i] - self.lower[i] * cmod[i - 1]
            cmod[i] = self.upper[i] / pivot[i]
        object.__setattr__(self, "_pivot", pivot)
        object.__setattr__(self, "_cmod", cmod)

    @property
    def size(self) -> int:
        return self.diag.size

    @classmethod
    def from_axis(cls, axis: Axis, k: int = -1) -> NumerovLineCoeffs:
        n = axis.count - 1
        if axis.uniform:
            lo = np.full(n, 1.0 / 12.0)
            return cls(lo, np.full(n, 10.0 / 12.0), lo.copy(), k)
        s = axis.steps
        alpha, gamma, beta = numerov_weights(s[:-1], s[1:])
        return cls(alpha / 12.0, 10.0 * gamma / 12.0, beta / 12.0, k)

    def apply(self, w: NDArray) -> NDArray:
        """``s_kN w`` at the interior for lines along axis 0 of ``w`` (length n+2)."""
        lo, di, up = (c.reshape((-1,) + (1,) * (w.ndim - 1)) for c in (self.lower, self.diag, self.upper))
        return lo * w[:-2] + di * w[1:-1] + up * w[2:]

    def solve(self, rhs: NDArray, left: NDArray | float, right: NDArray | float) -> NDArray:
        """Solve ``s_kN w = rhs`` for lines along axis 0 (single sweep, no pivoting).

        ``rhs`` has shape ``(n, ...)``; ``left``/``right`` are the line's
        boundary values, broadcastable to ``rhs.shape[1:]``.
        """
        n = self.size
        pivot, cmod, lower = self._pivot, self._cmod, self.lower
        d = np.array(rhs, dtype=float, copy=True)
        d[0] -= self.lower[0] * left
        d[n - 1] -= self.upper[n - 1] * right
        d[0] /= pivot[0]
        for i in range(1, n):
            d[i] -= lower[i] * d[i - 1]
            d[i] /= pivot[i]
        for i in range(n - 2, -1, -1):
            d[i] -= cmod[i] * d[i + 1]
        return d


@lru_cache(maxsize=256)
def _coeffs_for(axis: Axis, k: int) -> NumerovLineCoeffs:
    return NumerovLineCoeffs.from_axis(axis, k)


def numerov_coeffs(grid: Grid, k: int) -> NumerovLineCoeffs:
    _check_axis(grid, k)
    return _coeffs_for(grid.axes[k], k)


@dataclass(frozen=True)
class TimeStencil:
    """Weights of the time operators at an interior level m of a time mesh."""

    h_prev: float  # h_{tm}
    h_next: float  # h_{t(m+1)}
    lam: tuple[float, float, float]
    snum: tuple[float, float, float]
    quad: float  # c_m = (h+^2 - h+ h + h^2) / 12
    drift: float  # d_m = (h+ - h) / 3
    uniform: bool

    @property
    def h_star(self) -> float:
        return 0.5 * (self.h_prev + self.h_next)


def time_stencil_at(mesh: TimeMesh, m: int) -> TimeStencil:
    """Coefficients of Lambda_t, s_tN and the correction terms at level m."""
    if not 1 <= m <= mesh.count - 1:
        raise IndexError(f"time level {m} outside 1..{mesh.count - 1}")
    h, hp = mesh.step(m), mesh.step(m + 1)
    return _time_stencil(h, hp)


def _time_stencil(h: float, hp: float) -> TimeStencil:
    if _is_uniform(np.array([h, hp])):
        return TimeStencil(
            h, h, (1.0 / h**2, -2.0 / h**2, 1.0 / h**2), (1.0 / 12, 10.0 / 12, 1.0 / 12), h**2 / 12.0, 0.0, True
        )
    hs = 0.5 * (h + hp)
    lam = (1.0 / (hs * h), -(1.0 / hp + 1.0 / h) / hs, 1.0 / (hs * hp))
    alpha, gamma, beta = (float(c) for c in numerov_weights(h, hp))
    snum = (alpha / 12.0, 10.0 * gamma / 12.0, beta / 12.0)
    return TimeStencil(h, hp, lam, snum, (hp**2 - hp * h + h**2) / 12.0, (hp - h) / 3.0, False)


# ---------------------------------------------------------------------------
# array-level kernels


def _check_axis(grid: Grid, k: int) -> None:
    if not 0 <= k < grid.ndim:
        raise IndexError(f"axis index {k} outside 0..{grid.ndim - 1}")


def _line_view(values: NDArray, ndim: int, k: int, s: slice) -> NDArray:
    idx = [slice(1, -1)] * ndim
    idx[k] = s
    return values[tuple(idx)]


def _along(c: NDArray, ndim: int, k: int) -> NDArray:
    shape = [1] * ndim
    shape[k] = -1
    return c.reshape(shape)


def _lam(values: NDArray, grid: Grid, k: int) -> NDArray:
    """Lambda_k of a full nodal array, on interior nodes."""
    n = grid.ndim
    ax = grid.axes[k]
    wm = _line_view(values, n, k, slice(None, -2))
    w0 = _line_view(values, n, k, slice(1, -1))
    wp = _line_view(values, n, k, slice(2, None))
    if ax.uniform:
        return (wp - 2.0 * w0 + wm) / ax.h**2
    s = ax.steps
    hl, hr, hs = (_along(c, n, k) for c in (s[:-1], s[1:], ax.half_steps))
    return ((wp - w0) / hr - (w0 - wm) / hl) / hs


def _numerov(values: NDArray, grid: Grid, k: int) -> NDArray:
    """s_kN of a full nodal array, on interior nodes."""
    n = grid.ndim
    ax = grid.axes[k]
    wm = _line_view(values, n, k, slice(None, -2))
    w0 = _line_view(values, n, k, slice(1, -1))
    wp = _line_view(values, n, k, slice(2, None))
    if ax.uniform:
        return (wm + 10.0 * w0 + wp) / 12.0
    s = ax.steps
    alpha, gamma, beta = (_along(c, n, k) for c in numerov_weights(s[:-1], s[1:]))
    return (alpha * wm + 10.0 * gamma * w0 + beta * wp) / 12.0


def _Lh(values: NDArray, grid: Grid, a2: Sequence) -> NDArray:
    """sum_k a_k^2 Lambda_k on interior nodes (a_k^2 scalar or interior-shaped)."""
    out = a2[0] * _lam(values, grid, 0)
    for k in range(1, grid.ndim):
        out = out + a2[k] * _lam(values, grid, k)
    return out


def _embed(grid: Grid, interior: NDArray, boundary_from: NDArray | None = None) -> NDArray:
    out = np.zeros(grid.shape) if boundary_from is None else np.array(boundary_from, dtype=float, copy=True)
    out[grid.interior] = interior
    return out


def _solve_lines(
    grid: Grid, k: int, rhs: NDArray, full: NDArray, threads: int = 1
) -> NDArray:
    """Solve s_kN w = rhs on all interior axis-k lines.

    ``rhs`` has the interior shape; the line end values are read from the
    full array ``full`` at ``x_k = 0, X_k``. Returns interior values.
    """
    n = grid.ndim
    coeffs = numerov_coeffs(grid, k)
    left = _line_view(full, n, k, slice(0, 1))
    right = _line_view(full, n, k, slice(-1, None))
    r = np.moveaxis(rhs, k, 0)
    shp = r.shape
    r2 = r.reshape(shp[0], -1)
    lft = np.moveaxis(left, k, 0).reshape(-1)
    rgt = np.moveaxis(right, k, 0).reshape(-1)
    nlines = r2.shape[1]
    if threads <= 1 or nlines < 2 * threads:
        sol = coeffs.solve(r2, lft, rgt)
    else:
        bounds = np.linspace(0, nlines, threads + 1).astype(int)
        chunks = [(bounds[i], bounds[i + 1]) for i in range(threads)]
        sol = np.empty_like(r2)

        def work(lo_hi):
            lo, hi = lo_hi
            sol[:, lo:hi] = coeffs.solve(r2[:, lo:hi], lft[lo:hi], rgt[lo:hi])

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    return np.moveaxis(sol.reshape(shp), 0, k)


# ---------------------------------------------------------------------------
# Field-level operators


def _speeds_squared(a: Sequence, grid: Grid) -> list:
    if len(a) != grid.ndim:
        raise ConfigError(f"need {grid.ndim} speeds, got {len(a)}")
    out = []
    for k, ak in enumerate(a):
        ak = np.asarray(ak, dtype=float)
        if not np.all(ak > 0):
            raise ConfigError(f"speed a_{k + 1} must be positive")
        if ak.ndim == 0:
            out.append(float(ak) ** 2)
        else:
            full = np.broadcast_to(ak, grid.shape)
            out.append(full[grid.interior] ** 2)
    return out


def apply_lambda_k(w: Field, k: int) -> Field:
    """Second difference along axis k; boundary of the result is 0."""
    _check_axis(w.grid, k)
    return Field(w.grid, _embed(w.grid, _lam(w.values, w.grid, k)))


def apply_numerov_k(w: Field, k: int) -> Field:
    """Numerov average along axis k; boundary copied from ``w``."""
    _check_axis(w.grid, k)
    return Field(w.grid, _embed(w.grid, _numerov(w.values, w.grid, k), w.values))


def apply_Lh(w: Field, a: Sequence) -> Field:
    """``L_h w = sum_k a_k^2 Lambda_k w``; ``a_k`` scalar or nodal array."""
    a2 = _speeds_squared(a, w.grid)
    return Field(w.grid, _embed(w.grid, _Lh(w.values, w.grid, a2)))


def solve_numerov_line(
    coeffs: NumerovLineCoeffs, rhs: NDArray, left_bc: float, right_bc: float
) -> NDArray:
    """Interior values w with ``s_kN w = rhs`` and fixed end values."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (coeffs.size,):
        raise ValueError(f"rhs must have length {coeffs.size}")
    return coeffs.solve(rhs, left_bc, right_bc)


def batched_solve_numerov(k: int, rhs: Field, bc: Field, threads: int = 1) -> Field:
    """Invert s_kN on every interior axis-k line of the grid.

    Interior of ``rhs`` is the right-hand side; boundary values of the result
    (including the line ends) are taken from ``bc``.
    """
    grid = rhs.grid
    _check_axis(grid, k)
    try:
        sol = _solve_lines(grid, k, rhs.interior, bc.values, threads)
    except MeshQualityError as err:
        raise MeshQualityError(k, err.node, err.margin) from None
    return Field(grid, _embed(grid, sol, bc.values))


def lambda_max_k(axis: Axis) -> float:
    """Largest eigenvalue of ``-Lambda_k`` with zero end values.

    Closed sine formula on uniform axes; otherwise power iteration on the
    symmetrised operator (weights ``h_*``), Rayleigh-quotient stopping.
    """
    N = axis.count
    if axis.uniform:
        return 4.0 / axis.h**2 * np.sin(np.pi * (N - 1) / (2 * N)) ** 2
    s = axis.steps
    hs = axis.half_steps
    hl, hr = s[:-1], s[1:]
    diag = (1.0 / hl + 1.0 / hr) / hs
    # symmetric off-diagonal of D^{1/2} (-Lambda) D^{-1/2}, D = diag(h_*)
    off = -1.0 / (s[1:-1] * np.sqrt(hs[:-1] * hs[1:]))

    def matvec(x):
        y = diag * x
        y[:-1] += off * x[1:]
        y[1:] += off * x[:-1]
        return y

    x = (-1.0) ** np.arange(N - 1) * np.sqrt(hs)
    x /= np.linalg.norm(x)
    lam_old = 0.0
    for _ in range(POWER_MAXITER):
        y = matvec(x)
        lam = float(x @ y)
        x = y / np.linalg.norm(y)
        if abs(lam - lam_old) <= POWER_TOL * abs(lam):
            break
        lam_old = lam
    return lam
