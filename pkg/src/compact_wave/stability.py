"""Time-step restrictions for the explicit compact scheme.

Two conditions are checked. The first bounds ``h_t^2/3 * sum a_k^2/h_k^2``
by ``1 - eps``; the second bounds the spectrum of the scheme operator
``A = (I + h_t^2 L_h/12)(-sum a_k^2 s_kN^{-1} Lambda_k)`` by
``h_t^2/4 * lambda_max(A) <= 1 - eps0^2``. On uniform grids the eigenpairs
of ``A`` are the discrete sines and ``lambda_max`` is exact; on graded grids
only an operator bound is available.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .grid import Grid
from .stencil_ops import ConfigError, lambda_max_k

DEFAULT_EPS = 0.05
DEFAULT_EPS0 = 0.05
EXHAUSTIVE_LIMIT = 2**18
NEIGHBORHOOD = 2


@dataclass(frozen=True)
class StabilityCertificate:
    """Outcome of both time-step conditions for one (grid, speeds, h_t)."""

    ht: float
    eps: float
    eps0: float
    condition1_ok: bool
    condition1_slack: float
    condition2_ok: bool
    condition2_slack: float
    lambda_max: float
    sufficient_dt: float
    method: str  # "exact-spectral" | "operator-bound"

    @property
    def ok(self) -> bool:
        return self.condition1_ok and self.condition2_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _check_margins(eps: float, eps0: float) -> None:
    if not 0.0 <= eps < 1.0:
        raise ConfigError(f"eps must lie in [0, 1), got {eps!r}")
    if not 0.0 <= eps0 < 1.0:
        raise ConfigError(f"eps0 must lie in [0, 1), got {eps0!r}")


def _speeds(grid: Grid, a: Sequence[float]) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (grid.ndim,):
        raise ConfigError(f"need {grid.ndim} scalar speeds, got shape {a.shape}")
    if np.any(a <= 0):
        raise ConfigError("speeds must be positive")
    return a


def _courant_sum(grid: Grid, a: np.ndarray) -> float:
    """``sum_k a_k^2 / h_k^2`` with the smallest step of each axis."""
    return float(sum(ak**2 / ax.h_min**2 for ak, ax in zip(a, grid.axes)))


def check_condition_eps(grid: Grid, a: Sequence[float], ht: float, eps: float) -> tuple[bool, float]:
    """``h_t^2/3 * sum a_k^2/h_k^2 <= 1 - eps``; returns (ok, slack)."""
    a = _speeds(grid, a)
    slack = (1.0 - eps) - ht**2 / 3.0 * _courant_sum(grid, a)
    return slack >= 0.0, slack


def _mode_mu(grid: Grid, ell_k: np.ndarray, k: int) -> np.ndarray:
    ax = grid.axes[k]
    return 4.0 / ax.h**2 * np.sin(np.pi * ell_k / (2 * ax.count)) ** 2


def _require_uniform(grid: Grid) -> None:
    if not grid.uniform:
        raise ConfigError("exact spectral data needs a uniform grid")


def eigenvalue_A(grid: Grid, a: Sequence[float], ht: float, ell: Sequence[int]) -> float:
    """Eigenvalue of the scheme operator for the sine mode with wave numbers ``ell``."""
    _require_uniform(grid)
    a = _speeds(grid, a)
    if len(ell) != grid.ndim:
        raise IndexError(f"need {grid.ndim} mode indices")
    p = q = 0.0
    for k, lk in enumerate(ell):
        N = grid.axes[k].count
        if not 1 <= lk <= N - 1:
            raise IndexError(f"mode index {lk} outside 1..{N - 1} on axis {k}")
        mu = float(_mode_mu(grid, np.array(lk), k))
        sigma = 1.0 - grid.axes[k].h ** 2 * mu / 12.0
        p += a[k] ** 2 * mu
        q += a[k] ** 2 * mu / sigma
    return (1.0 - ht**2 / 12.0 * p) * q


def _spectrum_terms(grid: Grid, a: np.ndarray, ells: Sequence[np.ndarray]):
    """Outer sums ``P = sum a^2 mu`` and ``Q = sum a^2 mu / sigma`` over mode sets."""
    P = np.zeros([e.size for e in ells])
    Q = np.zeros_like(P)
    for k, e in enumerate(ells):
        mu = _mode_mu(grid, e, k)
        sigma = 1.0 - grid.axes[k].h ** 2 * mu / 12.0
        shape = [1] * grid.ndim
        shape[k] = -1
        P = P + (a[k] ** 2 * mu).reshape(shape)
        Q = Q + (a[k] ** 2 * mu / sigma).reshape(shape)
    return P, Q


def lambda_max_A(grid: Grid, a: Sequence[float], ht: float, exhaustive: bool | None = None) -> float:
    """Largest eigenvalue of the scheme operator on a uniform grid.

    Full scan over all modes when there are at most 2**18 of them (or when
    ``exhaustive`` is forced); otherwise the top corner mode and its
    neighbours within radius 2.
    """
    _require_uniform(grid)
    a = _speeds(grid, a)
    n_modes = int(np.prod(grid.interior_shape))
    if exhaustive is None:
        exhaustive = n_modes <= EXHAUSTIVE_LIMIT
    if exhaustive:
        ells = [np.arange(1, ax.count) for ax in grid.axes]
    else:
        ells = [np.arange(max(1, ax.count - 1 - NEIGHBORHOOD), ax.count) for ax in grid.axes]
    P, Q = _spectrum_terms(grid, a, ells)
    return float(np.max((1.0 - ht**2 / 12.0 * P) * Q))


def check_condition_spectral(
    grid: Grid, a: Sequence[float], ht: float, eps0: float
) -> tuple[bool, float, float]:
    """``h_t^2/4 * lambda_max(A) <= 1 - eps0^2``; returns (ok, lambda_max, slack).

    Equality counts as a pass.
    """
    lam = lambda_max_A(grid, a, ht)
    slack = (1.0 - eps0**2) - ht**2 / 4.0 * lam
    return slack >= 0.0, lam, slack


def sufficient_dt(grid: Grid, a: Sequence[float], eps: float = DEFAULT_EPS, eps0: float = DEFAULT_EPS0) -> float:
    """Largest h_t for which the closed-form bound guarantees both conditions."""
    _check_margins(eps, eps0)
    a = _speeds(grid, a)
    bound = min(3.0 * (1.0 - eps), 0.5 * (3.0 - math.sqrt(1.0 + 8.0 * eps0**2)))
    return math.sqrt(bound / _courant_sum(grid, a))


def spectral_threshold_dt(grid: Grid, a: Sequence[float]) -> float:
    """The h_t where ``h_t^2/4 * lambda_max(A) = 1`` (onset of growing modes)."""
    _require_uniform(grid)

    def excess(ht: float) -> float:
        return ht**2 / 4.0 * lambda_max_A(grid, a, ht) - 1.0

    lo = sufficient_dt(grid, a, 0.0, 0.0)
    hi = lo
    for _ in range(60):
        if excess(hi) > 0:
            break
        hi *= 1.1
    else:
        raise RuntimeError("no spectral threshold found")
    while excess(lo) > 0:
        lo *= 0.5
    return brentq(excess, lo, hi, xtol=1e-15, rtol=1e-14)


def _operator_bound_lambda(grid: Grid, a: np.ndarray, ht: float) -> float:
    """Upper bound of lambda(A) from ``A < (I + h_t^2 L_h/12)(-3/2 L_h)``."""
    pmax = float(sum(ak**2 * lambda_max_k(ax) for ak, ax in zip(a, grid.axes)))
    c = ht**2 / 12.0
    p = pmax if c == 0.0 else min(pmax, 1.0 / (2.0 * c))
    return 1.5 * p * (1.0 - c * p)


def certify(
    grid: Grid,
    a: Sequence[float],
    ht: float,
    eps: float = DEFAULT_EPS,
    eps0: float = DEFAULT_EPS0,
) -> StabilityCertificate:
    """Evaluate both conditions and the closed-form step bound."""
    _check_margins(eps, eps0)
    a = _speeds(grid, a)
    ok1, slack1 = check_condition_eps(grid, a, ht, eps)
    if grid.uniform:
        ok2, lam, slack2 = check_condition_spectral(grid, a, ht, eps0)
        method = "exact-spectral"
    else:
        lam = _operator_bound_lambda(grid, a, ht)
        slack2 = (1.0 - eps0**2) - ht**2 / 4.0 * lam
        ok2 = slack2 >= 0.0
        method = "operator-bound"
    return StabilityCertificate(
        ht=float(ht),
        eps=float(eps),
        eps0=float(eps0),
        condition1_ok=bool(ok1),
        condition1_slack=float(slack1),
        condition2_ok=bool(ok2),
        condition2_slack=float(slack2),
        lambda_max=float(lam),
        sufficient_dt=sufficient_dt(grid, a, eps, eps0),
        method=method,
    )
