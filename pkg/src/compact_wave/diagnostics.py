"""Mesh norms, the scheme operator A, discrete energy and error diagnostics.

Everything here works in the space of mesh functions vanishing on the
boundary: operators are applied with zero boundary data between factors,
so energy quantities are only available for runs with homogeneous
boundary data (``g = 0`` and ``f = 0`` on the boundary).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .grid import Field, Grid
from .stencil_ops import _embed, _lam, _Lh, _numerov, _solve_lines, _speeds_squared


BOUNDARY_ZERO_TOL = 1e-13


def _vanishes(boundary: NDArray, values: NDArray) -> bool:
    """Boundary values are zero up to rounding relative to the field size."""
    if boundary.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(values))))
    return float(np.max(np.abs(boundary))) <= BOUNDARY_ZERO_TOL * scale


class DomainError(ValueError):
    """A mesh function expected to vanish on the boundary does not."""


class DiagnosticUnavailable(RuntimeError):
    """The requested diagnostic does not apply to this run."""


# ---------------------------------------------------------------------------
# inner products


def _weights(grid: Grid):
    if grid.uniform:
        return float(np.prod([ax.h for ax in grid.axes]))
    w = grid.axes[0].half_steps
    for ax in grid.axes[1:]:
        w = np.multiply.outer(w, ax.half_steps)
    return w


def _dot(grid: Grid, x: NDArray, y: NDArray) -> float:
    """Weighted inner product of two interior-shaped arrays."""
    w = _weights(grid)
    if np.isscalar(w):
        return w * float(np.sum(x * y))
    return float(np.sum(w * x * y))


def _require_hh(*fields: Field, exc=DomainError) -> None:
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise ValueError("fields live on different grids")
        if not _vanishes(f.boundary, f.values):
            raise exc("mesh function does not vanish on the boundary")


def inner_h(v: Field, w: Field) -> float:
    """Mesh inner product over interior nodes.

    Weights are ``h_1...h_n`` on uniform grids and products of half-steps
    ``h_{*k,l}`` on graded grids.
    """
    _require_hh(v, w)
    return _dot(v.grid, v.interior, w.interior)


def norm_h(v: Field) -> float:
    return math.sqrt(inner_h(v, v))


# ---------------------------------------------------------------------------
# operators on functions vanishing at the boundary


def _zb(grid: Grid, x: NDArray) -> NDArray:
    return _embed(grid, x)


def hh_lambda(grid: Grid, x: NDArray, k: int) -> NDArray:
    return _lam(_zb(grid, x), grid, k)


def hh_numerov(grid: Grid, x: NDArray, k: int) -> NDArray:
    return _numerov(_zb(grid, x), grid, k)


def hh_numerov_inv(grid: Grid, x: NDArray, k: int, threads: int = 1) -> NDArray:
    return _solve_lines(grid, k, x, np.zeros(grid.shape), threads)


def hh_Lh(grid: Grid, x: NDArray, a2: Sequence) -> NDArray:
    return _Lh(_zb(grid, x), grid, a2)


def hh_snbar(grid: Grid, x: NDArray, skip: int | None = None) -> NDArray:
    """Product of the Numerov averages over all axes (optionally omitting one)."""
    out = x
    for k in range(grid.ndim):
        if k != skip:
            out = hh_numerov(grid, out, k)
    return out


def hh_A(grid: Grid, x: NDArray, a2: Sequence, ht: float, threads: int = 1) -> NDArray:
    """``(I + h_t^2 L_h/12)(-sum_k a_k^2 s_kN^{-1} Lambda_k) x`` on interior values."""
    y = None
    for k in range(grid.ndim):
        t = a2[k] * hh_numerov_inv(grid, hh_lambda(grid, x, k), k, threads)
        y = -t if y is None else y - t
    return y + ht**2 / 12.0 * hh_Lh(grid, y, a2)


def hh_Abar(grid: Grid, x: NDArray, a2: Sequence) -> NDArray:
    """``-sum_k a_k^2 (prod_{j != k} s_jN) Lambda_k x`` (no inverse operators)."""
    y = None
    for k in range(grid.ndim):
        t = a2[k] * hh_snbar(grid, hh_lambda(grid, x, k), skip=k)
        y = -t if y is None else y - t
    return y


def hh_Atilde(grid: Grid, x: NDArray, a2: Sequence, ht: float) -> NDArray:
    y = hh_Abar(grid, x, a2)
    return y + ht**2 / 12.0 * hh_Lh(grid, y, a2)


def apply_A(v: Field, a: Sequence[float], ht: float, threads: int = 1) -> Field:
    """The scheme operator applied to a mesh function vanishing on the boundary.

    Self-adjoint in :func:`inner_h` only on uniform grids; the non-uniform
    Numerov average is not symmetric in the half-step weights.
    """
    _require_hh(v)
    a2 = _speeds_squared(a, v.grid)
    return Field(v.grid, _zb(v.grid, hh_A(v.grid, v.interior, a2, ht, threads)))


def apply_snbar(v: Field) -> Field:
    _require_hh(v)
    return Field(v.grid, _zb(v.grid, hh_snbar(v.grid, v.interior)))


def norm_A(v: Field, a: Sequence[float], ht: float) -> float:
    return math.sqrt(max(inner_h(apply_A(v, a, ht), v), 0.0))


def norm_neg_Lh(v: Field, a: Sequence[float]) -> float:
    _require_hh(v)
    a2 = _speeds_squared(a, v.grid)
    return math.sqrt(max(-_dot(v.grid, hh_Lh(v.grid, v.interior, a2), v.interior), 0.0))


# ---------------------------------------------------------------------------
# energy


def _energy_terms(grid, a2, ht, prev: NDArray, curr: NDArray, threads=1) -> tuple[float, float, float]:
    dbar = (curr - prev) / ht
    sbar = 0.5 * (curr + prev)
    kinetic = _dot(grid, dbar, dbar)
    correction = -ht**2 / 4.0 * _dot(grid, hh_A(grid, dbar, a2, ht, threads), dbar)
    potential = _dot(grid, hh_A(grid, sbar, a2, ht, threads), sbar)
    return kinetic, correction, potential


def energy_at(v_prev: Field, v_curr: Field, a: Sequence[float], ht: float) -> tuple[float, float, float]:
    """(kinetic, correction, potential) of the discrete energy between two levels.

    The total energy is the sum of the three terms; ``correction`` carries
    its negative sign.
    """
    _require_hh(v_prev, v_curr, exc=DiagnosticUnavailable)
    a2 = _speeds_squared(a, v_curr.grid)
    return _energy_terms(v_curr.grid, a2, ht, v_prev.interior, v_curr.interior)


@dataclass
class EnergyLedger:
    """Per-level energy balance of a run with homogeneous boundary data.

    Row ``i`` describes level ``m = i + 1``. ``work[i]`` is the accumulated
    ``2 h_t sum_{l=1}^{m-1} (phi^l, (v^{l+1} - v^{l-1}) / (2 h_t))`` with
    ``phi = f* + beta*`` the free term of the closed equation for v.
    """

    levels: list[int] = field(default_factory=list)
    kinetic: list[float] = field(default_factory=list)
    correction: list[float] = field(default_factory=list)
    potential: list[float] = field(default_factory=list)
    work: list[float] = field(default_factory=list)
    # seed expressions for the level-1 energy
    seed_from_initial_data: float = float("nan")
    seed_h_variant: float = float("nan")
    seed_match: str = ""
    # stability-bound bookkeeping
    bound_lhs: float = 0.0
    bound_rhs: float = float("nan")
    alt_bound_lhs: float = 0.0
    alt_bound_rhs: float = float("nan")

    @property
    def energy(self) -> NDArray[np.float64]:
        return np.asarray(self.kinetic) + np.asarray(self.correction) + np.asarray(self.potential)

    def __len__(self) -> int:
        return len(self.levels)


def energy_law_residual(ledger: EnergyLedger) -> NDArray[np.float64]:
    """``|E^m - (E^1 + work^m)|`` for every level in the ledger."""
    e = ledger.energy
    if e.size == 0:
        return e
    return np.abs(e - (e[0] + np.asarray(ledger.work)))


class EnergyTracker:
    """Incrementally fills an :class:`EnergyLedger` while a run advances.

    Also evaluates both forms of the energy stability bound: the plain one
    (norms of A and the mesh norm) and the one weighted by the product of
    Numerov averages (no inverse operators).
    """

    def __init__(self, grid: Grid, a: Sequence[float], ht: float, eps0: float, threads: int = 1):
        self.grid = grid
        self.a2 = _speeds_squared(a, grid)
        self.ht = ht
        self.eps0 = eps0
        self.threads = threads
        self.ledger = EnergyLedger()
        self._phi_l1 = 0.0
        self._alt_phi_l1 = 0.0
        self._rhs_init = 0.0
        self._alt_rhs_init = 0.0

    def _check(self, *arrays: NDArray) -> None:
        m = self.grid.boundary_mask
        for x in arrays:
            if not _vanishes(x[m], x):
                raise DiagnosticUnavailable("energy diagnostics need zero boundary data")

    def _row(self, m: int, prev: NDArray, curr: NDArray) -> None:
        g, a2, ht = self.grid, self.a2, self.ht
        p, c = prev[g.interior], curr[g.interior]
        kin, corr, pot = _energy_terms(g, a2, ht, p, c, self.threads)
        L = self.ledger
        L.levels.append(m)
        L.kinetic.append(kin)
        L.correction.append(corr)
        L.potential.append(pot)
        L.bound_lhs = max(L.bound_lhs, math.sqrt(max(self.eps0**2 * kin + pot, 0.0)))
        dbar = (c - p) / ht
        sbar = 0.5 * (c + p)
        alt_kin = _dot(g, hh_snbar(g, dbar), dbar)
        alt_pot = _dot(g, hh_Atilde(g, sbar, a2, ht), sbar)
        L.alt_bound_lhs = max(L.alt_bound_lhs, math.sqrt(max(self.eps0**2 * alt_kin + alt_pot, 0.0)))

    def start(self, v0: NDArray, v1: NDArray, u1h: NDArray, phi0: NDArray) -> None:
        """Record level 1 from full arrays v0, v1 and interior arrays u1h, phi0."""
        self._check(v0, v1)
        g, a2, ht = self.grid, self.a2, self.ht
        self._row(1, v0, v1)
        x0, x1 = v0[g.interior], v1[g.interior]
        delta = (x1 - x0) / ht
        A0 = hh_A(g, x0, a2, ht, self.threads)
        L = self.ledger
        L.work.append(0.0)
        L.seed_from_initial_data = (
            _dot(g, A0, 0.5 * (x0 + x1)) + _dot(g, u1h, delta) + 0.5 * ht * _dot(g, phi0, delta)
        )
        L.seed_h_variant = (
            L.kinetic[0] - ht**2 / 4.0 * _dot(g, delta, delta) + L.potential[0]
        )
        e1 = L.kinetic[0] + L.correction[0] + L.potential[0]
        d_a = abs(e1 - L.seed_from_initial_data)
        d_h = abs(L.seed_h_variant - L.seed_from_initial_data)
        L.seed_match = "A-norm" if d_a <= d_h else "h-norm"
        self._phi_l1 = ht / 4.0 * math.sqrt(_dot(g, phi0, phi0))
        self._alt_phi_l1 = ht / 4.0 * math.sqrt(max(_dot(g, hh_snbar(g, phi0), phi0), 0.0))
        if self.eps0 > 0:
            self._rhs_init = math.sqrt(_dot(g, A0, x0) + _dot(g, u1h, u1h) / self.eps0**2)
            At0 = hh_Atilde(g, x0, a2, ht)
            self._alt_rhs_init = math.sqrt(
                max(_dot(g, At0, x0) + _dot(g, hh_snbar(g, u1h), u1h) / self.eps0**2, 0.0)
            )
        self._update_rhs()

    def advance(self, m: int, prev: NDArray, curr: NDArray, nxt: NDArray, phi: NDArray) -> None:
        """Account for the step from level m to m+1 (full arrays, interior phi^m)."""
        self._check(nxt)
        g, ht = self.grid, self.ht
        centred = (nxt[g.interior] - prev[g.interior]) / (2.0 * ht)
        L = self.ledger
        L.work.append(L.work[-1] + 2.0 * ht * _dot(g, phi, centred))
        self._phi_l1 += ht * math.sqrt(_dot(g, phi, phi))
        self._alt_phi_l1 += ht * math.sqrt(max(_dot(g, hh_snbar(g, phi), phi), 0.0))
        self._row(m + 1, curr, nxt)
        self._update_rhs()

    def _update_rhs(self) -> None:
        if self.eps0 <= 0:
            return
        L = self.ledger
        L.bound_rhs = self._rhs_init + 2.0 / self.eps0 * self._phi_l1
        L.alt_bound_rhs = self._alt_rhs_init + 2.0 / self.eps0 * self._alt_phi_l1


# ---------------------------------------------------------------------------
# errors against an exact solution


class ErrorTracker:
    """Running maxima of the energy-norm and mesh-norm errors.

    The energy error at level m is ``eps0 |dbar_t r^m| + sqrt(eps) |sbar_t r^m|_{-L_h}``
    with ``r = u - v`` extended by zero to the boundary.
    """

    def __init__(self, grid: Grid, a: Sequence, ht: float, eps: float, eps0: float, exact: Callable):
        if exact is None:
            raise DiagnosticUnavailable("no exact solution available")
        self.grid = grid
        self.a2 = _speeds_squared(a, grid)
        self.ht = ht
        self.eps = eps
        self.eps0 = eps0
        self.exact = exact
        self._prev: NDArray | None = None
        self._t_prev: float | None = None
        self.max_energy = 0.0
        self.max_l2 = 0.0
        self.energy_errors: list[float] = []
        self.l2_errors: list[float] = []

    def error_at(self, v: NDArray, t: float) -> NDArray:
        return self.grid.sample(self.exact, t)[self.grid.interior] - v[self.grid.interior]

    def push(self, v: NDArray, t: float) -> None:
        g = self.grid
        r = self.error_at(v, t)
        if self._prev is None:
            self._prev, self._t_prev = r, t
            return
        ht = t - self._t_prev
        dbar = (r - self._prev) / ht
        sbar = 0.5 * (r + self._prev)
        neg_lh = max(-_dot(g, hh_Lh(g, sbar, self.a2), sbar), 0.0)
        e_en = self.eps0 * math.sqrt(_dot(g, dbar, dbar)) + math.sqrt(self.eps) * math.sqrt(neg_lh)
        e_l2 = math.sqrt(_dot(g, r, r))
        self.energy_errors.append(e_en)
        self.l2_errors.append(e_l2)
        self.max_energy = max(self.max_energy, e_en)
        self.max_l2 = max(self.max_l2, e_l2)
        self._prev, self._t_prev = r, t


def error_norms(
    levels: Sequence[Field],
    times: Sequence[float],
    exact: Callable | None,
    a: Sequence[float],
    eps: float,
    eps0: float,
) -> tuple[float, float]:
    """(max energy-norm error, max mesh-norm error) over levels ``m >= 1``."""
    if exact is None:
        raise DiagnosticUnavailable("no exact solution available")
    if len(levels) != len(times) or len(levels) < 2:
        raise ValueError("need matching levels and times, at least two")
    ht = times[1] - times[0]
    tr = ErrorTracker(levels[0].grid, a, ht, eps, eps0, exact)
    for v, t in zip(levels, times):
        tr.push(v.values, t)
    return tr.max_energy, tr.max_l2


# ---------------------------------------------------------------------------
# scalar (inverse-free) form of the scheme


def scalar_form_residual(
    grid: Grid,
    a: Sequence[float],
    ht: float,
    prev: NDArray,
    curr: NDArray,
    nxt: NDArray,
    fstar: NDArray,
    b: Sequence[NDArray] | None = None,
) -> float:
    """Relative residual of the vector step rewritten without inverse operators.

    Checks ``S Lambda_t v + (I + h_t^2 L_h/12) Abar v - S f* - (I + h_t^2 L_h/12) sum a_k^2 S_k b_k = 0``
    on the interior, where ``S`` is the product of all Numerov averages and
    ``S_k`` omits axis k. Arrays ``prev, curr, nxt`` are full levels with
    zero boundary; ``fstar`` and ``b`` are interior-shaped.
    """
    for x in (prev, curr, nxt):
        if not _vanishes(x[grid.boundary_mask], x):
            raise DiagnosticUnavailable("scalar-form check needs zero boundary data")
    a2 = _speeds_squared(a, grid)
    i = grid.interior
    lam_t = (nxt[i] - 2.0 * curr[i] + prev[i]) / ht**2
    t1 = hh_snbar(grid, lam_t)
    t2 = hh_Atilde(grid, curr[i], a2, ht)
    t3 = hh_snbar(grid, fstar)
    res = t1 + t2 - t3
    if b is not None:
        beta = sum(a2[k] * hh_snbar(grid, b[k], skip=k) for k in range(grid.ndim))
        res = res - (beta + ht**2 / 12.0 * hh_Lh(grid, beta, a2))
    scale = max(np.max(np.abs(t1)), np.max(np.abs(t2)), np.max(np.abs(t3)), 1e-300)
    return float(np.max(np.abs(res)) / scale)
