"""Explicit-in-time fourth-order vector compact scheme for the wave equation.

Solves ``u_tt - sum_k a_k^2 u_{x_k x_k} = f`` on a box with Dirichlet data.
Besides ``v ~ u`` the scheme carries auxiliary fields ``v_kk ~ u_{x_k x_k}``,
each obtained from a Numerov relation ``s_kN v_kk = Lambda_k v + b_k``
along axis-k lines. The new level is then explicit::

    v^{m+1} = 2 v^m - v^{m-1} + h_t^2 [(I + h_t^2 L_h / 12) W^m + f*^m],
    W^m = sum_k a_k^2 v_kk^m,   f* = (s_tN + h_t^2 L_h / 12) f.

Only ``W`` is kept between the per-axis solves, so memory stays at one
auxiliary buffer regardless of the dimension.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import stencil_ops
from .diagnostics import (
    DiagnosticUnavailable,
    EnergyLedger,
    EnergyTracker,
    ErrorTracker,
    _dot,
    energy_law_residual,
    hh_Lh,
    hh_numerov_inv,
    scalar_form_residual,
)
from .grid import Field, Grid, TimeMesh
from .stability import DEFAULT_EPS, DEFAULT_EPS0, StabilityCertificate, certify
from .stencil_ops import ConfigError, _embed, _Lh, _lam, _solve_lines, _speeds_squared

logger = logging.getLogger(__name__)

FIRST_STEP_VARIANTS = ("three-level", "two-level", "analytic")
AUX_BOUNDARY_MODES = ("pde", "initial")
COMPAT_TOL = 1e-10

Callback = Callable[..., NDArray]


class StabilityRejected(RuntimeError):
    """The time step violates a stability condition and the run was refused."""

    def __init__(self, condition: str, certificate: StabilityCertificate):
        self.condition = condition
        self.certificate = certificate
        super().__init__(condition)


class DivergenceError(RuntimeError):
    """The solution became non-finite (or exceeded the configured limit)."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"solution diverged at time level {step}")


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters of a run.

    ``first_step`` picks the approximation of the source term near t = 0
    (``"three-level"``, ``"two-level"`` or ``"analytic"``). ``aux_boundary``
    selects the boundary values of the level-0 auxiliary fields: from the
    PDE trace (``"pde"``) or from ``d_k^2 u_0`` (``"initial"``).
    """

    speeds: tuple[float, ...]
    eps: float = DEFAULT_EPS
    eps0: float = DEFAULT_EPS0
    first_step: str = "three-level"
    enforce_stability: bool = True
    aux_boundary: str = "pde"
    simplified_first_step: bool = False
    threads: int = 1
    energy: bool = True
    scalar_residual: bool = False
    divergence_limit: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "speeds", tuple(float(a) for a in self.speeds))
        if any(not a > 0 for a in self.speeds):
            raise ConfigError("speeds must be positive")
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError(f"eps must lie in [0, 1), got {self.eps}")
        if not 0.0 <= self.eps0 < 1.0:
            raise ConfigError(f"eps0 must lie in [0, 1), got {self.eps0}")
        if self.first_step not in FIRST_STEP_VARIANTS:
            raise ConfigError(f"first_step must be one of {FIRST_STEP_VARIANTS}")
        if self.aux_boundary not in AUX_BOUNDARY_MODES:
            raise ConfigError(f"aux_boundary must be one of {AUX_BOUNDARY_MODES}")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speeds"] = list(self.speeds)
        return d


@dataclass
class Problem:
    """Data of an initial-boundary value problem.

    Space-time callbacks take ``(x, t)`` where ``x`` is the tuple of
    broadcastable coordinate arrays of the grid; initial data take ``(x,)``.
    ``g_aux[k]`` gives ``a_k^2 u_{x_k x_k}`` on the boundary (see
    :func:`pde_boundary_aux`).
    """

    f: Callback
    u0: Callback
    u1: Callback
    g: Callback
    g_aux: Sequence[Callback]
    exact: Callback | None = None
    b: Sequence[Callback] | None = None
    f_t: Callback | None = None
    f_tt: Callback | None = None
    Lu0: Callback | None = None
    Lu1: Callback | None = None
    u0_second: Sequence[Callback] | None = None
    name: str = ""

    def check_compatibility(self, grid: Grid, tol: float = COMPAT_TOL) -> None:
        m = grid.boundary_mask
        g0 = grid.sample(self.g, 0.0)[m]
        u0 = grid.sample(self.u0)[m]
        gap = float(np.max(np.abs(g0 - u0))) if g0.size else 0.0
        if gap > tol:
            raise ConfigError(f"boundary data g(x, 0) differs from u0 by {gap:.3e} on the boundary")


def pde_boundary_aux(
    g_tt: Callback,
    g_second: Sequence[Callback],
    f: Callback,
    speeds: Sequence,
    extents: Sequence[float],
    rho: Callback | None = None,
) -> list[Callback]:
    """Boundary data ``g_k = a_k^2 d_k^2 u`` computed from the PDE trace.

    On faces normal to axis k (``x_k = 0`` or ``X_k``) the second derivative
    along k is not tangential, so ``g_k = rho g_tt - sum_{l != k} a_l^2 d_l^2 g - f``;
    elsewhere ``g_k = a_k^2 d_k^2 g``. ``speeds`` may hold callbacks ``a_k(x)``.
    """
    n = len(extents)

    def speed2(l, x):
        a = speeds[l]
        return (a(x) if callable(a) else a) ** 2

    def make(k: int) -> Callback:
        def gk(x, t):
            tangential = speed2(k, x) * g_second[k](x, t)
            normal = g_tt(x, t) * (rho(x) if rho is not None else 1.0) - f(x, t)
            for l in range(n):
                if l != k:
                    normal = normal - speed2(l, x) * g_second[l](x, t)
            xk = x[k]
            on_face = np.isclose(xk, 0.0, atol=1e-12 * extents[k]) | np.isclose(
                xk, extents[k], rtol=1e-12, atol=0.0
            )
            return np.where(on_face, normal, tangential)

        return gk

    return [make(k) for k in range(n)]


@dataclass
class SchemeState:
    """Two consecutive levels and the weighted auxiliary sum at the newer one."""

    v_prev: Field
    v_curr: Field
    m: int
    t: float
    ht: float
    W: Field | None = None


@dataclass
class RunReport:
    """Outcome of a run: per-level rows, energy ledger, certificate, errors."""

    problem: str
    config: SchemeConfig
    certificate: StabilityCertificate
    rows: list[dict] = field(default_factory=list)
    ledger: EnergyLedger | None = None
    energy_available: bool = False
    max_energy_error: float | None = None
    max_l2_error: float | None = None
    scalar_residuals: list[float] | None = None
    aux_solves: int = 0
    elapsed: float = 0.0

    @property
    def law_residual(self) -> NDArray | None:
        return None if self.ledger is None else energy_law_residual(self.ledger)

    @property
    def stability_bound_ok(self) -> bool | None:
        if self.ledger is None or not math.isfinite(self.ledger.bound_rhs):
            return None
        return self.ledger.bound_lhs <= self.ledger.bound_rhs

    def summary(self) -> dict:
        out = {
            "problem": self.problem,
            "config": self.config.to_dict(),
            "certificate": self.certificate.to_dict(),
            "levels": len(self.rows),
            "energy_available": self.energy_available,
            "max_energy_error": self.max_energy_error,
            "max_l2_error": self.max_l2_error,
            "aux_solves": self.aux_solves,
        }
        if self.ledger is not None and len(self.ledger):
            res = self.law_residual
            e = self.ledger.energy
            out["energy"] = {
                "initial": float(e[0]),
                "final": float(e[-1]),
                "max_law_residual": float(np.max(res)),
                "seed_from_initial_data": self.ledger.seed_from_initial_data,
                "seed_match": self.ledger.seed_match,
                "bound_lhs": self.ledger.bound_lhs,
                "bound_rhs": self.ledger.bound_rhs,
                "bound_ok": self.stability_bound_ok,
                "alt_bound_lhs": self.ledger.alt_bound_lhs,
                "alt_bound_rhs": self.ledger.alt_bound_rhs,
            }
        if self.scalar_residuals:
            out["max_scalar_form_residual"] = float(max(self.scalar_residuals))
        return out


# ---------------------------------------------------------------------------
# building blocks


def _aux_boundary(grid: Grid, problem: Problem, k: int, t: float, a2k, mode: str = "pde") -> NDArray:
    if mode == "initial":
        if problem.u0_second is None:
            raise ConfigError("aux_boundary='initial' needs u0_second callbacks")
        return grid.sample(problem.u0_second[k])
    return grid.sample(problem.g_aux[k], t) / a2k


def _auxiliary(grid: Grid, v: NDArray, k: int, bnd: NDArray, b_int: NDArray | None, threads: int = 1) -> NDArray:
    """Full array of v_kk: Numerov solve on the interior, ``bnd`` on the boundary."""
    rhs = _lam(v, grid, k)
    if b_int is not None:
        rhs = rhs + b_int
    return _embed(grid, _solve_lines(grid, k, rhs, bnd, threads), bnd)


def _sample_b(grid: Grid, problem: Problem, t: float) -> list[NDArray] | None:
    if problem.b is None:
        return None
    return [grid.sample(bk, t)[grid.interior] for bk in problem.b]


def _weighted_sum(
    grid: Grid,
    v: NDArray,
    t: float,
    problem: Problem,
    coef: Sequence,
    a2: Sequence,
    threads: int = 1,
    mode: str = "pde",
) -> NDArray:
    """``sum_k coef_k v_kk`` over full arrays, accumulated in ascending k.

    ``coef`` is ``a_k^2`` for the constant scheme and ``a_k^2/rho`` for
    variable coefficients; ``a2`` (full-grid or scalar) scales the
    boundary data.
    """
    b = _sample_b(grid, problem, t)
    n = grid.ndim

    def one(k: int, inner: int) -> NDArray:
        bnd = _aux_boundary(grid, problem, k, t, a2[k], mode)
        return _auxiliary(grid, v, k, bnd, None if b is None else b[k], inner)

    if threads > 1 and n > 1:
        inner = max(1, threads // n)
        with ThreadPoolExecutor(max_workers=min(threads, n)) as pool:
            parts = list(pool.map(lambda k: one(k, inner), range(n)))
        W = coef[0] * parts[0]
        for k in range(1, n):
            W += coef[k] * parts[k]
        return W
    W = coef[0] * one(0, threads)
    for k in range(1, n):
        W += coef[k] * one(k, threads)
    return W


def _main_update(grid: Grid, vm: NDArray, v0: NDArray, W: NDArray, fs: NDArray, a2i: Sequence, ht: float) -> NDArray:
    """Interior values of the new level (uniform step, constant coefficients)."""
    i = grid.interior
    c = ht**2 / 12.0
    return 2.0 * v0[i] - vm[i] + ht**2 * ((W[i] + c * _Lh(W, grid, a2i)) + fs)


def _fstar(grid: Grid, fm: NDArray, f0: NDArray, fp: NDArray, a2i: Sequence, st: stencil_ops.TimeStencil, rho=None) -> NDArray:
    """``s_tN f + c_m L_h (f / rho)`` on the interior."""
    i = grid.interior
    if st.uniform:
        snf = (fm[i] + 10.0 * f0[i] + fp[i]) / 12.0
        c = st.h_prev**2 / 12.0
    else:
        w = st.snum
        snf = w[0] * fm[i] + w[1] * f0[i] + w[2] * fp[i]
        c = st.quad
    arg = f0 if rho is None else f0 / rho
    return snf + c * _Lh(arg, grid, a2i)


def _initial_level(grid: Grid, problem: Problem) -> NDArray:
    v0 = grid.sample(problem.g, 0.0)
    v0[grid.interior] = grid.sample(problem.u0)[grid.interior]
    return v0


def _with_boundary(grid: Grid, interior: NDArray, problem: Problem, t: float) -> NDArray:
    out = grid.sample(problem.g, t)
    out[grid.interior] = interior
    return out


def _dht0(grid: Grid, problem: Problem, ht: float, variant: str) -> NDArray:
    f = problem.f
    if variant == "three-level":
        f0, f1, f2 = (grid.sample(f, s) for s in (0.0, ht, 2.0 * ht))
        return (7.0 * f0 + 6.0 * f1 - f2) / 12.0
    if variant == "two-level":
        return (grid.sample(f, 0.0) + 2.0 * grid.sample(f, 0.5 * ht)) / 3.0
    if variant == "analytic":
        if problem.f_t is None or problem.f_tt is None:
            raise ConfigError("the analytic first-step variant needs f_t and f_tt callbacks")
        return grid.sample(f, 0.0) + ht / 3.0 * grid.sample(problem.f_t, 0.0) + ht**2 / 12.0 * grid.sample(
            problem.f_tt, 0.0
        )
    raise ConfigError(f"unknown first-step variant {variant!r}")


# ---------------------------------------------------------------------------
# public operations


def compute_auxiliary(
    v: Field, t: float, problem: Problem, k: int, a: Sequence[float], aux_boundary: str = "pde", threads: int = 1
) -> Field:
    """v_kk with ``s_kN v_kk = Lambda_k v + b_k`` inside and ``g_k / a_k^2`` on the boundary."""
    grid = v.grid
    stencil_ops._check_axis(grid, k)
    a2 = _speeds_squared(a, grid)
    b = _sample_b(grid, problem, t)
    bnd = _aux_boundary(grid, problem, k, t, a2[k], aux_boundary)
    return Field(grid, _auxiliary(grid, v.values, k, bnd, None if b is None else b[k], threads))


def assemble_f_star(problem: Problem, m: int, grid: Grid, a: Sequence[float], time_mesh: TimeMesh) -> Field:
    """``(s_tN + c_m L_h) f`` at level m on the interior, zero on the boundary."""
    st = stencil_ops.time_stencil_at(time_mesh, m)
    t = time_mesh.nodes
    fm, f0, fp = (grid.sample(problem.f, t[j]) for j in (m - 1, m, m + 1))
    a2 = _speeds_squared(a, grid)
    return Field(grid, _embed(grid, _fstar(grid, fm, f0, fp, a2, st)))


def step_main(state: SchemeState, f_star: Field, problem: Problem, config: SchemeConfig) -> Field:
    """Advance one level; requires ``state.W`` at level m. Performs no line solves."""
    grid = state.v_curr.grid
    if state.W is None:
        raise ValueError("state.W must hold the weighted auxiliary sum at level m")
    a2 = _speeds_squared(config.speeds, grid)
    new = _main_update(
        grid, state.v_prev.values, state.v_curr.values, state.W.values, f_star.interior, a2, state.ht
    )
    return Field(grid, _with_boundary(grid, new, problem, state.t + state.ht))


def f_dht0(problem: Problem, grid: Grid, ht: float, variant: str = "three-level") -> Field:
    """Approximation of ``f + h_t/3 f_t + h_t^2/12 f_tt`` at t = 0 on all nodes.

    ``"three-level"``: ``7/12 f^0 + 1/2 f^1 - 1/12 f^2``;
    ``"two-level"``: ``1/3 f^0 + 2/3 f(h_t/2)``; ``"analytic"`` uses the
    derivative callbacks.
    """
    return Field(grid, _dht0(grid, problem, ht, variant))


def _first_step(grid: Grid, v0: NDArray, problem: Problem, config: SchemeConfig, ht: float):
    """Returns (v1 full, u1h interior, fh0 interior, beta0 interior or None)."""
    a2 = _speeds_squared(config.speeds, grid)
    i = grid.interior
    c = ht**2 / 12.0
    if config.simplified_first_step:
        if problem.Lu0 is None:
            raise ConfigError("simplified first step needs an analytic Lu0 callback")
        W = grid.sample(problem.Lu0)
    else:
        W = _weighted_sum(grid, v0, 0.0, problem, a2, a2, config.threads, config.aux_boundary)
    u1 = grid.sample(problem.u1)
    u1h = u1[i] + ht**2 / 6.0 * _Lh(u1, grid, a2)
    f0 = grid.sample(problem.f, 0.0)
    fh0 = _dht0(grid, problem, ht, config.first_step)[i] + c * _Lh(f0, grid, a2)
    new = v0[i] + ht * ((0.5 * ht) * (W[i] + c * _Lh(W, grid, a2)) + u1h + (0.5 * ht) * fh0)
    return _with_boundary(grid, new, problem, ht), u1h, fh0


def first_step(v0: Field, problem: Problem, config: SchemeConfig, ht: float) -> Field:
    """The level t = h_t from level 0 using only second differences of the data."""
    grid = v0.grid
    v1, _, _ = _first_step(grid, v0.values, problem, config, ht)
    return Field(grid, v1)


def _beta_star(grid: Grid, b: list[NDArray] | None, a2: Sequence, ht: float, threads: int = 1) -> NDArray | None:
    """``(I + h_t^2 L_h/12) sum_k a_k^2 s_kN^{-1} b_k`` with zero boundary."""
    if b is None:
        return None
    y = a2[0] * hh_numerov_inv(grid, b[0], 0, threads)
    for k in range(1, grid.ndim):
        y = y + a2[k] * hh_numerov_inv(grid, b[k], k, threads)
    return y + ht**2 / 12.0 * hh_Lh(grid, y, a2)


def gate(grid: Grid, config: SchemeConfig, ht: float) -> StabilityCertificate:
    """Certificate for the run; raises :class:`StabilityRejected` when enforced and failing."""
    cert = certify(grid, config.speeds, ht, config.eps, config.eps0)
    if config.enforce_stability and not cert.ok:
        if not cert.condition2_ok:
            cond = (
                "spectral condition h_t^2/4 * lambda_max(A) <= 1 - eps0^2 violated "
                f"(slack {cert.condition2_slack:.3e}; sufficient h_t = {cert.sufficient_dt:.6g})"
            )
        else:
            cond = (
                "step condition h_t^2/3 * sum a_k^2/h_k^2 <= 1 - eps violated "
                f"(slack {cert.condition1_slack:.3e}; sufficient h_t = {cert.sufficient_dt:.6g})"
            )
        raise StabilityRejected(cond, cert)
    return cert


class _Recorder:
    """Per-level rows plus optional energy/error/scalar-form tracking."""

    def __init__(self, grid, problem, config, ht, report: RunReport, energy_a=None, error_a=None):
        self.grid = grid
        self.problem = problem
        self.config = config
        self.ht = ht
        self.report = report
        self.energy = None
        if config.energy and energy_a is not None:
            self.energy = EnergyTracker(grid, energy_a, ht, config.eps0, 1)
        self.errors = None
        if problem.exact is not None:
            speeds = config.speeds if error_a is None else error_a
            self.errors = ErrorTracker(grid, speeds, ht, config.eps, config.eps0, problem.exact)

    def start(self, v0, v1, u1h, phi0, t1):
        if self.energy is not None:
            try:
                self.energy.start(v0, v1, u1h, phi0)
            except DiagnosticUnavailable:
                self.energy = None
        if self.errors is not None:
            self.errors.push(v0, 0.0)
            self.errors.push(v1, t1)
        self._row(1, t1, v1)

    def advance(self, m, t_next, prev, curr, nxt, phi):
        if self.energy is not None:
            try:
                self.energy.advance(m, prev, curr, nxt, phi)
            except DiagnosticUnavailable:
                self.energy = None
        if self.errors is not None:
            self.errors.push(nxt, t_next)
        self._row(m + 1, t_next, nxt)

    def _row(self, m, t, v):
        i = self.grid.interior
        row = {"m": m, "t": t, "max_abs": float(np.max(np.abs(v[i]))), "norm_h": math.sqrt(_dot(self.grid, v[i], v[i]))}
        L = self.energy.ledger if self.energy is not None else None
        if L is not None and len(L) == m:
            e = L.kinetic[-1] + L.correction[-1] + L.potential[-1]
            e1 = L.kinetic[0] + L.correction[0] + L.potential[0]
            row.update(
                kinetic=L.kinetic[-1],
                correction=L.correction[-1],
                potential=L.potential[-1],
                energy=e,
                work=L.work[-1],
                law_residual=abs(e - (e1 + L.work[-1])),
            )
        if self.errors is not None and self.errors.l2_errors:
            row.update(err_l2=self.errors.l2_errors[-1], err_energy=self.errors.energy_errors[-1])
        self.report.rows.append(row)

    def finish(self):
        rep = self.report
        if self.energy is not None:
            rep.ledger = self.energy.ledger
            rep.energy_available = True
        else:
            for row in rep.rows:
                for key in ("kinetic", "correction", "potential", "energy", "work", "law_residual"):
                    row.pop(key, None)
        if self.errors is not None:
            rep.max_energy_error = self.errors.max_energy
            rep.max_l2_error = self.errors.max_l2


def _guard(new: NDArray, step: int, limit: float | None) -> None:
    if not np.all(np.isfinite(new)):
        raise DivergenceError(step, f"non-finite values at time level {step}")
    if limit is not None and np.max(np.abs(new)) > limit:
        raise DivergenceError(step, f"|v| exceeded {limit:g} at time level {step}")


def run(
    problem: Problem,
    grid: Grid,
    time_mesh: TimeMesh,
    config: SchemeConfig,
    callback: Callable[[int, float, NDArray], None] | None = None,
) -> tuple[SchemeState, RunReport]:
    """Integrate on a uniform time mesh with constant speeds.

    ``callback(m, t_m, v_full)`` is invoked after every level is formed.
    """
    if not time_mesh.uniform:
        raise ConfigError("scheme.run needs a uniform time mesh; use extensions.run_nonuniform_time")
    if len(config.speeds) != grid.ndim:
        raise ConfigError(f"need {grid.ndim} speeds, got {len(config.speeds)}")
    tic = time.perf_counter()
    ht = time_mesh.h
    M = time_mesh.count
    tn = time_mesh.nodes
    cert = gate(grid, config, ht)
    problem.check_compatibility(grid)
    report = RunReport(problem.name, config, cert)
    a2 = _speeds_squared(config.speeds, grid)
    threads = int(config.threads)
    i = grid.interior
    rec = _Recorder(grid, problem, config, ht, report, energy_a=config.speeds)

    v0 = _initial_level(grid, problem)
    if callback:
        callback(0, 0.0, v0)
    v1, u1h, fh0 = _first_step(grid, v0, problem, config, ht)
    report.aux_solves += 0 if config.simplified_first_step else grid.ndim
    _guard(v1[i], 1, config.divergence_limit)
    need_beta = rec.energy is not None and problem.b is not None
    phi0 = fh0
    if need_beta:
        phi0 = fh0 + _beta_star(grid, _sample_b(grid, problem, 0.0), a2, ht)
    rec.start(v0, v1, u1h, phi0, tn[1])
    if callback:
        callback(1, tn[1], v1)
    if config.scalar_residual:
        report.scalar_residuals = []

    st = stencil_ops._time_stencil(ht, ht)
    f_prev = grid.sample(problem.f, tn[0])
    f_curr = grid.sample(problem.f, tn[1])
    vm, vc = v0, v1
    W = None
    for m in range(1, M):
        W = _weighted_sum(grid, vc, tn[m], problem, a2, a2, threads)
        report.aux_solves += grid.ndim
        f_next = grid.sample(problem.f, tn[m + 1])
        fs = _fstar(grid, f_prev, f_curr, f_next, a2, st)
        new = _main_update(grid, vm, vc, W, fs, a2, ht)
        _guard(new, m + 1, config.divergence_limit)
        vn = _with_boundary(grid, new, problem, tn[m + 1])
        phi = fs
        if need_beta and rec.energy is not None:
            phi = fs + _beta_star(grid, _sample_b(grid, problem, tn[m]), a2, ht)
        rec.advance(m, tn[m + 1], vm, vc, vn, phi)
        if config.scalar_residual:
            report.scalar_residuals.append(
                scalar_form_residual(grid, config.speeds, ht, vm, vc, vn, fs, _sample_b(grid, problem, tn[m]))
            )
        if callback:
            callback(m + 1, tn[m + 1], vn)
        vm, vc = vc, vn
        f_prev, f_curr = f_curr, f_next

    rec.finish()
    report.elapsed = time.perf_counter() - tic
    logger.info("run %s: %d levels in %.3fs", problem.name, M, report.elapsed)
    state = SchemeState(Field(grid, vm), Field(grid, vc), M, float(tn[M]), ht, None if W is None else Field(grid, W))
    return state, report
