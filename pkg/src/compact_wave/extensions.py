"""Non-uniform time meshes and variable coefficients.

Both generalisations share one time loop. With variable coefficients the
equation is ``rho(x) u_tt = sum_k a_k(x)^2 u_{x_k x_k} + f`` and the
weighted auxiliary sum becomes ``W~ = sum_k (a_k^2/rho) v_kk``. On a
non-uniform time mesh the three-level difference picks up a first-order
drift ``d_m u_ttt`` which is cancelled using the running integral
``S^m ~ int_0^{t_m} u_tt`` (see :class:`TimeMemory`).

When every step pair is uniform and the coefficients are constant, the
update reduces to the same floating-point operations as :mod:`scheme`.
"""

from __future__ import annotations

import logging
import time
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import stencil_ops
from .grid import Field, Grid, TimeMesh
from .scheme import (
    Problem,
    RunReport,
    SchemeConfig,
    SchemeState,
    _dht0,
    _fstar,
    _guard,
    _initial_level,
    _Recorder,
    _weighted_sum,
    _with_boundary,
    gate,
)
from .stability import certify
from .stencil_ops import ConfigError, TimeStencil, _Lh

logger = logging.getLogger(__name__)


class StabilityWarning(UserWarning):
    """The step exceeds the heuristic bound for variable coefficients."""


@dataclass
class VariableCoefficients:
    """Density ``rho(x)`` and speeds ``a_k(x)``; each a callback or a constant."""

    rho: Callable | float = 1.0
    speeds: Sequence[Callable | float] = (1.0,)

    def sampled(self, grid: Grid) -> SampledCoefficients:
        if len(self.speeds) != grid.ndim:
            raise ConfigError(f"need {grid.ndim} speeds, got {len(self.speeds)}")

        def full(c):
            return grid.sample(c) if callable(c) else np.full(grid.shape, float(c))

        rho = full(self.rho)
        a = [full(c) for c in self.speeds]
        if np.any(rho <= 0):
            raise ConfigError("rho must be positive")
        if any(np.any(ak <= 0) for ak in a):
            raise ConfigError("speeds must be positive")
        a2 = [ak**2 for ak in a]
        i = grid.interior
        return SampledCoefficients(
            rho=rho,
            rho_int=rho[i],
            a=a,
            a2_full=a2,
            a2=[x[i] for x in a2],
            weights=[x / rho for x in a2],
        )

    def effective_speeds(self, grid: Grid) -> tuple[float, ...]:
        """Per-axis ``max sqrt(a_k^2 / rho)`` over the grid."""
        s = self.sampled(grid)
        return tuple(float(np.sqrt(np.max(w))) for w in s.weights)


@dataclass
class SampledCoefficients:
    rho: NDArray
    rho_int: NDArray
    a: list[NDArray]
    a2_full: list[NDArray]
    a2: list[NDArray]  # interior-shaped, for L_h
    weights: list[NDArray]  # a_k^2 / rho on the full grid


class TimeMemory:
    """Trapezoidal running integral ``S^m = S^{m-1} + h_m (d^{m-1} + d^m)/2``.

    ``d = W~ + f/rho`` approximates ``u_tt``; ``S^0 = 0``.
    """

    def __init__(self, d0: NDArray):
        self.S = np.zeros_like(d0)
        self._d = d0
        self.m = 0
        self.history: list[NDArray] = []
        self.d_history: list[NDArray] = [d0]
        self.steps: list[float] = []

    def advance(self, h: float, d_new: NDArray, keep: bool = False) -> NDArray:
        self.S = self.S + h * (self._d + d_new) / 2.0
        self._d = d_new
        self.m += 1
        if keep:
            self.history.append(self.S.copy())
            self.d_history.append(d_new)
            self.steps.append(h)
        return self.S


def step_variable_coeff(grid: Grid, vm: NDArray, vc: NDArray, Wt: NDArray, fs: NDArray, cf: SampledCoefficients, ht: float) -> NDArray:
    """Interior of the new level for a uniform step pair."""
    i = grid.interior
    c = ht**2 / 12.0
    return 2.0 * vc[i] - vm[i] + (ht**2 / cf.rho_int) * ((cf.rho_int * Wt[i] + c * _Lh(Wt, grid, cf.a2)) + fs)


def step_nonuniform_time(
    grid: Grid,
    vm: NDArray,
    vc: NDArray,
    Wt: NDArray,
    fs: NDArray,
    S: NDArray,
    u1: NDArray,
    st: TimeStencil,
    cf: SampledCoefficients,
) -> NDArray:
    """Interior of the new level for steps ``h = t_m - t_{m-1}``, ``h+ = t_{m+1} - t_m``.

    ``v+ = v + (h+/h)(v - v-) + h* h+ / rho * [rho W~ + c_m L_h W~ + d_m L_h (S + u1) + f*]``.
    Uniform pairs use :func:`step_variable_coeff`.
    """
    if st.uniform:
        return step_variable_coeff(grid, vm, vc, Wt, fs, cf, st.h_prev)
    i = grid.interior
    h, hp = st.h_prev, st.h_next
    rhs = cf.rho_int * Wt[i] + st.quad * _Lh(Wt, grid, cf.a2) + st.drift * _Lh(S + u1, grid, cf.a2) + fs
    return vc[i] + (hp / h) * (vc[i] - vm[i]) + (st.h_star * hp / cf.rho_int) * rhs


def _variable_first_step(grid: Grid, v0: NDArray, problem: Problem, config: SchemeConfig, ht: float, cf: SampledCoefficients):
    """Returns (v1 full, W~ at level 0 full)."""
    i = grid.interior
    c = ht**2 / 12.0
    if config.simplified_first_step:
        if problem.Lu0 is None:
            raise ConfigError("simplified first step needs an analytic Lu0 callback")
        Wt = grid.sample(problem.Lu0) / cf.rho
    else:
        Wt = _weighted_sum(grid, v0, 0.0, problem, cf.weights, cf.a2_full, config.threads, config.aux_boundary)
    u1 = grid.sample(problem.u1)
    u1h = cf.rho_int * u1[i] + ht**2 / 6.0 * _Lh(u1, grid, cf.a2)
    f0 = grid.sample(problem.f, 0.0)
    fh0 = _dht0(grid, problem, ht, config.first_step)[i] + c * _Lh(f0 / cf.rho, grid, cf.a2)
    rho = cf.rho_int
    new = v0[i] + (ht / rho) * ((0.5 * ht) * (rho * Wt[i] + c * _Lh(Wt, grid, cf.a2)) + u1h + (0.5 * ht) * fh0)
    return _with_boundary(grid, new, problem, ht), Wt


def variable_first_step(v0: Field, problem: Problem, config: SchemeConfig, ht: float, coeffs: VariableCoefficients) -> Field:
    """Level ``t = h_t`` for ``rho u_tt = sum a_k^2 u_kk + f``."""
    grid = v0.grid
    v1, _ = _variable_first_step(grid, v0.values, problem, config, ht, coeffs.sampled(grid))
    return Field(grid, v1)


def _check_gate(grid: Grid, config: SchemeConfig, h_max: float, coeffs: VariableCoefficients, constant: bool):
    if constant:
        return gate(grid, config, h_max)
    speeds = coeffs.effective_speeds(grid)
    cert = certify(grid, speeds, h_max, config.eps, config.eps0)
    if not cert.ok:
        msg = (
            f"h_t = {h_max:.6g} exceeds the bound {cert.sufficient_dt:.6g} "
            "computed with effective speeds sqrt(max a_k^2/rho); stability is not guaranteed"
        )
        if config.enforce_stability:
            warnings.warn(msg, StabilityWarning, stacklevel=3)
        logger.warning(msg)
    return cert


def _run(problem, grid, time_mesh, config, coeffs, constant, callback, keep_memory=False):
    tic = time.perf_counter()
    tn = time_mesh.nodes
    M = time_mesh.count
    cert = _check_gate(grid, config, time_mesh.h_max, coeffs, constant)
    problem.check_compatibility(grid)
    report = RunReport(problem.name, config, cert)
    cf = coeffs.sampled(grid)
    h1 = time_mesh.step(1)
    rec = _Recorder(grid, problem, config, h1, report, energy_a=None, error_a=cf.a)

    v0 = _initial_level(grid, problem)
    if callback:
        callback(0, 0.0, v0)
    v1, W0 = _variable_first_step(grid, v0, problem, config, h1, cf)
    report.aux_solves += 0 if config.simplified_first_step else grid.ndim
    _guard(v1[grid.interior], 1, config.divergence_limit)
    rec.start(v0, v1, None, None, tn[1])
    if callback:
        callback(1, tn[1], v1)

    u1 = grid.sample(problem.u1)
    f_prev = grid.sample(problem.f, tn[0])
    f_curr = grid.sample(problem.f, tn[1])
    memory = None
    if not time_mesh.uniform:
        memory = TimeMemory(W0 + f_prev / cf.rho)
    vm, vc = v0, v1
    Wt = None
    for m in range(1, M):
        st = stencil_ops.time_stencil_at(time_mesh, m)
        Wt = _weighted_sum(grid, vc, tn[m], problem, cf.weights, cf.a2_full, int(config.threads))
        report.aux_solves += grid.ndim
        if memory is not None:
            memory.advance(time_mesh.step(m), Wt + f_curr / cf.rho, keep_memory)
        f_next = grid.sample(problem.f, tn[m + 1])
        fs = _fstar(grid, f_prev, f_curr, f_next, cf.a2, st, rho=cf.rho)
        if memory is None:
            new = step_variable_coeff(grid, vm, vc, Wt, fs, cf, st.h_prev)
        else:
            new = step_nonuniform_time(grid, vm, vc, Wt, fs, memory.S, u1, st, cf)
        _guard(new, m + 1, config.divergence_limit)
        vn = _with_boundary(grid, new, problem, tn[m + 1])
        rec.advance(m, tn[m + 1], vm, vc, vn, None)
        if callback:
            callback(m + 1, tn[m + 1], vn)
        vm, vc = vc, vn
        f_prev, f_curr = f_curr, f_next

    rec.finish()
    report.elapsed = time.perf_counter() - tic
    state = SchemeState(
        Field(grid, vm), Field(grid, vc), M, float(tn[M]), time_mesh.step(M), None if Wt is None else Field(grid, Wt)
    )
    return state, report, memory


def run_nonuniform_time(
    problem: Problem,
    grid: Grid,
    time_mesh: TimeMesh,
    config: SchemeConfig,
    callback: Callable | None = None,
) -> tuple[SchemeState, RunReport]:
    """Constant-speed scheme on an arbitrary time mesh (stability gated at the largest step)."""
    coeffs = VariableCoefficients(1.0, config.speeds)
    state, report, _ = _run(problem, grid, time_mesh, config, coeffs, True, callback)
    return state, report


def run_variable(
    problem: Problem,
    grid: Grid,
    time_mesh: TimeMesh,
    config: SchemeConfig,
    coeffs: VariableCoefficients,
    callback: Callable | None = None,
) -> tuple[SchemeState, RunReport]:
    """Scheme for ``rho u_tt = sum a_k^2 u_kk + f``; the stability check only warns."""
    state, report, _ = _run(problem, grid, time_mesh, config, coeffs, False, callback)
    return state, report


def run_with_memory(
    problem: Problem, grid: Grid, time_mesh: TimeMesh, config: SchemeConfig, coeffs: VariableCoefficients | None = None
) -> tuple[SchemeState, RunReport, TimeMemory | None]:
    """Like :func:`run_variable` but also returns the time memory with its history of ``S^m``."""
    constant = coeffs is None
    coeffs = coeffs or VariableCoefficients(1.0, config.speeds)
    return _run(problem, grid, time_mesh, config, coeffs, constant, None, keep_memory=True)
