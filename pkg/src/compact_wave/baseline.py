"""Second-order explicit leapfrog scheme, used as a control in convergence studies."""

from __future__ import annotations

import time

import numpy as np

from .diagnostics import ErrorTracker
from .grid import Field, Grid, TimeMesh
from .scheme import Problem, RunReport, SchemeConfig, SchemeState, _initial_level, _with_boundary
from .stability import certify
from .stencil_ops import ConfigError, _Lh, _speeds_squared


def leapfrog_dt(grid: Grid, a, fraction: float = 0.8) -> float:
    """``fraction`` times the classical bound ``1 / sqrt(sum a_k^2 / h_k^2)``."""
    s = sum(float(ak) ** 2 / ax.h_min**2 for ak, ax in zip(a, grid.axes))
    return fraction / np.sqrt(s)


def run_leapfrog(problem: Problem, grid: Grid, time_mesh: TimeMesh, config: SchemeConfig) -> tuple[SchemeState, RunReport]:
    """``v+ = 2v - v- + h_t^2 (L_h v + f)`` with a Taylor first step."""
    if not time_mesh.uniform:
        raise ConfigError("the leapfrog control needs a uniform time mesh")
    tic = time.perf_counter()
    ht = time_mesh.h
    tn = time_mesh.nodes
    a2 = _speeds_squared(config.speeds, grid)
    i = grid.interior
    report = RunReport(problem.name, config, certify(grid, config.speeds, ht, config.eps, config.eps0))
    errors = None
    if problem.exact is not None:
        errors = ErrorTracker(grid, config.speeds, ht, config.eps, config.eps0, problem.exact)
    v0 = _initial_level(grid, problem)
    u1 = grid.sample(problem.u1)[i]
    f0 = grid.sample(problem.f, 0.0)[i]
    v1 = _with_boundary(grid, v0[i] + ht * u1 + 0.5 * ht**2 * (_Lh(v0, grid, a2) + f0), problem, tn[1])
    if errors:
        errors.push(v0, 0.0)
        errors.push(v1, tn[1])
    vm, vc = v0, v1
    for m in range(1, time_mesh.count):
        f = grid.sample(problem.f, tn[m])[i]
        new = 2.0 * vc[i] - vm[i] + ht**2 * (_Lh(vc, grid, a2) + f)
        vm, vc = vc, _with_boundary(grid, new, problem, tn[m + 1])
        if errors:
            errors.push(vc, tn[m + 1])
        report.rows.append({"m": m + 1, "t": tn[m + 1]})
    if errors:
        report.max_energy_error = errors.max_energy
        report.max_l2_error = errors.max_l2
    report.elapsed = time.perf_counter() - tic
    return SchemeState(Field(grid, vm), Field(grid, vc), time_mesh.count, float(tn[-1]), ht), report
