"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from compact_wave import problems
from compact_wave.cli import ConvergenceStudy, RunSpec, fitted_slope, run_convergence
from compact_wave.diagnostics import apply_A, hh_A, hh_Lh, hh_snbar, inner_h, norm_h, _dot
from compact_wave.extensions import VariableCoefficients, run_nonuniform_time, run_variable, run_with_memory
from compact_wave.grid import Field, Grid, TimeMesh, make_graded_axis, make_uniform_axis
from compact_wave.problems import manufacture
from compact_wave.scheme import DivergenceError, Problem, SchemeConfig, first_step, run
from compact_wave.stability import eigenvalue_A, spectral_threshold_dt, sufficient_dt
from compact_wave.stencil_ops import _speeds_squared


def _catalog_run(name, n, steps=None, frac=0.8, **kw):
    e = problems.get(name)
    prob, _ = e.build()
    grid = e.grid(n)
    dt = frac * sufficient_dt(grid, e.speeds)
    tm = TimeMesh.uniform_mesh(steps * dt, steps) if steps else e.time_levels(dt)
    return run(prob, grid, tm, SchemeConfig(speeds=e.speeds, **kw))


def _hh_forced_1d():
    # source and data vanish on the boundary; energy grows by about 1e5 over the run
    prob, _ = manufacture("sin(pi*x)*(1 + t**2)*cos(t)", 1, name="forced-hh-1d")
    return prob


def _bounded_forced(ndim):
    # forced, homogeneous data, energy of order one for all times
    if ndim == 1:
        return manufacture("sin(pi*x)*cos(t)*(1 + 0.3*sin(2*t))", 1, name="bounded-1d")[0], (1.0,)
    return manufacture("sin(pi*x)*sin(2*pi*y)*cos(1.3*t)*(2 + sin(t))", 2, (1.0, 0.8), name="bounded-2d")[0], (1.0, 0.8)


# ---------------------------------------------------------------------------


def test_criterion_1_convergence_order(criterion):
    details = []
    ok = True
    for name, n0 in (("standing-wave-1d", 16), ("standing-wave-2d", 32)):
        tic = time.perf_counter()
        table = run_convergence(ConvergenceStudy(RunSpec(problem=name, n=[n0], dt_fraction=0.8), 4))
        elapsed = time.perf_counter() - tic
        good = 3.8 <= table.slope_energy <= 4.2 and table.slope_l2 >= 3.8 and elapsed <= 60.0
        ok &= good
        details.append(f"{name} energy {table.slope_energy:.3f} L2 {table.slope_l2:.3f} ({elapsed:.1f}s)")
    criterion(1, "fourth-order convergence", ok, "; ".join(details))
    assert ok


def test_criterion_2_first_step_accuracy(criterion):
    # nonzero source and initial velocity, so all three variants differ
    e = problems.get("forced-hh-2d")
    prob, _ = e.build()
    ns = (8, 16, 32, 64)
    ht0 = 0.8 * sufficient_dt(e.grid(ns[0]), e.speeds)
    hs, errs, levels = [], {}, {}
    for variant in ("three-level", "two-level", "analytic"):
        cfg = SchemeConfig(speeds=e.speeds, first_step=variant)
        errs[variant], levels[variant] = [], []
        for lvl, n in enumerate(ns):
            grid = e.grid(n)
            ht = ht0 / 2**lvl
            v1 = first_step(Field(grid, grid.sample(prob.u0)), prob, cfg, ht)
            r = v1.values - grid.sample(prob.exact, ht)
            errs[variant].append(norm_h(Field(grid, r)))
            levels[variant].append(v1)
            if variant == "three-level":
                hs.append(max(ax.h for ax in grid.axes))
    slopes = {v: fitted_slope(hs, errs[v]) for v in errs}
    pair = {}
    names = list(errs)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = names[i], names[j]
            d = [norm_h(levels[a][k] - levels[b][k]) for k in range(len(ns))]
            pair[f"{a}/{b}"] = fitted_slope(hs, d)
    ok = all(s >= 5.0 for s in slopes.values()) and all(s >= 3.0 for s in pair.values())
    detail = ", ".join(f"{k} {v:.2f}" for k, v in slopes.items()) + "; differences " + ", ".join(
        f"{k} {v:.2f}" for k, v in pair.items()
    )
    criterion(2, "first-step accuracy", ok, detail)
    assert ok


def _energy_runs():
    """Homogeneous-data runs used by the energy and bound criteria."""
    out = {}
    _, out["standing-wave-1d"] = _catalog_run("standing-wave-1d", 32, steps=1000)
    _, out["standing-wave-2d"] = _catalog_run("standing-wave-2d", 16, steps=1000)
    _, out["forced-hh-2d"] = _catalog_run("forced-hh-2d", 16, steps=1000)
    prob = _hh_forced_1d()
    grid = Grid.box([1.0], [32])
    dt = 0.8 * sufficient_dt(grid, (1.0,))
    _, out["forced-hh-1d"] = run(prob, grid, TimeMesh.uniform_mesh(1000 * dt, 1000), SchemeConfig(speeds=(1.0,)))
    for ndim, n in ((1, 32), (2, 16)):
        prob, a = _bounded_forced(ndim)
        g = Grid.box([1.0] * ndim, [n] * ndim)
        dtb = 0.8 * sufficient_dt(g, a)
        _, out[prob.name] = run(prob, g, TimeMesh.uniform_mesh(1000 * dtb, 1000), SchemeConfig(speeds=a))
    prob = _hh_forced_1d()
    prob.b = [lambda x, t: 1e-3 * np.cos(t) * np.sin(3 * x[0])]
    _, out["forced-hh-1d+b"] = run(prob, grid, TimeMesh.uniform_mesh(300 * dt, 300), SchemeConfig(speeds=(1.0,)))
    return out


@pytest.fixture(scope="module")
def energy_runs():
    return _energy_runs()


def test_criterion_3_energy_conservation(criterion, energy_runs):
    details = []
    ok = True
    for name in ("standing-wave-1d", "standing-wave-2d"):
        E = energy_runs[name].ledger.energy
        drift = float(np.max(np.abs(E - E[0])) / E[0])
        ok &= drift <= 1e-10 and len(E) == 1000
        details.append(f"{name} drift {drift:.2e}")
    for name in ("bounded-1d", "bounded-2d", "forced-hh-1d+b"):
        rep = energy_runs[name]
        res = float(np.max(rep.law_residual))
        e1 = float(rep.ledger.energy[0])
        ok &= res <= 1e-10 * (1.0 + e1)
        details.append(f"{name} law residual {res:.2e} (E1 {e1:.3g})")
    criterion(3, "discrete energy conservation", ok, "; ".join(details))
    assert ok


def test_criterion_4_stability_bound_and_operator_sandwich(criterion, energy_runs):
    details = []
    ok = True
    for name, rep in energy_runs.items():
        L = rep.ledger
        good = L.bound_lhs <= L.bound_rhs and L.alt_bound_lhs <= L.alt_bound_rhs
        ok &= good
        details.append(f"{name} {L.bound_lhs:.3g}<={L.bound_rhs:.3g}")
    rng = np.random.default_rng(2024)
    tol = 1e-12
    worst = {"snbar": 0.0, "lower": 0.0, "upper": 0.0}
    for grid, a in ((Grid.box([1.0], [24]), (1.3,)), (Grid.box([1.0, 2.0], [12, 10]), (1.0, 0.6)), (Grid.box([1, 1, 1], [6, 5, 7]), (1.0, 0.9, 1.2))):
        a2 = _speeds_squared(a, grid)
        n = grid.ndim
        eps = 0.05
        ht = sufficient_dt(grid, a, eps, 0.05)
        for _ in range(100 // 3 + 1):
            x = rng.standard_normal(grid.interior_shape)
            vv = _dot(grid, x, x)
            qs = _dot(grid, hh_snbar(grid, x), x) / vv
            worst["snbar"] = max(worst["snbar"], (2.0 / 3.0) ** n - qs, qs - 1.0)
            qa = _dot(grid, hh_A(grid, x, a2, ht), x)
            ql = -_dot(grid, hh_Lh(grid, x, a2), x)
            worst["lower"] = max(worst["lower"], (eps * ql - qa) / ql)
            worst["upper"] = max(worst["upper"], (qa - 1.5 * ql) / ql)
    good = all(v <= tol for v in worst.values())
    ok &= good
    details.append("Rayleigh worst " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))
    criterion(4, "energy stability bound and operator inequalities", ok, "; ".join(details))
    assert ok


def test_criterion_5_spectral_threshold(criterion):
    N = 16
    grid = Grid.box([1.0], [N])
    a = (1.0,)
    rng = np.random.default_rng(7)
    data = np.zeros(N + 1)
    data[1:-1] = rng.uniform(-1.0, 1.0, N - 1)
    zero = lambda x, t=None: 0.0 * x[0]  # noqa: E731
    prob = Problem(f=zero, u0=lambda x: data, u1=lambda x: 0.0 * x[0], g=zero, g_aux=[zero], name="random-1d")
    steps = 10_000

    def blows_up(ht: float) -> bool:
        cfg = SchemeConfig(speeds=a, enforce_stability=False, energy=False, divergence_limit=1e6)
        try:
            run(prob, grid, TimeMesh.uniform_mesh(steps * ht, steps), cfg)
        except DivergenceError:
            return True
        return False

    thr = spectral_threshold_dt(grid, a)
    lo, hi = 0.9 * thr, 1.1 * thr
    bracket = not blows_up(lo) and blows_up(hi)
    while bracket and hi - lo > 1e-3 * thr:
        mid = 0.5 * (lo + hi)
        if blows_up(mid):
            hi = mid
        else:
            lo = mid
    found = 0.5 * (lo + hi)
    rel = abs(found / thr - 1.0)
    suff = sufficient_dt(grid, a, 0.0, 0.0)
    ok = bracket and rel <= 0.01 and suff < found
    criterion(
        5,
        "spectral threshold sharpness",
        ok,
        f"blow-up at {found:.6g}, predicted {thr:.6g} (rel {rel:.2e}); sufficient_dt(0,0) {suff:.6g}",
    )
    assert ok


def test_criterion_6_scalar_form(criterion):
    _, rep = _catalog_run("forced-hh-2d", 16, steps=100, scalar_residual=True)
    worst = max(rep.scalar_residuals)
    ok = len(rep.scalar_residuals) == 99 and worst <= 1e-10
    criterion(6, "scalar-form residual", ok, f"max relative residual {worst:.2e} over {len(rep.scalar_residuals)} steps")
    assert ok


def test_criterion_7_eigenvalue_oracle(criterion):
    worst = 0.0
    count = 0
    for grid, a in ((Grid.box([1.0], [8]), (1.0,)), (Grid.box([1.0, 1.0], [8, 8]), (1.0, 0.7))):
        ht = 0.9 * sufficient_dt(grid, a)
        for ell in np.ndindex(*grid.interior_shape):
            ell = tuple(i + 1 for i in ell)
            mode = np.ones(grid.shape)
            for k, (lk, ax) in enumerate(zip(ell, grid.axes)):
                shape = [1] * grid.ndim
                shape[k] = -1
                mode = mode * np.sin(np.pi * lk * ax.nodes / ax.extent).reshape(shape)
            v = Field(grid, mode).with_zero_boundary()
            rq = inner_h(apply_A(v, a, ht), v) / inner_h(v, v)
            lam = eigenvalue_A(grid, a, ht, ell)
            worst = max(worst, abs(rq - lam) / abs(lam))
            count += 1
    ok = worst <= 1e-10
    criterion(7, "eigenvalue oracle", ok, f"max relative gap {worst:.2e} over {count} modes")
    assert ok


def test_criterion_8_extensions(criterion):
    details = []
    # uniform-degenerate configurations reproduce the base scheme bit for bit
    e = problems.get("forced-2d")
    prob, _ = e.build()
    grid = e.grid(12)
    tm = TimeMesh.uniform_mesh(0.3, 20)
    cfg = SchemeConfig(speeds=e.speeds)

    def levels(runner, *args):
        out = []
        runner(prob, *args, callback=lambda m, t, v: out.append(v.copy()))
        return out

    base = levels(run, grid, tm, cfg)
    var = levels(run_variable, grid, tm, cfg, VariableCoefficients(1.0, e.speeds))
    nut = levels(run_nonuniform_time, grid, tm, cfg)
    graded_r1 = Grid([make_graded_axis(X, 12, 1.0) for X in e.extents])
    gr = levels(run, graded_r1, tm, cfg)
    bitwise = all(
        len(x) == len(base) and all(np.array_equal(p, q) for p, q in zip(base, x)) for x in (var, nut, gr)
    )
    details.append(f"bitwise collapse {bitwise}")
    ok = bitwise

    studies = {
        "variable-rho-1d": (64, lambda s: 3.8 <= s <= 4.2),
        "perturbed-1d": (16, lambda s: s >= 2.8),
        "graded-1d": (16, lambda s: s >= 3.7),
    }
    for name, (n0, accept) in studies.items():
        table = run_convergence(ConvergenceStudy(RunSpec(problem=name, n=[n0]), 4))
        good = accept(table.slope_energy) and accept(table.slope_l2)
        ok &= good
        details.append(f"{name} energy {table.slope_energy:.3f} L2 {table.slope_l2:.3f}")

    e = problems.get("nonuniform-time-1d")
    prob, _ = e.build()
    grid = e.grid(16)
    tm = e.time_levels(0.8 * sufficient_dt(grid, e.speeds))
    _, _, memory = run_with_memory(prob, grid, tm, SchemeConfig(speeds=e.speeds))
    d = np.array(memory.d_history)
    h = np.array(memory.steps)
    gap = 0.0
    for m in range(1, len(h) + 1):
        direct = np.array(
            [math.fsum(h[j - 1] * (d[j - 1, i] + d[j, i]) / 2.0 for j in range(1, m + 1)) for i in range(d.shape[1])]
        )
        gap = max(gap, float(np.max(np.abs(memory.history[m - 1] - direct))))
    good = not tm.uniform and gap <= 1e-13
    ok &= good
    details.append(f"memory recurrence gap {gap:.2e} over {len(h)} steps")
    criterion(8, "extensions collapse and orders", ok, "; ".join(details))
    assert ok


def test_criterion_9_polynomial_exactness(criterion):
    e = problems.get("polynomial-3d")
    prob, _ = e.build()
    grid = e.grid(8)
    assert grid.shape == (9, 9, 9)
    steps = 50
    dt = 0.8 * sufficient_dt(grid, e.speeds)
    worst = [0.0]

    def check(m, t, v):
        worst[0] = max(worst[0], float(np.max(np.abs(v - grid.sample(prob.exact, t)))))

    run(prob, grid, TimeMesh.uniform_mesh(steps * dt, steps), SchemeConfig(speeds=e.speeds), callback=check)
    ok = worst[0] <= 1e-11
    criterion(9, "polynomial exactness", ok, f"max abs error {worst[0]:.2e} over {steps} steps on 9x9x9")
    assert ok
