from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from compact_wave import problems
from compact_wave.grid import Field, Grid, TimeMesh
from compact_wave.scheme import (
    DivergenceError,
    Problem,
    SchemeConfig,
    SchemeState,
    StabilityRejected,
    assemble_f_star,
    compute_auxiliary,
    f_dht0,
    first_step,
    pde_boundary_aux,
    run,
    step_main,
)
from compact_wave.stability import sufficient_dt, spectral_threshold_dt
from compact_wave.stencil_ops import ConfigError


def zero(x, t=None):
    return 0.0


def standing(n=16, M=20, T=0.5):
    entry = problems.get("standing-wave-1d")
    prob, _ = entry.build()
    return prob, entry.grid(n), TimeMesh.uniform_mesh(T, M)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(speeds=(0.0,)),
        dict(speeds=(1.0,), eps=1.0),
        dict(speeds=(1.0,), eps0=-0.1),
        dict(speeds=(1.0,), first_step="euler"),
        dict(speeds=(1.0,), aux_boundary="zero"),
        dict(speeds=(1.0,), threads=0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SchemeConfig(**kwargs)


def test_config_roundtrip():
    c = SchemeConfig(speeds=[1, 2], eps=0.1)
    assert SchemeConfig(**{**c.to_dict(), "speeds": tuple(c.to_dict()["speeds"])}) == c


def test_compatibility_error():
    grid = Grid.box([1.0], [8])
    prob = Problem(f=zero, u0=lambda x: 1.0 + 0 * x[0], u1=zero, g=zero, g_aux=[zero])
    with pytest.raises(ConfigError, match="differs from u0"):
        run(prob, grid, TimeMesh.uniform_mesh(0.1, 4), SchemeConfig(speeds=(1.0,)))


def test_first_step_constant_velocity():
    grid = Grid.box([1.0, 1.0], [6, 5])
    c = 0.75
    prob = Problem(f=zero, u0=zero, u1=lambda x: c, g=lambda x, t: c * t, g_aux=[zero, zero])
    ht = 0.01
    v1 = first_step(grid.field(), prob, SchemeConfig(speeds=(1.0, 1.0)), ht)
    np.testing.assert_allclose(v1.values, ht * c, rtol=1e-14)


def test_first_step_variants_agree_for_polynomial_forcing():
    grid = Grid.box([1.0], [8])
    f = lambda x, t: (1 + t + t**2) * np.ones_like(x[0])
    prob = Problem(f=f, u0=zero, u1=zero, g=zero, g_aux=[zero], f_t=lambda x, t: (1 + 2 * t) + 0 * x[0], f_tt=lambda x, t: 2.0 + 0 * x[0])
    ht = 0.1
    a = f_dht0(prob, grid, ht, "three-level").values
    b = f_dht0(prob, grid, ht, "analytic").values
    c = f_dht0(prob, grid, ht, "two-level").values
    np.testing.assert_allclose(a, b, rtol=1e-14)
    np.testing.assert_allclose(c, b, rtol=1e-14)


def test_threads_are_bitwise_identical():
    entry = problems.get("standing-wave-2d")
    prob, _ = entry.build()
    grid = entry.grid(12)
    tm = TimeMesh.uniform_mesh(0.3, 10)
    s1, r1 = run(prob, grid, tm, SchemeConfig(speeds=entry.speeds, threads=1))
    s4, r4 = run(prob, grid, tm, SchemeConfig(speeds=entry.speeds, threads=4))
    assert np.array_equal(s1.v_curr.values, s4.v_curr.values)
    assert [r["err_l2"] for r in r1.rows] == [r["err_l2"] for r in r4.rows]


def test_stability_rejected_names_condition():
    prob, grid, _ = standing(16)
    ht = 1.1 * spectral_threshold_dt(grid, [1.0])
    with pytest.raises(StabilityRejected) as info:
        run(prob, grid, TimeMesh.uniform_mesh(10 * ht, 10), SchemeConfig(speeds=(1.0,)))
    assert "lambda_max" in str(info.value)
    assert not info.value.certificate.ok


def test_divergence_detected():
    prob, grid, _ = standing(16)
    ht = 1.3 * spectral_threshold_dt(grid, [1.0])
    cfg = SchemeConfig(speeds=(1.0,), enforce_stability=False, divergence_limit=1e3, energy=False)
    with pytest.raises(DivergenceError) as info:
        run(prob, grid, TimeMesh.uniform_mesh(400 * ht, 400), cfg)
    assert info.value.step > 1


def test_report_rows_and_summary():
    prob, grid, tm = standing()
    state, report = run(prob, grid, tm, SchemeConfig(speeds=(1.0,)))
    assert [r["m"] for r in report.rows] == list(range(1, tm.count + 1))
    assert state.m == tm.count and state.t == pytest.approx(tm.final_time)
    s = report.summary()
    assert s["levels"] == tm.count
    assert report.energy_available
    assert s["energy"]["bound_ok"] is True
    assert report.aux_solves == tm.count  # one solve per level in 1D


def test_energy_unavailable_for_nonzero_boundary():
    entry = problems.get("traveling-wave-1d")
    prob, _ = entry.build()
    _, report = run(prob, entry.grid(16), TimeMesh.uniform_mesh(0.2, 8), SchemeConfig(speeds=entry.speeds))
    assert not report.energy_available
    assert report.max_l2_error is not None


def test_step_main_matches_run():
    prob, grid, tm = standing(M=12)
    cfg = SchemeConfig(speeds=(1.0,))
    levels = []
    run(prob, grid, tm, cfg, callback=lambda m, t, v: levels.append(v.copy()))
    m = 3
    W = compute_auxiliary(Field(grid, levels[m]), tm.nodes[m], prob, 0, cfg.speeds)
    W = W * 1.0  # a_k = 1
    st = SchemeState(Field(grid, levels[m - 1]), Field(grid, levels[m]), m, tm.nodes[m], tm.h, W)
    new = step_main(st, assemble_f_star(prob, m, grid, cfg.speeds, tm), prob, cfg)
    np.testing.assert_allclose(new.values, levels[m + 1], rtol=0, atol=1e-15)


def test_aux_boundary_initial_and_simplified_first_step():
    entry = problems.get("standing-wave-2d")
    prob, _ = entry.build()
    grid = entry.grid(10)
    v0 = Field(grid, grid.sample(prob.u0))
    ht = 0.01
    base = first_step(v0, prob, SchemeConfig(speeds=entry.speeds), ht)
    init = first_step(v0, prob, SchemeConfig(speeds=entry.speeds, aux_boundary="initial"), ht)
    simp = first_step(v0, prob, SchemeConfig(speeds=entry.speeds, simplified_first_step=True), ht)
    exact = grid.sample(prob.exact, ht)
    for v in (base, init, simp):
        assert np.max(np.abs(v.values - exact)) < 5e-6
    bare = dataclasses.replace(prob, u0_second=None, Lu0=None)
    with pytest.raises(ConfigError):
        first_step(v0, bare, SchemeConfig(speeds=entry.speeds, aux_boundary="initial"), ht)
    with pytest.raises(ConfigError):
        first_step(v0, bare, SchemeConfig(speeds=entry.speeds, simplified_first_step=True), ht)


def test_pde_boundary_aux_uses_trace_on_normal_faces():
    # u = x^2 y^2 + t^2 on [0,1]^2, a = (1, 2)
    g_tt = lambda x, t: 2.0 + 0 * x[0]
    second = [lambda x, t: 2 * x[1] ** 2, lambda x, t: 2 * x[0] ** 2]
    f = lambda x, t: 2.0 - 2 * x[1] ** 2 - 4 * 2 * x[0] ** 2
    gk = pde_boundary_aux(g_tt, second, f, (1.0, 2.0), (1.0, 1.0))
    x = (np.array([0.0, 1.0, 0.3]), np.array([0.4, 0.7, 1.0]))
    np.testing.assert_allclose(gk[0](x, 0.0), 2 * x[1] ** 2, atol=1e-14)
    np.testing.assert_allclose(gk[1](x, 0.0), 4 * 2 * x[0] ** 2, atol=1e-14)


def test_nonuniform_mesh_rejected_by_run():
    prob, grid, _ = standing()
    with pytest.raises(ConfigError):
        run(prob, grid, TimeMesh.graded(0.5, 10, 1.05), SchemeConfig(speeds=(1.0,)))


def test_sufficient_step_runs_clean():
    prob, grid, _ = standing(16)
    ht = sufficient_dt(grid, [1.0])
    M = int(np.ceil(1.0 / ht))
    _, report = run(prob, grid, TimeMesh.uniform_mesh(M * ht, M), SchemeConfig(speeds=(1.0,)))
    assert report.certificate.ok
    assert report.max_l2_error < 1e-3
