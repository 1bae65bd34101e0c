"""Manufactured problems built from a closed-form solution.

A solution ``u(x, t)`` (and optionally ``rho(x)``, ``a_k(x)``) is given as
a text expression in ``x, y, z, t``. Sympy differentiates it to produce the
source, initial and boundary data; everything is then lambdified to numpy.
"""

from __future__ import annotations

import ast
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp

from .extensions import VariableCoefficients
from .grid import Grid, TimeMesh, make_axis, make_graded_axis, make_uniform_axis
from .scheme import Problem
from .stencil_ops import ConfigError

SPACE_NAMES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "atan")
CONSTANTS = ("pi", "E")
_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


class ExpressionError(ConfigError):
    """An expression uses syntax or names outside the allowed grammar."""


def symbols(ndim: int) -> tuple[tuple[sp.Symbol, ...], sp.Symbol]:
    if not 1 <= ndim <= 3:
        raise ConfigError("expressions support 1 to 3 space dimensions")
    return tuple(sp.Symbol(n, real=True) for n in SPACE_NAMES[:ndim]), sp.Symbol("t", real=True)


def parse_expression(text: str, ndim: int, allow_t: bool = True) -> sp.Expr:
    """Parse ``text`` into a sympy expression.

    Grammar: numbers, ``+ - * / **`` (``^`` is accepted as power), the
    variables ``x, y, z`` (first ``ndim``) and ``t``, constants ``pi, E``
    and the functions in :data:`FUNCTIONS`.
    """
    text = str(text).replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as err:
        raise ExpressionError(f"cannot parse {text!r}: {err.msg}") from None
    xs, t = symbols(ndim)
    names = {s.name: s for s in xs}
    if allow_t:
        names["t"] = t
    names.update({c: getattr(sp, c) for c in CONSTANTS})
    funcs = {f: getattr(sp, f) for f in FUNCTIONS}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in funcs or node.keywords or len(node.args) != 1:
                raise ExpressionError(f"unsupported call in {text!r}")
        elif isinstance(node, ast.Name) and node.id not in names and node.id not in funcs:
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric constant in {text!r}")
    return sp.sympify(text, locals={**names, **funcs})


def _numpy(expr: sp.Expr, xs, t=None):
    args = list(xs) + ([t] if t is not None else [])
    fn = sp.lambdify(args, expr, modules="numpy")
    if t is None:
        return lambda x: fn(*x)
    return lambda x, tt: fn(*x, tt)


def manufacture(
    u: str | sp.Expr,
    ndim: int,
    speeds: Sequence[str | float] = (),
    rho: str | float | None = None,
    name: str = "",
) -> tuple[Problem, VariableCoefficients | None]:
    """Problem data for ``rho u_tt - sum_k a_k^2 u_kk = f`` with the given exact ``u``.

    Returns the problem and, when ``rho`` or any speed depends on ``x``,
    the matching :class:`VariableCoefficients` (otherwise ``None``).
    """
    xs, t = symbols(ndim)
    ue = parse_expression(u, ndim) if isinstance(u, str) else sp.sympify(u)
    speeds = list(speeds) or [1.0] * ndim
    if len(speeds) != ndim:
        raise ConfigError(f"need {ndim} speeds")
    a = [parse_expression(s, ndim, allow_t=False) if isinstance(s, str) else sp.Float(s) for s in speeds]
    r = sp.Integer(1) if rho is None else (parse_expression(rho, ndim, allow_t=False) if isinstance(rho, str) else sp.Float(rho))
    second = [sp.diff(ue, xk, 2) for xk in xs]
    L = sum((a[k] ** 2 * second[k] for k in range(ndim)), sp.Integer(0))
    f = sp.simplify(r * sp.diff(ue, t, 2) - L)
    u1 = sp.diff(ue, t)
    u0 = ue.subs(t, 0)
    problem = Problem(
        f=_numpy(f, xs, t),
        u0=_numpy(u0, xs),
        u1=_numpy(u1.subs(t, 0), xs),
        g=_numpy(ue, xs, t),
        g_aux=[_numpy(a[k] ** 2 * second[k], xs, t) for k in range(ndim)],
        exact=_numpy(ue, xs, t),
        f_t=_numpy(sp.diff(f, t), xs, t),
        f_tt=_numpy(sp.diff(f, t, 2), xs, t),
        Lu0=_numpy(L.subs(t, 0), xs),
        Lu1=_numpy(sum((a[k] ** 2 * sp.diff(u1, xk, 2) for k, xk in enumerate(xs)), sp.Integer(0)).subs(t, 0), xs),
        u0_second=[_numpy(s.subs(t, 0), xs) for s in second],
        name=name,
    )
    variable = bool(r.free_symbols) or any(ak.free_symbols for ak in a)
    coeffs = None
    if variable:
        def cb(e):
            return _numpy(e, xs) if e.free_symbols else float(e)

        coeffs = VariableCoefficients(cb(r), [cb(ak) for ak in a])
    return problem, coeffs


@dataclass(frozen=True)
class CatalogEntry:
    """A named manufactured problem with a default mesh family.

    ``mesh`` is ``"uniform"``, ``"graded"`` (geometric, ratio ``ratio``
    per interval at the coarsest level) or ``"perturbed"`` (uniform nodes
    moved by up to ``ratio * h``, seeded). ``time_mesh`` is ``"uniform"``
    or ``"graded"``.
    """

    name: str
    description: str
    u: str
    ndim: int
    speeds: tuple = (1.0,)
    extents: tuple = (1.0,)
    final_time: float = 1.0
    rho: str | None = None
    mesh: str = "uniform"
    ratio: float = 1.0
    time_mesh: str = "uniform"
    time_ratio: float = 1.0
    base_n: int = 8
    seed: int = 12345
    tags: tuple = field(default=())

    def build(self) -> tuple[Problem, VariableCoefficients | None]:
        return manufacture(self.u, self.ndim, self.speeds, self.rho, self.name)

    @property
    def variable(self) -> bool:
        return self.rho is not None or any(isinstance(s, str) for s in self.speeds)

    def grid(self, n: int | Sequence[int]) -> Grid:
        """Grid with ``n`` intervals along every axis (or per-axis counts)."""
        counts = [int(n)] * self.ndim if np.isscalar(n) else [int(c) for c in n]
        if len(counts) != self.ndim:
            raise ConfigError(f"need {self.ndim} interval counts, got {len(counts)}")
        axes = []
        for k, (X, n) in enumerate(zip(self.extents, counts)):
            if self.mesh == "uniform":
                axes.append(make_uniform_axis(X, n))
            elif self.mesh == "graded":
                # per-interval ratio shrinks so the total stretch stays bounded by ratio**base_n
                r = self.ratio ** (self.base_n / n)
                axes.append(make_graded_axis(X, n, r))
            elif self.mesh == "perturbed":
                rng = np.random.default_rng(self.seed + 1000 * k + n)
                h = X / n
                nodes = np.linspace(0.0, X, n + 1)
                nodes[1:-1] += self.ratio * h * rng.uniform(-1.0, 1.0, n - 1)
                axes.append(make_axis(nodes))
            else:
                raise ConfigError(f"unknown mesh kind {self.mesh!r}")
        return Grid(axes)

    def time_levels(self, ht: float) -> TimeMesh:
        """Time mesh on ``[0, final_time]`` with largest step at most ``ht``."""
        M = max(2, math.ceil(self.final_time / ht - 1e-9))
        if self.time_mesh == "uniform":
            return TimeMesh.uniform_mesh(self.final_time, M)
        if self.time_mesh == "graded":
            r = self.time_ratio ** (1.0 / M)
            tm = TimeMesh.graded(self.final_time, M, r)
            while tm.h_max > ht:
                M += 1
                tm = TimeMesh.graded(self.final_time, M, self.time_ratio ** (1.0 / M))
            return tm
        raise ConfigError(f"unknown time mesh kind {self.time_mesh!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speeds"] = list(self.speeds)
        d["extents"] = list(self.extents)
        d["tags"] = list(self.tags)
        return d


CATALOG: dict[str, CatalogEntry] = {
    e.name: e
    for e in [
        CatalogEntry(
            "standing-wave-1d",
            "standing wave sin(pi x) cos(pi t), homogeneous data",
            "sin(pi*x)*cos(pi*t)",
            1,
            tags=("energy",),
        ),
        CatalogEntry(
            "traveling-wave-1d",
            "traveling wave with nonzero boundary data",
            "sin(2*pi*(x - 1.5*t)) + cos(x + 1.5*t)",
            1,
            speeds=(1.5,),
        ),
        CatalogEntry(
            "standing-wave-2d",
            "standing mode sin(pi x) sin(2 pi y) cos(pi sqrt(5) t)",
            "sin(pi*x)*sin(2*pi*y)*cos(pi*sqrt(5)*t)",
            2,
            speeds=(1.0, 1.0),
            extents=(1.0, 1.0),
            tags=("energy",),
        ),
        CatalogEntry(
            "traveling-wave-2d",
            "oblique plane wave with nonzero boundary data",
            "cos(2*x - y + 2*t) + sin(x + y - 1.2*t)",
            2,
            speeds=(1.0, 0.9),
            extents=(1.0, 1.0),
        ),
        CatalogEntry(
            "standing-wave-3d",
            "standing mode sin(pi x) sin(pi y) sin(pi z) cos(pi sqrt(3) t)",
            "sin(pi*x)*sin(pi*y)*sin(pi*z)*cos(pi*sqrt(3)*t)",
            3,
            speeds=(1.0, 1.0, 1.0),
            extents=(1.0, 1.0, 1.0),
            final_time=0.5,
            tags=("energy",),
        ),
        CatalogEntry(
            "forced-2d",
            "anisotropic speeds, nonzero source and boundary data",
            "exp(-t)*cos(2*x + y) + x**2*y*t**2 + sin(3*t)*sin(x*y)",
            2,
            speeds=(1.0, 0.7),
            extents=(1.0, 1.5),
        ),
        CatalogEntry(
            "forced-hh-2d",
            "source vanishing on the boundary, homogeneous data",
            "sin(pi*x)*sin(pi*y)*(1 + t + t**2)*cos(2*t)",
            2,
            speeds=(1.0, 0.8),
            extents=(1.0, 1.0),
            tags=("energy",),
        ),
        CatalogEntry(
            "traveling-wave-3d",
            "plane wave in 3D with nonzero boundary data",
            "sin(x + 2*y - z - 2*t)",
            3,
            speeds=(1.0, 0.8, 0.9),
            extents=(1.0, 1.0, 1.0),
            final_time=0.5,
        ),
        CatalogEntry(
            "polynomial-3d",
            "polynomial solution reproduced to rounding",
            "t**3 + t*(x**2*y + z**3) + x**3*y**3*z**2",
            3,
            speeds=(1.0, 1.0, 1.0),
            extents=(1.0, 1.0, 1.0),
            final_time=0.5,
        ),
        CatalogEntry(
            "variable-rho-1d",
            "variable density and speed, rho u_tt = a^2 u_xx + f",
            "sin(2*x + 1)*cos(3*t) + x*t",
            1,
            speeds=("1 + 0.3*sin(x)",),
            rho="1 + 0.5*x**2",
        ),
        CatalogEntry(
            "graded-1d",
            "smooth solution on a geometrically graded mesh",
            "sin(3*x + 0.5)*cos(2*t) + x**2*t",
            1,
            mesh="graded",
            ratio=1.25,
        ),
        CatalogEntry(
            "perturbed-1d",
            "smooth solution on randomly perturbed nodes",
            "sin(3*x + 0.5)*cos(2*t) + x**2*t",
            1,
            mesh="perturbed",
            ratio=0.2,
        ),
        CatalogEntry(
            "nonuniform-time-1d",
            "smooth solution on a geometrically graded time mesh",
            "sin(2*x + 0.3)*cos(2*t + 0.2) + exp(-t)*x",
            1,
            time_mesh="graded",
            time_ratio=3.0,
        ),
    ]
}


def get(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; known: {', '.join(CATALOG)}") from None


def pde_data(entry: CatalogEntry) -> dict:
    """Source, boundary and coefficient expressions of a catalog entry as text."""
    xs, t = symbols(entry.ndim)
    u = parse_expression(entry.u, entry.ndim)
    a = [parse_expression(str(s), entry.ndim, allow_t=False) for s in entry.speeds]
    r = sp.Integer(1) if entry.rho is None else parse_expression(entry.rho, entry.ndim, allow_t=False)
    f = sp.simplify(r * sp.diff(u, t, 2) - sum(a[k] ** 2 * sp.diff(u, x, 2) for k, x in enumerate(xs)))
    return {"u": str(u), "f": str(f), "g": "u on the boundary", "rho": str(r), "speeds": [str(ak) for ak in a]}


def listing() -> list[dict]:
    """Machine-readable catalog description."""
    out = []
    for e in CATALOG.values():
        d = e.to_dict()
        d["exact_solution"] = True
        d["pde"] = pde_data(e)
        out.append(d)
    return out
