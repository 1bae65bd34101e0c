"""Spatial and temporal meshes and the mesh-function container.

A :class:`Grid` is a tensor product of 1D :class:`Axis` objects. Every axis
may be uniform or graded; uniform axes are detected automatically and select
the cheaper uniform stencils downstream.

Mesh functions (:class:`Field`) store one value per node in a single
C-contiguous array of shape ``(N_1+1, ..., N_n+1)``, so the last axis is the
fastest and any axis can be traversed as a batch of independent lines.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

UNIFORM_RTOL = 1e-12


class MeshError(ValueError):
    """Raised for invalid mesh parameters (bad extents, counts or node lists)."""


def _is_uniform(steps: NDArray[np.float64]) -> bool:
    # differences of evenly spaced nodes carry rounding of order eps * extent
    h0 = steps[0]
    tol = UNIFORM_RTOL * abs(h0) + 8.0 * np.finfo(float).eps * float(np.sum(steps))
    return bool(np.all(np.abs(steps - h0) <= tol))


def _check_nodes(nodes: NDArray[np.float64], what: str) -> NDArray[np.float64]:
    if nodes.ndim != 1 or nodes.size < 3:
        raise MeshError(f"{what} needs at least 3 nodes (N >= 2), got {nodes.size}")
    if not np.all(np.isfinite(nodes)):
        raise MeshError(f"{what} nodes must be finite")
    if nodes[0] != 0.0:
        raise MeshError(f"{what} must start at 0, got {nodes[0]!r}")
    if np.any(np.diff(nodes) <= 0):
        raise MeshError(f"{what} nodes must be strictly ascending")
    return nodes


@dataclass(frozen=True, eq=False)
class Axis:
    """Nodes ``0 = x_0 < ... < x_N = X`` along one coordinate direction."""

    nodes: NDArray[np.float64]
    uniform: bool = field(init=False)

    def __post_init__(self) -> None:
        nodes = _check_nodes(np.array(self.nodes, dtype=float), "axis")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "uniform", _is_uniform(np.diff(nodes)))

    @property
    def count(self) -> int:
        """Number of intervals N."""
        return self.nodes.size - 1

    @property
    def extent(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def steps(self) -> NDArray[np.float64]:
        """Steps ``h_l = x_l - x_{l-1}`` for ``l = 1..N``."""
        if self.uniform:
            return np.full(self.count, self.h)
        return np.diff(self.nodes)

    @cached_property
    def half_steps(self) -> NDArray[np.float64]:
        """``h_{*l} = (h_l + h_{l+1}) / 2`` at the interior nodes ``l = 1..N-1``."""
        s = self.steps
        return 0.5 * (s[:-1] + s[1:])

    @property
    def h(self) -> float:
        """The common step of a uniform axis (``X / N``)."""
        if not self.uniform:
            raise MeshError("axis is not uniform; use steps")
        return self.extent / self.count

    @property
    def h_min(self) -> float:
        return float(self.steps.min())

    @property
    def h_max(self) -> float:
        return float(self.steps.max())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Axis):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())

    def __repr__(self) -> str:
        kind = "uniform" if self.uniform else "graded"
        return f"Axis({kind}, N={self.count}, X={self.extent:g})"


def make_uniform_axis(extent: float, count: int) -> Axis:
    """Equispaced axis on ``[0, extent]`` with ``count`` intervals."""
    if not extent > 0:
        raise MeshError(f"extent must be positive, got {extent!r}")
    if int(count) != count or count < 2:
        raise MeshError(f"need N >= 2 intervals, got {count!r}")
    count = int(count)
    nodes = np.arange(count + 1) * (extent / count)
    nodes[-1] = extent
    return Axis(nodes)


def _geometric_nodes(extent: float, count: int, ratio: float) -> NDArray[np.float64]:
    if ratio == 1.0:
        return make_uniform_axis(extent, count).nodes
    # first step h0 with h0 * (r^N - 1) / (r - 1) = X
    h0 = extent * (ratio - 1.0) / (ratio**count - 1.0)
    steps = h0 * ratio ** np.arange(count)
    nodes = np.concatenate(([0.0], np.cumsum(steps)))
    nodes[-1] = extent
    return nodes


def make_graded_axis(extent: float, count: int, ratio: float) -> Axis:
    """Axis whose steps grow geometrically, ``h_{l+1} = ratio * h_l``.

    ``ratio = 1`` reproduces :func:`make_uniform_axis` node for node.
    """
    if not ratio > 0:
        raise MeshError(f"grading ratio must be positive, got {ratio!r}")
    if not extent > 0:
        raise MeshError(f"extent must be positive, got {extent!r}")
    if int(count) != count or count < 2:
        raise MeshError(f"need N >= 2 intervals, got {count!r}")
    return Axis(_geometric_nodes(float(extent), int(count), float(ratio)))


def make_axis(nodes: ArrayLike) -> Axis:
    """Axis from an explicit ascending node list starting at 0."""
    return Axis(np.asarray(nodes, dtype=float))


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Time levels ``0 = t_0 < ... < t_M = T``."""

    nodes: NDArray[np.float64]
    uniform: bool = field(init=False)

    def __post_init__(self) -> None:
        nodes = _check_nodes(np.array(self.nodes, dtype=float), "time mesh")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "uniform", _is_uniform(np.diff(nodes)))

    @classmethod
    def uniform_mesh(cls, final_time: float, count: int) -> TimeMesh:
        return cls(make_uniform_axis(final_time, count).nodes)

    @classmethod
    def graded(cls, final_time: float, count: int, ratio: float) -> TimeMesh:
        return cls(make_graded_axis(final_time, count, ratio).nodes)

    @property
    def count(self) -> int:
        """Number of steps M."""
        return self.nodes.size - 1

    @property
    def final_time(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def steps(self) -> NDArray[np.float64]:
        """``h_{tm} = t_m - t_{m-1}`` for ``m = 1..M`` (index ``m-1``)."""
        if self.uniform:
            return np.full(self.count, self.h)
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        if not self.uniform:
            raise MeshError("time mesh is not uniform; use steps")
        return self.final_time / self.count

    @property
    def h_max(self) -> float:
        return float(self.steps.max())

    def step(self, m: int) -> float:
        """``h_{tm}``, the step ending at level m (``1 <= m <= M``)."""
        if not 1 <= m <= self.count:
            raise IndexError(f"time step index {m} outside 1..{self.count}")
        return float(self.steps[m - 1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeMesh):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())


class Grid:
    """Tensor-product rectangular mesh ``axes[0] x ... x axes[n-1]``."""

    def __init__(self, axes: Sequence[Axis]):
        axes = tuple(axes)
        if len(axes) < 1:
            raise MeshError("a grid needs at least one axis")
        for ax in axes:
            if not isinstance(ax, Axis):
                raise TypeError(f"expected Axis, got {type(ax).__name__}")
        self.axes = axes
        self.shape = tuple(ax.count + 1 for ax in axes)
        self.interior_shape = tuple(ax.count - 1 for ax in axes)
        self.strides = tuple(int(np.prod(self.shape[k + 1 :], dtype=int)) for k in range(self.ndim))

    @classmethod
    def box(cls, extents: Sequence[float], counts: Sequence[int]) -> Grid:
        if len(extents) != len(counts):
            raise MeshError("extents and counts differ in length")
        return cls([make_uniform_axis(X, N) for X, N in zip(extents, counts)])

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def uniform(self) -> bool:
        return all(ax.uniform for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def extents(self) -> tuple[float, ...]:
        return tuple(ax.extent for ax in self.axes)

    @property
    def interior(self) -> tuple[slice, ...]:
        """Index tuple selecting the interior nodes ``omega_h``."""
        return (slice(1, -1),) * self.ndim

    @cached_property
    def boundary_mask(self) -> NDArray[np.bool_]:
        """Boolean array, True on the boundary nodes."""
        mask = np.ones(self.shape, dtype=bool)
        mask[self.interior] = False
        mask.setflags(write=False)
        return mask

    @cached_property
    def coords(self) -> tuple[NDArray[np.float64], ...]:
        """Broadcastable (sparse, ``ij``-indexed) coordinate arrays."""
        return tuple(np.meshgrid(*(ax.nodes for ax in self.axes), indexing="ij", sparse=True))

    def node_coordinates(self, index: Sequence[int]) -> tuple[float, ...]:
        if len(index) != self.ndim:
            raise IndexError(f"expected {self.ndim} indices, got {len(index)}")
        out = []
        for k, (ax, i) in enumerate(zip(self.axes, index)):
            if not 0 <= i <= ax.count:
                raise IndexError(f"index {i} outside 0..{ax.count} on axis {k}")
            out.append(float(ax.nodes[i]))
        return tuple(out)

    def is_boundary(self, index: Sequence[int]) -> bool:
        self.node_coordinates(index)
        return any(i == 0 or i == ax.count for ax, i in zip(self.axes, index))

    def sample(self, fn: Callable[..., ArrayLike], *args) -> NDArray[np.float64]:
        """Evaluate ``fn(coords, *args)`` on every node as a fresh full array."""
        values = np.asarray(fn(self.coords, *args), dtype=float)
        return np.array(np.broadcast_to(values, self.shape), dtype=float)

    def field(self, values: ArrayLike | None = None) -> Field:
        if values is None:
            return Field(self, np.zeros(self.shape))
        return Field(self, values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.axes == other.axes

    def __hash__(self) -> int:
        return hash(self.axes)

    def __repr__(self) -> str:
        return f"Grid({', '.join(map(repr, self.axes))})"


def node_coordinates(grid: Grid, index: Sequence[int]) -> tuple[float, ...]:
    """Coordinates ``(x_{1,l_1}, ..., x_{n,l_n})`` of one node."""
    return grid.node_coordinates(index)


class Field:
    """A mesh function on all nodes of a grid.

    Arithmetic with other fields on the same grid and with scalars returns
    new fields; the underlying array is ``values``.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: ArrayLike):
        arr = np.array(values, dtype=float)
        if arr.shape != grid.shape:
            arr = arr.reshape(grid.shape) if arr.size == grid.size else None
            if arr is None:
                raise ValueError(f"values do not match grid shape {grid.shape}")
        self.grid = grid
        self.values = np.ascontiguousarray(arr)

    @property
    def interior(self) -> NDArray[np.float64]:
        return self.values[self.grid.interior]

    @property
    def boundary(self) -> NDArray[np.float64]:
        return self.values[self.grid.boundary_mask]

    def copy(self) -> Field:
        return Field(self.grid, self.values.copy())

    def with_zero_boundary(self) -> Field:
        out = np.zeros(self.grid.shape)
        out[self.grid.interior] = self.interior
        return Field(self.grid, out)

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid is not self.grid and other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"Field(shape={self.grid.shape})"
