"""Uniform grids, dependency-compressed scalar fields and their calculus.

Every coefficient of an s-metric lives on one tensor-product grid whose axes
follow the fixed order ``x1, x2, y3, y4, v5, v6, v7, v8`` (``p5..p8`` when the
fibers carry momentum labels).  A field stores samples only along the axes it
actually depends on; along every other axis it is constant by construction.

Derivatives use 4th-order central stencils wherever they fit and 4th-order
shifted stencils at the boundary rows.  Cumulative integrals are anchored at
the lower bound of the axis.
"""

from __future__ import annotations

import copy
import functools
import json
import math
import operator
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import DomainError, EvaluationError

VELOCITY_AXES = ("x1", "x2", "y3", "y4", "v5", "v6", "v7", "v8")
MOMENTUM_AXES = ("x1", "x2", "y3", "y4", "p5", "p6", "p7", "p8")
MIN_NODES = 9


def slot_of(name: str) -> int:
    """Position (0..7) of an axis label in the canonical ordering."""
    if name in VELOCITY_AXES:
        return VELOCITY_AXES.index(name)
    if name in MOMENTUM_AXES:
        return MOMENTUM_AXES.index(name)
    raise DomainError(f"unknown axis label {name!r}")


def axis_label(slot: int, fiber_label: str = "velocity") -> str:
    names = VELOCITY_AXES if fiber_label == "velocity" else MOMENTUM_AXES
    return names[slot]


def relabel_axis(name: str, fiber_label: str) -> str:
    return axis_label(slot_of(name), fiber_label)


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    n: int

    def __post_init__(self) -> None:
        slot_of(self.name)
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise DomainError(f"axis {self.name}: need finite hi > lo, got [{self.lo}, {self.hi}]")
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise DomainError(f"axis {self.name}: need n >= {MIN_NODES}, got {self.n}")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "n", int(self.n))

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def refined(self, factor: int = 2) -> "Axis":
        return Axis(self.name, self.lo, self.hi, (self.n - 1) * factor + 1)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __init__(self, axes: Iterable[Axis]):
        axes = tuple(axes)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate axis names in {names}")
        slots = [slot_of(n) for n in names]
        if len(set(slots)) != len(slots):
            raise DomainError(f"axes {names} name the same coordinate twice")
        if slots != sorted(slots):
            raise DomainError(f"axes must follow the canonical order, got {names}")
        fibers = {n[0] for n in names if slot_of(n) >= 4}
        if len(fibers) > 1:
            raise DomainError("velocity and momentum fiber labels cannot be mixed")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_bounds(cls, spec: Mapping[str, tuple[float, float, int]]) -> "Grid":
        items = sorted(spec.items(), key=lambda kv: slot_of(kv[0]))
        return cls(Axis(k, lo, hi, n) for k, (lo, hi, n) in items)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    @property
    def fiber_label(self) -> str:
        return "momentum" if any(n.startswith("p") for n in self.names) else "velocity"

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise DomainError(f"axis {name!r} not in grid {self.names}")

    def name_for_slot(self, slot: int) -> str | None:
        for a in self.axes:
            if slot_of(a.name) == slot:
                return a.name
        return None

    def ordered(self, names: Iterable[str]) -> tuple[str, ...]:
        names = set(names)
        unknown = names - set(self.names)
        if unknown:
            raise DomainError(f"axes {sorted(unknown)} not in grid {self.names}")
        return tuple(n for n in self.names if n in names)

    def refined(self, factor: int = 2, only: Iterable[str] | None = None) -> "Grid":
        only = set(self.names if only is None else only)
        return Grid(a.refined(factor) if a.name in only else a for a in self.axes)

    def relabeled(self, fiber_label: str) -> "Grid":
        return Grid(Axis(relabel_axis(a.name, fiber_label), a.lo, a.hi, a.n) for a in self.axes)

    def to_dict(self) -> dict[str, list]:
        return {a.name: [a.lo, a.hi, a.n] for a in self.axes}


def _first_bad_node(samples: np.ndarray) -> tuple[int, ...]:
    bad = np.argwhere(~np.isfinite(samples))
    return tuple(int(i) for i in bad[0]) if bad.size else ()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a function over ``deps``; constant along all other axes."""

    grid: Grid
    deps: tuple[str, ...]
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        deps = self.grid.ordered(self.deps)
        if tuple(self.deps) != deps:
            raise DomainError(f"deps {self.deps} are not in grid order {deps}")
        arr = np.array(self.samples, dtype=np.float64, copy=True)
        shape = tuple(self.grid.axis(d).n for d in deps)
        if arr.shape != shape:
            raise DomainError(f"samples shape {arr.shape} does not match deps {deps} -> {shape}")
        if not np.all(np.isfinite(arr)):
            node = _first_bad_node(arr)
            where = {d: float(self.grid.axis(d).nodes[i]) for d, i in zip(deps, node)}
            raise EvaluationError(f"non-finite sample at node {where}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    # construction helpers
    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, (), np.asarray(float(value)))

    @classmethod
    def coordinate(cls, grid: Grid, name: str) -> "ScalarField":
        return cls(grid, (name,), grid.axis(name).nodes)

    @classmethod
    def from_full(cls, grid: Grid, deps: Sequence[str], full: np.ndarray) -> "ScalarField":
        return cls(grid, grid.ordered(deps), full)

    # shape bookkeeping
    @property
    def shape(self) -> tuple[int, ...]:
        return self.samples.shape

    def broadcast_to(self, deps: Sequence[str]) -> np.ndarray:
        """Samples broadcast onto a superset of the dependency axes."""
        deps = self.grid.ordered(deps)
        missing = set(self.deps) - set(deps)
        if missing:
            raise DomainError(f"cannot drop dependency axes {sorted(missing)}")
        view_shape = [self.grid.axis(d).n if d in self.deps else 1 for d in deps]
        full_shape = [self.grid.axis(d).n for d in deps]
        return np.broadcast_to(self.samples.reshape(view_shape), full_shape)

    def expand(self, deps: Sequence[str]) -> "ScalarField":
        deps = self.grid.ordered(set(deps) | set(self.deps))
        return ScalarField(self.grid, deps, np.array(self.broadcast_to(deps)))

    def compress(self, atol: float = 0.0) -> "ScalarField":
        """Drop dependency axes along which the samples are constant."""
        keep = []
        for k, d in enumerate(self.deps):
            first = np.take(self.samples, [0], axis=k)
            if np.max(np.abs(self.samples - first), initial=0.0) > atol:
                keep.append(d)
        f = self
        for k, d in reversed(list(enumerate(self.deps))):
            if d not in keep:
                f = ScalarField(f.grid, tuple(x for x in f.deps if x != d), np.take(f.samples, 0, axis=k))
        return f

    # arithmetic
    def _binary(self, other: Any, op: Callable) -> "ScalarField":
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise DomainError("fields live on different grids")
            deps = self.grid.ordered(set(self.deps) | set(other.deps))
            out = op(self.broadcast_to(deps), other.broadcast_to(deps))
        else:
            deps = self.deps
            out = op(self.samples, float(other))
        with np.errstate(all="ignore"):
            return ScalarField(self.grid, deps, out)

    def _rbinary(self, other: Any, op: Callable) -> "ScalarField":
        return ScalarField(self.grid, self.deps, op(float(other), self.samples))

    def __add__(self, o):
        return self._binary(o, operator.add)

    def __radd__(self, o):
        return self._rbinary(o, operator.add)

    def __sub__(self, o):
        return self._binary(o, operator.sub)

    def __rsub__(self, o):
        return self._rbinary(o, operator.sub)

    def __mul__(self, o):
        return self._binary(o, operator.mul)

    def __rmul__(self, o):
        return self._rbinary(o, operator.mul)

    def __truediv__(self, o):
        with np.errstate(all="ignore"):
            return self._binary(o, operator.truediv)

    def __rtruediv__(self, o):
        with np.errstate(all="ignore"):
            return self._rbinary(o, operator.truediv)

    def __pow__(self, p):
        with np.errstate(all="ignore"):
            return ScalarField(self.grid, self.deps, np.power(self.samples, float(p)))

    def __neg__(self):
        return ScalarField(self.grid, self.deps, -self.samples)

    def __abs__(self):
        return ScalarField(self.grid, self.deps, np.abs(self.samples))

    def apply(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        with np.errstate(all="ignore"):
            return ScalarField(self.grid, self.deps, func(self.samples))

    def exp(self) -> "ScalarField":
        return self.apply(np.exp)

    def log(self) -> "ScalarField":
        return self.apply(np.log)

    def sqrt(self) -> "ScalarField":
        return self.apply(np.sqrt)

    # queries
    def interior(self, margin: int = 2) -> np.ndarray:
        """Samples with ``margin`` nodes trimmed at both ends of each dep axis."""
        if margin == 0:
            return self.samples
        return self.samples[tuple(slice(margin, -margin) for _ in self.deps)]

    def norm_inf(self, margin: int = 0) -> float:
        return float(np.max(np.abs(self.interior(margin)), initial=0.0))

    def norm_rms(self, margin: int = 0) -> float:
        x = self.interior(margin)
        return float(np.sqrt(np.mean(x * x))) if x.size else 0.0

    def min(self) -> float:
        return float(np.min(self.samples))

    def max(self) -> float:
        return float(np.max(self.samples))

    def node_index(self, point: Mapping[str, float]) -> tuple[int, ...]:
        idx = []
        for d in self.deps:
            ax = self.grid.axis(d)
            x = float(point[d])
            if x < ax.lo - 1e-12 * (ax.hi - ax.lo) or x > ax.hi + 1e-12 * (ax.hi - ax.lo):
                raise DomainError(f"point {d}={x} outside [{ax.lo}, {ax.hi}]")
            idx.append(int(np.clip(round((x - ax.lo) / ax.spacing), 0, ax.n - 1)))
        return tuple(idx)

    def at(self, point: Mapping[str, float]) -> float:
        """Nearest-node value at a point (only dependency axes are read)."""
        return float(self.samples[self.node_index(point)])

    def allclose(self, other: "ScalarField", atol: float = 0.0, rtol: float = 0.0) -> bool:
        deps = self.grid.ordered(set(self.deps) | set(other.deps))
        return bool(np.allclose(self.broadcast_to(deps), other.broadcast_to(deps), atol=atol, rtol=rtol))


def zeros_like(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.deps, np.zeros(f.shape))


def as_field(grid: Grid, value: ScalarField | float) -> ScalarField:
    return value if isinstance(value, ScalarField) else ScalarField.constant(grid, value)


def max_abs_diff(a: ScalarField, b: ScalarField, margin: int = 0) -> float:
    deps = a.grid.ordered(set(a.deps) | set(b.deps))
    d = ScalarField(a.grid, deps, a.broadcast_to(deps) - b.broadcast_to(deps))
    return d.norm_inf(margin)


# --------------------------------------------------------------------------
# Function specifications
# --------------------------------------------------------------------------

FAMILIES = ("constant", "polynomial", "trigonometric", "tanh", "sech", "exponential", "product", "sum")


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """A closed-form generating function: a family id plus its parameters.

    ``constant``       value
    ``polynomial``     terms: list of [coef, {axis: power}]
    ``trigonometric``  axis, amp, freq, phase, kind ('sin'|'cos'), offset
    ``tanh``/``sech``  axis, amp, k, center, offset; sech is squared if power=2
    ``exponential``    axis, amp, k, offset
    ``product``/``sum`` factors/terms: nested specs
    """

    family: str
    params: Mapping[str, Any]

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise DomainError(f"unknown function family {self.family!r}; known: {FAMILIES}")
        object.__setattr__(self, "params", copy.deepcopy(dict(self.params)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FunctionSpec) and self.to_json() == other.to_json()

    def __hash__(self) -> int:
        return hash(self.to_json())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FunctionSpec":
        d = dict(d)
        family = d.pop("family", None)
        if family is None:
            raise DomainError("function spec needs a 'family'")
        if family in ("product", "sum"):
            key = "factors" if family == "product" else "terms"
            d[key] = [cls.from_dict(x) for x in d.get(key, [])]
        return cls(family, d)

    @classmethod
    def from_json(cls, text: str) -> "FunctionSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family}
        for k, v in self.params.items():
            if isinstance(v, (list, tuple)) and v and isinstance(v[0], FunctionSpec):
                out[k] = [x.to_dict() for x in v]
            else:
                out[k] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def axes(self) -> set[str]:
        p, fam = self.params, self.family
        if fam == "constant":
            return set()
        if fam == "polynomial":
            return {a for _, powers in p["terms"] for a, k in dict(powers).items() if k}
        if fam in ("product", "sum"):
            key = "factors" if fam == "product" else "terms"
            return set().union(*(f.axes() for f in p[key])) if p[key] else set()
        return {p["axis"]}

    def evaluate(self, coords: Mapping[str, np.ndarray | float]) -> np.ndarray | float:
        p, fam = self.params, self.family
        if fam == "constant":
            return float(p["value"])
        if fam == "polynomial":
            total: Any = 0.0
            for coef, powers in p["terms"]:
                term: Any = float(coef)
                for a, k in dict(powers).items():
                    if k:
                        term = term * np.asarray(coords[a], dtype=float) ** int(k)
                total = total + term
            return total
        if fam == "product":
            out: Any = 1.0
            for f in p["factors"]:
                out = out * f.evaluate(coords)
            return out
        if fam == "sum":
            out = 0.0
            for f in p["terms"]:
                out = out + f.evaluate(coords)
            return out
        x = np.asarray(coords[p["axis"]], dtype=float)
        amp = float(p.get("amp", 1.0))
        offset = float(p.get("offset", 0.0))
        if fam == "trigonometric":
            arg = float(p.get("freq", 1.0)) * x + float(p.get("phase", 0.0))
            trig = np.cos if p.get("kind", "sin") == "cos" else np.sin
            return offset + amp * trig(arg)
        if fam == "exponential":
            return offset + amp * np.exp(float(p.get("k", 1.0)) * x)
        arg = float(p.get("k", 1.0)) * (x - float(p.get("center", 0.0)))
        if fam == "tanh":
            return offset + amp * np.tanh(arg)
        return offset + amp * np.cosh(arg) ** (-float(p.get("power", 1.0)))


def eval_on_grid(f: FunctionSpec | Callable[..., Any], g: Grid, deps: Iterable[str] | None = None) -> ScalarField:
    """Sample ``f`` on the nodes of ``g`` restricted to ``deps``.

    ``f`` may also be a plain callable taking axis arrays as keyword arguments.
    """
    if deps is None:
        deps = f.axes() if isinstance(f, FunctionSpec) else g.names
    deps = g.ordered(deps)
    if isinstance(f, FunctionSpec) and not f.axes() <= set(deps):
        raise DomainError(f"function uses axes {sorted(f.axes() - set(deps))} outside deps {deps}")
    shape = tuple(g.axis(d).n for d in deps)
    coords = {}
    for k, d in enumerate(deps):
        view = [1] * len(deps)
        view[k] = shape[k]
        coords[d] = g.axis(d).nodes.reshape(view)
    with np.errstate(all="ignore"):
        vals = f.evaluate(coords) if isinstance(f, FunctionSpec) else f(**coords)
    vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), shape)
    if not np.all(np.isfinite(vals)):
        node = _first_bad_node(vals)
        where = {d: float(g.axis(d).nodes[i]) for d, i in zip(deps, node)}
        raise EvaluationError(f"function {getattr(f, 'family', f)!r} is not finite at node {where}")
    return ScalarField(g, deps, np.array(vals))


# --------------------------------------------------------------------------
# Finite differences
# --------------------------------------------------------------------------


def fd_weights(offsets: Sequence[int], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + o_j h) ~ h^order f^(order)(x)."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    vander = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


_CENTRAL = {1: range(-2, 3), 2: range(-2, 3), 3: range(-3, 4)}
_ONESIDED_LEN = {1: 5, 2: 6, 3: 7}


@functools.lru_cache(maxsize=256)
def _diff_matrix(n: int, order: int) -> np.ndarray:
    central = list(_CENTRAL[order])
    half = central[-1]
    m = _ONESIDED_LEN[order]
    w_central = fd_weights(central, order)
    mat = np.zeros((n, n))
    for i in range(n):
        if half <= i <= n - 1 - half:
            offs, w = central, w_central
        elif i < half:
            offs = list(range(-i, m - i))
            w = fd_weights(offs, order)
        else:
            j = n - 1 - i
            offs = list(range(-m + 1 + j, j + 1))
            w = fd_weights(offs, order)
        for o, wk in zip(offs, w):
            mat[i, i + o] += wk
    mat.setflags(write=False)
    return mat


def partial(f: ScalarField, axis: str, order: int = 1) -> ScalarField:
    """Finite-difference derivative of ``f`` along ``axis``.

    Axes outside ``f.deps`` (including coordinates the grid does not sample)
    give an exact zero.
    """
    if order not in (1, 2, 3):
        raise DomainError(f"derivative order {order} unsupported (1..3)")
    slot_of(axis)
    if axis not in f.deps:
        return zeros_like(f)
    out = diff_samples(f.samples, f.deps.index(axis), f.grid.axis(axis), order)
    return ScalarField(f.grid, f.deps, out)


def diff_samples(samples: np.ndarray, k: int, ax: Axis, order: int = 1) -> np.ndarray:
    """Derivative of a raw sample array along its k-th array axis sampled like ``ax``."""
    mat = _diff_matrix(ax.n, order) / ax.spacing**order
    return np.moveaxis(np.tensordot(mat, samples, axes=([1], [k])), 0, k)


def cumint(f: ScalarField, axis: str, method: str = "trapezoid") -> ScalarField:
    """Cumulative integral along ``axis`` anchored at the lower bound.

    ``method='trapezoid'`` is the composite trapezoid rule (order 2).
    ``method='gregory'`` adds the Euler-Maclaurin end correction
    ``-(h^2/12)(f'(y) - f'(lo))`` with finite-difference slopes (order 4).
    """
    ax = f.grid.axis(axis)
    if axis not in f.deps:
        y = ScalarField.coordinate(f.grid, axis) - ax.lo
        return f * y
    k = f.deps.index(axis)
    out = cumulative_trapezoid(f.samples, dx=ax.spacing, axis=k, initial=0.0)
    if method == "gregory":
        slope = partial(f, axis).samples
        s0 = np.take(slope, [0], axis=k)
        out = out - ax.spacing**2 / 12.0 * (slope - s0)
    elif method != "trapezoid":
        raise DomainError(f"unknown cumint method {method!r}")
    return ScalarField(f.grid, f.deps, out)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


def region_indices(grid: Grid, region: Mapping[str, tuple[float, float]] | None, axes: Iterable[str] | None = None):
    """Node index ranges of a per-axis sub-box, snapped to grid nodes."""
    axes = grid.names if axes is None else grid.ordered(axes)
    region = dict(region or {})
    unknown = set(region) - set(axes)
    if unknown:
        raise DomainError(f"region names axes {sorted(unknown)} outside integration axes {axes}")
    out = {}
    for name in axes:
        ax = grid.axis(name)
        lo, hi = region.get(name, (ax.lo, ax.hi))
        tol = 1e-9 * ax.spacing
        if lo < ax.lo - tol or hi > ax.hi + tol:
            raise DomainError(f"region [{lo}, {hi}] exceeds axis {name} bounds [{ax.lo}, {ax.hi}]")
        i0 = int(math.ceil((lo - ax.lo) / ax.spacing - 1e-9))
        i1 = int(math.floor((hi - ax.lo) / ax.spacing + 1e-9))
        if i1 - i0 < 1:
            raise DomainError(f"region along {name} contains fewer than two nodes")
        out[name] = (i0, i1)
    return out


def quadrature(f: ScalarField, region: Mapping[str, tuple[float, float]] | None = None,
               axes: Iterable[str] | None = None) -> float:
    """Composite trapezoid integral of ``f`` over a sub-box of the grid.

    Integration runs over ``axes`` (default: all grid axes).  Axes outside
    ``f.deps`` contribute their (node-snapped) length as a measure factor.
    """
    idx = region_indices(f.grid, region, axes)
    arr = f.samples
    sl = tuple(slice(idx[d][0], idx[d][1] + 1) if d in idx else slice(None) for d in f.deps)
    arr = arr[sl]
    factor = 1.0
    for name, (i0, i1) in idx.items():
        if name not in f.deps:
            factor *= (i1 - i0) * f.grid.axis(name).spacing
    for k in reversed(range(len(f.deps))):
        d = f.deps[k]
        if d in idx:
            arr = trapezoid(arr, dx=f.grid.axis(d).spacing, axis=k)
    if np.ndim(arr) != 0:
        raise DomainError(f"field depends on axes {[d for d in f.deps if d not in idx]} outside the integration axes")
    return float(arr) * factor
