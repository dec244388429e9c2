"""Shell-decomposed d-metrics, off-diagonal assembly and prime metric catalog.

An s-metric on the (2+2)+(2+2) splitting is stored as

* ``g1, g2``: base coefficients on shell 1 (coordinates x1, x2),
* ``h[a]`` for a = 3..8: fiber coefficients of shells 2, 3, 4,
* ``N[a]``: N-connection components ``N^a_i`` for every coordinate i of the
  lower shells (2, 4, 6 entries for shells 2, 3, 4).

Each shell s has a *fiber* coordinate (the one the generators integrate along)
and a *Killing* coordinate that no coefficient depends on.  For
quasi-stationary data the fibers are (y3, v5, v7); the cosmological pattern is
the dual one with fibers (y4, v6, v8).  In both cases ``w`` names the
N-components of the fiber direction and ``n`` those of the Killing direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .errors import DegeneracyError, DomainError
from .fields import Grid, ScalarField, axis_label, partial, slot_of

KINDS = ("quasi_stationary", "cosmological")
DEGENERACY_FLOOR = 1e-12


@dataclass(frozen=True)
class ShellConfig:
    kind: str = "quasi_stationary"
    fiber_label: str = "velocity"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown shell kind {self.kind!r}")
        if self.fiber_label not in ("velocity", "momentum"):
            raise DomainError(f"unknown fiber label {self.fiber_label!r}")

    def fiber_index(self, s: int) -> int:
        """1-based coefficient index of the fiber coordinate of shell s."""
        return 2 * s - 1 if self.kind == "quasi_stationary" else 2 * s

    def killing_index(self, s: int) -> int:
        return 2 * s if self.kind == "quasi_stationary" else 2 * s - 1

    def label(self, index: int) -> str:
        return axis_label(index - 1, self.fiber_label)

    def fiber_axis(self, s: int) -> str:
        return self.label(self.fiber_index(s))

    def killing_axis(self, s: int) -> str:
        return self.label(self.killing_index(s))

    def base_axes(self, s: int) -> tuple[str, ...]:
        """Coordinates of all shells below s; these index ``N^a_i``."""
        return tuple(self.label(i) for i in range(1, 2 * s - 1))

    def dual(self) -> "ShellConfig":
        other = "cosmological" if self.kind == "quasi_stationary" else "quasi_stationary"
        return ShellConfig(other, self.fiber_label)


def shell_of(index: int) -> int:
    return (index + 1) // 2


@dataclass(frozen=True)
class ShellView:
    """Role-based view of one shell: everything the formulas need.

    ``h_f``/``h_k`` are the fiber and Killing coefficients (h3/h4 in the
    quasi-stationary notation), ``w``/``n`` their N-components and ``base``
    the coordinate names that index them.
    """

    s: int
    fiber: str
    fiber_index: int
    killing_index: int
    h_f: ScalarField
    h_k: ScalarField
    w: tuple[ScalarField, ...]
    n: tuple[ScalarField, ...]
    base: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class SMetric:
    grid: Grid
    g1: ScalarField
    g2: ScalarField
    h: Mapping[int, ScalarField]
    N: Mapping[int, tuple[ScalarField, ...]]
    config: ShellConfig = field(default_factory=ShellConfig)
    adapted: bool = True
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        h = {int(k): v for k, v in self.h.items()}
        shells = sorted({shell_of(a) for a in h})
        if shells and shells != list(range(2, shells[-1] + 1)):
            raise DomainError(f"shells must be contiguous from 2, got {shells}")
        for s in shells:
            if 2 * s - 1 not in h or 2 * s not in h:
                raise DomainError(f"shell {s} needs both h{2 * s - 1} and h{2 * s}")
        N = {}
        for a in range(3, 2 * (shells[-1] if shells else 1) + 1):
            comps = tuple(self.N.get(a, ()))
            need = 2 * (shell_of(a) - 1)
            if not comps:
                comps = tuple(ScalarField.constant(self.grid, 0.0) for _ in range(need))
            if len(comps) != need:
                raise DomainError(f"N^{a} needs {need} components, got {len(comps)}")
            N[a] = comps
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "meta", dict(self.meta))
        for f in self.fields():
            if f.grid != self.grid:
                raise DomainError("all coefficient fields must share the metric grid")
        for name, f in self.named_diagonal():
            if f.min() < 0 < f.max():
                raise DegeneracyError(f"coefficient {name} changes sign on the grid")
            if np.min(np.abs(f.samples)) <= DEGENERACY_FLOOR:
                node = np.unravel_index(int(np.argmin(np.abs(f.samples))), f.shape) if f.deps else ()
                where = {d: float(self.grid.axis(d).nodes[i]) for d, i in zip(f.deps, node)}
                raise DegeneracyError(f"coefficient {name} vanishes near {where}")
        self._check_killing()

    # structure
    @property
    def shells(self) -> tuple[int, ...]:
        return tuple(sorted({shell_of(a) for a in self.h}))

    @property
    def dim(self) -> int:
        return 2 + 2 * len(self.shells)

    def fields(self) -> list[ScalarField]:
        out = [self.g1, self.g2, *self.h.values()]
        for comps in self.N.values():
            out.extend(comps)
        return out

    def named_diagonal(self) -> list[tuple[str, ScalarField]]:
        return [("g1", self.g1), ("g2", self.g2)] + [(f"h{a}", self.h[a]) for a in sorted(self.h)]

    def diagonal(self) -> list[ScalarField]:
        return [f for _, f in self.named_diagonal()]

    def coefficient(self, index: int) -> ScalarField:
        if index == 1:
            return self.g1
        if index == 2:
            return self.g2
        return self.h[index]

    def view(self, s: int) -> ShellView:
        if s not in self.shells:
            raise DomainError(f"metric has no shell {s}")
        c = self.config
        fi, ki = c.fiber_index(s), c.killing_index(s)
        return ShellView(s, c.fiber_axis(s), fi, ki, self.h[fi], self.h[ki], self.N[fi], self.N[ki], c.base_axes(s))

    def union_deps(self, fields: Iterable[ScalarField] | None = None) -> tuple[str, ...]:
        fields = self.fields() if fields is None else list(fields)
        return self.grid.ordered(set().union(*(set(f.deps) for f in fields)))

    def killing_violations(self) -> list[str]:
        """Reasons the coefficients break the adapted dependence pattern (empty if none)."""
        c = self.config
        killing = {c.killing_axis(s) for s in self.shells}
        out = []
        for name, f in (("g1", self.g1), ("g2", self.g2)):
            bad = set(f.deps) - {"x1", "x2"}
            if bad:
                out.append(f"{name} depends on {sorted(bad)}; adapted metrics keep g on (x1, x2)")
        for s in self.shells:
            allowed = (set(c.base_axes(s)) | {c.fiber_axis(s)}) - killing
            shell_fields = [self.h[2 * s - 1], self.h[2 * s], *self.N[2 * s - 1], *self.N[2 * s]]
            bad = set().union(*(set(f.deps) for f in shell_fields)) - allowed
            if bad:
                out.append(f"shell {s} coefficient depends on {sorted(bad)}, violating the {c.kind} Killing pattern")
        return out

    def _check_killing(self) -> None:
        if self.adapted:
            problems = self.killing_violations()
            if problems:
                raise DomainError(problems[0])

    def replace(self, **changes: Any) -> "SMetric":
        kw = dict(grid=self.grid, g1=self.g1, g2=self.g2, h=self.h, N=self.N, config=self.config,
                  adapted=self.adapted, meta=self.meta)
        kw.update(changes)
        return SMetric(**kw)

    def with_coefficient(self, name: str, value: ScalarField) -> "SMetric":
        """Copy with one scalar coefficient replaced; names as in ``coefficient_names``."""
        if name in ("g1", "g2"):
            return self.replace(**{name: value})
        if name.startswith("h"):
            h = dict(self.h)
            h[int(name[1:])] = value
            return self.replace(h=h)
        a, i = name[1:].split("_")
        N = {k: list(v) for k, v in self.N.items()}
        N[int(a)][int(i) - 1] = value
        return self.replace(N={k: tuple(v) for k, v in N.items()})

    def coefficient_names(self) -> list[str]:
        names = [n for n, _ in self.named_diagonal()]
        for a in sorted(self.N):
            names.extend(f"N{a}_{i + 1}" for i in range(len(self.N[a])))
        return names

    def get(self, name: str) -> ScalarField:
        if name in ("g1", "g2") or name.startswith("h"):
            return self.coefficient(1 if name == "g1" else 2 if name == "g2" else int(name[1:]))
        a, i = name[1:].split("_")
        return self.N[int(a)][int(i) - 1]


def flat_metric(grid: Grid, dims: int = 8, config: ShellConfig | None = None) -> SMetric:
    sig = [1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0][:dims]
    c = lambda v: ScalarField.constant(grid, v)  # noqa: E731
    return SMetric(grid, c(sig[0]), c(sig[1]), {a: c(sig[a - 1]) for a in range(3, dims + 1)}, {},
                   config or ShellConfig(), meta={"family": "flat"})


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------


def _assemble_values(diag: list[np.ndarray], N: Mapping[int, list[np.ndarray]], dim: int) -> np.ndarray:
    shape = np.broadcast_shapes(*(np.shape(x) for x in diag), *(np.shape(x) for v in N.values() for x in v))
    G = np.zeros(shape + (2, 2))
    G[..., 0, 0] = diag[0]
    G[..., 1, 1] = diag[1]
    for s in range(2, dim // 2 + 1):
        k = 2 * (s - 1)
        a, b = 2 * s - 1, 2 * s
        H = np.stack(np.broadcast_arrays(diag[a - 1], diag[b - 1], np.zeros(shape)), axis=-1)[..., :2]
        Nm = np.zeros(shape + (2, k))
        for r, idx in enumerate((a, b)):
            for i in range(k):
                Nm[..., r, i] = N[idx][i]
        HN = H[..., :, None] * Nm
        top = G + np.einsum("...ri,...rj->...ij", Nm, HN)
        top = 0.5 * (top + np.swapaxes(top, -1, -2))
        new = np.zeros(shape + (k + 2, k + 2))
        new[..., :k, :k] = top
        new[..., k:, :k] = HN
        new[..., :k, k:] = np.swapaxes(HN, -1, -2)
        new[..., k, k] = H[..., 0]
        new[..., k + 1, k + 1] = H[..., 1]
        G = new
    return G


def assemble_offdiagonal(m: SMetric, point: Mapping[str, float], dims: int | None = None) -> np.ndarray:
    """Symmetric coordinate-basis matrix of the s-metric at a grid point.

    Coefficients are read at the nearest node.  Shell by shell the base block
    gains ``N^a_i N^b_j h_ab``, the mixed block is ``N^b_i h_cb`` and the fiber
    block is ``h_ab``.  ``dims`` (4 or 8) truncates to the lower shells.
    """
    dim = m.dim if dims is None else dims
    diag = [np.asarray(m.coefficient(i).at(point)) for i in range(1, dim + 1)]
    N = {a: [np.asarray(f.at(point)) for f in m.N[a]] for a in range(3, dim + 1)}
    return _assemble_values(diag, N, dim)


def assemble_field(m: SMetric, dims: int | None = None) -> tuple[tuple[str, ...], np.ndarray]:
    """Assembled matrix at every node of the union of dependency axes."""
    dim = m.dim if dims is None else dims
    used = [m.coefficient(i) for i in range(1, dim + 1)] + [f for a in range(3, dim + 1) for f in m.N[a]]
    deps = m.union_deps(used)
    diag = [m.coefficient(i).broadcast_to(deps) for i in range(1, dim + 1)]
    N = {a: [f.broadcast_to(deps) for f in m.N[a]] for a in range(3, dim + 1)}
    return deps, _assemble_values(diag, N, dim)


def assemble_slices(m: SMetric, dims: int | None = None) -> tuple[tuple[str, ...], Iterator[np.ndarray]]:
    """Like :func:`assemble_field`, one slice of the leading dependency axis at a time."""
    dim = m.dim if dims is None else dims
    used = [m.coefficient(i) for i in range(1, dim + 1)] + [f for a in range(3, dim + 1) for f in m.N[a]]
    deps = m.union_deps(used)
    diag = [m.coefficient(i).broadcast_to(deps) for i in range(1, dim + 1)]
    N = {a: [f.broadcast_to(deps) for f in m.N[a]] for a in range(3, dim + 1)}

    def slices() -> Iterator[np.ndarray]:
        if not deps:
            yield _assemble_values(diag, N, dim)
            return
        for k in range(m.grid.axis(deps[0]).n):
            yield _assemble_values([x[k] for x in diag], {a: [x[k] for x in v] for a, v in N.items()}, dim)

    return deps, slices()


def frame_matrix(m: SMetric, point: Mapping[str, float], dims: int | None = None) -> np.ndarray:
    """N-elongated coframe E with e^alpha = E[alpha, mu] du^mu (unit diagonal)."""
    dim = m.dim if dims is None else dims
    E = np.eye(dim)
    for a in range(3, dim + 1):
        for i, f in enumerate(m.N[a]):
            E[a - 1, i] = f.at(point)
    return E


# --------------------------------------------------------------------------
# Anholonomy
# --------------------------------------------------------------------------


def anholonomy(m: SMetric, shell: int) -> dict[tuple[int, str, str], ScalarField]:
    """Coefficients Omega^a_{ij} of the N-connection curvature for one shell.

    Omega^a_{ij} = d_j N^a_i - d_i N^a_j - w_i dF N^a_j + w_j dF N^a_i with dF
    the derivative along the shell's fiber coordinate.  Keys are
    ``(a, i, j)`` with i before j in coordinate order.
    """
    if shell not in (2, 3, 4):
        raise DomainError(f"shell must be 2, 3 or 4, got {shell}")
    v = m.view(shell)
    out = {}
    for a in (2 * shell - 1, 2 * shell):
        Na = m.N[a]
        for i in range(len(v.base)):
            for j in range(i + 1, len(v.base)):
                xi, xj = v.base[i], v.base[j]
                out[(a, xi, xj)] = (partial(Na[i], xj) - partial(Na[j], xi)
                                    - v.w[i] * partial(Na[j], v.fiber) + v.w[j] * partial(Na[i], v.fiber))
    return out


# --------------------------------------------------------------------------
# Relabeling (space/time duality map)
# --------------------------------------------------------------------------

_DUAL_SLOT = {0: 0, 1: 1, 2: 3, 3: 2, 4: 5, 5: 4, 6: 7, 7: 6}


def rename_field(f: ScalarField, grid: Grid, mapping: Mapping[str, str]) -> ScalarField:
    new = [mapping.get(d, d) for d in f.deps]
    order = grid.ordered(new)
    perm = [new.index(d) for d in order]
    return ScalarField(grid, order, np.transpose(f.samples, perm))


def dual_axis_map(fiber_label: str = "velocity") -> dict[str, str]:
    return {axis_label(s, fiber_label): axis_label(_DUAL_SLOT[s], fiber_label) for s in range(8)}


def dual_slot(i: int) -> int:
    """0-based coordinate slot under the y3<->y4, v5<->v6, v7<->v8 swap."""
    return _DUAL_SLOT[i]


def dual_grid(grid: Grid) -> Grid:
    from .fields import Axis

    amap = dual_axis_map(grid.fiber_label)
    return Grid(sorted((Axis(amap[a.name], a.lo, a.hi, a.n) for a in grid.axes), key=lambda a: slot_of(a.name)))


def dual_relabel(m: SMetric) -> SMetric:
    """Swap y3<->y4, v5<->v6, v7<->v8 with h and N indices following.

    Under this map a quasi-stationary s-metric becomes a cosmological one
    (w and n trade places), and vice versa.
    """
    amap = dual_axis_map(m.config.fiber_label)
    grid = dual_grid(m.grid)
    ren = lambda f: rename_field(f, grid, amap)  # noqa: E731
    idx = lambda a: _DUAL_SLOT[a - 1] + 1  # noqa: E731
    h = {idx(a): ren(f) for a, f in m.h.items()}
    N = {}
    for a, comps in m.N.items():
        new = [None] * len(comps)
        for i, f in enumerate(comps):
            new[_DUAL_SLOT[i]] = ren(f)
        N[idx(a)] = tuple(new)
    return SMetric(grid, ren(m.g1), ren(m.g2), h, N, m.config.dual(), m.adapted, m.meta)


# --------------------------------------------------------------------------
# Prime metrics
# --------------------------------------------------------------------------

PRIME_FAMILIES = {
    "new_kds": "rotating Kerr-de Sitter-type prime with warped scalar curvature; coordinates (r, phi, theta, t)",
    "eb_wormhole": "Ellis-Bronnikov-type wormhole, r(l) = (l^2k + b0^2k)^(1/2k); coordinates (l, theta, phi, t)",
    "black_torus": "toroidal-horizon black hole with sigma-model coupling; coordinates (r, x, y, t)",
    "spheroid_void": "prolate/oblate spheroidal cosmological void; coordinates (r, theta, phi, t)",
    "flrw": "FLRW in isotropic coordinates (the void family with r_diamond = 0, M = 0, B = 1)",
    "flat": "Minkowski-signature flat s-metric diag(1,1,1,-1,1,1,1,-1)",
}


@dataclass(frozen=True)
class PrimeMetricSpec:
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in PRIME_FAMILIES:
            raise DomainError(f"unknown prime family {self.family!r}; known: {sorted(PRIME_FAMILIES)}")
        object.__setattr__(self, "params", dict(self.params))


def kds_mass_bounds(a: float, lambda0: float) -> tuple[float, float]:
    """(M-, M+) from 18 L M^2 = 1 + 12 L a^2 -/+ (1 - 4 L a^2)^(3/2)."""
    if lambda0 <= 0:
        raise DomainError("mass bounds need Lambda0 > 0")
    q = 4.0 * lambda0 * a * a
    if q > 1.0:
        raise DomainError(f"4 Lambda0 a^2 = {q} exceeds 1")
    root = (1.0 - q) ** 1.5
    lo = (1.0 + 3.0 * q - root) / (18.0 * lambda0)
    hi = (1.0 + 3.0 * q + root) / (18.0 * lambda0)
    return math.sqrt(max(lo, 0.0)), math.sqrt(hi)


def kds_scalar_curvature(r, theta, lambda0: float, a: float):
    """Warped scalar curvature 4 L0 r^2 / (r^2 + a^2 cos^2 theta)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("scalar curvature needs r > 0")
    out = 4.0 * lambda0 * r**2 / (r**2 + a * a * np.cos(theta) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def torus_f(r, mu: float, lam: float, coupling: float = 0.0, b: float = 0.0):
    """Toroidal lapse f(r) = -eps^2 b^2 - mu/r - Lambda r^2 / 3."""
    r = np.asarray(r, dtype=float)
    return -(coupling**2) * b * b - mu / r - lam * r**2 / 3.0


def wormhole_radius(l, b0: float, k: int = 1):
    l = np.asarray(l, dtype=float)
    return (l ** (2 * k) + b0 ** (2 * k)) ** (1.0 / (2 * k))


def scale_factor(t, law: Mapping[str, Any] | None):
    law = dict(law or {"kind": "const", "a0": 1.0})
    kind = law.get("kind", "const")
    a0 = float(law.get("a0", 1.0))
    t = np.asarray(t, dtype=float)
    if kind == "const":
        return a0 + 0.0 * t
    if kind == "power":
        t0 = float(law.get("t0", 1.0))
        if np.any(t <= 0):
            raise DomainError("power-law scale factor needs t > 0")
        return a0 * (t / t0) ** float(law.get("p", 2.0 / 3.0))
    if kind == "exp":
        return a0 * np.exp(float(law.get("H", 1.0)) * t)
    raise DomainError(f"unknown scale-factor law {kind!r}")


def void_mass_profile(r, r_v: float, r_w: float, xi: float, rho0: float):
    """Compensated-void mass M(r): interior deficit, border excess, zero outside."""
    r = np.asarray(r, dtype=float)
    rho_int = -rho0 * xi
    rho_bor = rho0 * xi / ((1.0 + r_w / r_v) ** 3 - 1.0)
    c = 4.0 * math.pi / 3.0
    m_v = c * rho_int * r_v**3
    inner = c * rho_int * r**3
    border = m_v + c * rho_bor * (r**3 - r_v**3)
    return np.where(r < r_v, inner, np.where(r < r_v + r_w, border, 0.0))


def _coords(grid: Grid, names: Iterable[str]) -> dict[str, np.ndarray]:
    names = grid.ordered(names)
    out = {}
    for k, d in enumerate(names):
        shape = [1] * len(names)
        shape[k] = grid.axis(d).n
        out[d] = grid.axis(d).nodes.reshape(shape)
    return out


def _field(grid: Grid, deps: Iterable[str], values: Any, what: str) -> ScalarField:
    deps = grid.ordered(deps)
    shape = tuple(grid.axis(d).n for d in deps)
    with np.errstate(all="ignore"):
        arr = np.broadcast_to(np.asarray(values, dtype=float), shape)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} is singular on the sampled box; exclude the singular locus from the grid")
    return ScalarField(grid, deps, np.array(arr))


def _require(grid: Grid, names: Iterable[str], family: str) -> None:
    missing = [n for n in names if n not in grid]
    if missing:
        raise DomainError(f"family {family} needs grid axes {missing}")


def _positive(values: np.ndarray, name: str, coords: Mapping[str, np.ndarray]) -> None:
    shape = np.broadcast_shapes(np.shape(values), *(np.shape(c) for c in coords.values()))
    values = np.broadcast_to(values, shape)
    if np.any(values <= 0):
        bad = np.argwhere(values <= 0)[0]
        where = {}
        for d, c in coords.items():
            c = np.broadcast_to(c, shape)
            where[d] = float(c[tuple(bad)])
        raise DomainError(f"{name} <= 0 in the sampled region near {where}")


def _kds_block(r, th, M, a, lam, literal):
    rho2 = r**2 + a * a * np.cos(th) ** 2
    delta = r**2 - 2 * M * r + a * a - lam * r**4 / 3.0
    sigma = (r**2 + a * a) ** 2 - delta * a * a * np.sin(th) ** 2
    x = r**2 + a * a - delta
    den = a * a * np.sin(th) ** 2 - delta
    if literal:
        g2 = np.sin(th) ** 2 / rho2 * (sigma - x**2 / den)
        n2 = -a * np.sin(th) * x / den
    else:
        g2 = np.sin(th) ** 2 / rho2 * (sigma - a * a * np.sin(th) ** 2 * x**2 / den)
        n2 = -a * np.sin(th) ** 2 * x / den
    return rho2 / delta, g2, rho2, den / rho2, n2, delta


def _void_block(r, th, t, p, shape_kind):
    rd = float(p.get("r_diamond", 0.0))
    vs = float(p.get("varsigma", 0.0))
    a2 = scale_factor(t, p.get("a_law")) ** 2
    if float(p.get("xi", 0.0)) and float(p.get("r_v", 0.0)):
        M = void_mass_profile(r, float(p["r_v"]), float(p.get("r_w", 0.3 * float(p["r_v"]))), float(p["xi"]),
                              float(p.get("rho0", 1.0)))
    else:
        M = 0.0 * r
    if p.get("B_law", "unit") == "log":
        B = float(p.get("B0", 1.0)) * (float(p.get("B1", 1.0)) + np.log(r / rd)) ** 2
    else:
        B = 1.0 + 0.0 * r
    s2, c2 = np.sin(th) ** 2, np.cos(th) ** 2
    if shape_kind == "prolate":
        conf = (1 + vs / 4 * (r**2 + rd**2 * c2)) ** 2
        radial = r**2 - M / r * (r**2 + rd**2 * s2) + rd**2
        g3 = a2 * r**2 * s2 / conf
    elif shape_kind == "oblate":
        conf = (1 + vs / 4 * (r**2 + rd**2 * s2)) ** 2
        radial = r**2 - M / r * (r**2 + rd**2 * c2) + rd**2
        g3 = a2 * (r**2 + rd**2) * s2 / conf
    else:
        raise DomainError(f"void shape must be prolate or oblate, got {shape_kind!r}")
    g1 = a2 * (r**2 + rd**2 * s2) / (conf * radial)
    g2 = a2 * (r**2 + rd**2 * s2) / conf
    return g1, g2, g3, -B, radial


def prime_metric(spec: PrimeMetricSpec, grid: Grid) -> SMetric:
    """Sample a prime (seed) metric family on ``grid``.

    Base shells use the family's closed forms.  When the grid carries fiber
    axes v5..v8 the phase-space extension is either flat (default) or a mirror
    copy of the family with ``v_``-prefixed parameters (``fibers='mirror'``).
    """
    p = dict(spec.params)
    fam = spec.family
    label = grid.fiber_label
    vaxes = [axis_label(k, label) for k in range(4, 8)]
    has_fibers = any(a in grid for a in vaxes)
    fibers = p.get("fibers", "flat")
    kind = "cosmological" if fam in ("spheroid_void", "flrw") else "quasi_stationary"
    config = ShellConfig(kind, label)
    meta = {"family": fam, "params": {k: v for k, v in p.items()}}
    C = lambda v: ScalarField.constant(grid, v)  # noqa: E731

    if fam == "flat":
        dims = int(p.get("dims", 8 if has_fibers else 4))
        m = flat_metric(grid, dims, config)
        return m.replace(meta=meta)

    def block(axes4: list[str], params: Mapping[str, Any], prefix: str):
        """g1..g4 and the N-components of the family on four named axes."""
        x1, x2, y3, y4 = axes4
        N4 = None
        adapted = True
        if fam == "new_kds":
            M, a, lam = float(params.get("M", 1.0)), float(params.get("a", 0.0)), float(params.get("Lambda0", 0.0))
            if lam > 0:
                lo, hi = kds_mass_bounds(a, lam)
                if not lo < M < hi:
                    raise DomainError(f"{prefix}M = {M} outside the black-hole bounds ({lo}, {hi})")
            elif lam < 0:
                raise DomainError(f"{prefix}Lambda0 must be >= 0")
            _require(grid, [x1, y3], fam)
            c = _coords(grid, [x1, y3])
            r, th = c[x1], c[y3]
            _positive(r, f"{prefix}r", c)
            _positive(np.abs(np.sin(th)) - 1e-12, f"{prefix}sin(theta) (poles excluded)", c)
            g1, g2, g3, g4, n2, delta = _kds_block(r, th, M, a, lam, bool(params.get("literal", False)))
            _positive(delta, f"{prefix}Delta_Lambda", c)
            fields = tuple(_field(grid, [x1, y3], v, f"g{k + 1}").compress() for k, v in enumerate((g1, g2, g3, g4)))
            N4 = (C(0.0), _field(grid, [x1, y3], n2, "n2").compress())
            adapted = False
            return fields, N4, adapted
        if fam == "eb_wormhole":
            b0, k = float(params.get("b0", 1.0)), int(params.get("k", 1))
            if b0 <= 0 or k < 1:
                raise DomainError(f"{prefix}wormhole needs b0 > 0 and integer k >= 1")
            _require(grid, [x1, x2], fam)
            c = _coords(grid, [x1, x2])
            _positive(np.abs(np.sin(c[x2])) - 1e-12, f"{prefix}sin(theta) (poles excluded)", c)
            rl = wormhole_radius(c[x1], b0, k)
            return (C(1.0), _field(grid, [x1, x2], rl**2, "g2").compress(),
                    _field(grid, [x1, x2], rl**2 * np.sin(c[x2]) ** 2, "g3"), C(-1.0)), None, True
        if fam == "black_torus":
            mu, lam = float(params.get("mu", 1.0)), float(params.get("Lambda", -3.0))
            eps, b = float(params.get("coupling", 0.0)), float(params.get("b", 0.0))
            k1, k2 = float(params.get("k1", 1.0)), float(params.get("k2", 1.0))
            _require(grid, [x1], fam)
            c = _coords(grid, [x1])
            r = c[x1]
            _positive(r, f"{prefix}r", c)
            f = torus_f(r, mu, lam, eps, b)
            _positive(f, f"{prefix}f(r)", c)
            return (_field(grid, [x1], 1.0 / f, "g1"), _field(grid, [x1], r**2 * k1**2, "g2"),
                    _field(grid, [x1], r**2 * k2**2, "g3"), _field(grid, [x1], -f, "g4")), None, True
        # spheroid_void / flrw
        q = dict(params)
        if fam == "flrw":
            q.update(r_diamond=0.0, xi=0.0, B_law="unit")
        _require(grid, [x1, x2], fam)
        names = [x1, x2] + ([y4] if y4 in grid else [])
        c = _coords(grid, names)
        r, th = c[x1], c[x2]
        t = c.get(y4, np.asarray(0.0))
        _positive(r, f"{prefix}r", c)
        _positive(np.abs(np.sin(th)) - 1e-12, f"{prefix}sin(theta) (axis excluded)", c)
        g1, g2, g3, g4, radial = _void_block(r, th, t, q, q.get("shape", "prolate"))
        _positive(radial, f"{prefix}radial denominator", c)
        full = [_field(grid, names, v, f"g{k + 1}").compress() for k, v in enumerate((g1, g2, g3, g4))]
        tdep = any(y4 in f.deps for f in full)
        return tuple(full), None, not tdep

    base_axes = [axis_label(k, label) for k in range(4)]
    (g1, g2, g3, g4), n4, adapted = block(base_axes, p, "")
    h = {3: g3, 4: g4}
    N = {}
    if n4 is not None:
        N[4] = n4
    if has_fibers:
        if fibers == "flat":
            sig = [1.0, 1.0, 1.0, -1.0]
            for k, a in enumerate(range(5, 9)):
                h[a] = C(sig[k])
        elif fibers == "mirror":
            vp = {k[2:]: v for k, v in p.items() if k.startswith("v_")}
            (f5, f6, f7, f8), vn, vad = block(vaxes, vp, "v_")
            h.update({5: f5, 6: f6, 7: f7, 8: f8})
            if vn is not None:
                N[8] = (C(0.0),) * 5 + (vn[1],)
            adapted = adapted and vad
        else:
            raise DomainError(f"unknown fiber extension {fibers!r} (flat | mirror)")
    m = SMetric(grid, g1, g2, h, N, config, False, meta)
    return m.replace(adapted=True) if adapted and not m.killing_violations() else m
