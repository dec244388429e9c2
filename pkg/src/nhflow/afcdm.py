"""Solution generators.

Each shell s is generated from a function on its fiber-extended base and a
nonzero source ``J``.  In role form (``*`` is the fiber derivative, ``h_k``
the Killing coefficient, ``h_f`` the fiber coefficient):

    h_k = h0 - int [Psi^2]^* / 4J
    h_f = -(Psi^*/2J)^2 / h_k
    w_i = d_i Psi / Psi^*
    n_k = 1n_k + 2n_k int (Psi^*/2J)^2 |h_k|^(-5/2)

Integrals run from the fiber lower bound, so ``h0``, ``1n`` and ``2n`` carry
all integration freedom.  When the integrand is ``c * dF/dy`` with ``c``
independent of the fiber, the integral is evaluated exactly as
``c (F - F|lo)``; otherwise the fourth-order Gregory rule is used.

The same core serves three input forms: ``Psi`` itself, the pair
``(Phi, Lambda)`` related to it by ``Phi^2 = Lambda int [Psi^2]^*/J``, and a
prescribed Killing coefficient ``h_k`` (the polarization route), for which
``Psi^2 = Psi0^2 - 4 int J h_k^*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .curvature import DEFAULT_TOLERANCE, FieldEqResidualReport, ResidualEntry, field_equation_residuals
from .connection import RESIDUAL_MARGIN
from .errors import DegeneracyError, DomainError
from .fields import Grid, ScalarField, as_field, cumint, eval_on_grid, partial
from .smetric import (
    DEGENERACY_FLOOR,
    ShellConfig,
    SMetric,
    dual_axis_map,
    dual_grid,
    dual_slot,
    rename_field,
    shell_of,
)

MODES = ("psi", "phi", "coeff")
INTEGRATION = "gregory"


# --------------------------------------------------------------------------
# Data types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShellData:
    """Generating data of one shell.

    ``generator`` is ``Psi`` (mode ``psi``), ``Phi`` (mode ``phi``, with
    ``Lambda``) or the Killing coefficient itself (mode ``coeff``).
    ``psi0_sq`` is ``Psi^2`` at the fiber lower bound, needed whenever
    ``Psi`` is reconstructed from an integral.
    """

    generator: ScalarField
    J: ScalarField | float
    mode: str = "psi"
    Lambda: float | None = None
    h0: ScalarField | float | None = None
    n1: Sequence[ScalarField | float] | float | None = None
    n2: Sequence[ScalarField | float] | float | None = None
    psi0_sq: ScalarField | float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DomainError(f"unknown generating mode {self.mode!r} (expected one of {MODES})")
        if self.mode == "phi":
            if self.Lambda is None or not np.isfinite(self.Lambda) or self.Lambda == 0.0:
                raise DomainError(f"Lambda_s must be a nonzero constant in phi mode, got {self.Lambda}")
        if self.mode in ("psi", "phi") and self.h0 is None:
            raise DomainError(f"h0 (integration function of the Killing coefficient) is required in {self.mode} mode")
        if not isinstance(self.J, ScalarField) and float(self.J) == 0.0:
            raise DomainError("source J_s must be nonzero")


@dataclass(frozen=True, eq=False)
class GeneratingData:
    """Sources and generating functions for every shell.

    ``psi`` is the base conformal exponent (``g1 = g2 = e^psi``); when it is
    omitted it is solved from ``lap psi = 2 J1`` with Dirichlet data
    ``psi_boundary``.
    """

    grid: Grid
    J1: ScalarField | float
    shells: Mapping[int, ShellData]
    psi: ScalarField | None = None
    psi_boundary: ScalarField | float = 0.0
    kind: str = "quasi_stationary"
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "J1", as_field(self.grid, self.J1))
        object.__setattr__(self, "shells", {int(s): d for s, d in self.shells.items()})
        ShellConfig(self.kind, self.grid.fiber_label)
        keys = sorted(self.shells)
        if not keys or keys != list(range(2, keys[-1] + 1)) or keys[-1] > 4:
            raise DomainError(f"generating data needs contiguous shells starting at 2, got {keys}")
        for name, f in (("J1", self.J1), ("psi", self.psi)):
            if f is not None and set(f.deps) - {"x1", "x2"}:
                raise DomainError(f"{name} must depend on (x1, x2) only, got {f.deps}")

    @property
    def config(self) -> ShellConfig:
        return ShellConfig(self.kind, self.grid.fiber_label)

    @property
    def psi_discrete(self) -> bool:
        """True when psi comes from the five-point Poisson solver."""
        return self.psi is None

    def source(self, s: int) -> ScalarField:
        return as_field(self.grid, self.shells[s].J)

    def replace(self, **changes: Any) -> "GeneratingData":
        return replace(self, **changes)


@dataclass(frozen=True)
class GeneratedShell:
    h_f: ScalarField
    h_k: ScalarField
    w: tuple[ScalarField, ...]
    n: tuple[ScalarField, ...]


# --------------------------------------------------------------------------
# Core
# --------------------------------------------------------------------------


def _where(f: ScalarField, flat_index: int) -> dict[str, float]:
    if not f.deps:
        return {}
    node = np.unravel_index(flat_index, f.shape)
    return {d: round(float(f.grid.axis(d).nodes[i]), 12) for d, i in zip(f.deps, node)}


def _require_nonvanishing(f: ScalarField, what: str, exc: type = DegeneracyError) -> None:
    """Reject fields that vanish at a node or change sign between nodes."""
    a = f.samples
    if np.min(np.abs(a)) <= DEGENERACY_FLOOR * max(1.0, float(np.max(np.abs(a)))):
        raise exc(f"{what} vanishes at node {_where(f, int(np.argmin(np.abs(a))))}")
    if np.min(a) < 0 < np.max(a):
        sign = np.sign(a.ravel())
        flat = int(np.argmax(sign != sign[0]))
        raise exc(f"{what} changes sign near node {_where(f, flat)}")


def _at_lower(f: ScalarField, axis: str) -> ScalarField:
    if axis not in f.deps:
        return f
    k = f.deps.index(axis)
    return ScalarField(f.grid, tuple(d for d in f.deps if d != axis), np.take(f.samples, 0, axis=k))


def _integral_of_derivative(F: ScalarField, c: ScalarField, axis: str) -> ScalarField:
    """``int_lo^y c dF/dy`` along ``axis``; exact when ``c`` is fiber independent."""
    if axis not in c.deps:
        return c * (F - _at_lower(F, axis))
    return cumint(c * partial(F, axis), axis, INTEGRATION)


def _components(grid: Grid, v: Any, count: int, what: str, fiber: str) -> tuple[ScalarField, ...] | None:
    if v is None:
        return None
    if isinstance(v, (ScalarField, int, float)):
        v = [v] * count
    v = [as_field(grid, c) for c in v]
    if len(v) != count:
        raise DomainError(f"{what} needs {count} components (one per base coordinate), got {len(v)}")
    for c in v:
        if fiber in c.deps:
            raise DomainError(f"integration function {what} must not depend on the fiber axis {fiber}")
    return tuple(v)


def _source(grid: Grid, J: ScalarField | float) -> ScalarField:
    J = as_field(grid, J)
    _require_nonvanishing(J, "source J_s", DomainError)
    return J


def _finish(h_k: ScalarField, K: ScalarField, w: tuple[ScalarField, ...], n1, n2, fiber: str,
            base: tuple[str, ...]) -> GeneratedShell:
    """Fiber coefficient and n-components from h_k and K = (Psi^*/2J)^2."""
    grid = h_k.grid
    _require_nonvanishing(h_k, "Killing coefficient h_k")
    h_f = -K / h_k
    zero = ScalarField.constant(grid, 0.0)
    n1 = n1 or tuple(zero for _ in base)
    if n2 is None or all(c.deps == () and float(c.samples) == 0.0 for c in n2):
        n = n1
    else:
        integral = cumint(K * abs(h_k) ** -2.5, fiber, INTEGRATION)
        n = tuple(a + b * integral for a, b in zip(n1, n2))
    return GeneratedShell(h_f, h_k, w, n)


def generate_shell(Psi: ScalarField, J: ScalarField | float, h0: ScalarField | float, n1, n2, fiber: str,
                   base: Sequence[str]) -> GeneratedShell:
    """Coefficients of one shell from ``Psi`` and the source ``J``."""
    grid = Psi.grid
    base = tuple(base)
    J = _source(grid, J)
    h0 = as_field(grid, h0)
    if fiber in h0.deps:
        raise DomainError(f"h0 must not depend on the fiber axis {fiber}")
    n1 = _components(grid, n1, len(base), "1n", fiber)
    n2 = _components(grid, n2, len(base), "2n", fiber)
    Ps = partial(Psi, fiber)
    _require_nonvanishing(Ps, f"fiber derivative of Psi along {fiber}")
    h_k = h0 - _integral_of_derivative(Psi * Psi, 1.0 / (4.0 * J), fiber)
    K = (Ps / (2.0 * J)) ** 2
    w = tuple(partial(Psi, xi) / Ps for xi in base)
    return _finish(h_k, K, w, n1, n2, fiber, base)


def _shell(sd: ShellData, grid: Grid, fiber: str, base: tuple[str, ...], lc_anchor: bool = False) -> GeneratedShell:
    if fiber not in grid:
        raise DomainError(f"fiber axis {fiber} is not sampled by the grid")
    if sd.mode == "psi":
        h0 = sd.h0
        if lc_anchor:
            # h_k = h0 - Psi^2/4J without the lower-bound anchor
            h0 = as_field(grid, h0) - _at_lower(sd.generator * sd.generator, fiber) / (4.0 * as_field(grid, sd.J))
        return generate_shell(sd.generator, sd.J, h0, sd.n1, sd.n2, fiber, base)
    J = _source(grid, sd.J)
    n1 = _components(grid, sd.n1, len(base), "1n", fiber)
    n2 = _components(grid, sd.n2, len(base), "2n", fiber)
    psi0_sq = as_field(grid, sd.psi0_sq)
    if fiber in psi0_sq.deps:
        raise DomainError("psi0_sq is a value on the fiber lower bound and cannot depend on the fiber")
    if sd.mode == "phi":
        phi2 = sd.generator * sd.generator
        h_k = as_field(grid, sd.h0) - phi2 / (4.0 * sd.Lambda)
        psi2 = psi0_sq + _integral_of_derivative(phi2, J / sd.Lambda, fiber)
    else:
        h_k = sd.generator
        psi2 = psi0_sq - 4.0 * _integral_of_derivative(h_k, J, fiber)
    # Psi is reconstructed and differentiated exactly as in the Psi route
    Psi = _sqrt_checked(psi2, "Psi")
    Ps = partial(Psi, fiber)
    _require_nonvanishing(Ps, f"fiber derivative of Psi along {fiber}")
    K = (Ps / (2.0 * J)) ** 2
    w = tuple(partial(Psi, xi) / Ps for xi in base)
    return _finish(h_k, K, w, n1, n2, fiber, base)


def _base_psi(gd: GeneratingData) -> tuple[ScalarField, dict[str, Any]]:
    if gd.psi is not None:
        return gd.psi, {"psi_source": "supplied"}
    from .solvers import PoissonProblem, solve_poisson2d

    res = solve_poisson2d(PoissonProblem(gd.grid, 2.0 * gd.J1, gd.psi_boundary))
    return res.field, {"psi_source": "poisson", "poisson": res.to_dict()}


def _generate(gd: GeneratingData, kind: str, meta: Mapping[str, Any] | None = None,
              lc_anchor: bool = False) -> SMetric:
    if gd.kind != kind:
        want = "cosmological" if kind == "cosmological" else "quasi-stationary"
        raise DomainError(f"generating data declare the {gd.kind} pattern; the {want} generator needs kind={kind!r}")
    c = gd.config
    psi, info = _base_psi(gd)
    e = psi.exp()
    h: dict[int, ScalarField] = {}
    N: dict[int, tuple[ScalarField, ...]] = {}
    for s, sd in sorted(gd.shells.items()):
        fi, ki = c.fiber_index(s), c.killing_index(s)
        try:
            out = _shell(sd, gd.grid, c.fiber_axis(s), c.base_axes(s), lc_anchor)
        except DomainError as err:
            raise type(err)(f"shell {s}: {err}") from err
        h[fi], h[ki] = out.h_f, out.h_k
        N[fi], N[ki] = out.w, out.n
    meta = {"generator": "afcdm", "kind": kind, **info, **dict(gd.meta), **dict(meta or {})}
    return SMetric(gd.grid, e, e, h, N, c, True, meta)


def generate_quasistationary(gd: GeneratingData) -> SMetric:
    """Full s-metric with fibers (y3, v5, v7) and ``g1 = g2 = e^psi``."""
    return _generate(gd, "quasi_stationary")


def generate_cosmological(gd: GeneratingData) -> SMetric:
    """Dual pattern: fibers (y4, v6, v8), Killing axes (y3, v5, v7)."""
    return _generate(gd, "cosmological")


def generate(gd: GeneratingData) -> SMetric:
    return _generate(gd, gd.kind)


def generate_family(family: Sequence[GeneratingData]) -> list[SMetric]:
    """Slice-wise generation of a tau-parameterized family."""
    return [generate(gd) for gd in family]


def dual_generating_data(gd: GeneratingData) -> GeneratingData:
    """Relabel y3<->y4, v5<->v6, v7<->v8 and switch the Killing pattern."""
    amap = dual_axis_map(gd.grid.fiber_label)
    grid = dual_grid(gd.grid)

    def ren(v):
        return rename_field(v, grid, amap) if isinstance(v, ScalarField) else v

    def comps(v):
        if v is None or isinstance(v, (ScalarField, int, float)):
            return ren(v)
        out = [None] * len(v)
        for i, c in enumerate(v):
            out[dual_slot(i)] = ren(c)
        return tuple(out)

    shells = {s: ShellData(ren(d.generator), ren(d.J), d.mode, d.Lambda, ren(d.h0), comps(d.n1), comps(d.n2),
                           ren(d.psi0_sq)) for s, d in gd.shells.items()}
    kind = "cosmological" if gd.kind == "quasi_stationary" else "quasi_stationary"
    return GeneratingData(grid, ren(gd.J1), shells, ren(gd.psi), ren(gd.psi_boundary), kind, gd.meta)


# --------------------------------------------------------------------------
# Nonlinear symmetries
# --------------------------------------------------------------------------


def _sqrt_checked(f: ScalarField, what: str) -> ScalarField:
    tol = 1e-12 * max(1.0, f.norm_inf())
    if f.min() < -tol:
        raise DomainError(f"negative radicand for {what} near node {_where(f, int(np.argmin(f.samples)))}: "
                          f"generating data are incompatible with a real {what}")
    return f.apply(lambda a: np.sqrt(np.maximum(a, 0.0)))


def psi_to_phi(Psi: ScalarField, J: ScalarField | float, Lambda: float, fiber: str) -> ScalarField:
    """``Phi^2 = Lambda int_lo [Psi^2]^* / J``."""
    if Lambda == 0.0:
        raise DomainError("Lambda_s must be nonzero")
    J = _source(Psi.grid, J)
    return _sqrt_checked(Lambda * _integral_of_derivative(Psi * Psi, 1.0 / J, fiber), "Phi")


def phi_to_psi(Phi: ScalarField, J: ScalarField | float, Lambda: float, fiber: str,
               psi0_sq: ScalarField | float = 0.0) -> ScalarField:
    """``Psi^2 = psi0_sq + Lambda^-1 int_lo J [Phi^2]^*``."""
    if Lambda == 0.0:
        raise DomainError("Lambda_s must be nonzero")
    J = _source(Phi.grid, J)
    return _sqrt_checked(psi0_sq + _integral_of_derivative(Phi * Phi, J / Lambda, fiber), "Psi")


# --------------------------------------------------------------------------
# Polarizations
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PolarizationData:
    """Deformation of a prime metric by polarization functions.

    ``eta`` is keyed by the Killing coefficient index of each shell (4, 6, 8
    for quasi-stationary primes); missing shells use ``eta = 1``.  ``zeta``,
    ``chi`` and ``eps`` describe the small-parameter form
    ``eta = zeta (1 + eps chi)``.
    """

    prime: SMetric
    eta: Mapping[int, ScalarField | float]
    psi: ScalarField | None = None
    J1: ScalarField | float | None = None
    psi0_sq: Mapping[int, ScalarField | float] = field(default_factory=dict)
    n1: Mapping[int, Any] = field(default_factory=dict)
    n2: Mapping[int, Any] = field(default_factory=dict)
    eta_N: Mapping[tuple[int, int], ScalarField | float] = field(default_factory=dict)
    zeta: Mapping[int, ScalarField | float] | None = None
    chi: Mapping[int, ScalarField | float] | None = None
    eps: float = 0.0

    def __post_init__(self) -> None:
        g = self.prime.grid
        for a, e in self.eta.items():
            _require_nonvanishing(as_field(g, e), f"polarization eta_{a}", DomainError)
        for a, e in self.eta_N.items():
            _require_nonvanishing(as_field(g, e), f"N-polarization eta^{a[0]}_{a[1]}", DomainError)
        if not 0.0 <= self.eps < 1.0:
            raise DomainError(f"eps must satisfy 0 <= eps < 1, got {self.eps}")
        if self.zeta is not None:
            for a, z in self.zeta.items():
                _require_nonvanishing(as_field(g, z), f"zeta_{a}", DomainError)

    def eta_of(self, index: int) -> ScalarField:
        return as_field(self.prime.grid, self.eta.get(index, 1.0))


def _polar_base(pd: PolarizationData) -> tuple[ScalarField | None, ScalarField]:
    g = pd.prime.grid
    if pd.J1 is not None:
        return pd.psi, as_field(g, pd.J1)
    if pd.psi is None:
        return ScalarField.constant(g, 0.0), ScalarField.constant(g, 0.0)
    return pd.psi, 0.5 * (partial(pd.psi, "x1", 2) + partial(pd.psi, "x2", 2))


def _polar_gd(pd: PolarizationData, H: Mapping[int, ScalarField], sources: Mapping[int, Any],
              lambdas: Mapping[int, float] | None) -> GeneratingData:
    c = pd.prime.config
    psi, J1 = _polar_base(pd)
    shells = {}
    for s in pd.prime.shells:
        Hs = H[s]
        _require_nonvanishing(Hs, f"polarized coefficient eta*g_{c.killing_index(s)}")
        lam = None
        if lambdas is not None:
            lam = float(lambdas[s])
            if lam == 0.0 or np.max(lam * Hs.samples) >= 0.0:
                raise DomainError(f"shell {s}: Phi^2 = -4 Lambda eta g needs Lambda_s*eta*g < 0 on the grid "
                                  f"(Lambda_{s} = {lam})")
        shells[s] = ShellData(Hs, sources[s], "coeff", lam, None, pd.n1.get(s), pd.n2.get(s),
                              pd.psi0_sq.get(s, 1.0))
    return GeneratingData(pd.prime.grid, J1, shells, psi, kind=c.kind, meta={"polarized": pd.prime.meta.get("family")})


def eta_polarize(pd: PolarizationData, sources: Mapping[int, ScalarField | float],
                 lambdas: Mapping[int, float]) -> tuple[SMetric, GeneratingData]:
    """Target metric with ``h_k = eta_k g_k`` and the induced generating data.

    The prescribed Killing coefficient determines ``Psi^2 = Psi0^2 - 4 int J
    (eta g)^*`` and ``Phi^2 = -4 Lambda eta g``; the remaining coefficients
    follow from the generator core.
    """
    c = pd.prime.config
    H = {s: pd.eta_of(c.killing_index(s)) * pd.prime.h[c.killing_index(s)] for s in pd.prime.shells}
    gd = _polar_gd(pd, H, sources, lambdas)
    return generate(gd), gd


def polarization_factors(target: SMetric, prime: SMetric) -> dict[str, ScalarField]:
    """``eta_alpha = g_alpha / prime g_alpha`` and ``eta^a_i`` where the prime N is nonzero."""
    out = {}
    for i in range(1, min(target.dim, prime.dim) + 1):
        out[f"eta{i}"] = target.coefficient(i) / prime.coefficient(i)
    for a in sorted(set(target.N) & set(prime.N)):
        for i, (t, p) in enumerate(zip(target.N[a], prime.N[a])):
            if np.min(np.abs(p.samples)) > DEGENERACY_FLOOR:
                out[f"eta^{a}_{i + 1}"] = t / p
    return out


def rotoid_chi(grid: Grid, axis: str, amp: float, omega0: float, theta0: float) -> ScalarField:
    """Rotoid deformation ``chi = amp sin(omega0 theta + theta0)``."""
    return eval_on_grid(lambda **u: amp * np.sin(omega0 * u[axis] + theta0), grid, (axis,))


def epsilon_expand(pd: PolarizationData, sources: Mapping[int, ScalarField | float]) -> SMetric:
    """Metric linear in ``eps`` for ``eta = zeta (1 + eps chi)``.

    With ``H0 = zeta g``, ``H1 = chi H0``, ``I = Psi^2 = I0 + eps I1``:
    ``h_k = H0 + eps H1``, ``h_f = h_f0 (1 + eps (2 H1*/H0* - I1/I0 - chi))``,
    ``w`` and ``n`` expanded to first order in the same way.
    """
    if pd.zeta is None or pd.chi is None:
        raise DomainError("epsilon_expand needs zeta and chi")
    c = pd.prime.config
    g = pd.prime.grid
    H0 = {}
    for s in pd.prime.shells:
        k = c.killing_index(s)
        H0[s] = as_field(g, pd.zeta.get(k, 1.0)) * pd.prime.h[k]
    gd = _polar_gd(pd, H0, sources, None)
    m0 = generate(gd)
    eps = float(pd.eps)
    h = dict(m0.h)
    N = dict(m0.N)
    for s in pd.prime.shells:
        k, fi = c.killing_index(s), c.fiber_index(s)
        fiber, base = c.fiber_axis(s), c.base_axes(s)
        sd = gd.shells[s]
        J = as_field(g, sd.J)
        chi = as_field(g, pd.chi.get(k, 0.0))
        H1 = H0[s] * chi
        I0 = as_field(g, sd.psi0_sq) - 4.0 * _integral_of_derivative(H0[s], J, fiber)
        I1 = -4.0 * _integral_of_derivative(H1, J, fiber)
        dH0, dH1 = partial(H0[s], fiber), partial(H1, fiber)
        dI0, dI1 = -4.0 * J * dH0, -4.0 * J * dH1
        common = 2.0 * dH1 / dH0 - I1 / I0
        h[k] = H0[s] + eps * H1
        h[fi] = m0.h[fi] * (1.0 + eps * (common - chi))
        w0 = m0.N[fi]
        N[fi] = tuple(w + eps * ((partial(I1, xi) - w * dI1) / dI0) for w, xi in zip(w0, base))
        n2 = _components(g, sd.n2, len(base), "2n", fiber)
        if n2 is not None:
            K0 = dH0 * dH0 / I0
            corr = cumint(K0 * abs(H0[s]) ** -2.5 * (common - 2.5 * chi), fiber, INTEGRATION)
            N[k] = tuple(n + eps * (b * corr) for n, b in zip(m0.N[k], n2))
    return m0.replace(h=h, N=N, meta={**m0.meta, "generator": "epsilon", "eps": eps})


# --------------------------------------------------------------------------
# Levi-Civita generation
# --------------------------------------------------------------------------


def lc_generate(gd: GeneratingData, potentials: Mapping[int, tuple[ScalarField, ScalarField]],
                tol: float = 1e-4, margin: int = RESIDUAL_MARGIN) -> SMetric:
    """Zero-torsion solution: ``w_i = d_i A``, ``n_k = d_k B``.

    Requires ``Psi`` mode with constant sources and constant ``h0``, taken as
    the constant in ``h_k = h0 - Psi^2/4J`` (no lower-bound anchor, so that
    ``h_k`` depends on ``y + A(x)`` only).  The
    mixed derivatives of ``Psi`` must commute numerically and ``d_i Psi /
    Psi^*`` must match ``d_i A`` (relative ``tol`` on the interior), which
    makes ``h`` a function of ``y + A(x)``.
    """
    c = gd.config
    m = _generate(gd, gd.kind, lc_anchor=True)
    N = dict(m.N)
    for s, sd in gd.shells.items():
        if sd.mode != "psi":
            raise DomainError(f"shell {s}: LC generation needs Psi-mode data")
        for what, v in (("source J_s", sd.J), ("h0", sd.h0)):
            if as_field(gd.grid, v).deps:
                raise DomainError(f"shell {s}: LC generation needs a constant {what}")
        fiber, base = c.fiber_axis(s), c.base_axes(s)
        Psi = sd.generator
        Ps = partial(Psi, fiber)
        zero = ScalarField.constant(gd.grid, 0.0)
        A, B = potentials.get(s, (zero, zero))
        for xi in base:
            if xi not in Psi.deps:
                continue
            a, b = partial(partial(Psi, xi), fiber), partial(Ps, xi)
            err = (a - b).norm_inf(margin) / max(1.0, b.norm_inf(margin))
            if err > tol:
                raise DomainError(f"shell {s}: mixed derivatives of Psi along ({xi}, {fiber}) do not commute "
                                  f"(relative mismatch {err:.3e})")
        w = tuple(partial(A, xi) for xi in base)
        for xi, wi in zip(base, w):
            ref = partial(Psi, xi) / Ps
            err = (wi - ref).norm_inf(margin) / max(1.0, ref.norm_inf(margin))
            if err > tol:
                raise DomainError(f"shell {s}: d_{xi} Psi / Psi^* is not the gradient of the supplied potential A "
                                  f"(relative mismatch {err:.3e}); LC data need Psi = Psi(y + A(x))")
        N[c.fiber_index(s)] = w
        N[c.killing_index(s)] = tuple(partial(B, xi) for xi in base)
    return m.replace(N=N, meta={**m.meta, "generator": "lc"})


# --------------------------------------------------------------------------
# Flow sources
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowSource:
    """Effective sources along a tau family.

    ``slot[a][k]`` is the mixed source of coefficient a at ``taus[k]``;
    ``shell[s][k]`` averages the two slots of shell s (s = 1 is the base) and
    ``mismatch[s][k]`` is their largest difference.
    """

    taus: tuple[float, ...]
    slot: dict[int, list[ScalarField]]
    shell: dict[int, list[ScalarField]]
    mismatch: dict[int, list[float]]


def effective_source_from_flow(family: Sequence[SMetric], taus: Sequence[float],
                               upsilon: Mapping[int, Sequence[ScalarField | float]] | None) -> FlowSource:
    """``J^a = Upsilon^a - (1/2) d_tau g_a / g_a`` per coefficient slot.

    In N-adapted frames the diagonal of ``d_tau g`` is the derivative of the
    d-metric coefficients, so no frame matrices are needed.  Central
    differences in tau (second order, one-sided at the ends).
    """
    taus = np.asarray(taus, dtype=float)
    if len(family) != len(taus):
        raise DomainError("family and tau grid differ in length")
    if len(taus) < 3:
        raise DomainError(f"flow sources need at least 3 tau nodes, got {len(taus)}")
    if np.any(np.diff(taus) <= 0):
        raise DomainError("tau nodes must increase strictly")
    grid = family[0].grid
    dim = family[0].dim
    if any(m.grid != grid or m.dim != dim for m in family):
        raise DomainError("all family members must share grid and dimension")
    upsilon = upsilon or {}
    slot: dict[int, list[ScalarField]] = {}
    for a in range(1, dim + 1):
        coeffs = [m.coefficient(a) for m in family]
        deps = grid.ordered(set().union(*(c.deps for c in coeffs)))
        stack = np.stack([c.broadcast_to(deps) for c in coeffs])
        dg = np.gradient(stack, taus, axis=0, edge_order=2)
        ups = upsilon.get(a, [0.0] * len(taus))
        slot[a] = [(as_field(grid, ups[k]) - ScalarField(grid, deps, 0.5 * dg[k] / stack[k])).compress()
                   for k in range(len(taus))]
    shell, mismatch = {}, {}
    for s in range(1, dim // 2 + 1):
        a, b = slot[2 * s - 1], slot[2 * s]
        shell[s] = [0.5 * (x + y) for x, y in zip(a, b)]
        mismatch[s] = [abs(x - y).norm_inf() for x, y in zip(a, b)]
    return FlowSource(tuple(float(t) for t in taus), slot, shell, mismatch)


# --------------------------------------------------------------------------
# Verification against generating data
# --------------------------------------------------------------------------


def consistency_entries(m: SMetric, gd: GeneratingData) -> list[ResidualEntry]:
    """Relative deviation of each coefficient from regeneration of ``gd``."""
    ref = generate(gd)
    out = []
    for name in ref.coefficient_names():
        a, b = m.get(name), ref.get(name)
        deps = m.grid.ordered(set(a.deps) | set(b.deps))
        d = a.broadcast_to(deps) - b.broadcast_to(deps)
        scale = float(np.max(np.abs(b.samples)))
        scale = scale if scale > 0.0 else 1.0
        shell = 1 if name in ("g1", "g2") else shell_of(int(name[1:].split("_")[0]))
        out.append(ResidualEntry(f"consistency_{name}", shell, float(np.max(np.abs(d))) / scale,
                                 float(np.sqrt(np.mean(d * d))) / scale))
    return out


def verify_generated(m: SMetric, gd: GeneratingData, tolerance: float = DEFAULT_TOLERANCE,
                     margin: int = RESIDUAL_MARGIN, consistency: bool = True) -> FieldEqResidualReport:
    """Field-equation residuals plus, optionally, consistency with the generating data."""
    rep = field_equation_residuals(m, gd, tolerance, margin)
    if consistency:
        rep.entries.extend(consistency_entries(m, gd))
    return rep
