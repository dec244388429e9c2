"""Auxiliary solvers for generating data.

The 2-d problems live on the (x1, x2) plane of a grid with Dirichlet
boundary values and use the second-order five-point Laplacian.  The mKdV
helpers evaluate the traveling-wave kink of
``eta_t - 6 eta^2 eta_r + eta_rrr = 0`` and its finite-difference residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError
from .fields import Grid, ScalarField, as_field, eval_on_grid, partial

PLANE = ("x1", "x2")
MIN_PLANE_NODES = 17
MIN_KDV_NODES = 33


@dataclass(frozen=True)
class SolveResult:
    field: ScalarField
    residual: float
    iterations: int
    history: list[float]
    method: str
    steps: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"method": self.method, "iterations": self.iterations, "residual": self.residual,
                "history": list(self.history), "boundary": "dirichlet"}


def _plane(grid: Grid) -> tuple[int, int, float, float]:
    for a in PLANE:
        if a not in grid:
            raise DomainError(f"2-d solvers need axis {a} on the grid")
    a1, a2 = grid.axis("x1"), grid.axis("x2")
    if min(a1.n, a2.n) < MIN_PLANE_NODES:
        raise DomainError(f"2-d solvers need at least {MIN_PLANE_NODES} nodes per axis, got {a1.n}x{a2.n}")
    return a1.n, a2.n, a1.spacing, a2.spacing


def _plane_values(grid: Grid, f: ScalarField | float, what: str) -> np.ndarray:
    f = as_field(grid, f)
    extra = set(f.deps) - set(PLANE)
    if extra:
        raise DomainError(f"{what} must depend on (x1, x2) only, got {sorted(extra)}")
    return np.array(f.broadcast_to(PLANE), dtype=float)


def _lap_interior(u: np.ndarray, d1: float, d2: float) -> np.ndarray:
    return ((u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / d1**2
            + (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / d2**2)


def laplacian5(f: ScalarField) -> ScalarField:
    """Five-point Laplacian on (x1, x2); boundary rows are set to zero."""
    n1, n2, d1, d2 = _plane(f.grid)
    u = f.broadcast_to(PLANE)
    out = np.zeros((n1, n2))
    out[1:-1, 1:-1] = _lap_interior(u, d1, d2)
    return ScalarField(f.grid, PLANE, out)


def _interior_operator(n1: int, n2: int, d1: float, d2: float) -> sps.csr_matrix:
    def second(n, d):
        m = n - 2
        return sps.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / d**2

    return (sps.kron(second(n1, d1), sps.identity(n2 - 2)) + sps.kron(sps.identity(n1 - 2), second(n2, d2))).tocsr()


def _boundary_rhs(u: np.ndarray, d1: float, d2: float) -> np.ndarray:
    """Contribution of fixed boundary values to the interior five-point sums."""
    b = np.zeros_like(u)
    b[:, :] = u
    b[1:-1, 1:-1] = 0.0
    return _lap_interior(b, d1, d2)


@dataclass(frozen=True, eq=False)
class PoissonProblem:
    """``psi_11 + psi_22 = source`` with Dirichlet ``boundary`` values."""

    grid: Grid
    source: ScalarField | float
    boundary: ScalarField | float = 0.0
    method: str = "direct"
    tol: float = 1e-9
    max_iter: int = 20000
    omega: float | None = None

    def __post_init__(self) -> None:
        _plane(self.grid)
        if self.method not in ("direct", "sor"):
            raise DomainError(f"unknown Poisson method {self.method!r}")
        _plane_values(self.grid, self.source, "source")
        _plane_values(self.grid, self.boundary, "boundary")


def solve_poisson2d(p: PoissonProblem) -> SolveResult:
    n1, n2, d1, d2 = _plane(p.grid)
    src = _plane_values(p.grid, p.source, "source")
    u = _plane_values(p.grid, p.boundary, "boundary")
    u[1:-1, 1:-1] = 0.0
    scale = max(1.0, float(np.abs(src).max()))

    def residual(v: np.ndarray) -> float:
        return float(np.abs(_lap_interior(v, d1, d2) - src[1:-1, 1:-1]).max())

    history: list[float] = []
    if p.method == "direct":
        rhs = (src[1:-1, 1:-1] - _boundary_rhs(u, d1, d2)).ravel()
        u[1:-1, 1:-1] = spla.spsolve(_interior_operator(n1, n2, d1, d2).tocsc(), rhs).reshape(n1 - 2, n2 - 2)
        iters = 1
        history.append(residual(u))
    else:
        omega = p.omega or 2.0 / (1.0 + np.sin(np.pi / max(n1, n2)))
        c1, c2 = 1 / d1**2, 1 / d2**2
        diag = 2 * (c1 + c2)
        ii, jj = np.meshgrid(np.arange(1, n1 - 1), np.arange(1, n2 - 1), indexing="ij")
        colors = [(ii + jj) % 2 == k for k in (0, 1)]
        iters = 0
        r0 = residual(u)
        while True:
            for mask in colors:
                gs = (c1 * (u[2:, 1:-1] + u[:-2, 1:-1]) + c2 * (u[1:-1, 2:] + u[1:-1, :-2]) - src[1:-1, 1:-1]) / diag
                inner = u[1:-1, 1:-1]
                inner[mask] = (1 - omega) * inner[mask] + omega * gs[mask]
            iters += 1
            r = residual(u)
            history.append(r)
            if not np.isfinite(r) or r > 1e6 * max(r0, scale):
                raise ConvergenceError(f"SOR diverged after {iters} sweeps (residual {r:.3e})", history)
            if r <= p.tol * scale:
                break
            if iters >= p.max_iter:
                raise ConvergenceError(f"SOR did not reach {p.tol:.1e} in {iters} sweeps (residual {r:.3e})", history)
    res = history[-1]
    if p.method == "direct" and res > p.tol * scale:
        raise ConvergenceError(f"direct Poisson solve residual {res:.3e} exceeds tolerance", history)
    return SolveResult(ScalarField(p.grid, PLANE, u), res, iters, history, p.method)


@dataclass(frozen=True, eq=False)
class TaubesProblem:
    """``lap psi = omega0 (C0 - C1 exp(2 psi)) + extra_source`` with Dirichlet data.

    ``extra_source`` is zero for the vortex equation itself; manufactured
    solutions put their back-substituted remainder there.
    """

    grid: Grid
    omega0: ScalarField | float
    C0: float
    C1: float
    boundary: ScalarField | float = 0.0
    extra_source: ScalarField | float = 0.0
    damping: float = 1.0
    tol: float = 1e-10
    max_iter: int = 50
    initial: ScalarField | None = None

    def __post_init__(self) -> None:
        _plane(self.grid)
        if not 0.0 < self.damping <= 1.0:
            raise DomainError(f"Newton damping must lie in (0, 1], got {self.damping}")
        for what in ("omega0", "boundary", "extra_source"):
            _plane_values(self.grid, getattr(self, what), what)
        if not (np.isfinite(self.C0) and np.isfinite(self.C1)):
            raise DomainError("Taubes constants must be finite")


def solve_taubes(t: TaubesProblem) -> SolveResult:
    """Damped Newton iteration with residual backtracking.

    Each step is scaled by ``damping`` and halved until the residual drops,
    so the residual history is monotone after the first step.
    """
    n1, n2, d1, d2 = _plane(t.grid)
    om = _plane_values(t.grid, t.omega0, "omega0")[1:-1, 1:-1]
    extra = _plane_values(t.grid, t.extra_source, "extra_source")[1:-1, 1:-1]
    u = _plane_values(t.grid, t.boundary, "boundary")
    if t.initial is None:
        u[1:-1, 1:-1] = 0.0
    else:
        u[1:-1, 1:-1] = _plane_values(t.grid, t.initial, "initial")[1:-1, 1:-1]
    L = _interior_operator(n1, n2, d1, d2)

    def F(v: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return _lap_interior(v, d1, d2) - om * (t.C0 - t.C1 * np.exp(2 * v[1:-1, 1:-1])) - extra

    def norm(r: np.ndarray) -> float:
        val = float(np.abs(r).max())
        return val if np.isfinite(val) else np.inf

    r = F(u)
    history = [norm(r)]
    steps: list[float] = []
    it = 0
    while history[-1] > t.tol:
        if it >= t.max_iter:
            raise ConvergenceError(f"Taubes Newton did not converge in {it} iterations "
                                   f"(residual {history[-1]:.3e})", history)
        jac = L + sps.diags((2 * om * t.C1 * np.exp(2 * u[1:-1, 1:-1])).ravel())
        du = spla.spsolve(jac.tocsc(), -r.ravel()).reshape(n1 - 2, n2 - 2)
        lam = t.damping
        while True:
            trial = u.copy()
            trial[1:-1, 1:-1] += lam * du
            r_new = F(trial)
            if norm(r_new) < history[-1] or lam < 1e-6:
                break
            lam *= 0.5
        it += 1
        if not np.isfinite(norm(r_new)):
            raise ConvergenceError("Taubes Newton produced non-finite values", history)
        u, r = trial, r_new
        steps.append(float(np.abs(lam * du).max()))
        history.append(norm(r))
    return SolveResult(ScalarField(t.grid, PLANE, u), history[-1], it, history, "newton", steps)


def mkdv_profile(grid: Grid, k: float, r_axis: str, t_axis: str) -> ScalarField:
    """Kink ``eta = k tanh(k r + 2 k^3 t)`` of the equation as written."""
    if grid.axis(r_axis).n < MIN_KDV_NODES:
        raise DomainError(f"mKdV profile needs at least {MIN_KDV_NODES} nodes along {r_axis}")
    return eval_on_grid(lambda **u: k * np.tanh(k * u[r_axis] + 2 * k**3 * u[t_axis]), grid, (r_axis, t_axis))


def mkdv_residual(eta: ScalarField, r_axis: str, t_axis: str) -> ScalarField:
    """``eta_t - 6 eta^2 eta_r + eta_rrr`` by finite differences."""
    return partial(eta, t_axis) - 6 * eta * eta * partial(eta, r_axis) + partial(eta, r_axis, 3)
