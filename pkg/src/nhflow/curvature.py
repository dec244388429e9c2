"""Canonical Ricci s-tensor, scalar and Einstein diagonal, field-equation
residuals, and a brute-force Levi-Civita Ricci oracle.

The per-shell formulas are written in role form (see ``connection``): ``f`` is
the fiber index, ``q`` the Killing index and ``*`` the fiber derivative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .connection import RESIDUAL_MARGIN, _require_adapted
from .errors import DomainError
from .fields import Grid, ScalarField, axis_label, diff_samples, partial
from .smetric import SMetric

DEFAULT_TOLERANCE = 1e-6


def ricci_h(m: SMetric) -> ScalarField:
    """R^1_1 = R^2_2 of the base shell (x1 is the dot, x2 the prime)."""
    _require_adapted(m)
    g1, g2 = m.g1, m.g2
    d = partial
    g1d, g1p = d(g1, "x1"), d(g1, "x2")
    g2d, g2p = d(g2, "x1"), d(g2, "x2")
    bracket = (d(g2, "x1", 2) - g1d * g2d / (2 * g1) - g2d * g2d / (2 * g2)
               + d(g1, "x2", 2) - g1p * g2p / (2 * g2) - g1p * g1p / (2 * g1))
    return -bracket / (2 * g1 * g2)


def ricci_v(m: SMetric, shell: int) -> ScalarField:
    """R^f_f = R^q_q = (-h_q** + (h_q*)^2/2h_q + h_f* h_q*/2h_f) / 2 h_f h_q."""
    _require_adapted(m)
    v = m.view(shell)
    hf, hq = v.h_f, v.h_k
    hq_s, hf_s = partial(hq, v.fiber), partial(hf, v.fiber)
    return (-partial(hq, v.fiber, 2) + hq_s * hq_s / (2 * hq) + hf_s * hq_s / (2 * hf)) / (2 * hf * hq)


def ricci_mixed(m: SMetric, shell: int, literal: bool = False) -> tuple[tuple[ScalarField, ...], tuple[ScalarField, ...]]:
    """(R_{f,k}, R_{q,k}) for every base coordinate k of the shell.

    R_{q,k} uses the compact form -(h_q/2h_f)(n_k** + gamma n_k*).  With
    ``literal=True`` it instead evaluates the printed display term by term,
    reading its ``(h_f)^*`` denominators as fiber derivatives; this is a
    diagnostic only.
    """
    _require_adapted(m)
    v = m.view(shell)
    F = v.fiber
    hf, hq = v.h_f, v.h_k
    hf_s, hq_s = partial(hf, F), partial(hq, F)
    hq_ss = partial(hq, F, 2)
    bracket = hq_ss - hq_s * hq_s / (2 * hq) - hf_s * hq_s / (2 * hf)
    gamma = 1.5 * hq_s / hq - hf_s / hf
    rf, rq = [], []
    for k, xk in enumerate(v.base):
        rf.append(v.w[k] / (2 * hq) * bracket
                  + hq_s / (4 * hq) * (partial(hf, xk) / hf + partial(hq, xk) / hq)
                  - partial(hq_s, xk) / (2 * hq))
        n_s, n_ss = partial(v.n[k], F), partial(v.n[k], F, 2)
        if literal:
            rq.append(-n_ss * hq / (2 * hf)
                      + n_s * (-hq_s / (2 * hf) + hq_s * hf_s / (2 * hf_s) - hq_s * hf_s / (4 * hf_s) - hq_s / (4 * hf)))
        else:
            rq.append(-(hq / (2 * hf)) * (n_ss + gamma * n_s))
    return tuple(rf), tuple(rq)


@dataclass(frozen=True, eq=False)
class RicciCoeffs:
    """Diagonal Ricci values with one storage slot per index pair, plus mixed parts."""

    R11: ScalarField
    v: Mapping[int, ScalarField]
    mixed: Mapping[int, tuple[tuple[ScalarField, ...], tuple[ScalarField, ...]]] = field(default_factory=dict)

    @classmethod
    def from_diagonal(cls, R11: ScalarField | float, v: Mapping[int, ScalarField | float], grid: Grid | None = None):
        grid = grid or (R11.grid if isinstance(R11, ScalarField) else None)
        as_f = lambda x: x if isinstance(x, ScalarField) else ScalarField.constant(grid, x)  # noqa: E731
        return cls(as_f(R11), {int(s): as_f(x) for s, x in v.items()})

    def diag(self, index: int) -> ScalarField:
        s = (index + 1) // 2
        return self.R11 if s == 1 else self.v[s]

    @property
    def shells(self) -> tuple[int, ...]:
        return tuple(sorted(self.v))

    @property
    def scalar(self) -> ScalarField:
        total = self.R11
        for s in self.shells:
            total = total + self.v[s]
        return 2 * total

    @property
    def einstein(self) -> dict[int, ScalarField]:
        """E^{2s}_{2s} = -(sum of the other shells' diagonal Ricci values)."""
        parts = {1: self.R11, **self.v}
        out = {}
        for s in parts:
            others = [parts[t] for t in parts if t != s]
            tot = others[0]
            for x in others[1:]:
                tot = tot + x
            out[2 * s] = -tot
        return out


def ricci_coeffs(m: SMetric, literal: bool = False) -> RicciCoeffs:
    return RicciCoeffs(ricci_h(m), {s: ricci_v(m, s) for s in m.shells},
                       {s: ricci_mixed(m, s, literal) for s in m.shells})


def ricci_scalar(m: SMetric) -> ScalarField:
    return RicciCoeffs(ricci_h(m), {s: ricci_v(m, s) for s in m.shells}).scalar


def einstein_diag(m: SMetric) -> dict[int, ScalarField]:
    return RicciCoeffs(ricci_h(m), {s: ricci_v(m, s) for s in m.shells}).einstein


@dataclass(frozen=True, eq=False)
class DecoupledCoefficients:
    varpi: ScalarField
    alpha: tuple[ScalarField, ...]
    beta: ScalarField
    gamma: ScalarField


def decoupled_coefficients(m: SMetric, shell: int) -> DecoupledCoefficients:
    """varpi = ln|h_q*/sqrt|h_f h_q||, alpha_i = h_q* d_i varpi, beta = h_q* varpi*,
    gamma = (ln(|h_q|^{3/2}/|h_f|))*."""
    _require_adapted(m)
    v = m.view(shell)
    F = v.fiber
    hq_s = partial(v.h_k, F)
    if np.min(np.abs(hq_s.samples)) == 0.0 or hq_s.norm_inf() < 1e-14:
        raise DomainError(f"shell {shell}: the fiber derivative of h{v.killing_index} vanishes on the grid")
    varpi = (abs(hq_s) / (abs(v.h_f * v.h_k)).sqrt()).log()
    alpha = tuple(hq_s * partial(varpi, x) for x in v.base)
    beta = hq_s * partial(varpi, F)
    gamma = 1.5 * partial(abs(v.h_k).log(), F) - partial(abs(v.h_f).log(), F)
    return DecoupledCoefficients(varpi, alpha, beta, gamma)


# --------------------------------------------------------------------------
# Field-equation residual report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualEntry:
    name: str
    shell: int
    linf: float
    l2: float


@dataclass
class FieldEqResidualReport:
    entries: list[ResidualEntry]
    grid: dict[str, list]
    tolerance: float = DEFAULT_TOLERANCE
    margin: int = RESIDUAL_MARGIN

    @property
    def max_linf(self) -> float:
        return max((e.linf for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(np.isfinite(e.linf) and e.linf <= self.tolerance for e in self.entries)

    def get(self, name: str) -> ResidualEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def shell_max(self, shell: int) -> float:
        return max((e.linf for e in self.entries if e.shell == shell), default=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": self.grid,
            "tolerance": self.tolerance,
            "interior_margin": self.margin,
            "passed": self.passed,
            "max_linf": self.max_linf,
            "residuals": [{"name": e.name, "shell": e.shell, "linf": e.linf, "l2": e.l2} for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{'residual':<28} {'shell':>5} {'Linf':>12} {'L2':>12}  status"]
        for e in self.entries:
            ok = "ok" if e.linf <= self.tolerance else "FAIL"
            lines.append(f"{e.name:<28} {e.shell:>5} {e.linf:12.4e} {e.l2:12.4e}  {ok}")
        lines.append(f"tolerance {self.tolerance:.1e}  overall {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def field_equation_residuals(m: SMetric, gd: Any, tolerance: float = DEFAULT_TOLERANCE,
                             margin: int = RESIDUAL_MARGIN) -> FieldEqResidualReport:
    """Residuals of the decoupled system for a metric and its generating data.

    ``gd`` needs ``J1`` (base source) and ``source(s)`` (shell sources).  Each
    entry reports interior L-infinity and RMS norms.  When ``gd.psi_discrete``
    is set (psi came from the Poisson solver) the base equation uses the same
    five-point Laplacian the solver satisfied.
    """
    entries: list[ResidualEntry] = []

    def add(name: str, s: int, f: ScalarField) -> None:
        entries.append(ResidualEntry(name, s, f.norm_inf(margin), f.norm_rms(margin)))

    psi = abs(m.g1).log()
    if getattr(gd, "psi_discrete", False):
        from .solvers import laplacian5

        lap = laplacian5(psi)
    else:
        lap = partial(psi, "x1", 2) + partial(psi, "x2", 2)
    add("eq1_poisson", 1, lap - 2 * gd.J1)
    add("eq1_conformal_g1_g2", 1, m.g1 - m.g2)
    for s in m.shells:
        v = m.view(s)
        J = gd.source(s)
        dc = decoupled_coefficients(m, s)
        hq_s = partial(v.h_k, v.fiber)
        add(f"e{s}a_fiber", s, partial(dc.varpi, v.fiber) * hq_s - 2 * v.h_f * v.h_k * J)
        for k, xk in enumerate(v.base):
            add(f"e{s}b_w[{xk}]", s, dc.beta * v.w[k] - dc.alpha[k])
        for k, xk in enumerate(v.base):
            n = v.n[k]
            add(f"e{s}c_n[{xk}]", s, partial(n, v.fiber, 2) + dc.gamma * partial(n, v.fiber))
        rf, rq = ricci_mixed(m, s)
        for k, xk in enumerate(v.base):
            add(f"ricci_{v.fiber_index}{xk}", s, rf[k])
            add(f"ricci_{v.killing_index}{xk}", s, rq[k])
        add(f"ricci_diag_{v.fiber_index}_plus_J", s, ricci_v(m, s) + J)
    return FieldEqResidualReport(entries, m.grid.to_dict(), tolerance, margin)


# --------------------------------------------------------------------------
# Brute-force Levi-Civita oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BruteRicci:
    deps: tuple[str, ...]
    lower: np.ndarray
    mixed: np.ndarray
    christoffel: np.ndarray


def lc_ricci_bruteforce(grid: Grid, deps: tuple[str, ...], G: np.ndarray) -> BruteRicci:
    """Coordinate-basis Ricci tensor of a metric-matrix field by finite differences.

    ``G`` has shape ``(*[n_d for d in deps], D, D)``; coordinate mu is the
    canonical axis of slot mu.  Returns R_{mu nu}, R^mu_nu and Gamma^l_{mu nu}.
    """
    G = np.asarray(G, dtype=float)
    D = G.shape[-1]
    deps = tuple(deps)
    det = np.linalg.det(G)
    if np.any(np.abs(det) < 1e-14 * np.maximum(1.0, np.abs(G).max(axis=(-1, -2)) ** D)):
        raise DomainError("metric block is singular somewhere on the grid")
    Ginv = np.linalg.inv(G)
    label = grid.fiber_label

    def d(arr: np.ndarray, mu: int) -> np.ndarray:
        name = axis_label(mu, label)
        if name not in deps:
            return np.zeros_like(arr)
        return diff_samples(arr, deps.index(name), grid.axis(name))

    dG = np.stack([d(G, mu) for mu in range(D)], axis=-3)  # [..., mu, a, b] = d_mu g_ab
    # Gamma_{s mu nu} = (d_mu g_{s nu} + d_nu g_{s mu} - d_s g_{mu nu}) / 2
    first = 0.5 * (np.einsum("...msn->...smn", dG) + np.einsum("...nsm->...smn", dG) - dG)
    Gam = np.einsum("...ls,...smn->...lmn", Ginv, first)
    dGam = np.stack([d(Gam, r) for r in range(D)], axis=-4)  # [..., r, l, m, n] = d_r Gamma^l_mn
    term1 = np.einsum("...llmn->...mn", dGam)
    term2 = np.einsum("...nlml->...mn", dGam)
    term3 = np.einsum("...lls,...smn->...mn", Gam, Gam)
    term4 = np.einsum("...lns,...sml->...mn", Gam, Gam)
    R = term1 - term2 + term3 - term4
    mixed = np.einsum("...ms,...sn->...mn", Ginv, R)
    return BruteRicci(deps, R, mixed, Gam)
