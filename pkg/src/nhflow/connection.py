"""Canonical d-connection, its torsion and the Levi-Civita constraints.

Only the coefficients that can be nonzero for Killing-adapted s-metrics are
stored.  Per shell the formulas are written in role form: ``f`` is the fiber
index (3 for quasi-stationary shell 2, 4 for cosmological), ``q`` the Killing
index, ``w`` and ``n`` the matching N-components and ``*`` the fiber
derivative.  Keys use the actual coefficient indices, e.g. ``"L^4_3[x1]"``
or ``"C^3_44"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .errors import DomainError
from .fields import ScalarField, partial
from .smetric import SMetric, ShellView, anholonomy

RESIDUAL_MARGIN = 2


def _require_adapted(m: SMetric) -> None:
    if not m.adapted:
        raise DomainError("connection coefficients need a Killing-adapted s-metric (this one is not adapted)")


def _ek(v: ShellView, f: ScalarField, k: int) -> ScalarField:
    """N-elongated derivative e_k f = d_k f - w_k f^* (Killing derivatives vanish)."""
    return partial(f, v.base[k]) - v.w[k] * partial(f, v.fiber)


class _Store:
    base: dict[str, ScalarField]
    shells: dict[int, dict[str, ScalarField]]

    def __getitem__(self, s: int) -> dict[str, ScalarField]:
        return self.shells[s]

    def flat(self) -> dict[str, ScalarField]:
        out = dict(self.base)
        for s, d in self.shells.items():
            out.update({f"s{s}:{k}": v for k, v in d.items()})
        return out

    def items(self) -> Iterator[tuple[str, ScalarField]]:
        return iter(self.flat().items())

    def values(self) -> Iterator[ScalarField]:
        return iter(self.flat().values())

    def max_norm(self, margin: int = RESIDUAL_MARGIN) -> float:
        return max((f.norm_inf(margin) for f in self.values()), default=0.0)


@dataclass(frozen=True)
class DConnCoeffs(_Store):
    base: dict[str, ScalarField]
    shells: dict[int, dict[str, ScalarField]]


@dataclass(frozen=True)
class TorsionCoeffs(_Store):
    base: dict[str, ScalarField]
    shells: dict[int, dict[str, ScalarField]]
    grid: object = None

    def zero_classes(self) -> dict[str, ScalarField]:
        """T^i_jk and T^a_bc, identically zero for the canonical d-connection."""
        zero = ScalarField.constant(self.grid, 0.0)
        return {"T^i_jk": zero, "T^a_bc": zero}


def canonical_dconnection(m: SMetric) -> DConnCoeffs:
    _require_adapted(m)
    g1, g2 = m.g1, m.g2
    d = lambda f, a: partial(f, a)  # noqa: E731
    base = {
        "L1_11": d(g1, "x1") / (2 * g1),
        "L1_12": d(g1, "x2") / (2 * g1),
        "L1_22": -d(g2, "x1") / (2 * g1),
        "L2_11": -d(g1, "x2") / (2 * g2),
        "L2_12": d(g2, "x1") / (2 * g2),
        "L2_22": d(g2, "x2") / (2 * g2),
    }
    zero = ScalarField.constant(m.grid, 0.0)
    shells = {}
    for s in m.shells:
        v = m.view(s)
        f, q = v.fiber_index, v.killing_index
        hf, hq = v.h_f, v.h_k
        hf_s, hq_s = partial(hf, v.fiber), partial(hq, v.fiber)
        out = {}
        for k, name in enumerate(v.base):
            n_s = partial(v.n[k], v.fiber)
            out[f"L^{q}_{q}[{name}]"] = _ek(v, hq, k) / (2 * hq)
            out[f"L^{f}_{f}[{name}]"] = _ek(v, hf, k) / (2 * hf)
            out[f"L^{f}_{q}[{name}]"] = -hq * n_s / (2 * hf)
            out[f"L^{q}_{f}[{name}]"] = n_s / 2
        out[f"C^{f}_{f}{f}"] = hf_s / (2 * hf)
        out[f"C^{f}_{q}{q}"] = -hq_s / (2 * hf)
        out[f"C^{q}_{f}{q}"] = hq_s / (2 * hq)
        out[f"C^{q}_{f}{f}"] = zero
        out[f"C^{q}_{q}{q}"] = zero
        out[f"Ctr_{f}"] = out[f"C^{f}_{f}{f}"] + out[f"C^{q}_{f}{q}"]
        out[f"Ctr_{q}"] = zero
        shells[s] = out
    return DConnCoeffs(base, shells)


def canonical_torsion(m: SMetric, c: DConnCoeffs | None = None) -> TorsionCoeffs:
    """Nonzero d-torsion: T^a_bk = L^a_bk - d_b N^a_k and T^a_ij = -Omega^a_ij."""
    _require_adapted(m)
    c = canonical_dconnection(m) if c is None else c
    shells = {}
    for s in m.shells:
        v = m.view(s)
        f, q = v.fiber_index, v.killing_index
        L = c[s]
        out = {}
        for k, name in enumerate(v.base):
            out[f"T^{f}_{f}[{name}]"] = L[f"L^{f}_{f}[{name}]"] - partial(v.w[k], v.fiber)
            out[f"T^{f}_{q}[{name}]"] = L[f"L^{f}_{q}[{name}]"]
            out[f"T^{q}_{f}[{name}]"] = L[f"L^{q}_{f}[{name}]"] - partial(v.n[k], v.fiber)
            out[f"T^{q}_{q}[{name}]"] = L[f"L^{q}_{q}[{name}]"]
        for (a, i, j), om in anholonomy(m, s).items():
            out[f"T^{a}[{i},{j}]"] = -om
        shells[s] = out
    return TorsionCoeffs({}, shells, m.grid)


@dataclass(frozen=True)
class LCResiduals:
    """Residual fields of the Levi-Civita conditions and their interior max norms."""

    fields: dict[tuple, ScalarField]
    norms: dict[tuple, float] = field(default_factory=dict)

    def max_norm(self) -> float:
        return max(self.norms.values(), default=0.0)


def lc_residuals(m: SMetric, margin: int = RESIDUAL_MARGIN) -> LCResiduals:
    """Per-shell residuals of the zero-torsion conditions.

    w*_i - e_i ln sqrt|h_f|,  e_i ln sqrt|h_q|,  d_i w_j - d_j w_i,  n*_i,
    d_i n_j - d_j n_i  with e_i = d_i - w_i d_fiber.
    """
    out: dict[tuple, ScalarField] = {}
    for s in m.shells:
        v = m.view(s)
        ln_f = abs(v.h_f).log() * 0.5
        ln_q = abs(v.h_k).log() * 0.5
        for i, xi in enumerate(v.base):
            out[(s, "w_eq", xi)] = partial(v.w[i], v.fiber) - _ek(v, ln_f, i)
            out[(s, "hk_eq", xi)] = _ek(v, ln_q, i)
            out[(s, "n_star", xi)] = partial(v.n[i], v.fiber)
            for j in range(i + 1, len(v.base)):
                xj = v.base[j]
                out[(s, "w_curl", xi, xj)] = partial(v.w[j], xi) - partial(v.w[i], xj)
                out[(s, "n_curl", xi, xj)] = partial(v.n[j], xi) - partial(v.n[i], xj)
    return LCResiduals(out, {k: f.norm_inf(margin) for k, f in out.items()})
