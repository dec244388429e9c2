"""Geometric-flow thermodynamic variables of solution families.

The normalizing function is a constant absorbed into the measure, so every
variable is a closed-form multiple of a volume functional

    V = int sqrt|det g| dx^1 ... du^d

taken over a box of the grid with the fully assembled off-diagonal metric.
For s-adapted metrics the N-elongated frame is unit triangular, so the same
integral is the product of the diagonal coefficients; that factored route is
kept as a cross-check.  ``sigma`` integrates the squared norm of
``R_ab - g_ab/2tau`` with the same measure.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .curvature import RicciCoeffs, ricci_coeffs
from .errors import DegeneracyError, DomainError
from .fields import ScalarField, as_field, quadrature, slot_of
from .smetric import SMetric, assemble_slices

DET_FLOOR = 1e-300
COLUMNS = ("tau", "V", "lnZ", "E", "S", "sigma")

LambdaSpec = float | Sequence[float] | Callable[[float], float]


def _dims(m: SMetric, dims: int | None) -> int:
    d = m.dim if dims is None else int(dims)
    if d not in (4, 6, 8) or d > m.dim:
        raise DomainError(f"cannot restrict a {m.dim}-d metric to {d} dimensions")
    return d


def _axes(m: SMetric, dims: int) -> tuple[str, ...]:
    return tuple(a for a in m.grid.names if slot_of(a) < dims)


def _measure(m: SMetric, dims: int) -> ScalarField:
    """sqrt|det| of the assembled metric at every node.

    Determinants are taken one slice of the leading axis at a time so the
    dense matrices never exist for the whole grid at once.
    """
    deps, slices = assemble_slices(m, dims)
    det = np.stack([np.linalg.det(G) for G in slices]) if deps else np.linalg.det(next(slices))
    bad = np.abs(det) < DET_FLOOR
    if bad.any() or (det.min() < 0 < det.max()):
        idx = np.argwhere(bad)[0] if bad.any() else np.argwhere(np.sign(det) != np.sign(det.flat[0]))[0]
        where = {d: float(m.grid.axis(d).nodes[i]) for d, i in zip(deps, idx)}
        raise DegeneracyError(f"assembled metric determinant degenerates near {where}")
    return ScalarField(m.grid, deps, np.sqrt(np.abs(det)))


def _weight(m: SMetric, source: ScalarField | float | None) -> ScalarField | float:
    if source is None:
        return 1.0
    return abs(as_field(m.grid, source)).sqrt()


def volume_functional(m: SMetric, region: Mapping[str, tuple[float, float]] | None = None,
                      dims: int | None = None, source: ScalarField | float | None = None,
                      measure: ScalarField | None = None) -> float:
    """Quadrature of sqrt|det g| over ``region`` on the first ``dims`` slots.

    ``source`` optionally multiplies the measure by sqrt|source|, the
    base-source prefactor some families carry inside the volume form.
    A precomputed ``measure`` (sqrt|det| on the same slots) skips assembly.
    """
    d = _dims(m, dims)
    mu = _measure(m, d) if measure is None else measure
    return quadrature(mu * _weight(m, source), region, _axes(m, d))


def volume_functional_factored(m: SMetric, region: Mapping[str, tuple[float, float]] | None = None,
                               dims: int | None = None, source: ScalarField | float | None = None) -> float:
    """Same integral through the product of diagonal coefficients."""
    d = _dims(m, dims)
    prod = m.coefficient(1)
    for i in range(2, d + 1):
        prod = prod * m.coefficient(i)
    if abs(prod).min() < DET_FLOOR:
        raise DegeneracyError("product of diagonal coefficients vanishes")
    return quadrature(abs(prod).sqrt() * _weight(m, source), region, _axes(m, d))


def _tau(tau: Any) -> Any:
    t = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise DomainError("tau must be finite and strictly positive")
    return tau if np.ndim(t) == 0 and not isinstance(tau, np.ndarray) else t


def thermo_vars_8d(V: Any, lambda_h: Any, lambda_v: Any, tau: Any) -> tuple[Any, Any, Any]:
    """(lnZ, E, S) of an 8-d family with running constants Lambda_h, Lambda_v."""
    tau = _tau(tau)
    lam = lambda_h + lambda_v
    c = (4 * np.pi * tau) ** 4
    return V / c, (1 - 2 * tau * lam) * V / (64 * np.pi**4 * tau**3), 2 * (1 - 4 * lam) * V / c


def thermo_vars_4d(V: Any, lambda_h: Any, tau: Any) -> tuple[Any, Any, Any]:
    """(lnZ, E, S) of a 4-d (base) family."""
    tau = _tau(tau)
    return (V / (8 * np.pi**2 * tau**2), (1 - 2 * tau * lambda_h) * V / (8 * np.pi**2 * tau),
            (1 - lambda_h) * V / (4 * np.pi**2 * tau**2))


def w_functional(V: Any, lambda_h: Any, lambda_v: Any, tau: Any, four_d: bool = False) -> Any:
    """W = -S."""
    S = thermo_vars_4d(V, lambda_h, tau)[2] if four_d else thermo_vars_8d(V, lambda_h, lambda_v, tau)[2]
    return -S


def _squared_norm(m: SMetric, R: RicciCoeffs, tau: float, dims: int) -> ScalarField:
    """|R_ab - g_ab/2tau|^2 in the N-adapted frame.

    The diagonal enters with mixed indices; each lower-index mixed component
    R_{a,k} is raised with the diagonal inverse metric.
    """
    half = 1.0 / (2 * tau)
    total = ScalarField.constant(m.grid, 0.0)
    for i in range(1, dims + 1):
        dev = R.diag(i) - half
        total = total + dev * dev
    for s, (rf, rq) in R.mixed.items():
        if 2 * s > dims:
            continue
        f_idx, q_idx = m.config.fiber_index(s), m.config.killing_index(s)
        for a, comps in ((f_idx, rf), (q_idx, rq)):
            for k, c in enumerate(comps):
                total = total + c * c / (m.coefficient(a) * m.coefficient(k + 1))
    return abs(total)


def sigma_fluctuation(m: SMetric, ricci: RicciCoeffs | None, tau: float,
                      region: Mapping[str, tuple[float, float]] | None = None,
                      dims: int | None = None, measure: ScalarField | None = None) -> float:
    """2 tau^4 int (4 pi tau)^-4 |R_ab - g_ab/2tau|^2 dV; Ricci and measure computed when not given."""
    tau = float(_tau(tau))
    d = _dims(m, dims)
    R = ricci_coeffs(m) if ricci is None else ricci
    integrand = _squared_norm(m, R, tau, d) * (_measure(m, d) if measure is None else measure)
    return 2 * tau**4 * (4 * np.pi * tau) ** -4 * quadrature(integrand, region, _axes(m, d))


def _lambda_values(spec: Any, taus: np.ndarray, what: str) -> np.ndarray:
    if spec is None:
        raise DomainError(f"{what} is required")
    if callable(spec):
        vals = np.array([float(spec(t)) for t in taus])
    else:
        vals = np.broadcast_to(np.asarray(spec, dtype=float), taus.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"{what} must be finite on the tau grid")
    return vals


@dataclass(frozen=True, eq=False)
class ThermoConfig:
    taus: Sequence[float]
    lambda_h: LambdaSpec
    lambda_v: LambdaSpec | None = 0.0
    four_d: bool = False
    region: Mapping[str, tuple[float, float]] | None = None
    source: ScalarField | float | None = None
    with_sigma: bool = True

    def __post_init__(self) -> None:
        t = np.atleast_1d(np.asarray(self.taus, dtype=float))
        _tau(t)
        object.__setattr__(self, "taus", t)
        _lambda_values(self.lambda_h, t, "Lambda_h")
        if not self.four_d:
            _lambda_values(self.lambda_v, t, "Lambda_v")

    @property
    def dims(self) -> int:
        return 4 if self.four_d else 8

    def lambdas(self) -> tuple[np.ndarray, np.ndarray]:
        lh = _lambda_values(self.lambda_h, self.taus, "Lambda_h")
        lv = np.zeros_like(lh) if self.four_d else _lambda_values(self.lambda_v, self.taus, "Lambda_v")
        return lh, lv


@dataclass(frozen=True, eq=False)
class ThermoReport:
    taus: np.ndarray
    V: np.ndarray
    lnZ: np.ndarray
    E: np.ndarray
    S: np.ndarray
    sigma: np.ndarray
    dims: int = 8
    meta: Mapping[str, Any] = field(default_factory=dict)

    def rows(self) -> list[tuple[float, ...]]:
        return [tuple(float(getattr(self, k)[i]) for k in ("taus", "V", "lnZ", "E", "S", "sigma"))
                for i in range(len(self.taus))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.rows():
            w.writerow([format(x, ".17g") for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ThermoReport":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != COLUMNS:
            raise DomainError(f"thermo CSV must start with header {','.join(COLUMNS)}")
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(COLUMNS))
        return cls(*(data[:, k].copy() for k in range(len(COLUMNS))))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"dims": self.dims, "n_tau": len(self.taus)}
        for k, name in zip(("taus", "V", "lnZ", "E", "S", "sigma"), COLUMNS):
            out[name] = [float(x) for x in getattr(self, k)]
        out["meta"] = dict(self.meta)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def thermo_report(family: SMetric | Sequence[SMetric], config: ThermoConfig, threads: int = 1) -> ThermoReport:
    """Thermodynamic variables over the tau grid.

    A single metric is treated as a tau-independent family (one V, one
    curvature evaluation); a sequence supplies one member per tau node.
    Nodes are evaluated on up to ``threads`` worker threads; results do not
    depend on the thread count.
    """
    taus = config.taus
    single = isinstance(family, SMetric)
    members = [family] if single else list(family)
    if not single and len(members) != len(taus):
        raise DomainError(f"family has {len(members)} members for {len(taus)} tau nodes")
    d = config.dims

    def ricci(m: SMetric) -> RicciCoeffs | None:
        return ricci_coeffs(m) if config.with_sigma else None

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        meas = list(pool.map(lambda m: _measure(m, d), members))
        vols = [volume_functional(m, config.region, d, config.source, mu) for m, mu in zip(members, meas)]
        curv = list(pool.map(ricci, members))
        V = np.array(vols * len(taus) if single else vols)
        pick = (lambda k: 0) if single else (lambda k: k)

        def sigma(k: int) -> float:
            if not config.with_sigma:
                return float("nan")
            j = pick(k)
            return sigma_fluctuation(members[j], curv[j], float(taus[k]), config.region, d, meas[j])

        sig = np.array(list(pool.map(sigma, range(len(taus)))))
    lh, lv = config.lambdas()
    lnZ, E, S = thermo_vars_4d(V, lh, taus) if config.four_d else thermo_vars_8d(V, lh, lv, taus)
    return ThermoReport(np.array(taus), V, np.asarray(lnZ), np.asarray(E), np.asarray(S), sig, d,
                        {"measure": "sqrt|det|" + ("*sqrt|J1|" if config.source is not None else "")})
