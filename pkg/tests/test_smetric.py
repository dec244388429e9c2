import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from nhflow.errors import DegeneracyError, DomainError
from nhflow.fields import Axis, Grid, ScalarField, eval_on_grid
from nhflow.smetric import (
    PrimeMetricSpec,
    ShellConfig,
    SMetric,
    anholonomy,
    assemble_field,
    assemble_offdiagonal,
    dual_relabel,
    flat_metric,
    frame_matrix,
    kds_mass_bounds,
    kds_scalar_curvature,
    prime_metric,
    torus_f,
    void_mass_profile,
    wormhole_radius,
)

BOX4 = {"x1": (0.5, 1.5, 13), "x2": (-0.5, 0.5, 13), "y3": (0.2, 1.2, 13), "y4": (0.0, 1.0, 9)}


def box(**extra):
    bounds = dict(BOX4)
    bounds.update(extra)
    return Grid.from_bounds(bounds)


def random_metric(seed, dims=8):
    """Adapted quasi-stationary s-metric with smooth coefficients."""
    rng = np.random.default_rng(seed)
    bounds = dict(BOX4)
    if dims == 8:
        bounds.update(v5=(0.1, 0.9, 9), v6=(0, 1, 9), v7=(0.3, 1.1, 9), v8=(0, 1, 9))
    g = Grid.from_bounds(bounds)

    def fld(axes, base):
        c = rng.uniform(-0.3, 0.3, len(axes))
        return eval_on_grid(lambda **u: base + sum(ci * np.sin(u[a] + ci) for ci, a in zip(c, axes)), g, axes)

    h = {3: fld(["x1", "x2", "y3"], 2.0), 4: fld(["x1", "y3"], -1.5)}
    N = {3: (fld(["x1", "y3"], 0.1), fld(["x2", "y3"], -0.2)), 4: (fld(["x1", "y3"], 0.3), fld(["y3"], 0.0))}
    if dims == 8:
        b3 = ["x1", "x2", "y3", "v5"]
        h.update({5: fld(b3, 1.7), 6: fld(["x1", "v5"], 1.2), 7: fld(["x1", "v5", "v7"], 1.4),
                  8: fld(["v7"], -2.0)})
        N[5] = tuple(fld([a, "v5"], 0.05 * k) for k, a in enumerate(["x1", "x2", "y3", "y3"]))
        N[6] = tuple(fld(["x1", "v5"], 0.1) for _ in range(4))
        N[7] = tuple(fld([a, "v7"], 0.0) for a in ["x1", "x2", "y3", "y3", "v5", "v5"])
        N[8] = tuple(fld(["v7"], -0.1) for _ in range(6))
    return SMetric(g, fld(["x1", "x2"], 1.0), fld(["x2"], 1.3), h, N)


class TestAssembly:
    def test_flat_diagonal(self):
        m = flat_metric(box(v5=(0, 1, 9)), 8)
        G = assemble_offdiagonal(m, {})
        np.testing.assert_array_equal(G, np.diag([1, 1, 1, -1, 1, 1, 1, -1.0]))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_frame_product_oracle(self, seed):
        m = random_metric(seed)
        pt = {"x1": 1.0, "x2": 0.25, "y3": 0.7, "y4": 0.5, "v5": 0.4, "v6": 0.5, "v7": 0.8, "v8": 0.5}
        E = frame_matrix(m, pt)
        D = np.diag([m.coefficient(i).at(pt) for i in range(1, 9)])
        np.testing.assert_allclose(assemble_offdiagonal(m, pt), E.T @ D @ E, atol=1e-12)

    def test_truncation_to_4d(self):
        m = random_metric(3)
        pt = {"x1": 1.0, "x2": 0.0, "y3": 0.5, "v5": 0.5, "v7": 0.7}
        G8 = assemble_offdiagonal(m, pt)
        G4 = assemble_offdiagonal(m, pt, dims=4)
        assert G4.shape == (4, 4)
        # the lowest 4x4 block of the 8-d matrix also receives higher-shell N terms
        assert not np.allclose(G8[:4, :4], G4)

    def test_field_matches_pointwise(self):
        m = random_metric(4, dims=4)
        deps, G = assemble_field(m)
        assert deps == ("x1", "x2", "y3")
        i, j, k = 3, 7, 5
        pt = {d: m.grid.axis(d).nodes[q] for d, q in zip(deps, (i, j, k))}
        np.testing.assert_allclose(G[i, j, k], assemble_offdiagonal(m, pt), atol=1e-14)


class TestAnholonomy:
    def test_example(self):
        g = box()
        c = 0.7
        w1 = ScalarField.coordinate(g, "y3")
        w2 = ScalarField.constant(g, c)
        one = ScalarField.constant(g, 1.0)
        m = SMetric(g, one, one, {3: one, 4: -one}, {3: (w1, w2)})
        om = anholonomy(m, 2)
        np.testing.assert_allclose(om[(3, "x1", "x2")].samples, c, atol=1e-12)
        assert om[(4, "x1", "x2")].norm_inf() == 0.0

    def test_sympy_oracle(self):
        x1, x2, y3 = sp.symbols("x1 x2 y3")
        w = [x1 * y3**2 + x2, sp.sin(x1) * y3]
        n = [x2**2 * y3, x1 * x2 + y3**3]
        exact = {}
        for a, Na in ((3, w), (4, n)):
            expr = (sp.diff(Na[0], x2) - sp.diff(Na[1], x1) - w[0] * sp.diff(Na[1], y3) + w[1] * sp.diff(Na[0], y3))
            exact[a] = sp.lambdify((x1, x2, y3), expr, "numpy")
        g = Grid.from_bounds({"x1": (0, 1, 41), "x2": (0, 1, 41), "y3": (0.5, 1.5, 41)})
        mk = lambda e: eval_on_grid(sp.lambdify((x1, x2, y3), e, "numpy"), g, ["x1", "x2", "y3"])  # noqa: E731
        one = ScalarField.constant(g, 1.0)
        m = SMetric(g, one, one, {3: one, 4: -one}, {3: tuple(map(mk, w)), 4: tuple(map(mk, n))})
        om = anholonomy(m, 2)
        X = np.meshgrid(*(g.axis(a).nodes for a in ("x1", "x2", "y3")), indexing="ij")
        for a in (3, 4):
            err = np.abs(om[(a, "x1", "x2")].broadcast_to(("x1", "x2", "y3")) - exact[a](*X))
            assert err[2:-2, 2:-2, 2:-2].max() < 1e-6
            assert err.max() < 1e-2  # one-sided boundary rows

    def test_cosmological_uses_y4(self):
        g = box()
        one = ScalarField.constant(g, 1.0)
        w1 = ScalarField.coordinate(g, "y4")
        m = SMetric(g, one, one, {3: one, 4: -one}, {4: (w1, ScalarField.constant(g, 2.0))},
                    ShellConfig("cosmological"))
        # here w = N^4 and the fiber is y4: Omega^4_12 = w2 dF w1 = 2
        np.testing.assert_allclose(anholonomy(m, 2)[(4, "x1", "x2")].samples, 2.0, atol=1e-12)

    def test_bad_shell(self):
        with pytest.raises(DomainError):
            anholonomy(flat_metric(box(), 4), 5)


class TestValidation:
    def test_killing_violation(self):
        g = box()
        one = ScalarField.constant(g, 1.0)
        with pytest.raises(DomainError, match="Killing"):
            SMetric(g, one, one, {3: ScalarField.coordinate(g, "y4") + 2.0, 4: -one}, {})

    def test_degenerate_coefficient(self):
        g = box()
        one = ScalarField.constant(g, 1.0)
        with pytest.raises(DegeneracyError, match="h3"):
            SMetric(g, one, one, {3: ScalarField.coordinate(g, "x2"), 4: -one}, {})

    def test_missing_partner(self):
        g = box()
        one = ScalarField.constant(g, 1.0)
        with pytest.raises(DomainError):
            SMetric(g, one, one, {3: one}, {})

    def test_dual_relabel_involution(self):
        m = random_metric(5)
        d = dual_relabel(m)
        assert d.config.kind == "cosmological"
        assert d.h[4].deps == ("x1", "x2", "y4")
        back = dual_relabel(d)
        for name in m.coefficient_names():
            assert back.get(name).allclose(m.get(name), atol=0)


class TestPrimeMetrics:
    def test_schwarzschild_reduction(self):
        g = Grid.from_bounds({"x1": (3, 6, 13), "x2": (0, 1, 9), "y3": (0.3, 2.8, 11), "y4": (0, 1, 9)})
        m = prime_metric(PrimeMetricSpec("new_kds", {"M": 1.0, "a": 0.0, "Lambda0": 0.0}), g)
        r = g.axis("x1").nodes[:, None]
        th = g.axis("y3").nodes[None, :]
        np.testing.assert_allclose(m.g1.broadcast_to(("x1", "y3")), np.broadcast_to(1 / (1 - 2 / r), (13, 11)))
        np.testing.assert_allclose(m.g2.broadcast_to(("x1", "y3")), r**2 * np.sin(th) ** 2, rtol=1e-13)
        np.testing.assert_allclose(m.h[3].broadcast_to(("x1", "y3")), np.broadcast_to(r**2, (13, 11)))
        np.testing.assert_allclose(m.h[4].broadcast_to(("x1", "y3")), np.broadcast_to(-(1 - 2 / r), (13, 11)))
        assert m.N[4][1].norm_inf() == 0.0

    def test_kds_boyer_lindquist(self):
        M, a, lam = 1.0, 0.6, 0.01
        g = Grid.from_bounds({"x1": (3, 6, 13), "x2": (0, 1, 9), "y3": (0.3, 2.8, 11), "y4": (0, 1, 9)})
        m = prime_metric(PrimeMetricSpec("new_kds", {"M": M, "a": a, "Lambda0": lam}), g)
        assert not m.adapted
        r, th = 4.5, 1.05
        pt = {"x1": r, "y3": th}
        r = m.grid.axis("x1").nodes[m.g1.node_index({"x1": r, "y3": th})[0]]
        th = m.grid.axis("y3").nodes[m.g1.node_index({"x1": r, "y3": th})[1]]
        G = assemble_offdiagonal(m, pt)
        rho2 = r**2 + a * a * math.cos(th) ** 2
        delta = r**2 - 2 * M * r + a * a - lam * r**4 / 3
        sigma = (r**2 + a * a) ** 2 - delta * a * a * math.sin(th) ** 2
        assert G[1, 1] == pytest.approx(sigma * math.sin(th) ** 2 / rho2, rel=1e-12)
        assert G[1, 3] == pytest.approx(-a * math.sin(th) ** 2 * (2 * M * r + lam * r**4 / 3) / rho2, rel=1e-12)
        assert G[3, 3] == pytest.approx((a * a * math.sin(th) ** 2 - delta) / rho2, rel=1e-12)

    def test_kds_mass_window(self):
        g = Grid.from_bounds({"x1": (3, 6, 13), "x2": (0, 1, 9), "y3": (0.3, 2.8, 11)})
        with pytest.raises(DomainError, match="bounds"):
            prime_metric(PrimeMetricSpec("new_kds", {"M": 5.0, "a": 0.0, "Lambda0": 0.01}), g)

    def test_mass_bounds_static(self):
        lam = 0.04
        lo, hi = kds_mass_bounds(0.0, lam)
        assert lo == 0.0
        assert hi == pytest.approx(1 / (3 * math.sqrt(lam)), rel=1e-14)

    def test_mass_bounds_degenerate(self):
        lam = 0.25
        lo, hi = kds_mass_bounds(1.0, lam)
        assert lo == pytest.approx(hi, rel=1e-14)
        with pytest.raises(DomainError):
            kds_mass_bounds(1.01, lam)

    def test_scalar_curvature_equator(self):
        assert kds_scalar_curvature(2.0, math.pi / 2, 0.3, 0.7) == pytest.approx(4 * 0.3, rel=1e-15)
        with pytest.raises(DomainError):
            kds_scalar_curvature(0.0, 1.0, 0.3, 0.7)

    def test_wormhole_throat(self):
        assert wormhole_radius(0.0, 1.7, 3) == pytest.approx(1.7)
        g = Grid.from_bounds({"x1": (-2, 2, 17), "x2": (0.4, 2.7, 9), "y3": (0, 6, 9), "y4": (0, 1, 9)})
        m = prime_metric(PrimeMetricSpec("eb_wormhole", {"b0": 1.7, "k": 2}), g)
        assert m.adapted
        assert m.g2.at({"x1": 0.0}) == pytest.approx(1.7**2)
        assert m.h[3].deps == ("x1", "x2")

    def test_wormhole_mirror_fibers(self):
        g = Grid.from_bounds({"x1": (-1, 1, 9), "x2": (0.4, 2.7, 9), "v5": (-1, 1, 9), "v6": (0.5, 2.5, 9)})
        m = prime_metric(PrimeMetricSpec("eb_wormhole", {"b0": 1.0, "fibers": "mirror", "v_b0": 2.0}), g)
        assert m.h[6].at({"v5": 0.0}) == pytest.approx(4.0)
        assert m.h[7].deps == ("v5", "v6")

    def test_torus_vacuum(self):
        r = np.linspace(0.5, 3, 7)
        np.testing.assert_allclose(torus_f(r, 2.0, -3.0), -2.0 / r + r**2, rtol=1e-15)

    def test_torus_requires_positive_f(self):
        g = Grid.from_bounds({"x1": (0.2, 1.5, 9), "x2": (0, 1, 9)})
        with pytest.raises(DomainError, match="f"):
            prime_metric(PrimeMetricSpec("black_torus", {"mu": 1.0, "Lambda": -3.0}), g)

    def test_torus_metric(self):
        g = Grid.from_bounds({"x1": (2, 4, 9), "x2": (0, 1, 9), "y3": (0, 1, 9), "y4": (0, 1, 9)})
        m = prime_metric(PrimeMetricSpec("black_torus", {"mu": 1.0, "Lambda": -3.0, "k2": 2.0}), g)
        f = torus_f(3.0, 1.0, -3.0)
        assert m.g1.at({"x1": 3.0}) * f == pytest.approx(1.0)
        assert m.h[4].at({"x1": 3.0}) == pytest.approx(-f)
        assert m.h[3].at({"x1": 3.0}) == pytest.approx(36.0)

    def test_flrw_isotropic(self):
        g = Grid.from_bounds({"x1": (0.2, 2, 9), "x2": (0.3, 2.8, 9), "y3": (0, 6, 9), "y4": (0.5, 1.5, 9)})
        law = {"kind": "power", "a0": 1.0, "p": 0.5, "t0": 1.0}
        m = prime_metric(PrimeMetricSpec("flrw", {"varsigma": 1.0, "a_law": law}), g)
        assert m.config.kind == "cosmological"
        assert not m.adapted
        pt = {"x1": 1.1, "x2": 1.55, "y4": 1.0}
        g1 = 1.0 / (1 + 1.1**2 / 4) ** 2
        assert m.g1.at(pt) == pytest.approx(g1, rel=1e-12)
        assert m.g2.at(pt) == pytest.approx(g1 * 1.1**2, rel=1e-12)
        assert m.h[3].at(pt) == pytest.approx(g1 * 1.1**2 * math.sin(1.55) ** 2, rel=1e-12)
        assert m.h[4].at(pt) == -1.0

    def test_void_static_is_adapted(self):
        g = Grid.from_bounds({"x1": (0.2, 2, 9), "x2": (0.3, 2.8, 9), "y3": (0, 6, 9), "y4": (0.5, 1.5, 9)})
        p = {"r_diamond": 0.1, "xi": 0.1, "r_v": 1.0, "r_w": 0.3, "rho0": 0.05, "shape": "oblate"}
        m = prime_metric(PrimeMetricSpec("spheroid_void", p), g)
        assert m.adapted
        assert set(m.g1.deps) <= {"x1", "x2"}

    def test_void_mass_compensated(self):
        r = np.array([0.5, 1.0, 1.2, 1.3, 2.0])
        M = void_mass_profile(r, 1.0, 0.3, 0.1, 1.0)
        assert M[0] < 0
        assert M[3] == 0.0 and M[4] == 0.0
        # continuous at the wall's outer edge
        assert void_mass_profile(1.3 - 1e-9, 1.0, 0.3, 0.1, 1.0) == pytest.approx(0.0, abs=1e-7)

    def test_poles_rejected(self):
        g = Grid.from_bounds({"x1": (-1, 1, 9), "x2": (0.0, 3.0, 9)})
        with pytest.raises(DomainError, match="pole"):
            prime_metric(PrimeMetricSpec("eb_wormhole", {"b0": 1.0}), g)

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            PrimeMetricSpec("schwarzschild_tangherlini")

    @pytest.mark.parametrize("fam,deps", [
        ("new_kds", {"x1", "y3"}),
        ("eb_wormhole", {"x1", "x2"}),
        ("black_torus", {"x1"}),
    ])
    def test_dependency_sets(self, fam, deps):
        g = Grid.from_bounds({"x1": (3, 5, 9), "x2": (0.4, 2.7, 9), "y3": (0.4, 2.7, 9), "y4": (0, 1, 9)})
        params = {"new_kds": {"M": 1.0, "a": 0.5, "Lambda0": 0.001}, "black_torus": {"mu": 1.0, "Lambda": -3.0}}
        m = prime_metric(PrimeMetricSpec(fam, params.get(fam, {})), g)
        assert m.union_deps() and set(m.union_deps()) <= deps


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_assembled_symmetric_and_frame_consistent(seed):
    m = random_metric(seed, dims=4)
    deps, G = assemble_field(m)
    np.testing.assert_array_equal(G, np.swapaxes(G, -1, -2))
    # the fiber block is the diagonal of h
    np.testing.assert_allclose(G[..., 2, 2], m.h[3].broadcast_to(deps))


@settings(max_examples=20, deadline=None)
@given(c=st.lists(st.floats(-2, 2, allow_nan=False), min_size=4, max_size=4))
def test_gradient_n_connection_is_integrable(c):
    # N^a_i = d_i phi(x) with no fiber dependence has vanishing anholonomy
    g = Grid.from_bounds({"x1": (0, 1, 21), "x2": (0, 1, 21), "y3": (0, 1, 9)})
    one = ScalarField.constant(g, 1.0)
    X1, X2 = ScalarField.coordinate(g, "x1"), ScalarField.coordinate(g, "x2")
    # phi = c0 x1^2 x2 + c1 x2^3 + c2 x1 x2 + c3 x1
    d1 = c[0] * 2 * X1 * X2 + c[2] * X2 + c[3]
    d2 = c[0] * X1 * X1 + c[1] * 3 * X2 * X2 + c[2] * X1
    w1 = ScalarField.coordinate(g, "y3") * 0.0 + 0.3
    m = SMetric(g, one, one, {3: one, 4: -one}, {3: (w1, w1), 4: (d1, d2)})
    assert anholonomy(m, 2)[(4, "x1", "x2")].norm_inf() < 1e-10 * (1 + sum(map(abs, c)))
