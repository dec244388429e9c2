import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhflow.errors import DomainError, EvaluationError
from nhflow.fields import (
    Axis,
    FunctionSpec,
    Grid,
    ScalarField,
    cumint,
    eval_on_grid,
    partial,
    quadrature,
)


def grid1(name="x1", lo=0.0, hi=1.0, n=33):
    return Grid([Axis(name, lo, hi, n)])


def observed_order(e_coarse, e_fine):
    return math.log2(e_coarse / e_fine)


class TestGrid:
    def test_axis_spacing(self):
        ax = Axis("x1", 0.0, 2.0, 9)
        assert ax.spacing == pytest.approx(0.25)

    def test_too_few_nodes(self):
        with pytest.raises(DomainError):
            Axis("x1", 0.0, 1.0, 8)

    def test_order_enforced(self):
        with pytest.raises(DomainError):
            Grid([Axis("y3", 0, 1, 9), Axis("x1", 0, 1, 9)])

    def test_unique_slots(self):
        with pytest.raises(DomainError):
            Grid([Axis("v5", 0, 1, 9), Axis("p5", 0, 1, 9)])

    def test_momentum_relabel(self):
        g = Grid([Axis("x1", 0, 1, 9), Axis("v5", 0, 1, 9)])
        assert g.relabeled("momentum").names == ("x1", "p5")


class TestEval:
    def test_constant(self):
        g = Grid([Axis("x1", 0, 1, 9), Axis("y3", 0, 1, 9)])
        f = eval_on_grid(FunctionSpec("constant", {"value": 3.0}), g, ())
        assert f.deps == ()
        assert float(f.samples) == 3.0

    def test_polynomial_samples(self):
        spec = FunctionSpec("polynomial", {"terms": [[1.0, {"x1": 2}]]})
        # n must be >= 9; the n=5 example is checked on every other node of n=9
        f = eval_on_grid(spec, grid1(n=9), ["x1"])
        np.testing.assert_allclose(f.samples[::2], [0, 1 / 16, 1 / 4, 9 / 16, 1], atol=0, rtol=0)

    def test_tanh_odd_at_origin(self):
        spec = FunctionSpec("tanh", {"axis": "v5", "amp": 2.0, "k": 2.0})
        f = eval_on_grid(spec, grid1("v5", -1, 1, 9), ["v5"])
        assert f.samples[4] == 0.0

    def test_nonfinite_names_node(self):
        spec = FunctionSpec("polynomial", {"terms": [[1.0, {"x1": -1}]]})
        with pytest.raises(EvaluationError, match="x1"):
            eval_on_grid(spec, grid1(), ["x1"])

    def test_spec_roundtrip_json(self):
        spec = FunctionSpec.from_dict({"family": "product", "factors": [
            {"family": "polynomial", "terms": [[2.0, {"x1": 1, "y3": 2}]]},
            {"family": "trigonometric", "axis": "x2", "amp": 0.5, "freq": 3.0},
        ]})
        again = FunctionSpec.from_json(spec.to_json())
        assert again == spec
        assert spec.axes() == {"x1", "x2", "y3"}


class TestPartial:
    def test_constant_zero(self):
        g = grid1()
        f = ScalarField.constant(g, 4.0)
        assert partial(f, "x1").norm_inf() == 0.0

    def test_absent_axis_zero(self):
        g = Grid([Axis("x1", 0, 1, 9), Axis("x2", 0, 1, 9)])
        f = ScalarField.coordinate(g, "x1")
        d = partial(f, "x2")
        assert d.norm_inf() == 0.0

    def test_quadratic_exact(self):
        g = grid1(n=17)
        f = ScalarField.coordinate(g, "x1") ** 2
        d = partial(f, "x1")
        np.testing.assert_allclose(d.interior(2), 2 * g.axis("x1").nodes[2:-2], atol=1e-10)

    def test_order4_rejected(self):
        with pytest.raises(DomainError):
            partial(ScalarField.coordinate(grid1(), "x1"), "x1", 4)

    @pytest.mark.parametrize("order,exact", [(1, np.cos), (2, lambda x: -np.sin(x)), (3, lambda x: -np.cos(x))])
    def test_sine_convergence(self, order, exact):
        errs_int, errs_bnd = [], []
        for n in (33, 65, 129):
            g = grid1("v5", 0.0, 2.0, n)
            x = g.axis("v5").nodes
            f = ScalarField(g, ("v5",), np.sin(x))
            err = np.abs(partial(f, "v5", order).samples - exact(x))
            half = 3 if order == 3 else 2
            errs_int.append(err[half:-half].max())
            errs_bnd.append(err.max())
        assert observed_order(errs_int[1], errs_int[2]) >= 3.5
        # shifted boundary stencils keep fourth order
        assert observed_order(errs_bnd[1], errs_bnd[2]) >= 3.5

    def test_mixed_axes_shape(self):
        g = Grid([Axis("x1", 0, 1, 17), Axis("y3", 1, 2, 17)])
        spec = FunctionSpec("polynomial", {"terms": [[1.0, {"x1": 2, "y3": 3}]]})
        f = eval_on_grid(spec, g, ["x1", "y3"])
        d = partial(f, "y3")
        x, y = np.meshgrid(g.axis("x1").nodes, g.axis("y3").nodes, indexing="ij")
        np.testing.assert_allclose(d.samples[:, 2:-2], (3 * x**2 * y**2)[:, 2:-2], atol=1e-10)


class TestCumint:
    def test_one(self):
        g = grid1("y3", 0, 1, 17)
        f = cumint(ScalarField.constant(g, 1.0), "y3")
        np.testing.assert_allclose(f.samples, g.axis("y3").nodes, atol=1e-15)

    def test_anchor_zero(self):
        g = grid1("y3", 0.5, 1.5, 17)
        f = cumint(ScalarField(g, ("y3",), np.exp(g.axis("y3").nodes)), "y3")
        assert f.samples[0] == 0.0

    def test_linear_and_order(self):
        errs = []
        for n in (17, 33, 65):
            g = grid1("y3", 0, 1, n)
            y = g.axis("y3").nodes
            f = cumint(ScalarField(g, ("y3",), 2 * y), "y3")
            np.testing.assert_allclose(f.samples, y**2, atol=1e-14)
            g2 = ScalarField(g, ("y3",), np.exp(y))
            errs.append(np.abs(cumint(g2, "y3").samples - (np.exp(y) - 1)).max())
        assert observed_order(errs[0], errs[1]) == pytest.approx(2.0, abs=0.1)
        assert observed_order(errs[1], errs[2]) == pytest.approx(2.0, abs=0.1)

    def test_gregory_order4(self):
        errs = []
        for n in (17, 33, 65):
            g = grid1("y3", 0, 1, n)
            y = g.axis("y3").nodes
            f = cumint(ScalarField(g, ("y3",), np.exp(y)), "y3", method="gregory")
            errs.append(np.abs(f.samples - (np.exp(y) - 1)).max())
        assert observed_order(errs[1], errs[2]) >= 3.5

    def test_partial_of_cumint(self):
        g = grid1("y3", 0, 1, 65)
        y = g.axis("y3").nodes
        f = ScalarField(g, ("y3",), np.cos(3 * y))
        back = partial(cumint(f, "y3"), "y3")
        assert np.abs(back.interior(2) - f.interior(2)).max() < 3 * g.axis("y3").spacing ** 2


class TestQuadrature:
    def test_unit_box(self):
        g = Grid([Axis("x1", 0, 1, 9), Axis("x2", 0, 1, 9)])
        assert quadrature(ScalarField.constant(g, 1.0)) == pytest.approx(1.0, abs=1e-15)

    def test_product_order(self):
        vals = []
        for n in (9, 17):
            g = Grid([Axis("x1", 0, 1, n), Axis("x2", 0, 1, n)])
            f = ScalarField.coordinate(g, "x1") * ScalarField.coordinate(g, "x2")
            vals.append(quadrature(f))
        assert vals[-1] == pytest.approx(0.25, abs=1e-12)
        g = Grid([Axis("x1", 0, 1, 33), Axis("x2", 0, 1, 33)])
        f = (ScalarField.coordinate(g, "x1") ** 2) * ScalarField.coordinate(g, "x2")
        assert quadrature(f) == pytest.approx(1 / 6, abs=2 * (1 / 32) ** 2)

    def test_additivity(self):
        g = Grid([Axis("x1", 0, 1, 33), Axis("y3", 0, 2, 17)])
        f = ScalarField(g, ("x1", "y3"), np.outer(np.exp(g.axis("x1").nodes), 1 + g.axis("y3").nodes ** 2))
        whole = quadrature(f)
        split = quadrature(f, {"x1": (0, 0.5)}) + quadrature(f, {"x1": (0.5, 1.0)})
        assert abs(whole - split) <= 1e-12

    def test_measure_factor(self):
        g = Grid([Axis("x1", 0, 1, 9), Axis("y3", 0, 3, 13)])
        f = ScalarField.coordinate(g, "x1")
        assert quadrature(f) == pytest.approx(1.5)

    def test_empty_region(self):
        g = grid1(n=9)
        with pytest.raises(DomainError):
            quadrature(ScalarField.constant(g, 1.0), {"x1": (0.3, 0.35)})


smooth_coefs = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None)
@given(a=smooth_coefs, b=smooth_coefs)
def test_derivative_of_sum(a, b):
    g = grid1("y3", -1, 1, 17)
    y = g.axis("y3").nodes
    f1 = ScalarField(g, ("y3",), a[0] + a[1] * np.sin(y) + a[2] * y**3)
    f2 = ScalarField(g, ("y3",), b[0] + b[1] * np.cos(2 * y) + b[2] * np.exp(y))
    lhs = partial(f1 + f2, "y3").samples
    rhs = (partial(f1, "y3") + partial(f2, "y3")).samples
    scale = 1 + np.abs(lhs).max()
    assert np.abs(lhs - rhs).max() <= 1e-13 * scale


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(0, 1e3, allow_nan=False), min_size=9, max_size=9),
       lo=st.floats(-5, 5), width=st.floats(0.1, 10))
def test_quadrature_nonnegative(vals, lo, width):
    g = grid1("x1", lo, lo + width, 9)
    assert quadrature(ScalarField(g, ("x1",), np.array(vals))) >= 0.0


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-10, 10, allow_nan=False), n=st.integers(9, 40))
def test_cumint_of_constant_is_linear(c, n):
    g = grid1("y3", -1.0, 2.0, n)
    f = cumint(ScalarField(g, ("y3",), np.full(n, c)), "y3")
    np.testing.assert_allclose(f.samples, c * (g.axis("y3").nodes + 1.0), atol=1e-12 * (1 + abs(c)))
