import pytest

from nhflow.afcdm import verify_generated
from nhflow.config import bundled_configs, load_config, parse_config
from nhflow.errors import ConfigError
from nhflow.fields import ScalarField

GRID = """
[grid]
x1 = 0, 1, 11
x2 = 0, 1, 11
y3 = 0.5, 1.5, 11
y4 = 0, 1, 9
"""


def cfg(body, run="[run]\nname = t\n"):
    return parse_config(run + GRID + body, "t.ini")


def test_bundled_configs_present():
    assert {"qstat_poly", "qstat_trig", "qstat_tanh", "kds_polarized"} <= set(bundled_configs())


@pytest.mark.parametrize("name", ["qstat_poly", "qstat_trig", "qstat_tanh", "kds_polarized"])
def test_bundled_configs_verify(name):
    c = load_config(name)
    m, gd = c.build()
    assert verify_generated(m, gd, c.tolerance).passed


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError, match=r"t\.ini:3: unknown key 'colour'"):
        parse_config("[run]\nname = t\ncolour = red\n" + GRID, "t.ini")


def test_unknown_section():
    with pytest.raises(ConfigError, match=r"unknown section \[shell9\]"):
        cfg("[shell9]\nJ = 1\n")


@pytest.mark.parametrize("bad, match", [
    ("[run]\nformat = hdf5\n", "format"),
    ("[run]\nkind = static\n", "kind"),
    ("[run]\ntolerance = small\n", "tolerance"),
])
def test_run_validation(bad, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(bad + GRID, "t.ini")


def test_bad_grid():
    with pytest.raises(ConfigError, match="x1"):
        parse_config("[grid]\nx1 = 0, 1\n", "t.ini")
    with pytest.raises(ConfigError, match="grid"):
        parse_config("[run]\nname = t\n", "t.ini")


def test_values_and_fields():
    c = cfg('[shell2]\ngenerator = {"family": "polynomial", "terms": [[1.0, {}], [0.5, {"y3": 1}]]}\n'
            "J = -0.7\nn1 = [0.1, -0.05]\n")
    gen = c.value("shell2", "generator")
    assert isinstance(gen, ScalarField) and gen.deps == ("y3",)
    assert c.value("shell2", "J") == -0.7
    assert c.value("shell2", "n1") == (0.1, -0.05)
    assert c.value("shell2", "h0") is None


def test_bad_function_spec():
    c = cfg('[shell2]\ngenerator = {"family": "nonsense"}\nJ = 1\n')
    with pytest.raises(ConfigError, match="generator"):
        c.build()


def test_phi_mode_needs_nonzero_lambda():
    c = cfg('[base]\npsi = 0\n[shell2]\nmode = phi\nLambda = 0\nJ = -0.5\n'
            'generator = {"family": "polynomial", "terms": [[1.0, {}], [0.5, {"y3": 1}]]}\n')
    with pytest.raises(ConfigError, match="Lambda"):
        c.build()


def test_missing_source():
    c = cfg('[shell2]\ngenerator = {"family": "polynomial", "terms": [[1.0, {}], [0.5, {"y3": 1}]]}\n')
    with pytest.raises(ConfigError, match="J"):
        c.build()


def test_nothing_to_generate():
    with pytest.raises(ConfigError, match="nothing to generate"):
        cfg("").build()


def test_prime_only():
    c = parse_config('[prime]\nfamily = flat\n' + GRID, "p.ini")
    m, gd = c.build()
    assert gd is None and m.dim == 4


def test_with_nodes():
    c = load_config("qstat_poly").with_nodes(13, ["x1", "y3"])
    assert c.grid.axis("x1").n == 13 and c.grid.axis("x2").n == 21


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.ini")
