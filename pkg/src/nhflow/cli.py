"""Command-line front end.

Exit codes: 0 success, 1 verification or numerical failure, 2 configuration
or domain error (including usage errors).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from . import __version__
from .afcdm import verify_generated
from .config import bundled_configs, load_config
from .errors import ConfigError, ConvergenceError, NhflowError
from .fields import FAMILIES
from .io import FORMATS, dump_connection, export_solution, load_solution, manifest_residuals, write_solution
from .smetric import PRIME_FAMILIES

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fail(code: int, msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guard(stage_code: int, fn: Callable[[], Any]) -> Any:
    """Run ``fn``; config errors exit 2, other library errors exit ``stage_code``."""
    try:
        return fn()
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    except ConvergenceError as e:
        _fail(EXIT_FAIL, str(e))
    except NhflowError as e:
        _fail(stage_code, str(e))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="nhflow")
@click.option("--threads", type=click.IntRange(1), default=1, show_default=True,
              help="Worker threads for tau slices.")
@click.pass_context
def main(ctx: click.Context, threads: int) -> None:
    """Generate, verify and analyse off-diagonal s-metric solutions."""
    ctx.obj = {"threads": threads}


@main.command()
@click.option("--config", "config_path", required=True, help="Config file or bundled fixture name.")
@click.option("--out", "out", required=True, type=click.Path(file_okay=False), help="Solution directory.")
@click.option("--format", "fmt", type=click.Choice(sorted(FORMATS)), default=None,
              help="Field layout (default: from the config).")
@click.option("--dump-connection", is_flag=True, help="Also write all nonzero canonical d-connection coefficients.")
def generate(config_path: str, out: str, fmt: str | None, dump_connection: bool) -> None:
    """Generate a solution directory from a run configuration."""
    cfg = _guard(EXIT_CONFIG, lambda: load_config(config_path))
    fmt = fmt or _guard(EXIT_CONFIG, lambda: cfg.format)
    tol = _guard(EXIT_CONFIG, lambda: cfg.tolerance)
    m, gd = _guard(EXIT_FAIL, cfg.build)
    report = _guard(EXIT_FAIL, lambda: verify_generated(m, gd, tol)) if gd is not None else None
    prov = {"config": cfg.name, "config_source": Path(cfg.source).name, "integration": "gregory",
            "anchor": "fiber lower bound", "boundary": "dirichlet", "finite_differences": "4th order"}
    if "poisson" in m.meta:
        prov["poisson"] = m.meta["poisson"]
    root = write_solution(out, m, gd, report, fmt, prov, cfg.text)
    if dump_connection:
        _guard(EXIT_FAIL, lambda: dump_connection_files(root, m, fmt))
    n = len(m.coefficient_names())
    status = "no generating data" if report is None else f"max residual {report.max_linf:.3e} ({'pass' if report.passed else 'FAIL'})"
    click.echo(f"wrote {root} ({n} coefficient files, {m.dim}-d); {status}")


def dump_connection_files(root: Path, m: Any, fmt: str) -> None:
    names = dump_connection(root, m, fmt)
    click.echo(f"wrote {len(names)} connection coefficient files")


@main.command()
@click.argument("solution", type=click.Path())
@click.option("--tol", type=float, default=None, help="Residual tolerance (default: manifest value).")
@click.option("--lc", "lc", is_flag=True, help="Report Levi-Civita residuals without failing on them.")
@click.option("--require-lc", is_flag=True, help="Fail unless the Levi-Civita residuals are within tolerance.")
@click.option("--report", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def verify(solution: str, tol: float | None, lc: bool, require_lc: bool, fmt: str) -> None:
    """Recompute residuals of a solution directory; exit 1 if any exceeds the tolerance."""
    m, gd, manifest = _guard(EXIT_CONFIG, lambda: load_solution(solution))
    if tol is None:
        tol = float(manifest["residuals"]["tolerance"]) if "residuals" in manifest else 1e-6
    doc: dict[str, Any] = {"solution": str(solution), "tolerance": tol}
    ok = True
    lines = []
    if gd is not None:
        rep = _guard(EXIT_FAIL, lambda: verify_generated(m, gd, tol))
        ok = rep.passed
        doc["field_equations"] = rep.to_dict()
        recorded = {(e.name, e.shell): e for e in manifest_residuals(manifest)}
        diffs = [abs(e.linf - recorded[(e.name, e.shell)].linf) for e in rep.entries if (e.name, e.shell) in recorded]
        doc["manifest_max_diff"] = max(diffs, default=0.0)
        failing = [e.name for e in rep.entries if not (np.isfinite(e.linf) and e.linf <= tol)]
        doc["failing"] = failing
        lines.append(rep.to_text())
        lines.append(f"manifest residuals reproduced to {doc['manifest_max_diff']:.3e}")
        if failing:
            lines.append("failing: " + ", ".join(failing))
    else:
        lines.append("no generating data recorded; field equations not checked")
        doc["field_equations"] = None
    from .io import checksum

    bad_sums = [n for n, s in manifest["checksums"].items() if checksum(m.get(n)) != s] if "checksums" in manifest else []
    doc["checksum_mismatch"] = bad_sums
    if bad_sums:
        lines.append("checksum mismatch (files changed since generation): " + ", ".join(bad_sums))
    if lc or require_lc:
        if not m.adapted:
            lines.append("LC: metric is not in the adapted pattern; not evaluated")
            doc["lc"] = None
            lc_ok = False
        else:
            from .connection import lc_residuals

            res = _guard(EXIT_FAIL, lambda: lc_residuals(m))
            worst = res.max_norm()
            lc_ok = worst <= tol
            doc["lc"] = {"max": worst, "passed": lc_ok,
                         "residuals": {"/".join(str(x) for x in k): v for k, v in sorted(res.norms.items(), key=str)}}
            lines.append(f"LC residual max {worst:.3e} ({'ok' if lc_ok else 'nonzero'})")
        if require_lc and not lc_ok:
            ok = False
    doc["passed"] = ok
    click.echo(json.dumps(doc, indent=2, sort_keys=True) if fmt == "json" else "\n".join(lines))
    sys.exit(EXIT_OK if ok else EXIT_FAIL)


def _tau_range(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise click.BadParameter(f"expected a:b:n, got {text!r}") from None
    if n < 1 or a <= 0 or b < a or (n > 1 and b == a):
        raise click.BadParameter("need 0 < a <= b and n >= 1 (a < b when n > 1)")
    return np.linspace(a, b, n)


@main.command()
@click.argument("solution", type=click.Path())
@click.option("--tau", "tau", required=True, help="tau grid as a:b:n.")
@click.option("--lambda-h", "lambda_h", type=float, required=True, help="Horizontal running constant.")
@click.option("--lambda-v", "lambda_v", type=float, default=None, help="Vertical running constant (8-d).")
@click.option("--4d", "four_d", is_flag=True, help="Use the 4-d formulas on the base shells.")
@click.option("--source-weight", is_flag=True, help="Include sqrt|J1| in the volume measure.")
@click.option("--no-sigma", is_flag=True, help="Skip the fluctuation integral.")
@click.option("--out", "out", type=click.Path(file_okay=False), default=None,
              help="Directory for thermo.csv and thermo.json (default: the solution directory).")
@click.pass_context
def thermo(ctx: click.Context, solution: str, tau: str, lambda_h: float, lambda_v: float | None, four_d: bool,
           source_weight: bool, no_sigma: bool, out: str | None) -> None:
    """Volume functional and (lnZ, E, S, sigma) over a tau grid."""
    from .thermo import ThermoConfig, thermo_report

    taus = _tau_range(tau)
    if lambda_v is None and not four_d:
        raise click.UsageError("--lambda-v is required unless --4d is given")
    m, gd, _ = _guard(EXIT_CONFIG, lambda: load_solution(solution))
    if source_weight and gd is None:
        _fail(EXIT_CONFIG, "--source-weight needs generating data (J1) in the solution directory")
    cfg = _guard(EXIT_CONFIG, lambda: ThermoConfig(taus, lambda_h, 0.0 if lambda_v is None else lambda_v, four_d,
                                                   source=gd.J1 if source_weight else None,
                                                   with_sigma=not no_sigma))
    rep = _guard(EXIT_FAIL, lambda: thermo_report(m, cfg, ctx.obj["threads"]))
    dest = Path(out or solution)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "thermo.csv").write_text(rep.to_csv())
    (dest / "thermo.json").write_text(rep.to_json())
    click.echo(rep.to_csv(), nl=False)


@main.group()
def catalog() -> None:
    """Browse function families, prime metrics and bundled configs."""


@catalog.command("list")
@click.option("--json", "as_json", is_flag=True)
def catalog_list(as_json: bool) -> None:
    doc = {"function_families": list(FAMILIES), "prime_families": dict(PRIME_FAMILIES),
           "configs": sorted(bundled_configs())}
    if as_json:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
        return
    click.echo("function families:")
    for f in FAMILIES:
        click.echo(f"  {f}")
    click.echo("prime metric families:")
    for k, v in PRIME_FAMILIES.items():
        click.echo(f"  {k:<14} {v}")
    click.echo("bundled configs:")
    for k in sorted(bundled_configs()):
        click.echo(f"  {k}")


@main.command()
@click.argument("solution", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(sorted(FORMATS)), required=True)
@click.option("--out", "out", type=click.Path(file_okay=False), default=None,
              help="Destination directory (default: <solution>_<format>).")
def export(solution: str, fmt: str, out: str | None) -> None:
    """Rewrite a solution directory in another field layout."""
    if not Path(solution).is_dir():
        _fail(EXIT_CONFIG, f"solution directory {solution} does not exist")
    dst = Path(out) if out else Path(f"{str(solution).rstrip('/')}_{fmt}")
    _guard(EXIT_CONFIG, lambda: export_solution(solution, dst, fmt))
    click.echo(f"wrote {dst}")


if __name__ == "__main__":  # pragma: no cover
    main()
