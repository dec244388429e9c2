"""Field files and solution directories.

Field file, binary layout (``.nhf``)::

    b"NHF1" | uint32 LE header length | UTF-8 JSON header | float64 LE samples

The header holds ``grid`` (every axis as ``[name, lo, hi, n]``), ``deps`` and
``shape``; samples are row-major over ``deps``.  The CSV layout (``.csv``)
puts ``# NHF1 <header>`` on the first line and the samples below, one row
per index of all but the last dependency axis, written with 17 significant
digits so that values round-trip exactly.

A solution directory holds a plain-text ``manifest`` (INI sections of
key/value pairs), one field file per metric coefficient, and a
``generating/`` subdirectory with the field-valued generating data.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .afcdm import GeneratingData, ShellData
from .curvature import FieldEqResidualReport, ResidualEntry
from .errors import ConfigError, DomainError
from .fields import Axis, Grid, ScalarField
from .smetric import ShellConfig, SMetric

MAGIC = b"NHF1"
FORMATS = {"bin": ".nhf", "csv": ".csv"}
MANIFEST = "manifest"
GENERATING_DIR = "generating"
FORMAT_VERSION = 1


# --------------------------------------------------------------------------
# Field files
# --------------------------------------------------------------------------


def _header(f: ScalarField) -> dict[str, Any]:
    return {"grid": [[a.name, a.lo, a.hi, a.n] for a in f.grid.axes], "deps": list(f.deps),
            "shape": list(f.shape), "dtype": "<f8"}


def _grid_from_header(h: Mapping[str, Any]) -> Grid:
    return Grid(Axis(str(n), float(lo), float(hi), int(k)) for n, lo, hi, k in h["grid"])


def field_bytes(f: ScalarField) -> bytes:
    head = json.dumps(_header(f), sort_keys=True, separators=(",", ":")).encode()
    data = np.ascontiguousarray(f.samples, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<I", len(head)) + head + data


def field_csv(f: ScalarField) -> str:
    head = json.dumps(_header(f), sort_keys=True, separators=(",", ":"))
    arr = np.asarray(f.samples, dtype=float)
    rows = arr.reshape(1, 1) if arr.ndim == 0 else arr.reshape(-1, arr.shape[-1])
    body = "\n".join(",".join(format(float(x), ".17g") for x in r) for r in rows)
    return f"# NHF1 {head}\n{body}\n"


def checksum(f: ScalarField) -> str:
    """SHA-256 of deps and float64 samples; identical for both layouts."""
    h = hashlib.sha256(",".join(f.deps).encode())
    h.update(np.ascontiguousarray(f.samples, dtype="<f8").tobytes())
    return h.hexdigest()


def write_field(path: str | Path, f: ScalarField) -> Path:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(field_csv(f))
    else:
        path.write_bytes(field_bytes(f))
    return path


def _check_grid(found: Grid, grid: Grid | None, path: Path) -> Grid:
    if grid is not None and found != grid:
        raise DomainError(f"{path}: field grid does not match the solution grid")
    return grid or found


def read_field(path: str | Path, grid: Grid | None = None) -> ScalarField:
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"field file {path} not found")
    if path.suffix == ".csv":
        lines = path.read_text().splitlines()
        if not lines or not lines[0].startswith("# NHF1 "):
            raise DomainError(f"{path}: missing NHF1 header line")
        h = json.loads(lines[0][len("# NHF1 "):])
        vals = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", dtype=float, ndmin=2)
    else:
        raw = path.read_bytes()
        if raw[:4] != MAGIC:
            raise DomainError(f"{path}: not an NHF1 field file")
        (n,) = struct.unpack("<I", raw[4:8])
        h = json.loads(raw[8:8 + n].decode())
        vals = np.frombuffer(raw[8 + n:], dtype="<f8")
    shape = tuple(h["shape"])
    if vals.size != int(np.prod(shape, dtype=int)):
        raise DomainError(f"{path}: expected {int(np.prod(shape, dtype=int))} samples, found {vals.size}")
    g = _check_grid(_grid_from_header(h), grid, path)
    return ScalarField(g, tuple(h["deps"]), np.array(vals, dtype=float).reshape(shape))


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    p.optionxform = str  # keep key case
    return p


def _fmt(x: float) -> str:
    return repr(float(x))


class _FieldSink:
    """Writes field-valued generating data and returns JSON tokens."""

    def __init__(self, root: Path, ext: str):
        self.root, self.ext = root, ext

    def token(self, value: Any, name: str) -> Any:
        if value is None:
            return None
        if isinstance(value, ScalarField):
            rel = f"{GENERATING_DIR}/{name}{self.ext}"
            write_field(self.root / rel, value)
            return {"field": rel}
        if isinstance(value, (list, tuple)):
            return [self.token(v, f"{name}_{i + 1}") for i, v in enumerate(value)]
        return float(value)


def _untoken(token: Any, root: Path, grid: Grid) -> Any:
    if token is None:
        return None
    if isinstance(token, dict):
        return read_field(root / token["field"], grid)
    if isinstance(token, list):
        return tuple(_untoken(t, root, grid) for t in token)
    return float(token)


def _generating_section(gd: GeneratingData, sink: _FieldSink) -> dict[str, str]:
    out = {"kind": gd.kind, "J1": json.dumps(sink.token(gd.J1, "J1")),
           "psi": json.dumps(sink.token(gd.psi, "psi")),
           "psi_boundary": json.dumps(sink.token(gd.psi_boundary, "psi_boundary")),
           "shells": ",".join(str(s) for s in sorted(gd.shells)),
           "meta": json.dumps(dict(gd.meta), sort_keys=True)}
    for s, sd in sorted(gd.shells.items()):
        out[f"s{s}.mode"] = sd.mode
        out[f"s{s}.Lambda"] = "none" if sd.Lambda is None else _fmt(sd.Lambda)
        for attr in ("generator", "J", "h0", "n1", "n2", "psi0_sq"):
            out[f"s{s}.{attr}"] = json.dumps(sink.token(getattr(sd, attr), f"s{s}_{attr}"))
    return out


def _read_generating(sec: Mapping[str, str], root: Path, grid: Grid) -> GeneratingData:
    def val(key: str) -> Any:
        return _untoken(json.loads(sec[key]), root, grid)

    shells = {}
    for s in (int(x) for x in sec["shells"].split(",")):
        lam = sec[f"s{s}.Lambda"]
        shells[s] = ShellData(val(f"s{s}.generator"), val(f"s{s}.J"), sec[f"s{s}.mode"],
                              None if lam == "none" else float(lam), val(f"s{s}.h0"),
                              val(f"s{s}.n1"), val(f"s{s}.n2"), val(f"s{s}.psi0_sq"))
    return GeneratingData(grid, val("J1"), shells, val("psi"), val("psi_boundary"), sec["kind"],
                          json.loads(sec["meta"]))


def _json_safe(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    return repr(x)


def write_solution(out: str | Path, m: SMetric, gd: GeneratingData | None = None,
                   report: FieldEqResidualReport | None = None, fmt: str = "bin",
                   provenance: Mapping[str, Any] | None = None, config_text: str | None = None) -> Path:
    """Write a solution directory; the layout is deterministic."""
    if fmt not in FORMATS:
        raise DomainError(f"unknown field format {fmt!r}; expected one of {sorted(FORMATS)}")
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    ext = FORMATS[fmt]
    p = _parser()
    p["solution"] = {"format_version": str(FORMAT_VERSION), "writer": f"nhflow {__version__}",
                     "layout": fmt, "dims": str(m.dim), "kind": m.config.kind,
                     "fiber_label": m.config.fiber_label, "adapted": str(m.adapted).lower(),
                     "family": str(m.meta.get("family", m.meta.get("generator", "unknown")))}
    p["grid"] = {a.name: f"{_fmt(a.lo)}, {_fmt(a.hi)}, {a.n}" for a in m.grid.axes}
    p["killing"] = {f"shell{s}": f"fiber {m.config.fiber_axis(s)}, killing {m.config.killing_axis(s)}"
                    for s in m.shells}
    files, sums = {}, {}
    for name in m.coefficient_names():
        f = m.get(name)
        write_field(root / f"{name}{ext}", f)
        files[name] = f"{name}{ext}"
        sums[name] = checksum(f)
    p["coefficients"] = files
    p["checksums"] = sums
    if gd is not None:
        (root / GENERATING_DIR).mkdir(exist_ok=True)
        p["generating"] = _generating_section(gd, _FieldSink(root, ext))
    prov = {"metric_meta": json.dumps(_json_safe(dict(m.meta)), sort_keys=True)}
    for k, v in (provenance or {}).items():
        prov[k] = v if isinstance(v, str) else json.dumps(_json_safe(v), sort_keys=True)
    p["provenance"] = prov
    if report is not None:
        p["residuals"] = {"tolerance": _fmt(report.tolerance), "interior_margin": str(report.margin),
                          "passed": str(report.passed).lower(),
                          **{f"{e.name}@{e.shell}": f"{_fmt(e.linf)}, {_fmt(e.l2)}" for e in report.entries}}
    buf = io.StringIO()
    p.write(buf)
    (root / MANIFEST).write_text(buf.getvalue())
    if config_text is not None:
        (root / "config.ini").write_text(config_text)
    return root


def read_manifest(root: str | Path) -> configparser.ConfigParser:
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise ConfigError(f"{root} is not a solution directory (no {MANIFEST})")
    p = _parser()
    try:
        p.read_string(path.read_text())
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e
    return p


def manifest_residuals(p: configparser.ConfigParser) -> list[ResidualEntry]:
    if "residuals" not in p:
        return []
    out = []
    for key, v in p["residuals"].items():
        if "@" not in key:
            continue
        name, shell = key.rsplit("@", 1)
        linf, l2 = (float(x) for x in v.split(","))
        out.append(ResidualEntry(name, int(shell), linf, l2))
    return out


def _grid_from_manifest(sec: Mapping[str, str]) -> Grid:
    axes = []
    for name, v in sec.items():
        lo, hi, n = (x.strip() for x in v.split(","))
        axes.append(Axis(name, float(lo), float(hi), int(n)))
    return Grid(axes)


def load_solution(root: str | Path) -> tuple[SMetric, GeneratingData | None, configparser.ConfigParser]:
    root = Path(root)
    p = read_manifest(root)
    grid = _grid_from_manifest(p["grid"])
    sol = p["solution"]
    dims = int(sol["dims"])
    coeffs = {name: read_field(root / rel, grid) for name, rel in p["coefficients"].items()}
    h = {int(k[1:]): v for k, v in coeffs.items() if k.startswith("h")}
    N: dict[int, list[ScalarField]] = {}
    for k, v in coeffs.items():
        if k.startswith("N"):
            a, i = (int(x) for x in k[1:].split("_"))
            N.setdefault(a, []).append((i, v))
    Nt = {a: tuple(f for _, f in sorted(lst, key=lambda t: t[0])) for a, lst in N.items()}
    meta = json.loads(p["provenance"].get("metric_meta", "{}"))
    m = SMetric(grid, coeffs["g1"], coeffs["g2"], h, Nt, ShellConfig(sol["kind"], sol["fiber_label"]),
                sol["adapted"] == "true", meta)
    if m.dim != dims:
        raise DomainError(f"manifest declares {dims} dimensions, files give {m.dim}")
    gd = _read_generating(p["generating"], root, grid) if "generating" in p else None
    return m, gd, p


def export_solution(src: str | Path, dst: str | Path, fmt: str) -> Path:
    """Rewrite a solution directory in another field layout; values are preserved exactly."""
    src, dst = Path(src), Path(dst)
    if fmt not in FORMATS:
        raise DomainError(f"unknown field format {fmt!r}; expected one of {sorted(FORMATS)}")
    p = read_manifest(src)
    old_ext = FORMATS[p["solution"]["layout"]]
    new_ext = FORMATS[fmt]
    grid = _grid_from_manifest(p["grid"])
    dst.mkdir(parents=True, exist_ok=True)

    def convert(rel: str) -> str:
        new_rel = rel[: -len(old_ext)] + new_ext
        (dst / new_rel).parent.mkdir(parents=True, exist_ok=True)
        write_field(dst / new_rel, read_field(src / rel, grid))
        return new_rel

    for name, rel in list(p["coefficients"].items()):
        p["coefficients"][name] = convert(rel)
    if "generating" in p:
        for key, v in list(p["generating"].items()):
            if '"field"' in v:
                tok = json.loads(v)

                def walk(t: Any) -> Any:
                    if isinstance(t, dict):
                        return {"field": convert(t["field"])}
                    if isinstance(t, list):
                        return [walk(x) for x in t]
                    return t

                p["generating"][key] = json.dumps(walk(tok))
    p["solution"]["layout"] = fmt
    buf = io.StringIO()
    p.write(buf)
    (dst / MANIFEST).write_text(buf.getvalue())
    if (src / "config.ini").is_file():
        (dst / "config.ini").write_text((src / "config.ini").read_text())
    return dst


def dump_connection(root: str | Path, m: SMetric, fmt: str = "bin") -> list[str]:
    """Write every nonzero canonical d-connection coefficient under ``connection/``."""
    from .connection import canonical_dconnection

    ext = FORMATS[fmt]
    d = Path(root) / "connection"
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for key, f in sorted(canonical_dconnection(m).items()):
        if f.norm_inf() == 0.0:
            continue
        safe = "".join(c if c.isalnum() or c in "_-" else "_" for c in key)
        write_field(d / f"{safe}{ext}", f)
        names.append(f"{key} -> connection/{safe}{ext}")
    (d / "index.txt").write_text("\n".join(names) + "\n")
    return names
