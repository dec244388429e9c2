"""Run configuration files.

Plain INI text: ``[section]`` headers and ``key = value`` lines, ``#`` or
``;`` comments.  Values are numbers, keywords, or JSON.  A JSON object is a
function spec (``{"family": ...}``) evaluated on the grid over the axes it
uses; a JSON array is a list of such values.

    [run]           name, kind (quasi_stationary | cosmological), format (bin | csv), tolerance
    [grid]          <axis> = lo, hi, n            one line per axis
    [base]          psi (value | poisson), J1, psi_boundary
    [shell2..4]     mode (psi | phi | coeff), generator, J, h0, n1, n2, Lambda, psi0_sq
    [prime]         family, params (JSON object)
    [polarization]  eta, sources, lambdas, psi0_sq, n1, n2   (JSON objects keyed by index)

Shell sections generate a solution directly.  Without shells, ``[prime]``
samples a prime metric; with ``[polarization]`` as well the prime is
eta-polarized and the induced generating data are kept for verification.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .afcdm import GeneratingData, PolarizationData, ShellData, eta_polarize, generate
from .errors import ConfigError, DomainError
from .fields import Axis, FunctionSpec, Grid, ScalarField, eval_on_grid
from .smetric import PrimeMetricSpec, SMetric, prime_metric

SHELL_KEYS = {"mode", "generator", "J", "h0", "n1", "n2", "Lambda", "psi0_sq"}
SECTIONS: dict[str, set[str] | None] = {
    "run": {"name", "kind", "format", "tolerance"},
    "grid": None,
    "base": {"psi", "J1", "psi_boundary"},
    "shell2": SHELL_KEYS,
    "shell3": SHELL_KEYS,
    "shell4": SHELL_KEYS,
    "prime": {"family", "params"},
    "polarization": {"eta", "sources", "lambdas", "psi0_sq", "n1", "n2"},
}
CONFIG_DIR = Path(__file__).parent / "configs"


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*=", s):
            return no
    return None


@dataclass(frozen=True, eq=False)
class RunConfig:
    text: str
    source: str
    raw: configparser.ConfigParser
    grid: Grid

    def _where(self, section: str, key: str | None = None) -> str:
        line = _line_of(self.text, section, key)
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    def error(self, section: str, key: str | None, msg: str) -> ConfigError:
        return ConfigError(f"{self._where(section, key)}: {msg}")

    def get(self, section: str, key: str, default: str | None = None) -> str | None:
        if section in self.raw and key in self.raw[section]:
            return self.raw[section][key].strip()
        return default

    @property
    def name(self) -> str:
        return self.get("run", "name", Path(self.source).stem) or "solution"

    @property
    def kind(self) -> str:
        return self.get("run", "kind", "quasi_stationary") or "quasi_stationary"

    @property
    def format(self) -> str:
        fmt = self.get("run", "format", "bin")
        if fmt not in ("bin", "csv"):
            raise self.error("run", "format", f"expected bin or csv, got {fmt!r}")
        return fmt

    @property
    def tolerance(self) -> float:
        return self._float("run", "tolerance", "1e-6")

    @property
    def shells(self) -> list[int]:
        return sorted(int(s[5:]) for s in self.raw.sections() if s.startswith("shell"))

    def _float(self, section: str, key: str, default: str) -> float:
        text = self.get(section, key, default)
        try:
            return float(text)
        except (TypeError, ValueError):
            raise self.error(section, key, f"expected a number, got {text!r}") from None

    def with_nodes(self, n: int, axes: list[str] | None = None) -> "RunConfig":
        """Same configuration on a grid with ``n`` nodes along ``axes`` (default: all)."""
        axes = list(self.grid.names if axes is None else axes)
        grid = Grid(Axis(a.name, a.lo, a.hi, n if a.name in axes else a.n) for a in self.grid.axes)
        return RunConfig(self.text, self.source, self.raw, grid)

    # ----------------------------------------------------------------- values

    def value(self, section: str, key: str, text: str | None = None) -> Any:
        """Number, None, field (function spec) or tuple of these."""
        text = self.get(section, key) if text is None else text
        if text is None or text.lower() == "none":
            return None
        try:
            return float(text)
        except ValueError:
            pass
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise self.error(section, key, f"cannot parse value {text!r}: {e.msg}") from None
        return self._from_json(obj, section, key)

    def _from_json(self, obj: Any, section: str, key: str) -> Any:
        if obj is None or isinstance(obj, (int, float)):
            return None if obj is None else float(obj)
        if isinstance(obj, list):
            return tuple(self._from_json(x, section, key) for x in obj)
        if isinstance(obj, dict):
            try:
                spec = FunctionSpec.from_dict(obj)
                return eval_on_grid(spec, self.grid).compress()
            except (DomainError, KeyError, TypeError) as e:
                raise self.error(section, key, f"bad function spec: {e}") from None
        raise self.error(section, key, f"unsupported value {obj!r}")

    def _indexed(self, section: str, key: str) -> dict[int, Any]:
        text = self.get(section, key)
        if text is None:
            return {}
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise self.error(section, key, f"expected a JSON object keyed by index: {e.msg}") from None
        if not isinstance(obj, dict):
            raise self.error(section, key, "expected a JSON object keyed by index")
        return {int(k): self._from_json(v, section, key) for k, v in obj.items()}

    # ------------------------------------------------------------ generation

    def _base(self) -> tuple[Any, Any, Any]:
        psi_text = self.get("base", "psi", "poisson")
        psi = None if psi_text == "poisson" else self.value("base", "psi")
        J1 = self.value("base", "J1") if self.get("base", "J1") is not None else 0.0
        bnd = self.value("base", "psi_boundary") if self.get("base", "psi_boundary") is not None else 0.0
        for name, v in (("psi", psi), ("J1", J1), ("psi_boundary", bnd)):
            if isinstance(v, tuple):
                raise self.error("base", name, "expected a single value")
        return psi, J1, bnd

    def generating_data(self) -> GeneratingData:
        shells = {}
        for s in self.shells:
            sec = f"shell{s}"
            gen = self.value(sec, "generator")
            if gen is None:
                raise self.error(sec, "generator", "missing generator")
            if not isinstance(gen, ScalarField):
                gen = ScalarField.constant(self.grid, float(gen))
            J = self.value(sec, "J")
            if J is None:
                raise self.error(sec, "J", "missing source J")
            lam = self.get(sec, "Lambda")
            try:
                shells[s] = ShellData(gen, J, self.get(sec, "mode", "psi"),
                                      None if lam is None else self._float(sec, "Lambda", "0"),
                                      self.value(sec, "h0"), self.value(sec, "n1"), self.value(sec, "n2"),
                                      1.0 if self.get(sec, "psi0_sq") is None else self.value(sec, "psi0_sq"))
            except DomainError as e:
                raise self.error(sec, None, str(e)) from None
        psi, J1, bnd = self._base()
        try:
            return GeneratingData(self.grid, J1, shells, psi, bnd, self.kind, {"config": self.name})
        except DomainError as e:
            raise self.error("base" if "psi" in str(e) or "J1" in str(e) else "run", None, str(e)) from None

    def prime_spec(self) -> PrimeMetricSpec:
        fam = self.get("prime", "family")
        if fam is None:
            raise self.error("prime", "family", "missing prime family")
        params = self.get("prime", "params", "{}")
        try:
            p = json.loads(params)
        except json.JSONDecodeError as e:
            raise self.error("prime", "params", f"expected a JSON object: {e.msg}") from None
        try:
            return PrimeMetricSpec(fam, p)
        except DomainError as e:
            raise self.error("prime", "family", str(e)) from None

    def polarization(self, prime: SMetric) -> tuple[PolarizationData, dict[int, Any], dict[int, float]]:
        sec = "polarization"
        psi, J1, _ = self._base()
        try:
            pd = PolarizationData(prime, self._indexed(sec, "eta"), psi=psi,
                                  J1=None if self.get("base", "J1") is None else J1,
                                  psi0_sq=self._indexed(sec, "psi0_sq"), n1=self._indexed(sec, "n1"),
                                  n2=self._indexed(sec, "n2"))
        except DomainError as e:
            raise self.error(sec, None, str(e)) from None
        sources = self._indexed(sec, "sources")
        lambdas = {s: float(v) for s, v in self._indexed(sec, "lambdas").items()}
        if not sources:
            raise self.error(sec, "sources", "missing shell sources")
        return pd, sources, lambdas

    def build(self) -> tuple[SMetric, GeneratingData | None]:
        """Metric and (when available) its generating data.

        Config problems raise ConfigError; failures inside the generator
        propagate as DomainError/ConvergenceError.
        """
        if self.shells:
            gd = self.generating_data()
            return generate(gd), gd
        if "prime" not in self.raw:
            raise self.error("run", None, "nothing to generate: declare shell sections or a [prime] section")
        spec = self.prime_spec()
        prime = prime_metric(spec, self.grid)
        if "polarization" not in self.raw:
            return prime, None
        pd, sources, lambdas = self.polarization(prime)
        return eta_polarize(pd, sources, lambdas)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    raw = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                    inline_comment_prefixes=None)
    raw.optionxform = str
    try:
        raw.read_string(text, source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    for sec in raw.sections():
        if sec not in SECTIONS:
            line = _line_of(text, sec)
            raise ConfigError(f"{source}:{line}: unknown section [{sec}]; known: {', '.join(SECTIONS)}")
        allowed = SECTIONS[sec]
        for key in raw[sec]:
            if allowed is not None and key not in allowed:
                line = _line_of(text, sec, key)
                raise ConfigError(f"{source}:{line}: unknown key {key!r} in [{sec}]; "
                                  f"allowed: {', '.join(sorted(allowed))}")
    if "grid" not in raw or not raw["grid"]:
        raise ConfigError(f"{source}: missing [grid] section")
    axes = []
    for name, v in raw["grid"].items():
        parts = [x.strip() for x in v.split(",")]
        line = _line_of(text, "grid", name)
        if len(parts) != 3:
            raise ConfigError(f"{source}:{line}: [grid] {name}: expected 'lo, hi, n', got {v!r}")
        try:
            axes.append(Axis(name, float(parts[0]), float(parts[1]), int(parts[2])))
        except (ValueError, DomainError) as e:
            raise ConfigError(f"{source}:{line}: [grid] {name}: {e}") from None
    try:
        grid = Grid(axes)
    except DomainError as e:
        raise ConfigError(f"{source}: [grid]: {e}") from None
    cfg = RunConfig(text, source, raw, grid)
    if cfg.kind not in ("quasi_stationary", "cosmological"):
        raise cfg.error("run", "kind", f"expected quasi_stationary or cosmological, got {cfg.kind!r}")
    cfg.format  # noqa: B018 - validates
    cfg.tolerance  # noqa: B018
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Read a config file; bare names resolve to the bundled fixtures."""
    p = Path(path)
    if not p.is_file() and (CONFIG_DIR / f"{path}.ini").is_file():
        p = CONFIG_DIR / f"{path}.ini"
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(p.read_text(), str(p))


def bundled_configs() -> dict[str, Path]:
    return {p.stem: p for p in sorted(CONFIG_DIR.glob("*.ini"))}
