"""Run configuration: a flat JSON object, overridable key by key from the command line."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

from .geometry import GeometryError, MeshSpec, build_domain
from .kernel import Params, ParameterError

MODES = ("solve", "sweep", "audit-phi", "audit-green", "audit-integrability")

DOMAIN_KEYS = ("bounds", "center", "radius", "lower", "upper")

# keys every mode needs on top of "mode" and "domain"
REQUIRED = {
    "solve": ("s", "p", "eps"),
    "sweep": ("s", "p", "eps_list"),
    "audit-phi": ("s", "p", "eps_list"),
    "audit-green": ("s", "h"),
    "audit-integrability": ("s", "p", "eps"),
}


class ConfigError(ValueError):
    """Unreadable or inconsistent configuration; the message names the field."""


@dataclass
class RunConfig:
    mode: str
    domain: dict
    s: float
    p: float = 2.0
    eps: float | None = None
    eps_list: list | None = None
    n: int | None = None
    C: float | None = None
    h: float | None = None
    h_per_eps: float = 8.0
    R_ext: float | None = None
    h_ext: float | None = None
    growth: float = 0.25
    grading: float = 0.0
    init: str = "tent"
    center: list | None = None
    amplitude: float = 1.0
    tol: float = 1e-8
    max_iter: int = 5000
    sigma: float = 1.0
    representation: str = "reduced"
    symmetric: bool | None = None
    n_pairs: int = 20
    collar_width: float | None = None
    n_random: int = 20
    synthetic: bool = False
    workers: int = 1
    seed: int = 0
    output_dir: str = "results"
    plots: bool = True

    @property
    def dim(self) -> int:
        return build_domain(self.domain).dim

    def params(self, eps: float | None = None) -> Params:
        e = self.eps if eps is None else eps
        if e is None:
            e = 1.0
        return Params(self.dim, float(self.s), float(self.p), float(e), self.C)

    def mesh_spec(self) -> MeshSpec:
        return MeshSpec(dict(self.domain), h=self.h, h_per_eps=self.h_per_eps, R_ext=self.R_ext,
                        h_ext=self.h_ext, growth=self.growth, grading=self.grading,
                        focus=tuple(self.center) if self.center is not None else None)

    def eps_values(self) -> list[float]:
        if self.eps_list is not None:
            return [float(e) for e in self.eps_list]
        return [float(self.eps)] if self.eps is not None else []

    def echo(self) -> dict:
        return asdict(self)


def _domain_from(raw: dict) -> dict:
    dom = raw.get("domain")
    if isinstance(dom, dict):
        return dict(dom)
    if isinstance(dom, str):
        d = {"shape": dom}
        d.update({k: raw[k] for k in DOMAIN_KEYS if k in raw})
        return d
    raise ConfigError("field 'domain': missing (interval, disk or rectangle)")


def parse_value(text: str):
    """JSON literal if it parses, else the raw string (so `--set init=bump` works)."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, pairs) -> dict:
    out = dict(raw)
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v.strip())
    return out


def read_raw(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw


def from_dict(raw: dict, mode: str | None = None) -> RunConfig:
    """Build a RunConfig; ``mode`` (from the subcommand) wins over the file."""
    raw = dict(raw)
    if mode is not None:
        raw["mode"] = mode
    m = raw.get("mode")
    if m not in MODES:
        raise ConfigError(f"field 'mode': {m!r} is not one of {', '.join(MODES)}")
    domain = _domain_from(raw)
    try:
        build_domain(domain)
    except (GeometryError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field 'domain': {exc}") from None
    for key in REQUIRED[m]:
        if raw.get(key) is None:
            raise ConfigError(f"field {key!r}: required for mode {m}")
    known = {f.name for f in fields(RunConfig)} - {"domain"}
    kw = {k: raw[k] for k in known if k in raw}
    extra = {k: v for k, v in raw.items() if k not in known and k not in DOMAIN_KEYS and k != "domain"}
    if extra:
        raise ConfigError(f"field {sorted(extra)[0]!r}: unknown key")
    kw["domain"] = domain
    try:
        cfg = RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    _check_types(cfg)
    return cfg


def _check_types(cfg: RunConfig) -> None:
    def num(name, positive=False):
        v = getattr(cfg, name)
        if v is None:
            return
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"field {name!r}: expected a finite number, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(f"field {name!r}: must be positive, got {v!r}")

    for name in ("s", "p", "C", "amplitude", "sigma", "growth", "grading"):
        num(name)
    for name in ("eps", "h", "h_per_eps", "R_ext", "h_ext", "tol", "collar_width"):
        num(name, positive=True)
    if cfg.eps_list is not None:
        if not isinstance(cfg.eps_list, list) or not cfg.eps_list:
            raise ConfigError("field 'eps_list': expected a non-empty list of numbers")
        for e in cfg.eps_list:
            if isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0:
                raise ConfigError(f"field 'eps_list': entry {e!r} is not a positive number")
    for name in ("max_iter", "n_pairs", "n_random", "workers", "seed"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"field {name!r}: expected a nonnegative integer, got {v!r}")
    if cfg.n is not None and cfg.n != cfg.dim:
        raise ConfigError(f"field 'n': {cfg.n} does not match the {cfg.dim}-dimensional domain")
    if cfg.init not in ("tent", "bump", "constant"):
        raise ConfigError(f"field 'init': {cfg.init!r} (tent, bump or constant)")
    if cfg.representation not in ("reduced", "full"):
        raise ConfigError(f"field 'representation': {cfg.representation!r} (reduced or full)")
    if not isinstance(cfg.output_dir, str):
        raise ConfigError("field 'output_dir': expected a path string")


def load(path, mode: str | None = None, overrides=None) -> RunConfig:
    return from_dict(apply_overrides(read_raw(path), overrides), mode)


def validate(cfg: RunConfig) -> list[str]:
    """Every diagnostic for a parsed config; never raises."""
    from .analysis import check_tent

    out = []
    try:
        dom = build_domain(cfg.domain)
    except Exception as exc:  # noqa: BLE001 - diagnostics only
        return [f"domain: {exc}"]
    eps_list = cfg.eps_values() or [None]
    for e in eps_list:
        try:
            P = cfg.params(e)
        except Exception as exc:  # noqa: BLE001
            out.append(f"params: {exc}")
            continue
        out.extend(f"params (eps={P.eps:g}): {msg}" for msg in P.problems())
        if e is None:
            continue
        if cfg.mode in ("solve", "sweep", "audit-phi", "audit-integrability") and cfg.init == "tent":
            c = cfg.center if cfg.center is not None else dom.centroid
            msg = check_tent(dom, c, e)
            if msg:
                out.append(f"tent (eps={e:g}): {msg}")
        if cfg.mode == "audit-green":
            continue
        h = cfg.mesh_spec().size_for(e)
        if not h <= e / 5 * (1 + 1e-12):
            out.append(f"mesh (eps={e:g}): h={h:g} exceeds eps/5={e / 5:g}")
    return list(dict.fromkeys(out))


__all__ = ["RunConfig", "ConfigError", "MODES", "load", "from_dict", "read_raw",
           "apply_overrides", "validate", "parse_value", "ParameterError"]
