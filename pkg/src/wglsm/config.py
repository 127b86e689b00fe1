"""Scenario configuration files.

Scenarios are INI files with the sections ``[waveguide]``, ``[geometry]``,
``[scatterer]``, ``[array]``, ``[survey]``, ``[imaging]`` and ``[solver]``.
A run manifest (JSON) written by the CLI carries the same content under its
``config`` key and can be loaded in place of the INI file.

Lengths are in units of the waveguide width unless stated otherwise.
"""

import configparser
import dataclasses
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional

import numpy as np

from .errors import ConfigError, WaveguideError
from .geometry import (Penetrable, ScenarioGeometry, SoundHard, SoundSoft, bump_polyline,
                       disk_polygon)
from .lsm import DEFAULT_EPS, DEFAULT_THRESHOLD, SamplingGrid
from .modes import WaveguideSpec, build_mode_basis, default_n_total
from .survey import ArraySpec, default_sensor_spacing

_SECTIONS = ("waveguide", "geometry", "scatterer", "array", "survey", "imaging", "solver")


@dataclass
class ScenarioConfig:
    """All inputs of a simulate/image run.

    ``mode_count`` and ``wavenumber`` are mutually exclusive; ``mode_count``
    sets ``k = (m - 0.5) pi / width``. Optional fields left as ``None``
    take derived defaults: ``x_L = x_A - width``, the sensor spacing of
    :func:`default_sensor_spacing` and the evanescent tail rule for
    ``n_total``.
    """

    name: str = "scenario"
    width: float = 1.0
    mode_count: Optional[int] = None
    wavenumber: Optional[float] = None
    x_star: float = -2.0
    bumps: List[list] = field(default_factory=list)
    polylines: List[list] = field(default_factory=list)
    scatterer: Optional[dict] = None
    x_A: float = -5.0
    fraction: float = 1.0
    spacing: Optional[float] = None
    noise: float = 0.02
    seed: int = 0
    sampling: str = "modal"
    x_I: float = -4.0
    x_end: float = 0.0
    grid_per_wavelength: float = 10.0
    eps: float = DEFAULT_EPS
    threshold: float = DEFAULT_THRESHOLD
    pipeline: str = "auto"
    h_per_wavelength: float = 20.0
    x_L: Optional[float] = None
    n_total: Optional[int] = None
    mass_blend: float = 0.5

    def __post_init__(self):
        if (self.mode_count is None) == (self.wavenumber is None):
            raise ConfigError("[waveguide] set exactly one of mode_count and wavenumber")
        if self.sampling not in ("modal", "direct"):
            raise ConfigError(f"[survey] sampling must be modal or direct, got {self.sampling!r}")
        if self.pipeline not in ("auto", "full", "partial"):
            raise ConfigError(f"[imaging] pipeline must be auto, full or partial, got "
                              f"{self.pipeline!r}")
        for name in ("h_per_wavelength", "grid_per_wavelength", "width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    # -- derived objects -------------------------------------------------
    def spec(self):
        if self.mode_count is not None:
            return WaveguideSpec.from_mode_count(int(self.mode_count), self.width)
        return WaveguideSpec(self.width, float(self.wavenumber))

    @property
    def truncation(self):
        return self.x_A - self.width if self.x_L is None else self.x_L

    def basis(self):
        spec = self.spec()
        geo_min = self.geometry().support_min_range() if self.has_geometry else self.x_star
        n = self.n_total or default_n_total(spec, min(geo_min, self.x_I) - self.x_A)
        return build_mode_basis(spec, n)

    @property
    def has_geometry(self):
        return bool(self.bumps or self.polylines or self.scatterer)

    def geometry(self):
        spec = self.spec()
        chains = [bump_polyline(c, L, d, wall, self.width) for c, L, d, wall in self.bumps]
        chains += [np.asarray(p, dtype=float) for p in self.polylines]
        h = spec.wavelength / self.h_per_wavelength
        return ScenarioGeometry(spec, tuple(chains), _make_scatterer(self.scatterer, h),
                                self.x_star, self.truncation)

    def array(self, basis):
        sp = self.spacing if self.spacing is not None else default_sensor_spacing(basis)
        return ArraySpec(self.x_A, self.fraction * self.width, sp, self.width)

    def full_array(self, basis):
        return dataclasses.replace(self.array(basis), aperture=self.width)

    def h_target(self):
        return self.spec().wavelength / self.h_per_wavelength

    def grid(self):
        h = self.spec().wavelength / self.grid_per_wavelength
        return SamplingGrid.from_resolution(self.x_I, self.x_end, self.width, h)

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _make_scatterer(spec, h):
    if not spec:
        return None
    kind = spec.get("kind")
    if "boundary" in spec:
        boundary = np.asarray(spec["boundary"], dtype=float)
    else:
        boundary = disk_polygon(spec["center"], spec["radius"], h=h)
    if kind == "soft":
        return SoundSoft(boundary)
    if kind == "hard":
        return SoundHard(boundary)
    if kind == "penetrable":
        return Penetrable(boundary, complex(spec.get("n2", 2.0)))
    raise ConfigError(f"[scatterer] unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# INI parsing
# ---------------------------------------------------------------------------
def _line_of(text, section, key):
    sec = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            sec = m.group(1).strip()
        elif sec == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _points(text):
    """``x,y x,y ...`` into a list of pairs."""
    out = []
    for tok in text.replace(";", " ").split():
        x, y = tok.split(",")
        out.append([float(x), float(y)])
    return out


_FLOAT, _INT, _STR = float, int, str
_SCHEMA = {
    "waveguide": {"width": _FLOAT, "mode_count": _INT, "wavenumber": _FLOAT},
    "geometry": {"x_star": _FLOAT},
    "array": {"x_A": _FLOAT, "fraction": _FLOAT, "spacing": _FLOAT},
    "survey": {"noise": _FLOAT, "seed": _INT, "sampling": _STR},
    "imaging": {"x_I": _FLOAT, "x_end": _FLOAT, "grid_per_wavelength": _FLOAT, "eps": _FLOAT,
                "threshold": _FLOAT, "pipeline": _STR},
    "solver": {"h_per_wavelength": _FLOAT, "x_L": _FLOAT, "n_total": _INT,
               "mass_blend": _FLOAT},
}


def parse_ini(text, source="<string>"):
    """Parse scenario INI text into a :class:`ScenarioConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    kw = {}

    def where(sec, key):
        ln = _line_of(text, sec, key)
        return f"{source}:{ln}" if ln else f"{source} [{sec}] {key}"

    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
    for sec, keys in _SCHEMA.items():
        if not cp.has_section(sec):
            continue
        for key, val in cp.items(sec):
            if sec == "geometry" and (key.startswith("bump") or key.startswith("polyline")):
                continue
            if key not in keys:
                raise ConfigError(f"{where(sec, key)}: unknown key {key!r}")
            try:
                kw[key] = keys[key](val)
            except ValueError:
                raise ConfigError(f"{where(sec, key)}: cannot read {val!r} as "
                                  f"{keys[key].__name__}") from None
    if cp.has_section("geometry"):
        bumps, polys = [], []
        for key, val in cp.items("geometry"):
            try:
                if key.startswith("bump"):
                    tok = val.split()
                    wall = tok[3] if len(tok) > 3 else "bottom"
                    bumps.append([float(tok[0]), float(tok[1]), float(tok[2]), wall])
                elif key.startswith("polyline"):
                    polys.append(_points(val))
            except (ValueError, IndexError):
                raise ConfigError(f"{where('geometry', key)}: malformed {key}") from None
        kw["bumps"], kw["polylines"] = bumps, polys
    if cp.has_section("scatterer"):
        s = dict(cp.items("scatterer"))
        kind = s.get("kind", "none")
        if kind != "none":
            sc = {"kind": kind}
            try:
                if "boundary" in s:
                    sc["boundary"] = _points(s["boundary"])
                else:
                    sc["center"] = [float(v) for v in s["center"].split()]
                    sc["radius"] = float(s["radius"])
                if "n2" in s:
                    sc["n2"] = str(complex(s["n2"].replace(" ", "")))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{source} [scatterer]: {exc}") from None
            kw["scatterer"] = sc
    kw.setdefault("name", source.rsplit("/", 1)[-1].rsplit(".", 1)[0])
    cfg = ScenarioConfig(**kw)
    validate_config(cfg, source)
    return cfg


def validate_config(cfg, source="<config>"):
    """Build every derived object once so that errors surface at load time."""
    try:
        cfg.basis()
        geo = cfg.geometry()
        if not cfg.x_A < geo.x_star:
            raise ConfigError(f"x_A = {cfg.x_A} must be below x_star = {geo.x_star}")
        if not geo.x_L < cfg.x_A:
            raise ConfigError(f"x_L = {geo.x_L} must be below x_A = {cfg.x_A}")
        if not 0 < cfg.fraction <= 1:
            raise ConfigError(f"fraction must lie in (0, 1], got {cfg.fraction}")
        if not cfg.noise >= 0:
            raise ConfigError("noise level must be non-negative")
        if not 0 < cfg.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        cfg.grid()
    except WaveguideError as exc:
        raise type(exc)(f"{source}: {exc}") from None
    return cfg


def load_config(path):
    """Load an INI scenario or a run manifest (``.json``)."""
    path = str(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if path.endswith(".json"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        cfg = ScenarioConfig.from_dict(data.get("config", data))
        return validate_config(cfg, path)
    return parse_ini(text, path)


def shipped_scenarios():
    """Names of the scenario files bundled with the package."""
    root = resources.files("wglsm") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def scenario_path(name):
    p = resources.files("wglsm") / "scenarios" / f"{name}.ini"
    if not p.is_file():
        raise ConfigError(f"no shipped scenario named {name!r}")
    return str(p)


def load_scenario(name):
    return load_config(scenario_path(name))


def with_overrides(cfg, **kw):
    """Copy of ``cfg`` with the non-None keyword overrides applied."""
    kw = {k: v for k, v in kw.items() if v is not None}
    if "mode_count" in kw:
        kw["wavenumber"] = None
    new = dataclasses.replace(cfg, **kw)
    return validate_config(new)


__all__ = ["ScenarioConfig", "load_config", "parse_ini", "load_scenario", "scenario_path",
           "shipped_scenarios", "with_overrides", "validate_config"]
