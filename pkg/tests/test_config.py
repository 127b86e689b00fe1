import json

import numpy as np
import pytest

from wglsm.config import (ScenarioConfig, load_config, load_scenario, parse_ini,
                          shipped_scenarios, with_overrides)
from wglsm.errors import ConfigError, CutoffWavenumber, GeometryError

BASE = """
[waveguide]
mode_count = 10
[geometry]
bump = -0.5 0.5 0.1 bottom
[array]
x_A = -5.0
[survey]
seed = 3
"""


def test_parse_minimal():
    cfg = parse_ini(BASE, "base.ini")
    assert cfg.name == "base"
    assert cfg.spec().j_prop == 9
    assert cfg.truncation == -6.0
    assert cfg.bumps == [[-0.5, 0.5, 0.1, "bottom"]]
    basis = cfg.basis()
    assert basis.n_prop == 10
    assert cfg.array(basis).n_sensors == 27
    g = cfg.grid()
    assert g.x_range == (-4.0, 0.0) and g.spacing[0] <= cfg.spec().wavelength / 10


def test_mode_count_and_wavenumber_exclusive():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_ini(BASE.replace("mode_count = 10", "mode_count = 10\nwavenumber = 30"))
    with pytest.raises(ConfigError, match="exactly one"):
        parse_ini(BASE.replace("mode_count = 10", ""))


def test_error_locations():
    with pytest.raises(ConfigError, match=r"cfg.ini:7"):
        parse_ini(BASE.replace("x_A = -5.0", "x_A = minus five"), "cfg.ini")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_ini(BASE + "\n[imaging]\ncolour = red\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_ini(BASE + "\n[plotting]\ncmap = jet\n")
    with pytest.raises(ConfigError, match="malformed"):
        parse_ini(BASE.replace("bump = -0.5 0.5 0.1 bottom", "bump = -0.5"))


def test_cross_field_checks():
    with pytest.raises(ConfigError):
        parse_ini(BASE.replace("x_A = -5.0", "x_A = -1.5"))
    with pytest.raises(ConfigError):
        parse_ini(BASE + "\n[solver]\nx_L = -4.0\n")
    with pytest.raises(ConfigError):
        parse_ini(BASE.replace("x_A = -5.0", "x_A = -5.0\nfraction = 0"))
    with pytest.raises(GeometryError):
        parse_ini(BASE.replace("-0.5 0.5 0.1", "-2.5 0.5 0.1"))
    with pytest.raises(CutoffWavenumber):
        parse_ini(BASE.replace("mode_count = 10", "wavenumber = 31.41592653589793"))


def test_scatterer_section():
    cfg = parse_ini(BASE + "\n[scatterer]\nkind = penetrable\ncenter = -1.5 0.6\n"
                    "radius = 0.1\nn2 = 2+0.1j\n")
    geo = cfg.geometry()
    assert geo.scatterer.kind == "penetrable" and geo.scatterer.n2 == 2 + 0.1j
    cfg = parse_ini(BASE + "\n[scatterer]\nkind = soft\n"
                    "boundary = -1.6,0.5 -1.4,0.5 -1.5,0.7\n")
    assert len(cfg.geometry().scatterer.boundary) == 3
    with pytest.raises(ConfigError):
        parse_ini(BASE + "\n[scatterer]\nkind = jelly\ncenter = -1.5 0.6\nradius = 0.1\n")


def test_manifest_roundtrip(tmp_path):
    cfg = parse_ini(BASE + "\n[scatterer]\nkind = soft\ncenter = -1.5 0.6\nradius = 0.1\n")
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"config": cfg.to_dict()}))
    back = load_config(p)
    assert back == cfg
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(dict(cfg.to_dict(), colour="red"))
    (tmp_path / "bad.json").write_text("{\n  nope")
    with pytest.raises(ConfigError, match="bad.json:2"):
        load_config(tmp_path / "bad.json")


def test_overrides():
    cfg = parse_ini(BASE)
    c2 = with_overrides(cfg, mode_count=20, seed=None, fraction=0.6)
    assert c2.spec().j_prop == 19 and c2.seed == 3 and c2.fraction == 0.6
    c3 = with_overrides(parse_ini(BASE.replace("mode_count = 10", "wavenumber = 30")),
                        mode_count=5)
    assert c3.wavenumber is None and c3.mode_count == 5


def test_shipped_scenarios_load():
    names = shipped_scenarios()
    assert {"bump10", "bump20", "bump20_partial60", "soft_disk20", "penetrable_disk20",
            "empty10"} <= set(names)
    for n in names:
        cfg = load_scenario(n)
        basis = cfg.basis()
        cfg.array(basis).check(basis, cfg.geometry())
        assert cfg.eps == 0.01 and cfg.noise == 0.02
    assert load_scenario("empty10").geometry().is_empty
    assert np.isclose(load_scenario("bump20_partial60").fraction, 0.6)
    with pytest.raises(ConfigError):
        load_scenario("nope")
