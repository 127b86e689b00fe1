"""Self-checks run by ``wglsm validate``.

Each check returns a :class:`CheckResult`; a run passes when every check
passes. Tolerances are module constants so they can be quoted in reports.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .fem import manufactured_mode_error
from .geometry import ScenarioGeometry
from .mesh import build_mesh
from .modes import green, green_gradient
from .pipeline import survey_scenario
from .survey import project_to_modal, route_defect

logger = logging.getLogger(__name__)

# relative L2 error of the manufactured outgoing modes at the configured h,
# and the minimum error reduction under h -> h/2 (second order gives ~4)
FEM_L2_TOL = 2e-2
FEM_RATIO_MIN = 3.0
GREEN_FD_TOL = 1e-6
RECIPROCITY_TOL = 2e-2
ROUTE_TOL = 1e-2


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tol {self.tol:.1e}) {self.detail}".rstrip()


def check_fem_oracle(basis, h, modes=None):
    """Manufactured outgoing modes on a bare strip of length one width.

    Passes when every mode has relative L2 error ``<= FEM_L2_TOL`` at ``h``
    and the error drops by at least ``FEM_RATIO_MIN`` at ``h / 2``.
    """
    J = basis.j_prop
    modes = sorted({0, min(2, J), J}) if modes is None else list(modes)
    w = basis.width
    geo = ScenarioGeometry(basis.spec, x_star=-0.5 * w, x_L=-w)
    coarse, fine = build_mesh(geo, h), build_mesh(geo, h / 2)
    out = []
    for j in modes:
        e1 = manufactured_mode_error(basis, j, h, mesh=coarse)["l2"]
        e2 = manufactured_mode_error(basis, j, h / 2, mesh=fine)["l2"]
        ratio = e1 / e2 if e2 > 0 else np.inf
        ok = e1 <= FEM_L2_TOL and ratio >= FEM_RATIO_MIN
        out.append(CheckResult(f"fem_mode_{j}", e1, FEM_L2_TOL, ok,
                               f"ratio {ratio:.2f} (min {FEM_RATIO_MIN})"))
    return out


def check_green_fd(basis, x=None, y=None):
    """Finite-difference Helmholtz residual and wall conditions of ``G``.

    The residual of a fourth-order nine-point Laplacian is compared with
    ``k^2 |G|``; the Neumann conditions on the end wall and the side wall
    are compared with ``k |G|``.
    """
    w, k = basis.width, basis.wavenumber
    y = np.array([-1.3 * w, 0.37 * w]) if y is None else np.asarray(y, float)
    x = np.array([-1.0 * w, 0.61 * w]) if x is None else np.asarray(x, float)
    d = basis.spec.wavelength / 200
    c = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
    off = np.arange(-2, 3) * d
    px = np.column_stack([x[0] + off, np.full(5, x[1])])
    py = np.column_stack([np.full(5, x[0]), x[1] + off])
    lap = (c @ green(basis, px, y) + c @ green(basis, py, y)) / d ** 2
    g0 = green(basis, x, y)
    res = abs(lap + k ** 2 * g0) / (k ** 2 * abs(g0))
    wall_pts = np.array([[0.0, 0.3 * w], [-0.8 * w, 0.0], [-0.8 * w, w]])
    grad = green_gradient(basis, wall_pts, y)
    neu = max(abs(grad[0, 0]), abs(grad[1, 1]), abs(grad[2, 1])) / (k * abs(g0))
    val = max(res, neu)
    return [CheckResult("green_fd", val, GREEN_FD_TOL, bool(val <= GREEN_FD_TOL),
                        f"helmholtz {res:.1e}, neumann {neu:.1e}")]


def check_survey(cfg, workers=1):
    """Reciprocity of the full-aperture response and the two-route agreement."""
    basis, _, survey = survey_scenario(cfg, workers, full_aperture=True)
    U = project_to_modal(survey, basis)
    rec = U.symmetry_defect()
    route = route_defect(survey, basis)
    return [CheckResult("reciprocity", rec, RECIPROCITY_TOL, rec <= RECIPROCITY_TOL),
            CheckResult("two_route", route, ROUTE_TOL, route <= ROUTE_TOL)]


def run_checks(cfg, workers=1, report=print):
    """Run every check for a scenario; returns the list of results."""
    basis = cfg.basis()
    results = []
    for group in (lambda: check_fem_oracle(basis, cfg.h_target()),
                  lambda: check_green_fd(basis),
                  lambda: check_survey(cfg, workers)):
        for r in group():
            report(r.line())
            results.append(r)
    return results
