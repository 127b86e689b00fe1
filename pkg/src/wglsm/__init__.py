"""Waveguide forward modelling and linear sampling imaging.

Modules
-------
modes     eigenfunctions, Green's function and DtN factors of the strip
geometry  wall deformations and obstacles
mesh      conforming triangulations of the truncated guide
fem       P1 Helmholtz solver with an exact modal radiation condition
survey    synthetic array surveys and modal response matrices
lsm       Morozov-Tikhonov linear sampling, partial-aperture projection
pipeline  scenario-to-image drivers
config    INI scenario files
cli       command-line entry point
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .modes import (WaveguideSpec, ModeBasis, build_mode_basis, default_n_total, green,  # noqa
                    green_gradient, mode_coeff_matrix)
from .geometry import (ScenarioGeometry, SoundSoft, SoundHard, Penetrable,  # noqa: F401
                       bump_polyline, disk_polygon)
from .mesh import Mesh, build_mesh, read_mesh, write_mesh  # noqa: F401
from .fem import HelmholtzProblem, FieldSolution, solve_scattered  # noqa: F401
from .survey import (ArraySpec, SurveyData, ResponseMatrix, run_survey,  # noqa: F401
                     project_to_modal, response_from_modal, add_noise, read_response,
                     write_response)
from .lsm import (ApertureModel, SamplingGrid, IndicatorImage, gram_matrix,  # noqa: F401
                  prolate_spectrum, project_partial, morozov_tikhonov_solve,
                  compute_indicator)
