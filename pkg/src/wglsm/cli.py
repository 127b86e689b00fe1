"""Command-line interface: ``wglsm {simulate,image,analyze-aperture,validate}``.

Exit codes: 0 success, 1 validation or solver failure, 2 empty response,
3 bad input. ``WGLSM_LOG`` sets the log level (default WARNING).
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import load_config, scenario_path, with_overrides
from .errors import (ConfigError, EmptyResponse, HeaderMismatch, InvalidArray,
                     InvalidFraction, WaveguideError)
from .lsm import gram_matrix, prolate_spectrum
from .survey import read_response, write_response

logger = logging.getLogger("wglsm")

EXIT_OK, EXIT_FAIL, EXIT_EMPTY, EXIT_INPUT = 0, 1, 2, 3
_INPUT_ERRORS = (ConfigError, HeaderMismatch, InvalidArray, InvalidFraction)
DEFAULT_SCENARIO = "bump10"


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    import scipy
    import shapely
    out = {"wglsm": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__, "shapely": shapely.__version__}
    if kernels.get_backend() == "numba":
        import numba
        out["numba"] = numba.__version__
    return out


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(args):
    path = args.config or scenario_path(DEFAULT_SCENARIO)
    cfg = load_config(path)
    over = {"seed": getattr(args, "seed", None), "fraction": getattr(args, "fraction", None),
            "mode_count": getattr(args, "modes", None),
            "h_per_wavelength": getattr(args, "h_per_wavelength", None)}
    return with_overrides(cfg, **over)


def _resolved(cfg):
    basis = cfg.basis()
    arr = cfg.array(basis)
    return {"k": basis.wavenumber, "J": basis.j_prop, "n_total": basis.n_total,
            "x_L": cfg.truncation, "spacing": arr.spacing, "n_sensors": arr.n_sensors,
            "h_target": cfg.h_target()}


def cmd_simulate(args):
    from .pipeline import simulate
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = simulate(cfg, workers=args.parallel)
    logger.info("simulation finished in %.2fs", time.perf_counter() - t0)
    write_response(res.noisy, out / "response.txt")
    write_response(res.clean, out / "response_clean.txt")
    files = ["response.txt", "response_clean.txt"]
    manifest = {"command": "simulate", "config": cfg.to_dict(), "resolved": _resolved(cfg),
                "versions": _versions(), "kernel_backend": kernels.get_backend(),
                "outputs": {f: _sha256(out / f) for f in files}}
    _dump_json(manifest, out / "manifest.json")
    print(f"wrote {out / 'response.txt'} (J = {res.basis.j_prop}, "
          f"{res.survey.array.n_sensors} sensors, max |U| = {np.abs(res.noisy.entries).max():.3e})")
    return EXIT_OK


def cmd_image(args):
    from .pipeline import image_metrics, reconstruct
    cfg = _load(args)
    basis = cfg.basis()
    matrix = read_response(args.matrix, basis)
    if abs(float(matrix.meta.get("x_A", np.nan)) - cfg.x_A) > 1e-12 * max(1.0, abs(cfg.x_A)):
        raise HeaderMismatch(f"{args.matrix}: header x_A = {matrix.meta.get('x_A')} but the "
                             f"config has x_A = {cfg.x_A}")
    eps = cfg.eps if args.eps is None else args.eps
    thr = cfg.threshold if args.threshold is None else args.threshold
    pipeline = args.pipeline or cfg.pipeline
    img = reconstruct(matrix, basis, cfg.grid(), eps, pipeline=pipeline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img.write_csv(out / "indicator.csv")
    img.write_pgm(out / "indicator.pgm")
    summary = img.summary(thr)
    summary["aperture_kind"] = matrix.meta.get("aperture_kind")
    geo = cfg.geometry()
    if not geo.is_empty:
        summary["metrics"] = image_metrics(img, geo, thr)
    _dump_json(summary, out / "summary.json")
    print(f"wrote {out / 'indicator.csv'}: {summary['n_masked']} of {summary['n_points']} "
          f"points above threshold {thr}, bbox {summary['mask_bbox']}")
    return EXIT_OK


def aperture_report(J, fraction):
    """Gram and prolate spectra side by side; returns (text lines, verdict dict)."""
    model = gram_matrix(J, fraction)
    spec = prolate_spectrum(J, fraction)
    s_g, s_p = model.eigvals, spec["sigmas"]
    jm = spec["j_cut"]
    lines = [f"J = {J}, fraction = {fraction}, J_M = {jm}", "   j   sigma_gram        sigma_prolate"]
    lines += [f"{j:4d}   {a:.15f} {b:.15f}" for j, (a, b) in enumerate(zip(s_g, s_p))]
    gap = float(np.abs(s_g - s_p).max())
    hi = bool(np.all(s_p[: max(jm - 1, 0)] >= 0.9))
    lo = bool(np.all(s_p[jm + 2:] <= 0.1))
    verdict = {"J_M": jm, "max_route_gap": gap, "plateau_high": hi, "tail_low": lo,
               "plateau": hi and lo}
    lines.append(f"max |sigma_gram - sigma_prolate| = {gap:.3e}")
    lines.append(f"plateau check (sigma >= 0.9 for j < J_M - 1, <= 0.1 for j > J_M + 1): "
                 f"{'PASS' if verdict['plateau'] else 'FAIL'}")
    return lines, verdict


def cmd_analyze_aperture(args):
    if args.modes is None:
        raise ConfigError("analyze-aperture needs --modes (number of propagating modes)")
    J = args.modes - 1
    fraction = 1.0 if args.fraction is None else args.fraction
    lines, verdict = aperture_report(J, fraction)
    print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "aperture.txt").write_text("\n".join(lines) + "\n")
        _dump_json(verdict, out / "aperture.json")
    return EXIT_OK


def cmd_validate(args):
    from .validate import run_checks
    try:
        cfg = _load(args)
    except _INPUT_ERRORS:
        raise
    except WaveguideError as exc:
        print(f"FAIL config: {type(exc).__name__}: {exc}")
        return EXIT_FAIL
    results = run_checks(cfg, workers=args.parallel)
    ok = all(r.passed for r in results)
    print(f"{'all checks passed' if ok else 'validation failed'} "
          f"({sum(r.passed for r in results)}/{len(results)})")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="wglsm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="scenario INI file or run manifest (JSON)")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--parallel", type=int, default=1, help="forward-solve threads")

    s = sub.add_parser("simulate", help="synthesize a response matrix")
    common(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--fraction", type=float)
    s.add_argument("--modes", type=int, help="number of propagating modes J + 1")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("image", help="linear sampling image of a response matrix")
    common(s)
    s.add_argument("--matrix", required=True)
    s.add_argument("--eps", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("--pipeline", choices=("auto", "full", "partial"))
    s.set_defaults(func=cmd_image)

    s = sub.add_parser("analyze-aperture", help="Gram/prolate spectrum of a partial aperture")
    s.add_argument("--modes", type=int, help="number of propagating modes J + 1")
    s.add_argument("--fraction", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze_aperture)

    s = sub.add_parser("validate", help="run the solver and imaging self-checks")
    common(s, out=False)
    s.add_argument("--modes", type=int, help="number of propagating modes J + 1")
    s.add_argument("--h-per-wavelength", type=float, dest="h_per_wavelength")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    level = os.environ.get("WGLSM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmptyResponse as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except _INPUT_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except WaveguideError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
