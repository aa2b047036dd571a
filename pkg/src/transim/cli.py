"""Command-line experiment runner.

Every verb resolves its settings from built-in defaults, then an optional
key=value config file (``[common]`` and ``[<verb>]`` sections), then
command-line flags.  Exit codes: 0 success, 1 error, 2 a solver stopped at
``max_iters`` without meeting its tolerance.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .framelet import KINDS, filter_bank
from .io import (config_hash, read_rm2, read_sinogram, write_csv, write_pgm, write_rm2,
                 write_sinogram)
from .metrics import UndefinedSNR, frobenius_error, report, snr
from .noise import DEFAULT_DOSE, NoiseSpec, add_poisson
from .optimizer import DEFAULT_REL_TOL, SolverConfig, denoise_framelet, denoise_tv, objective
from .phantom import Image2D, disk, rasterize, standard_shepp_logan
from .projector import (FanGeometry, ParallelGeometry, Sinogram, analytic_fan_sinogram,
                        analytic_parallel_sinogram, fan_project, parallel_project)
from .recon import FbpConfig, fbp_parallel, reconstruct_fan

log = logging.getLogger("transim")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
MODELS = ("tv",) + KINDS
PHANTOMS = {"shepp-logan": standard_shepp_logan, "disk": lambda: disk(0.8)}
VERBS = ("project", "noise", "denoise", "recon", "metrics", "theory", "bench")


def _floats(text) -> tuple[float, ...]:
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def _ints(text) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).replace(",", " ").split())


def _names(text) -> tuple[str, ...]:
    return tuple(t for t in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key: (converter, default, verbs that use it, help)
OPTIONS = {
    "seed": (int, 0, VERBS, "RNG seed"),
    "dose": (float, DEFAULT_DOSE, ("noise", "denoise", "bench"),
             "expected counts per unit sinogram value ('inf' disables noise in bench)"),
    "model": (str, "tv", ("denoise",), f"one of {', '.join(MODELS)}"),
    "alpha": (float, 0.2, ("denoise",), "TV weight, in count units"),
    "lambda": (float, 0.1, ("denoise",), "framelet high-pass weight, in count units"),
    "penalty": (float, 1.0, ("denoise", "bench"), "augmented-Lagrangian penalty"),
    "max_iters": (int, 2000, ("denoise", "bench"), "iteration cap"),
    "rel_tol": (float, DEFAULT_REL_TOL, ("denoise", "bench"), "relative-change stopping tolerance"),
    "levels": (int, 1, ("denoise", "bench"), "framelet levels"),
    "angles": (int, 360, ("project", "bench"), "number of views"),
    "detectors": (int, 509, ("project", "bench"), "detectors per view"),
    "geometry": (str, "fan", ("project",), "fan or parallel"),
    "source_radius": (float, 3.0, ("project", "bench"), "fan source distance from the centre"),
    "phantom": (str, "shepp-logan", ("project", "bench"), f"one of {', '.join(PHANTOMS)}"),
    "size": (int, 256, ("project", "recon", "bench"), "image rows and columns"),
    "analytic": (_bool, False, ("project",), "exact ellipse-chord sinogram instead of ray marching"),
    "input": (str, "", ("noise", "denoise", "recon", "metrics"), "input RM2 file"),
    "reference": (str, "", ("metrics",), "reference RM2 file"),
    "window": (str, "ram-lak", ("recon", "bench"), "ram-lak or hamming"),
    "circle": (_bool, False, ("recon", "bench"), "zero the reconstruction outside the unit disk"),
    "models": (_names, ("tv", "linear", "cubic"), ("bench",), "models to benchmark"),
    "tv_grid": (_floats, (0.0, 0.05, 0.1, 0.15, 0.2, 0.3), ("bench",), "alpha tuning grid"),
    "frame_grid": (_floats, (0.0, 0.025, 0.05, 0.1, 0.15, 0.2), ("bench",), "lambda tuning grid"),
    "rows": (_ints, (100, 200, 300), ("bench",), "views reported individually"),
    "surfaces": (_names, ("sphere", "cylinder", "saddle", "torus"), ("theory",), "surfaces"),
    "samples": (int, 20000, ("theory",), "directions per tolerance"),
    "grid": (int, 512, ("theory",), "surface points per parameter axis"),
    "tols": (_floats, geo.TOL_LADDER, ("theory",), "tolerance ladder"),
    "ladder": (_ints, geo.DETECTOR_LADDER, ("theory",), "detector refinement ladder"),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully resolved run: verb, settings and output directory."""

    pipeline: str
    params: dict = field(default_factory=dict)
    out: Path = Path(".")

    def __getitem__(self, key):
        return self.params[key]

    @property
    def hash(self) -> str:
        # inputs enter by content, so the hash does not depend on where files live
        hashed = dict(self.params)
        for key in ("input", "reference"):
            if hashed.get(key):
                hashed[key] = hashlib.sha256(Path(hashed[key]).read_bytes()).hexdigest()
        return config_hash({"pipeline": self.pipeline, **hashed})


def resolve(verb: str, flags: dict, config_path=None) -> dict:
    """Defaults, then config ``[common]`` and ``[verb]`` sections, then flags."""
    params = {k: opt[1] for k, opt in OPTIONS.items() if verb in opt[2]}
    if config_path:
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(config_path):
            raise ValueError(f"cannot read config file {config_path}")
        for section in ("common", verb):
            if cp.has_section(section):
                for key, value in cp.items(section):
                    key = key.replace("-", "_")
                    if key in ("out", "config"):
                        continue
                    if key not in OPTIONS:
                        raise ValueError(f"[{section}] unknown key {key!r}")
                    if key in params:
                        params[key] = OPTIONS[key][0](value)
    for key, value in flags.items():
        if value is not None and key in params:
            params[key] = OPTIONS[key][0](value)
    _validate(params)
    return params


def _validate(p: dict) -> None:
    if "model" in p and p["model"] not in MODELS:
        raise ValueError(f"unknown model {p['model']!r}; expected one of {MODELS}")
    for m in p.get("models", ()):
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}; expected one of {MODELS}")
    if "phantom" in p and p["phantom"] not in PHANTOMS:
        raise ValueError(f"unknown phantom {p['phantom']!r}")
    if "geometry" in p and p["geometry"] not in ("fan", "parallel"):
        raise ValueError(f"unknown geometry {p['geometry']!r}")
    for s in p.get("surfaces", ()):
        if s not in geo.SURFACES:
            raise ValueError(f"unknown surface {s!r}")
    if "dose" in p and not p["dose"] > 0:
        raise ValueError("dose must be positive")
    for key in ("angles", "detectors", "size", "samples", "grid"):
        if key in p and p[key] < 1:
            raise ValueError(f"{key} must be >= 1")


# ---------------------------------------------------------------- helpers

def _count_scale(dose: float) -> float:
    return dose if math.isfinite(dose) else DEFAULT_DOSE


def _solve(model: str, f: np.ndarray, param: float, spec: ExperimentSpec):
    """Denoise count data ``f`` with one model; ``param`` is alpha or lambda."""
    common = dict(penalty=spec["penalty"], max_iters=spec["max_iters"],
                  rel_tol=spec["rel_tol"], levels=spec["levels"])
    if model == "tv":
        return denoise_tv(f, SolverConfig(alpha=param, **common), trace=False)
    return denoise_framelet(f, filter_bank(model), SolverConfig(lam=param, **common), trace=False)


def _model_objective(model: str, u, f, param: float, levels: int) -> float:
    if model == "tv":
        return objective(u, f, SolverConfig(alpha=param))
    return objective(u, f, SolverConfig(lam=param, levels=levels), filter_bank(model))


def _save(out: Path, stem: str, data, sino: Sinogram | None = None) -> None:
    if sino is not None:
        write_sinogram(out / f"{stem}.rm2", sino)
    else:
        write_rm2(out / f"{stem}.rm2", data)
    write_pgm(out / f"{stem}.pgm", data)


def _snr_or_none(u, u0):
    try:
        return snr(u, u0)
    except UndefinedSNR:
        return None


def _phantom_and_geometry(spec: ExperimentSpec, kind: str = "fan"):
    ph = PHANTOMS[spec["phantom"]]()
    img = rasterize(ph, spec["size"], spec["size"])
    if kind == "fan":
        geom = FanGeometry.standard(spec["angles"], spec["detectors"], spec["source_radius"])
    else:
        geom = ParallelGeometry.standard(spec["angles"], spec["detectors"])
    return ph, img, geom


# ---------------------------------------------------------------- verbs

def run_project(spec: ExperimentSpec) -> int:
    """Rasterised phantom and its (discrete or analytic) sinogram."""
    ph, img, geom = _phantom_and_geometry(spec, spec["geometry"])
    if spec["analytic"]:
        sino = (analytic_fan_sinogram if geom.kind == "fan" else analytic_parallel_sinogram)(ph, geom)
    else:
        sino = (fan_project if geom.kind == "fan" else parallel_project)(img, geom)
    _save(spec.out, "phantom", img.data)
    _save(spec.out, "sinogram", sino.data, sino)
    return EXIT_OK


def run_noise(spec: ExperimentSpec) -> int:
    """Poisson noise on a sinogram at the given dose."""
    sino = read_sinogram(spec["input"])
    noisy = add_poisson(sino, NoiseSpec(spec["dose"], spec["seed"]))
    _save(spec.out, "noisy", noisy.data, noisy)
    return EXIT_OK


def _read_any(path):
    """A sinogram when a geometry sidecar exists, else a bare matrix."""
    if Path(str(path) + ".hdr").exists():
        return read_sinogram(path)
    return read_rm2(path)


def run_denoise(spec: ExperimentSpec) -> int:
    """Denoise a sinogram or matrix with one model."""
    src = _read_any(spec["input"])
    data = np.asarray(src, dtype=float)
    scale = _count_scale(spec["dose"])
    model = spec["model"]
    param = spec["alpha"] if model == "tv" else spec["lambda"]
    f = data * scale
    u, rep = _solve(model, f, param, spec)
    out = u / scale
    sino = src.with_data(out) if isinstance(src, Sinogram) else None
    _save(spec.out, f"denoised-{model}", out, sino)
    rows = [("denoise", model, "param", param),
            ("denoise", model, "iterations", rep.iterations),
            ("denoise", model, "rel_change", rep.rel_change),
            ("denoise", model, "converged", rep.converged),
            ("denoise", model, "objective_input", _model_objective(model, f, f, param, spec["levels"])),
            ("denoise", model, "objective_output", _model_objective(model, u, f, param, spec["levels"]))]
    write_csv(spec.out / f"denoise-{model}.csv", rows, spec.hash)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def run_recon(spec: ExperimentSpec) -> int:
    """Filtered backprojection of a parallel or fan sinogram."""
    sino = read_sinogram(spec["input"])
    cfg = FbpConfig(spec["window"], spec["size"], spec["size"], spec["circle"])
    img = reconstruct_fan(sino, cfg) if sino.kind == "fan" else fbp_parallel(sino, cfg)
    _save(spec.out, "recon", img.data)
    return EXIT_OK


def run_metrics(spec: ExperimentSpec) -> int:
    """SNR and Frobenius error of an image against a reference."""
    u = read_rm2(spec["input"])
    u0 = read_rm2(spec["reference"])
    rep = report(Path(spec["input"]).stem, u, u0)
    rows = [("metrics", rep.label, "snr_db", rep.snr_db),
            ("metrics", rep.label, "frobenius", rep.frobenius)]
    if rep.flag:
        rows.append(("metrics", rep.label, "snr_flag", rep.flag))
    write_csv(spec.out / "metrics.csv", rows, spec.hash)
    return EXIT_OK


def run_theory(spec: ExperimentSpec) -> int:
    """Tolerance-ladder fractions per surface and jump-refinement ladders."""
    h = spec.hash
    rows = []
    for name in spec["surfaces"]:
        patch = geo.surface(name)
        log.info("measure ladder: %s", name)
        for tol, frac in geo.tol_ladder(patch, spec["samples"], spec["seed"], spec["tols"],
                                        grid=spec["grid"]):
            rows.append(("theory-measure", name, f"fraction@tol={tol!r}", frac))
    write_csv(spec.out / "theory-measure.csv", rows, h)

    rows = []
    cases = [("cube-generic", geo.unit_cube(), geo.GENERIC_DIRECTION),
             ("cube-axis", geo.unit_cube(), geo.AXIS_DIRECTION),
             ("ball-generic", geo.ball(), geo.GENERIC_DIRECTION)]
    for item, vol, direction in cases:
        log.info("continuity ladder: %s", item)
        ladder = geo.jump_ladder(vol, direction, spec["ladder"])
        for n, rep in ladder:
            rows.append(("theory-continuity", item, f"max_jump@{n}", rep.max_jump))
            rows.append(("theory-continuity", item, f"jump_count@{n}", rep.count))
        for (n0, _), (n1, _), ratio in zip(ladder, ladder[1:], geo.refinement_ratios(ladder)):
            rows.append(("theory-continuity", item, f"ratio@{n0}-{n1}", ratio))
    write_csv(spec.out / "theory-continuity.csv", rows, h)
    return EXIT_OK


def _tune(model: str, f_held: np.ndarray, clean: np.ndarray, grid, spec: ExperimentSpec):
    """Pick the grid value with the best SNR on a held-out noise realisation.

    An undefined SNR (output equal to the clean data) ranks above everything.
    """
    scores = []
    for p in grid:
        u, _ = _solve(model, f_held, p, spec)
        s = _snr_or_none(u, clean)
        scores.append((p, s))
        log.info("tune %s %g: %s", model, p, s)
    best = max(scores, key=lambda ps: math.inf if ps[1] is None else ps[1])
    return best[0], scores


def run_denoise2d(spec: ExperimentSpec) -> int:
    """Fan sinogram, Poisson noise, tuned denoising and reconstruction for each model."""
    out, h = spec.out, spec.hash
    _, img, geom = _phantom_and_geometry(spec, "fan")
    clean = fan_project(img, geom)
    dose = spec["dose"]
    noise_on = math.isfinite(dose)
    scale = _count_scale(dose)
    if noise_on:
        noisy = add_poisson(clean, NoiseSpec(dose, spec["seed"]))
        held = add_poisson(clean, NoiseSpec(dose, spec["seed"] + 1))
    else:
        noisy = held = clean
    c0 = clean.data * scale
    f = noisy.data * scale
    f_held = held.data * scale
    rows_idx = [r for r in spec["rows"] if r < geom.n_angles]

    _save(out, "phantom", img.data)
    _save(out, "clean", clean.data, clean)
    _save(out, "noisy", noisy.data, noisy)

    cfg = FbpConfig(spec["window"], spec["size"], spec["size"], spec["circle"])
    rows = []
    code = EXIT_OK
    sinos = {"noisy": noisy.data}
    for model in spec["models"]:
        grid = spec["tv_grid"] if model == "tv" else spec["frame_grid"]
        param, scores = _tune(model, f_held, c0, grid, spec)
        for p, s in scores:
            rows.append(("tuning", model, f"snr@{p!r}", s))
        u, rep = _solve(model, f, param, spec)
        if not rep.converged:
            code = EXIT_NOT_CONVERGED
        rows += [("denoise2d", model, "param", param),
                 ("denoise2d", model, "iterations", rep.iterations),
                 ("denoise2d", model, "converged", rep.converged),
                 ("denoise2d", model, "rel_change", rep.rel_change),
                 ("denoise2d", model, "objective_input",
                  _model_objective(model, f, f, param, spec["levels"])),
                 ("denoise2d", model, "objective_output",
                  _model_objective(model, u, f, param, spec["levels"]))]
        sinos[model] = u / scale
        _save(out, f"denoised-{model}", sinos[model], clean.with_data(sinos[model]))

    for item, data in sinos.items():
        rows.append(("denoise2d", item, "snr", _snr_or_none(data, clean.data)))
        for r in rows_idx:
            rows.append(("denoise2d", item, f"snr_view{r}", _snr_or_none(data[r], clean.data[r])))

    recons = {"clean": reconstruct_fan(clean, cfg)}
    for item, data in sinos.items():
        recons[item] = reconstruct_fan(clean.with_data(data), cfg)
    for item, rec in recons.items():
        _save(out, f"recon-{item}", rec.data)
        rows.append(("recon", item, "frobenius", frobenius_error(rec.data, img.data)))
    write_csv(out / "bench.csv", rows, h)
    return code


RUNNERS = {"project": run_project, "noise": run_noise, "denoise": run_denoise,
           "recon": run_recon, "metrics": run_metrics, "theory": run_theory,
           "bench": run_denoise2d}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        sp = sub.add_parser(verb, help=(RUNNERS[verb].__doc__ or verb).splitlines()[0])
        sp.add_argument("--config", help="key=value config file with [common]/[verb] sections")
        sp.add_argument("--out", default=".", help="output directory")
        for key, (_, default, verbs, text) in OPTIONS.items():
            if verb in verbs:
                flag = "--" + key.replace("_", "-")
                sp.add_argument(flag, dest=key, default=None,
                                help=f"{text} (default: {default})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    flags = {k: v for k, v in vars(args).items() if k not in ("verb", "config", "out", "verbose")}
    try:
        params = resolve(args.verb, flags, args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = RUNNERS[args.verb](ExperimentSpec(args.verb, params, out))
    except (ValueError, TypeError, OSError) as exc:
        print(f"transim {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if code == EXIT_NOT_CONVERGED:
        print(f"transim {args.verb}: a solver hit max_iters before converging", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
