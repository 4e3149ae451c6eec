"""Command line front end: convergence studies, grating solves, angle sweeps.

Three subcommands share a common flag vocabulary:

* ``green-convergence`` tabulates successive differences of the windowed
  lattice sum over a geometric schedule of truncation radii.
* ``grating-solve`` runs one plane-wave scattering solve and reports the
  energy-balance defect (and, with ``--ref-a``, the specular-amplitude
  difference against a better-resolved reference run).
* ``angle-sweep`` repeats the solve over a span of incidence angles.

Wavenumbers are absolute by default; ``--scaled`` multiplies a numeric
``--k`` by 2 pi / d1 so that the first anomaly configuration of a unit-period
grating sits at scaled k = 1.  The literal tokens ``2pi``, ``2sqrt2pi`` and
``4pi`` are always absolute, so anomaly frequencies can be requested without
transcription error.  Output is CSV by default; ``--format json`` wraps the
rows in a versioned document carrying the resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .driver import (
    IncidentWave,
    angle_sweep,
    coefficient_error,
    green_convergence_study,
    solve_grating,
)
from .errors import ConfigurationError, WoodAnomalyError
from .lattice import QuasiPeriodicity, WindowProfile, wood_modes
from .shifted import ShiftConfig
from .surface import cos_cos_surface, flat_surface

__all__ = ["ExperimentConfig", "main",
           "cmd_green_convergence", "cmd_grating_solve", "cmd_angle_sweep"]

_SCHEMA = "qpgreen-result/1"
_K_TOKENS = {
    "2pi": 2.0 * math.pi,
    "2sqrt2pi": 2.0 * math.sqrt(2.0) * math.pi,
    "4pi": 4.0 * math.pi,
}


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


@dataclass
class ExperimentConfig:
    """Fully resolved parameters of one command invocation.

    Numeric fields are stored in absolute units (the scaling flag is applied
    while parsing); the raw token the user typed is kept for the record.
    """

    command: str
    k: float
    k_input: str
    scaled: bool
    bloch: tuple = (0.0, 0.0)
    surface: str = "cos-cos:0.5"
    bc: str = "dirichlet"
    kernel: str = "plain"
    p: int = 3
    d: float = 1.4
    b_value: complex = 1.0 + 0.0j
    a: float = 60.0
    a_schedule: tuple = ()
    n: int = 8
    eta: float | None = None
    xi: float = 1.0
    gmres_tol: float = 1e-6
    psi0: float = math.pi / 4
    psi_span: float = 0.05
    num_angles: int = 7
    phi: float = 0.0
    ref_a: float | None = None
    fmt: str = "csv"
    out: str | None = None

    def as_metadata(self) -> dict:
        meta = dataclasses.asdict(self)
        meta["b_value"] = [self.b_value.real, self.b_value.imag]
        meta["bloch"] = list(self.bloch)
        meta["a_schedule"] = list(self.a_schedule)
        meta["version"] = _package_version()
        meta["schema"] = _SCHEMA
        return meta


def _parse_k(text: str, scaled: bool, d1: float = 1.0) -> float:
    if text in _K_TOKENS:
        return _K_TOKENS[text]
    try:
        k = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad wavenumber {text!r}: expected a number or one of {sorted(_K_TOKENS)}")
    if k <= 0:
        raise argparse.ArgumentTypeError("wavenumber must be positive")
    return k * (2.0 * math.pi / d1) if scaled else k


def _parse_schedule(text: str) -> tuple:
    """Geometric schedule written as BASE^LO..HI, e.g. 1.2^10..30."""
    try:
        base_s, rng = text.split("^")
        lo_s, hi_s = rng.split("..")
        base, lo, hi = float(base_s), int(lo_s), int(hi_s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad schedule {text!r}: expected BASE^LO..HI such as 1.2^10..30")
    if base <= 1.0 or hi <= lo:
        raise argparse.ArgumentTypeError("schedule needs base > 1 and HI > LO")
    return tuple(base ** i for i in range(lo, hi + 1))


def _parse_surface(text: str):
    if text == "flat":
        return flat_surface()
    if text.startswith("cos-cos:"):
        try:
            amp = float(text.split(":", 1)[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad surface amplitude in {text!r}")
        return cos_cos_surface(amp)
    raise argparse.ArgumentTypeError(
        f"bad surface {text!r}: expected 'flat' or 'cos-cos:AMPLITUDE'")


def _parse_complex(text: str) -> complex:
    try:
        return complex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad complex value {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpgreen",
        description="Windowed quasi-periodic Green functions and grating scattering.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, k_default: str):
        sp.add_argument("--k", default=k_default,
                        help="wavenumber: a number, or one of 2pi, 2sqrt2pi, 4pi "
                             f"(default {k_default})")
        sp.add_argument("--scaled", action="store_true",
                        help="interpret a numeric --k in units of 2 pi / period")
        sp.add_argument("--bloch", default="0,0", metavar="A,B",
                        help="Bloch wavevector components alpha,beta (default 0,0)")
        sp.add_argument("--kernel", choices=("plain", "shifted", "modified"),
                        default=None, help="lattice-sum kernel")
        sp.add_argument("--p", type=int, default=3, help="shift order (default 3)")
        sp.add_argument("--d", type=float, default=1.4,
                        help="vertical shift distance (default 1.4)")
        sp.add_argument("--b-value", type=_parse_complex, default="1",
                        help="regularizer coefficient for grazing modes (default 1)")
        sp.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
        sp.add_argument("--out", default=None, help="output path (default stdout)")

    sp = sub.add_parser("green-convergence",
                        help="successive-difference convergence of the windowed sum")
    common(sp, k_default="0.4")
    sp.set_defaults(scaled=True)
    sp.add_argument("--no-scaled", dest="scaled", action="store_false",
                    help="treat a numeric --k as absolute")
    sp.add_argument("--a-schedule", type=_parse_schedule, default="1.2^10..30",
                    help="truncation radii BASE^LO..HI (default 1.2^10..30)")

    sp = sub.add_parser("grating-solve", help="one plane-wave scattering solve")
    common(sp, k_default="1.0")
    sp.add_argument("--surface", default="cos-cos:0.5",
                    help="'flat' or 'cos-cos:AMPLITUDE' (default cos-cos:0.5)")
    sp.add_argument("--bc", choices=("dirichlet", "neumann"), default="dirichlet")
    sp.add_argument("--a", type=float, default=60.0, help="truncation radius")
    sp.add_argument("--n", type=int, default=8, help="grid size per period")
    sp.add_argument("--eta", type=float, default=None,
                    help="combined-field single-layer weight (default -k)")
    sp.add_argument("--xi", type=float, default=1.0,
                    help="combined-field double-layer weight (default 1)")
    sp.add_argument("--gmres-tol", type=float, default=1e-6)
    sp.add_argument("--ref-a", type=float, default=None,
                    help="also solve at this radius and report the specular difference")

    sp = sub.add_parser("angle-sweep", help="scattering solves over incidence angles")
    common(sp, k_default="2sqrt2pi")
    sp.add_argument("--surface", default="cos-cos:0.5",
                    help="'flat' or 'cos-cos:AMPLITUDE' (default cos-cos:0.5)")
    sp.add_argument("--bc", choices=("dirichlet", "neumann"), default="dirichlet")
    sp.add_argument("--a", type=float, default=40.0, help="truncation radius")
    sp.add_argument("--n", type=int, default=24, help="grid size per period")
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--xi", type=float, default=1.0)
    sp.add_argument("--gmres-tol", type=float, default=1e-6)
    sp.add_argument("--psi0", type=float, default=math.pi / 4,
                    help="central incidence angle in radians (default pi/4)")
    sp.add_argument("--psi-span", type=float, default=0.05,
                    help="half-width of the angle span (default 0.05)")
    sp.add_argument("--num-angles", type=int, default=7,
                    help="number of angles, odd counts include psi0 exactly")
    sp.add_argument("--phi", type=float, default=0.0, help="azimuthal angle")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    try:
        alpha_s, beta_s = args.bloch.split(",")
        bloch = (float(alpha_s), float(beta_s))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --bloch {args.bloch!r}: expected A,B")
    k = _parse_k(args.k, args.scaled)
    kernel = args.kernel
    if kernel is None:
        kernel = "plain" if args.command == "green-convergence" else \
            ("plain" if args.command == "grating-solve" else "modified")
    sched = args.a_schedule if hasattr(args, "a_schedule") else ()
    if isinstance(sched, str):
        sched = _parse_schedule(sched)
    cfg = ExperimentConfig(
        command=args.command, k=k, k_input=args.k, scaled=args.scaled,
        bloch=bloch, kernel=kernel, p=args.p, d=args.d, b_value=args.b_value,
        a_schedule=tuple(sched), fmt=args.fmt, out=args.out)
    for name in ("surface", "bc", "a", "n", "eta", "xi", "gmres_tol",
                 "psi0", "psi_span", "num_angles", "phi", "ref_a"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    return cfg


def _emit(cfg: ExperimentConfig, rows: list[dict], header: list[str],
          extra: dict, warning: str | None) -> None:
    if cfg.fmt == "csv":
        buf = io.StringIO()
        if warning:
            buf.write(f"# warning: {warning}\n")
        writer = csv.DictWriter(buf, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({h: row.get(h) for h in header})
        text = buf.getvalue()
    else:
        doc = {"schema": _SCHEMA, "config": cfg.as_metadata(), "rows": rows}
        doc.update(extra)
        if warning:
            doc["warning"] = warning
        text = json.dumps(doc, indent=2, default=str) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)


def _shift_config(cfg: ExperimentConfig) -> ShiftConfig | None:
    if cfg.kernel == "plain":
        return None
    return ShiftConfig(p=cfg.p, d=cfg.d, b_value=cfg.b_value)


def cmd_green_convergence(cfg: ExperimentConfig) -> int:
    qp = QuasiPeriodicity(k=cfg.k, d1=1.0, d2=1.0,
                          alpha=cfg.bloch[0], beta=cfg.bloch[1])
    warning = None
    if cfg.kernel == "plain":
        graz = wood_modes(qp, j_max=int(math.ceil(cfg.k / (2 * math.pi))) + 1,
                          grazing_tol=1e-8)
        if graz:
            names = ", ".join(f"({m.j},{m.l})" for m in graz)
            warning = (f"grazing modes {names} detected with the plain kernel; "
                       "expect no convergence")
    w = WindowProfile(x_dependent=True)
    pts = np.array([[x, y, z]
                    for x in (0.1, 0.45, 0.8)
                    for y in (0.15, 0.6)
                    for z in (0.25, 0.7, 1.3)])
    study = green_convergence_study(qp, w, cfg.a_schedule, pts, sc=_shift_config(cfg))
    rows = []
    aa = study.a_values
    for i, diff in enumerate(study.diffs):
        row = {"a": aa[i + 1], "diff": diff, "slope_estimate": None}
        if i >= 1 and study.diffs[i - 1] > 0 and diff > 0:
            row["slope_estimate"] = (math.log(diff) - math.log(study.diffs[i - 1])) \
                / (math.log(aa[i + 1]) - math.log(aa[i]))
        rows.append(row)
    extra = {"slope": study.slope_final_decade()}
    _emit(cfg, rows, ["a", "diff", "slope_estimate"], extra, warning)
    return 0


def cmd_grating_solve(cfg: ExperimentConfig) -> int:
    surface = _parse_surface(cfg.surface)
    wave = IncidentWave(k=cfg.k)
    if cfg.bloch != (0.0, 0.0):
        raise ConfigurationError(
            "grating-solve drives the Bloch vector from the incidence angles; "
            "--bloch must stay 0,0")
    cf = None
    if cfg.bc == "dirichlet" and (cfg.eta is not None or cfg.xi != 1.0):
        from .bie import CombinedFieldParams
        eta = cfg.eta if cfg.eta is not None else -cfg.k
        cf = CombinedFieldParams(eta=eta, xi=cfg.xi)
    res = solve_grating(surface, wave, N=cfg.n, a=cfg.a, kernel=cfg.kernel,
                        sc=_shift_config(cfg), cf=cf, bc=cfg.bc,
                        tol=cfg.gmres_tol)
    row = {
        "k": cfg.k, "N": cfg.n, "a": cfg.a,
        "p": cfg.p if cfg.kernel != "plain" else 0,
        "d": cfg.d if cfg.kernel != "plain" else 0.0,
        "iterations": res.report.iterations,
        "energy_error": res.energy_err,
        "coefficient_error": None,
    }
    if cfg.ref_a is not None:
        ref = solve_grating(surface, wave, N=cfg.n, a=cfg.ref_a, kernel=cfg.kernel,
                            sc=_shift_config(cfg), cf=cf, bc=cfg.bc,
                            tol=cfg.gmres_tol)
        row["coefficient_error"] = coefficient_error(res.spectrum, ref.spectrum)
    _emit(cfg, [row],
          ["k", "N", "a", "p", "d", "iterations", "energy_error", "coefficient_error"],
          {"converged": res.report.converged}, None)
    return 0 if res.report.converged else 1


def cmd_angle_sweep(cfg: ExperimentConfig) -> int:
    surface = _parse_surface(cfg.surface)
    psis = np.linspace(cfg.psi0 - cfg.psi_span, cfg.psi0 + cfg.psi_span,
                       cfg.num_angles)
    rows = angle_sweep(surface, cfg.k, cfg.phi, psis, N=cfg.n, a=cfg.a,
                       kernel=cfg.kernel, sc=_shift_config(cfg), bc=cfg.bc,
                       tol=cfg.gmres_tol)
    ok = all(r["converged"] for r in rows)
    _emit(cfg, rows,
          ["psi", "B00", "Bm1m1", "Bm1p1", "energy_error", "iterations",
           "converged", "wood", "error"],
          {"converged": ok}, None)
    return 0 if ok else 1


_COMMANDS = {
    "green-convergence": cmd_green_convergence,
    "grating-solve": cmd_grating_solve,
    "angle-sweep": cmd_angle_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    try:
        return _COMMANDS[cfg.command](cfg)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except (WoodAnomalyError, ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
