"""Command-line driver: check, asymptotics, sweep, fit, report.

Every subcommand reads one YAML config and writes into the output directory.
Exit codes: 0 ok, 1 invariant violation, 2 numerical failure, 3 bad config
or missing inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .amplitude import AmplitudeError, amplitude_profile
from .config import ConfigError, RunConfig, load_config
from .darboux import InversionError, QuadratureError
from .eikonal import EikonalError, check_invariants, default_seal, solve_phi
from .field_model import FieldError, check_assumptions, well_coefficients
from .fitting import FitError, fit_gap
from .oscillator import OscillatorError
from .spectra import (SpectraError, expansion_candidates, extrapolated_pair, fit_expansion,
                      grid_for)

log = logging.getLogger("magwells")

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3

CHECK_FILE = "check.json"
ASYMPTOTICS_FILE = "asymptotics.json"
SWEEP_FILE = "sweep.json"
FIT_FILE = "fit.json"
REPORT_FILE = "report.json"


class InvariantViolation(RuntimeError):
    pass


class MissingInput(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# deterministic output

def _plain(obj):
    """JSON-ready copy: numpy scalars and arrays unwrapped, complex as [re, im],
    non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(float(obj.real)), _plain(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n")


def read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingInput(f"missing input {path}; run the producing subcommand first")
    return json.loads(path.read_text())


def write_csv(path: Path, columns: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    rows = zip(*(np.asarray(columns[n]).tolist() for n in names))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------------------
# subcommands

def cmd_check(cfg: RunConfig) -> int:
    f = cfg.field()
    report = check_assumptions(f)
    w = well_coefficients(f)
    payload = {"field": cfg.raw["field"], "field_params": vars(cfg.field_params),
               "eps": f.eps, "r_tilde": f.r_tilde, "c_u": f.c_u, "c_d": f.c_d,
               "d0": w["d0"], "d1": w["d1"], "curvatures": list(w["curvatures"]),
               **report.as_dict()}
    write_json(cfg.output_dir / CHECK_FILE, payload)
    for name, check in report.checks.items():
        status = "ok" if check.passed else "FAIL"
        print(f"{name:<28s} {status:<4s} margin {check.margin:+.3e} at "
              f"q1={complex(check.where[0]):.4g} q2={float(check.where[1]):.4g}")
    if not report.passed:
        log.error("assumptions violated: %s", ", ".join(report.failed()))
        return EXIT_INVARIANT
    return EXIT_OK


def _require_check(cfg: RunConfig) -> None:
    report = check_assumptions(cfg.field())
    if not report.passed:
        raise InvariantViolation(f"field assumptions violated: {', '.join(report.failed())}")


def run_asymptotics(cfg: RunConfig):
    f = cfg.field()
    seal = default_seal(f, cfg.seal.radius_fraction, cfg.seal.amplitude_fraction,
                        cfg.seal.strip_fraction)
    profile = solve_phi(f, seal, half_width=cfg.eikonal.half_width, spacing=cfg.eikonal.spacing)
    check_invariants(profile)
    amp = amplitude_profile(f, profile, cfg.amplitude)
    return profile, amp


def cmd_asymptotics(cfg: RunConfig) -> int:
    _require_check(cfg)
    profile, amp = run_asymptotics(cfg)
    f = cfg.field()
    summary = {"b0": f.b0, "S": profile.S, "phi_dd_cu": profile.ddphi_cu,
               "z2_closed": amp.z2_closed, "z2_transport": amp.z2, "c0": amp.c0,
               "const_check_spread": amp.diagnostics["const_spread"]}
    seal = profile.seal
    payload = {"summary": summary,
               "eikonal": dict(profile.diagnostics),
               "amplitude": dict(amp.diagnostics),
               "seal": {"center": seal.center, "radius": seal.radius, "amplitude": seal.amplitude}}
    write_json(cfg.output_dir / ASYMPTOTICS_FILE, payload)
    write_csv(cfg.output_dir / "eikonal_profile.csv", profile.to_columns())
    write_csv(cfg.output_dir / "amplitude_profile.csv", amp.to_columns())
    for key in sorted(summary):
        print(f"{key:<20s} {summary[key]!r}")
    return EXIT_OK


def _sweep_one(cfg: RunConfig, h: float) -> dict:
    f = cfg.field()
    sp = cfg.spectra
    start = time.perf_counter()
    try:
        pair = extrapolated_pair(f, h, grid_for(f, h, sp.spacing_factor, sp.width),
                                 factors=sp.refinement, gauge=sp.gauge, seed=cfg.seed,
                                 with_third=sp.with_third, tol=sp.solver_tol)
    except (SpectraError, np.linalg.LinAlgError) as exc:
        log.warning("h=%g failed: %s", h, exc)
        return {"h": h, "ok": False, "error": str(exc)}
    log.info("h=%g done in %.1fs", h, time.perf_counter() - start)
    return {"h": h, "ok": True, **pair.as_dict()}


def cmd_sweep(cfg: RunConfig, threads: int = 1) -> int:
    _require_check(cfg)
    h_list = list(cfg.spectra.h)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda h: _sweep_one(cfg, h), h_list))
    else:
        records = [_sweep_one(cfg, h) for h in h_list]
    records.sort(key=lambda r: -r["h"])
    ok = [r for r in records if r["ok"]]
    write_json(cfg.output_dir / SWEEP_FILE, {"seed": cfg.seed, "records": records})
    write_csv(cfg.output_dir / "sweep.csv", {
        "h": [r["h"] for r in ok],
        "lambda1": [r["lambda1"] for r in ok],
        "lambda2": [r["lambda2"] for r in ok],
        "gap": [r["gap"] for r in ok],
        "parity1": [r["parities"][0] for r in ok],
        "parity2": [r["parities"][1] for r in ok],
        "noise": [r["noise"] for r in ok],
        "lambda3": [r["lambda3"] for r in ok],
    })
    for r in records:
        if r["ok"]:
            print(f"h={r['h']:<8g} lambda1={r['lambda1']:.12g} gap={r['gap']:.6e} "
                  f"noise={r['noise']:.2e}")
        else:
            print(f"h={r['h']:<8g} FAILED {r['error']}")
    return EXIT_OK if len(ok) == len(records) else EXIT_NUMERICAL


def _usable_records(sweep: dict) -> list:
    records = [r for r in sweep.get("records", []) if r.get("ok")]
    if not records:
        raise MissingInput("sweep output holds no successful h values")
    return records


def gap_fit_from(cfg: RunConfig, sweep: dict, asymptotics: dict):
    records = [r for r in _usable_records(sweep) if r["h"] <= cfg.fit.h_max + 1e-12]
    summary = asymptotics["summary"]
    return fit_gap([r["h"] for r in records], [r["gap"] for r in records],
                   noise=[r["noise"] for r in records], window=cfg.fit.window,
                   S_pred=summary["S"], c0_pred=summary["c0"])


def expansion_fit_from(cfg: RunConfig, sweep: dict, full: bool = False):
    """Fit of the pair mean over [h_min, h_max], or over every usable h when full."""
    ex = cfg.expansion
    records = _usable_records(sweep)
    orders = ex.full_extra_orders if full else ex.extra_orders
    if not full:
        records = [r for r in records if ex.h_min - 1e-12 <= r["h"] <= ex.h_max + 1e-12]
    if len(records) < 3 + orders:
        raise FitError(f"expansion fit needs more h values (have {len(records)}, "
                       f"{orders} extra orders)")
    h = [r["h"] for r in records]
    mean = [0.5 * (r["lambda1"] + r["lambda2"]) for r in records]
    return fit_expansion(h, mean, cfg.field(), extra_orders=orders, max_residual=1e-3)


def cmd_fit(cfg: RunConfig) -> int:
    sweep = read_json(cfg.output_dir / SWEEP_FILE)
    asymptotics = read_json(cfg.output_dir / ASYMPTOTICS_FILE)
    gap = gap_fit_from(cfg, sweep, asymptotics)
    expansion = expansion_fit_from(cfg, sweep)
    full = expansion_fit_from(cfg, sweep, full=True)
    payload = {"gap_fit": gap.as_dict(), "expansion_fit": expansion.as_dict(),
               "expansion_fit_full": full.as_dict()}
    write_json(cfg.output_dir / FIT_FILE, payload)
    print(f"S_fit={gap.S_fit:.6g} (pred {gap.S_pred:.6g}, rel err {gap.S_rel_err:.3e})")
    print(f"c0_fit={gap.c0_fit:.6g} (pred {gap.c0_pred:.6g}, ratio {gap.c0_ratio:.4g})")
    print(f"p_hat={gap.p_hat:.4g} +- {gap.p_err:.2g}")
    print(f"c_lin={expansion.c_lin:.8g} c_quad={expansion.c_quad:.6g} closest {expansion.matches}")
    print(f"full range: c_lin={full.c_lin:.8g} c_quad={full.c_quad:.6g} closest {full.matches}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    out = cfg.output_dir
    check = read_json(out / CHECK_FILE)
    asymptotics = read_json(out / ASYMPTOTICS_FILE)
    sweep = read_json(out / SWEEP_FILE)
    fit = read_json(out / FIT_FILE)
    records = sweep.get("records", [])
    if not records:
        raise MissingInput("sweep output is empty")
    used = set(fit["gap_fit"]["h_used"])
    table = []
    for r in records:
        row = {"h": r["h"], "ok": r["ok"], "used_in_fit": r["h"] in used}
        if r["ok"]:
            row.update(lambda1=r["lambda1"], lambda2=r["lambda2"], gap=r["gap"],
                       noise=r["noise"], lambda3=r["lambda3"])
        else:
            row["error"] = r["error"]
        table.append(row)
    flagged = [r["h"] for r in records if not r["ok"]]
    payload = {"field": check["field_params"], "check_passed": check["passed"],
               "asymptotics": asymptotics["summary"],
               "gap_fit": fit["gap_fit"], "expansion_fit": fit["expansion_fit"],
               "expansion_fit_full": fit["expansion_fit_full"],
               "sweep": table, "failed_h": flagged, "complete": not flagged,
               "candidates": expansion_candidates(cfg.field())}
    write_json(out / REPORT_FILE, payload)
    ok = [r for r in records if r["ok"]]
    h = np.array([r["h"] for r in ok])
    gap = np.array([r["gap"] for r in ok])
    write_csv(out / "gap_plot.csv", {"inv_h": 1.0 / h, "log_scaled_gap": np.log(gap * h**-1.5),
                                     "h": h, "used_in_fit": [int(x in used) for x in h]})
    mean = np.array([0.5 * (r["lambda1"] + r["lambda2"]) for r in ok])
    b0 = check["field_params"]["b0"]
    write_csv(out / "expansion_plot.csv", {"h": h, "mean_level": mean,
                                           "reduced": (mean - b0 * h) / h**2})
    if flagged:
        print(f"report written with failed h values flagged: {flagged}")
    print(f"report written to {out / REPORT_FILE}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"check": cmd_check, "asymptotics": cmd_asymptotics, "sweep": cmd_sweep,
            "fit": cmd_fit, "report": cmd_report}

INVARIANT_ERRORS = (InvariantViolation, EikonalError, AmplitudeError)
NUMERICAL_ERRORS = (SpectraError, FitError, OscillatorError, QuadratureError, InversionError,
                    np.linalg.LinAlgError, FloatingPointError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magwells", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="parallel h tasks in sweep")
    parser.add_argument("--seed", type=int, default=None, help="eigensolver start-vector seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config).with_overrides(out=args.out, seed=args.seed)
        command = COMMANDS[args.command]
        if args.command == "sweep":
            return command(cfg, threads=args.threads)
        return command(cfg)
    except (ConfigError, FieldError, MissingInput) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except INVARIANT_ERRORS as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
