"""Command-line driver: thermal-bdf {free-vacuum, response, screen, box, check}.

A run is fixed by a YAML config file plus --seed; every output file starts
with the resolved config so results can be reproduced from the file alone.
Exit codes: 0 ok, 2 invalid configuration, 3 non-convergence, 4 failed
invariant or postcondition.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import box as box_mod
from .checks import run_all
from .errors import ConstraintViolation, ConvergenceError, QuadratureError
from .momentum import ModelParams
from .radial import ChargeDensitySpec, decay_coefficient, decay_bound_ratio, radial_inverse_fourier
from .response import (
    build_screening_kernels,
    debye_report,
    linear_screen,
    response_reduced,
    tabulate_response,
)
from .vacuum import solve_interacting_vacuum

log = logging.getLogger("thermal_bdf")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_INVARIANT = 0, 2, 3, 4

DEFAULTS = {
    "alpha": 0.3,
    "beta": 1.0,
    "lam": 1.0,
    "nu": {"kind": "gaussian", "Z": 1.0, "sigma": 1.0},
    "vacuum": {"mixing": 0.5, "tol": 1e-10, "max_iter": 500},
    "response": {"order": 16, "direct": True, "x_min": 5.0, "x_max": 50.0, "points": 451},
    "screen": {"x_min": 1.0, "x_max": 50.0, "points": 491},
    "box": {"L": 12.0, "mode": "reduced", "mixing": None, "tol": 1e-10, "max_iter": 3000},
    "check": {"inject_fault": False},
}

COMMANDS = ("free-vacuum", "response", "screen", "box", "check")


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path + key!r} must be a mapping")
            out[key] = _merge(base[key], val, path + key + ".")
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    command: str
    settings: dict
    out: Path
    seed: int = 0
    threads: int = 1
    params: ModelParams = field(init=False)

    def __post_init__(self):
        try:
            self.params = ModelParams(float(self.settings["alpha"]), float(self.settings["beta"]),
                                      float(self.settings["lam"]))
            self.params.require_subcritical()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")

    @classmethod
    def load(cls, command, path=None, out=".", seed=0, threads=1):
        raw = {}
        if path is not None:
            try:
                raw = yaml.safe_load(Path(path).read_text()) or {}
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            if not isinstance(raw, dict):
                raise ConfigError("config must be a mapping")
        return cls(command, _merge(DEFAULTS, raw), Path(out), int(seed), int(threads))

    def header(self) -> dict:
        return {"command": self.command, "seed": self.seed, "settings": self.settings}

    def nu(self) -> ChargeDensitySpec:
        s = self.settings["nu"]
        try:
            return ChargeDensitySpec(s["kind"], float(s["Z"]), float(s["sigma"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, cfg: RunConfig, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(cfg.header(), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, cfg: RunConfig, payload: dict):
    doc = {"config": cfg.header(), **_jsonable(payload)}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# --- commands -------------------------------------------------------------

def cmd_free_vacuum(cfg: RunConfig) -> int:
    s = cfg.settings["vacuum"]
    try:
        sol = solve_interacting_vacuum(cfg.params, mixing=float(s["mixing"]), tol=float(s["tol"]),
                                       max_iter=int(s["max_iter"]))
    except ConvergenceError as exc:
        write_json(cfg.out / "vacuum_diagnostics.json", cfg, {"converged": False, **exc.diagnostics})
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    g, d = sol.gamma, sol.dirac
    r = g.grid.nodes
    write_csv(cfg.out / "vacuum_profiles.csv", cfg, ["r", "f0", "f1", "d0", "d1"],
              zip(r, g.f0.values, g.f1.values, d.d0.values, d.d1.values))
    diag = {k: v for k, v in sol.diagnostics.items() if k != "history"}
    write_json(cfg.out / "vacuum_diagnostics.json", cfg, {"converged": True, **diag})
    return EXIT_INVARIANT if diag["violations"] else EXIT_OK


def _fd_endpoint_slope(params, h=1e-4):
    """Second-order one-sided difference of C at 2 Lambda."""
    k0 = 2.0 * params.lam

    def c(k):
        return sum(response_reduced(k, params)) if k < k0 else 0.0

    return (3.0 * c(k0) - 4.0 * c(k0 - h) + c(k0 - 2.0 * h)) / (2.0 * h)


def cmd_response(cfg: RunConfig) -> int:
    s = cfg.settings["response"]
    p = cfg.params
    rk = tabulate_response(p, order=int(s["order"]), with_direct=bool(s["direct"]), threads=cfg.threads)
    k = rk.grid.nodes
    direct = rk.C_direct if rk.C_direct is not None else np.full_like(k, np.nan)
    if p.alpha > 0:
        ker = build_screening_kernels(p, rk)
        b1, b2 = ker.b1hat.values, ker.b2hat.values
    else:
        b1, b2 = np.ones_like(k), 1.0 / k**2
    write_csv(cfg.out / "response.csv", cfg, ["k", "C1", "C2", "C", "C_direct", "b1hat", "b2hat"],
              zip(k, rk.C1, rk.C2, rk.C, direct, b1, b2))
    report = {
        "C0": rk.C0,
        "C_at_2lambda": float(sum(response_reduced(2.0 * p.lam, p))),
        "fd_slope_at_2lambda": _fd_endpoint_slope(p),
        "min_C1": float(rk.C1.min()),
        "min_C2": float(rk.C2.min()),
    }
    failures = []
    if rk.C_direct is not None:
        rel = np.abs(rk.C_direct - rk.C) / np.maximum(rk.C, 1e-300)
        report["max_cross_formula_rel_diff"] = float(rel.max())
        if rel.max() > 1e-6:
            failures.append("direct and reduced routes disagree")
    if min(rk.C1.min(), rk.C2.min()) < 0:
        failures.append("negative C1 or C2")
    if p.alpha > 0:
        x = np.linspace(float(s["x_min"]), float(s["x_max"]), int(s["points"]))
        cols = []
        for name, bhat in (("b1", ker.b1hat), ("b2", ker.b2hat)):
            coeffs = decay_coefficient(bhat)
            ratio = decay_bound_ratio(bhat, coeffs, x)
            report[f"{name}_envelope_ratio_max"] = float(ratio.max())
            cols.append(radial_inverse_fourier(bhat, x))
        write_csv(cfg.out / "kernels_x.csv", cfg, ["x", "b1", "b2", "x4_b1", "x4_b2"],
                  zip(x, cols[0], cols[1], x**4 * cols[0], x**4 * cols[1]))
    report["failures"] = failures
    write_json(cfg.out / "response_report.json", cfg, report)
    return EXIT_INVARIANT if failures else EXIT_OK


def cmd_screen(cfg: RunConfig) -> int:
    p = cfg.params
    if p.alpha <= 0:
        raise ConfigError("screen needs alpha > 0")
    s = cfg.settings["screen"]
    nu = cfg.nu()
    rk = tabulate_response(p, order=int(cfg.settings["response"]["order"]), with_direct=False, threads=cfg.threads)
    ker = build_screening_kernels(p, rk)
    x = np.linspace(float(s["x_min"]), float(s["x_max"]), int(s["points"]))
    res = linear_screen(nu, p, ker, x)
    rep = debye_report(res)
    write_csv(cfg.out / "screen.csv", cfg, ["x", "rho_tot", "V", "xV"], zip(x, res.rho_tot, res.V, x * res.V))
    payload = {
        "sum_rule": {"response_charge": res.response_charge, "external_charge": res.external_charge,
                     "ratio": res.response_charge / res.external_charge},
        "charge_integral": rep.charge_integral,
        "charge_mismatch": rep.charge_mismatch,
        "abs_charge_integral": rep.abs_charge_integral,
        "xV_ratio_50_to_1": rep.xV_ratio,
        "decay_exponent": rep.decay_exponent,
        "unscreened_tail_xV": rep.baseline_tail,
        "screened": rep.screened,
    }
    write_json(cfg.out / "screen_report.json", cfg, payload)
    print(f"charge sum rule: response/external = {payload['sum_rule']['ratio']:.15g}")
    return EXIT_OK


def cmd_box(cfg: RunConfig) -> int:
    s = cfg.settings["box"]
    p = cfg.params
    mode = s["mode"]
    if mode not in ("reduced", "full"):
        raise ConfigError("box.mode must be 'reduced' or 'full'")
    try:
        bcfg = box_mod.BoxConfig.build(float(s["L"]), p.lam)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    nu_spec = cfg.nu()
    nu = box_mod.lattice_density(nu_spec, bcfg)
    d, ok = box_mod.uniqueness_condition(p, nu_spec)
    write_json(cfg.out / "box_uniqueness.json", cfg, {"d": d, "satisfied": ok})
    try:
        res = box_mod.scf_solve(bcfg, p, nu, mode=mode, mixing=s["mixing"], tol=float(s["tol"]),
                                max_iter=int(s["max_iter"]), strict=False, uniqueness_nu=nu_spec)
    except ConvergenceError as exc:
        hist = exc.diagnostics.get("history", [])
        write_csv(cfg.out / "box_iterations.csv", cfg, ["iteration", "free_energy", "residual", "step"],
                  [(h["iteration"], h["free_energy"], h["residual"], h["step"]) for h in hist])
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    diag = res.diagnostics
    write_csv(cfg.out / "box_iterations.csv", cfg, ["iteration", "free_energy", "residual", "step"],
              [(h["iteration"], h["free_energy"], h["residual"], h["step"]) for h in diag["history"]])
    rho = res.density
    rows = []
    for k, idx in bcfg.shells():
        c = float(np.mean(rho.coeffs[idx].real))
        n = float(np.mean(nu.coeffs[idx].real))
        rows.append((k, len(idx), c, n, c / n if n else math.nan))
    write_csv(cfg.out / "box_shells.csv", cfg, ["k", "count", "c_k", "nu_k", "ratio"], rows)
    bounds = {k: v for k, v in diag.items() if k != "history"}
    bounds["charge"] = box_mod.charge_screening_check(res, nu)
    bounds["symmetry_error"] = box_mod.symmetry_error(rho)
    bounds["modes"] = bcfg.M
    write_json(cfg.out / "box_bounds.json", cfg, bounds)
    return EXIT_INVARIANT if diag["violations"] else EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    report = run_all(cfg.seed, inject_fault=bool(cfg.settings["check"]["inject_fault"]))
    write_json(cfg.out / "check.json", cfg, report)
    for r in report["suites"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']} worst={r['worst']:.3e} seed={r['seed']}")
    return EXIT_OK if report["passed"] else EXIT_INVARIANT


HANDLERS = {
    "free-vacuum": cmd_free_vacuum,
    "response": cmd_response,
    "screen": cmd_screen,
    "box": cmd_box,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermal-bdf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None, help="YAML run configuration")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        if name == "check":
            sp.add_argument("--inject-fault", action="store_true",
                            help="break the Klein constant on purpose (harness self-test)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.command, args.config, args.out, args.seed, args.threads)
        if getattr(args, "inject_fault", False):
            cfg.settings["check"]["inject_fault"] = True
        cfg.out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except ConstraintViolation as exc:
        log.error("%s: %s", exc, exc.violations)
        return EXIT_INVARIANT
    except QuadratureError as exc:
        log.error("quadrature failure: %s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
