"""
Command-line front end.

Configuration is resolved in layers: built-in defaults, then the top level
of an optional YAML file, then the file's section named after the command,
then explicit flags.  The resolved configuration and package version are
embedded in every JSON summary.

Exit status: 0 success, 2 validation error, 3 numerical-contract failure,
4 I/O error.  Failures also print a one-line JSON error record on stderr.
"""

import argparse
import copy
import json
import math
import os
import sys

import numpy as np
import yaml

from . import __version__
from .numkernels import DEFAULT_SEED, NumericalContractError, Tolerance
from .operators import (
    Kind,
    ModeSpace,
    assemble_A,
    assemble_L,
    assemble_Lambda,
    velocity_profile,
    write_banded,
)
from .pseudospectrum import (
    EnvelopeParams,
    GridSpec,
    coercivity_scan,
    envelope_G,
    fit_envelope_constant,
    sweep,
)
from .records import atomic_write, write_csv, write_json
from .semigroup import (
    TSpec,
    decay_rate,
    propagator_curve,
    resolvent_identity_check,
    scaling_study,
    transient_study,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class ValidationError(ValueError):
    pass


COMMON = {
    "out": "results",
    "tolerance": 1e-12,
    "kappa": 1.0 / 16.0,
    "c_cap": 10.0,
    "seed": DEFAULT_SEED,
    "grid": {
        "base_points": 501,
        "base_max": 1.25,
        "tail_points": 24,
        "tail_max": 8.0,
        "edge_points": 33,
        "edge_width": 4.0,
        "peak_rtol": 1e-3,
        "psi_rtol": 1e-6,
        "max_doublings": 4,
        "n_hi": None,
    },
    "time": {
        "points": 40,
        "t_min_factor": 0.01,
        "target": 1e-8,
        "rtol": 1e-6,
        "max_doublings": 4,
        "n_hi": None,
        "n_hi_factor": 4.0,
        "verify": True,
    },
}

COMMANDS = {
    "assemble": {"m": 1, "n_hi": 16, "alpha": 0.0, "kind": "FULL"},
    "sweep": {"alpha": 1e3, "m": 1},
    "psbound": {"alphas": [1e2, 1e3, 1e4], "ms": [1, 2, 3, 8]},
    "coercivity": {
        "ms": [1, 2, 3],
        "mus": [1.05, 1.1, 1.5, 2.0, 0.0, 0.5, -0.5, 0.9, -0.9, 0.99, -0.99],
        "alpha": 1e4,
        "n_hi": 64,
        "rtol": 1e-6,
        "max_n_hi": 131072,
    },
    "semigroup": {"alpha": 1e3, "m": 1},
    "scaling": {
        "alphas": [1e2, 1e3, 1e4, 1e5],
        "ms": [1, 2, 3, 4, 5, 6, 7, 8],
        "m_fixed": 1,
        "alpha_fixed": 1e4,
        "decay_alpha_max": 1e4,
    },
    "transient": {"alphas": [1e3, 1e4, 1e5], "m": 1},
    "identity": {"alpha": 10.0, "m": 1, "zeta": [1.0, 1.0], "trials": 20, "n_hi": None},
    "velocity": {"n": 2, "a": 1.0, "points": 181, "pole_limit": True},
}


def defaults(command):
    cfg = copy.deepcopy(COMMON)
    cfg.update(copy.deepcopy(COMMANDS[command]))
    return cfg


def _merge(base, extra, where):
    for k, v in extra.items():
        if k not in base:
            raise ValidationError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ValidationError(f"config key {where}{k!r} must be a mapping")
            _merge(base[k], v, f"{where}{k}.")
        else:
            base[k] = v


def resolve_config(command, path=None, overrides=None):
    """Layer defaults, the YAML file and flag overrides into one mapping."""
    cfg = defaults(command)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a mapping")
        top = {k: v for k, v in data.items() if k not in COMMANDS}
        _merge(cfg, {k: v for k, v in top.items() if k in COMMON}, "")
        stray = set(top) - set(COMMON)
        if stray:
            raise ValidationError(f"unknown top-level config keys {sorted(stray)}")
        section = data.get(command) or {}
        if not isinstance(section, dict):
            raise ValidationError(f"section {command!r} must be a mapping")
        _merge(cfg, section, f"{command}.")
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = val
    validate(command, cfg)
    return cfg


def _nonzero(name, v):
    if v == 0:
        raise ValidationError(f"{name} must be nonzero")


def validate(command, cfg):
    try:
        Tolerance(float(cfg["tolerance"]))
        EnvelopeParams(float(cfg["kappa"]))
        GridSpec(**cfg["grid"])
        TSpec(**cfg["time"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    if float(cfg["c_cap"]) <= 0:
        raise ValidationError("c_cap must be positive")
    for key in ("m", "m_fixed"):
        if key in cfg:
            _nonzero(key, int(cfg[key]))
    for v in cfg.get("ms", []):
        _nonzero("m", int(v))
    if command in ("sweep", "psbound", "scaling", "transient"):
        for v in cfg.get("alphas", [cfg.get("alpha", 1.0)]):
            _nonzero("alpha", float(v))
    if command == "scaling":
        _nonzero("alpha_fixed", float(cfg["alpha_fixed"]))
        if len(cfg["alphas"]) < 2 or len(cfg["ms"]) < 2:
            raise ValidationError("scaling needs at least two alphas and two m values")
    if command == "transient":
        if abs(int(cfg["m"])) not in (1, 2):
            raise ValidationError("transient needs |m| in {1, 2}")
        if any(abs(float(a)) <= 4 for a in cfg["alphas"]):
            raise ValidationError("transient needs |alpha| > 4")
    if command == "velocity" and int(cfg["n"]) < 1:
        raise ValidationError("velocity needs n >= 1")
    if command == "assemble":
        try:
            ModeSpace(int(cfg["m"]), int(cfg["n_hi"]), Kind(cfg["kind"]))
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    if command == "identity":
        z = complex(*cfg["zeta"])
        if z.real < 0 or z == -4:
            raise ValidationError("zeta must have nonnegative real part")


def _summary(cfg, command, **payload):
    return {"command": command, "version": __version__, "config": cfg, **payload}


def _tag(x):
    return f"{float(x):g}".replace("+", "")


def _sweep_rows(res, params):
    g = envelope_G(res.alpha, res.m, res.mu_grid, params)
    lam = res.mu_grid * res.alpha * res.m
    return [
        {"alpha": res.alpha, "m": res.m, "mu": mu, "lambda": l, "resolvent_norm": nrm,
         "envelope_G": gv, "ratio": nrm / gv}
        for mu, l, nrm, gv in zip(res.mu_grid, lam, res.norms, g)
    ]


def _curve_rows(curve):
    return [
        {"alpha": curve.alpha, "m": curve.m, "t": t, "qq_norm": q, "pq_norm": p, "pp_residual": r}
        for t, q, p, r in zip(curve.t_grid, curve.qq_norms, curve.pq_norms, curve.pp_residuals)
    ]


def cmd_assemble(cfg):
    space = ModeSpace(int(cfg["m"]), int(cfg["n_hi"]), Kind(cfg["kind"]))
    out = cfg["out"]
    files = {}
    for name, op in (("A", assemble_A(space)), ("Lambda", assemble_Lambda(space)),
                     ("L", assemble_L(space, float(cfg["alpha"])))):
        path = os.path.join(out, f"{name}.banded")
        atomic_write(path, write_banded(op))
        files[name] = os.path.basename(path)
    header = {"m": space.m, "n_lo": space.n_lo, "n_hi": space.n_hi, "kind": space.kind.value,
              "alpha": float(cfg["alpha"]), "files": files}
    write_json(os.path.join(out, "assemble.json"), _summary(cfg, "assemble", header=header))
    return header


def _grid(cfg):
    return GridSpec(**cfg["grid"])


def _tspec(cfg):
    return TSpec(**cfg["time"])


def _run_sweep(cfg, alpha, m):
    params = EnvelopeParams(float(cfg["kappa"]))
    res = sweep(float(alpha), int(m), _grid(cfg), Tolerance(float(cfg["tolerance"])))
    c_star = fit_envelope_constant(res, params)
    return res, c_star, _sweep_rows(res, params)


def cmd_sweep(cfg):
    res, c_star, rows = _run_sweep(cfg, cfg["alpha"], cfg["m"])
    out = cfg["out"]
    write_csv(os.path.join(out, "sweep.csv"), "sweep", rows)
    summary = dict(res.summary(), C_star=c_star, psi_history=res.psi_history)
    write_json(os.path.join(out, "sweep.json"), _summary(cfg, "sweep", result=summary))
    return summary


def cmd_psbound(cfg):
    out = cfg["out"]
    table = []
    for alpha in cfg["alphas"]:
        for m in cfg["ms"]:
            res, c_star, rows = _run_sweep(cfg, alpha, m)
            write_csv(os.path.join(out, "sweeps", f"sweep_alpha{_tag(alpha)}_m{int(m)}.csv"), "sweep", rows)
            table.append(dict(res.summary(), C_star=c_star))
    write_csv(os.path.join(out, "psbound.csv"), "psbound", table)
    cs = [r["C_star"] for r in table]
    stats = {"C_star_min": min(cs), "C_star_max": max(cs), "C_star_spread": max(cs) / min(cs),
             "all_converged": all(r["converged"] for r in table)}
    write_json(os.path.join(out, "psbound.json"), _summary(cfg, "psbound", results=table, stats=stats))
    return stats


def cmd_coercivity(cfg):
    params = EnvelopeParams(float(cfg["kappa"]))
    tol = Tolerance(float(cfg["tolerance"]))
    rows, per_m = [], {}
    for m in cfg["ms"]:
        recs = coercivity_scan(int(m), [float(x) for x in cfg["mus"]], int(cfg["n_hi"]), params,
                               alpha=float(cfg["alpha"]), rtol=float(cfg["rtol"]),
                               max_n_hi=int(cfg["max_n_hi"]), tol=tol)
        rows.extend(r.as_dict() for r in recs)
        hi = [r.ratio_high for r in recs if abs(r.mu) > 1]
        lo = [r.c_combined for r in recs if abs(r.mu) <= 1]
        b3 = [r.c_b3 for r in recs]
        per_m[str(int(m))] = {
            "ratio_high_min": min(hi) if hi else None,
            "ratio_high_spread": max(hi) / min(hi) if hi else None,
            "c_combined_min": min(lo) if lo else None,
            "c_combined_spread": max(lo) / min(lo) if lo else None,
            "c_b3_min": min(b3),
            "c_b3_spread": max(b3) / min(b3),
            "all_converged": all(r.converged for r in recs),
        }
    write_csv(os.path.join(cfg["out"], "coercivity.csv"), "coercivity", rows)
    write_json(os.path.join(cfg["out"], "coercivity.json"),
               _summary(cfg, "coercivity", records=rows, per_m=per_m))
    return per_m


def cmd_semigroup(cfg):
    curve = propagator_curve(float(cfg["alpha"]), int(cfg["m"]), _tspec(cfg),
                             tol=Tolerance(max(float(cfg["tolerance"]), 1e-10)))
    est = decay_rate(curve, float(cfg["c_cap"]))
    write_csv(os.path.join(cfg["out"], "curve.csv"), "curve", _curve_rows(curve))
    result = {"alpha": curve.alpha, "m": curve.m, "sigma": est.sigma, "c_cap": est.c_cap,
              "achieved_prefactor": est.achieved_prefactor, "t_range": list(est.t_range),
              "valid": est.valid, "note": est.note, "pp_check": curve.pp_check,
              "n_hi_used": curve.n_hi_used, "converged": curve.converged}
    write_json(os.path.join(cfg["out"], "semigroup.json"), _summary(cfg, "semigroup", result=result))
    return result


def cmd_scaling(cfg):
    res = scaling_study(cfg["alphas"], cfg["ms"], m_fixed=int(cfg["m_fixed"]),
                        alpha_fixed=float(cfg["alpha_fixed"]),
                        decay_alpha_max=float(cfg["decay_alpha_max"]), c_cap=float(cfg["c_cap"]),
                        t_spec=_tspec(cfg), grid_spec=_grid(cfg), return_curves=True)
    out = cfg["out"]
    rows = []
    for r in res["rows"]:
        rows.append({"alpha": r["alpha"], "m": r["m"], "psi": r["psi"], "sigma": r.get("sigma", math.nan),
                     "sigma_over_psi": r.get("sigma_over_psi", math.nan),
                     "psi_normalised": r["psi"] / (abs(r["alpha"]) ** 0.5 * abs(r["m"]) ** (2 / 3))})
    for curve in res.pop("curves"):
        write_csv(os.path.join(out, "curves", f"curve_alpha{_tag(curve.alpha)}_m{curve.m}.csv"), "curve",
                  _curve_rows(curve))
    write_csv(os.path.join(out, "scaling.csv"), "scaling", rows)
    write_json(os.path.join(out, "scaling.json"), _summary(cfg, "scaling", **res))
    return res


def cmd_transient(cfg):
    res = transient_study(cfg["alphas"], int(cfg["m"]), _tspec(cfg), return_curves=True)
    out = cfg["out"]
    for curve in res.pop("curves"):
        write_csv(os.path.join(out, "curves", f"curve_alpha{_tag(curve.alpha)}_m{curve.m}.csv"), "curve",
                  _curve_rows(curve))
    write_csv(os.path.join(out, "transient.csv"), "transient", res["rows"])
    write_json(os.path.join(out, "transient.json"), _summary(cfg, "transient", **res))
    return res


def cmd_identity(cfg):
    z = complex(*cfg["zeta"])
    resid = resolvent_identity_check(float(cfg["alpha"]), int(cfg["m"]), z, int(cfg["trials"]),
                                     cfg["n_hi"], int(cfg["seed"]))
    result = {"alpha": float(cfg["alpha"]), "m": int(cfg["m"]), "zeta": [z.real, z.imag],
              "max_relative_residual": resid}
    write_json(os.path.join(cfg["out"], "identity.json"), _summary(cfg, "identity", result=result))
    return result


def cmd_velocity(cfg):
    n, a = int(cfg["n"]), float(cfg["a"])
    pole = bool(cfg["pole_limit"])
    theta = np.linspace(0.0, np.pi, int(cfg["points"]))
    if not pole:
        theta = theta[1:-1]
    u = velocity_profile(n, a, theta, pole_limit=pole)
    rows = [{"n": n, "a": a, "theta": t, "u_phi": v} for t, v in zip(theta, u)]
    write_csv(os.path.join(cfg["out"], "velocity.csv"), "velocity", rows)
    odd = float(np.max(np.abs(u + u[::-1])))
    write_json(os.path.join(cfg["out"], "velocity.json"),
               _summary(cfg, "velocity", result={"n": n, "a": a, "max_odd_defect": odd}))
    return {"max_odd_defect": odd}


HANDLERS = {
    "assemble": cmd_assemble,
    "sweep": cmd_sweep,
    "psbound": cmd_psbound,
    "coercivity": cmd_coercivity,
    "semigroup": cmd_semigroup,
    "scaling": cmd_scaling,
    "transient": cmd_transient,
    "identity": cmd_identity,
    "velocity": cmd_velocity,
}

# flag name -> (config key, argparse kwargs)
FLAGS = {
    "assemble": {"m": dict(type=int), "n-hi": dict(type=int), "alpha": dict(type=float),
                 "kind": dict(choices=["FULL", "REDUCED"])},
    "sweep": {"alpha": dict(type=float), "m": dict(type=int)},
    "psbound": {"alphas": dict(type=float, nargs="+"), "ms": dict(type=int, nargs="+")},
    "coercivity": {"ms": dict(type=int, nargs="+"), "mus": dict(type=float, nargs="+"),
                   "alpha": dict(type=float), "n-hi": dict(type=int), "rtol": dict(type=float),
                   "max-n-hi": dict(type=int)},
    "semigroup": {"alpha": dict(type=float), "m": dict(type=int)},
    "scaling": {"alphas": dict(type=float, nargs="+"), "ms": dict(type=int, nargs="+"),
                "m-fixed": dict(type=int), "alpha-fixed": dict(type=float),
                "decay-alpha-max": dict(type=float)},
    "transient": {"alphas": dict(type=float, nargs="+"), "m": dict(type=int)},
    "identity": {"alpha": dict(type=float), "m": dict(type=int), "zeta": dict(type=float, nargs=2),
                 "trials": dict(type=int), "n-hi": dict(type=int)},
    "velocity": {"n": dict(type=int), "a": dict(type=float), "points": dict(type=int)},
}
COMMON_FLAGS = {"out": dict(), "tolerance": dict(type=float), "kappa": dict(type=float),
                "c-cap": dict(type=float), "seed": dict(type=int)}


def build_parser():
    p = argparse.ArgumentParser(prog="kolmosphere", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        sp_ = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "") + " study")
        sp_.add_argument("--config", help="YAML configuration file")
        sp_.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override any config key, dotted for nested keys (value parsed as YAML)")
        for flag, kw in {**COMMON_FLAGS, **FLAGS[name]}.items():
            sp_.add_argument(f"--{flag}", dest=flag.replace("-", "_"), default=None, **kw)
    return p


def _overrides(ns, command):
    out = {}
    for flag in {**COMMON_FLAGS, **FLAGS[command]}:
        key = flag.replace("-", "_")
        out[key] = getattr(ns, key)
    for item in ns.set:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _check_override_keys(command, overrides):
    base = defaults(command)
    for key, val in overrides.items():
        if val is None:
            continue
        node = base
        for p in key.split("."):
            if not isinstance(node, dict) or p not in node:
                raise ValidationError(f"unknown config key {key!r}")
            node = node[p]


def _fail(code, exc):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        over = _overrides(ns, ns.command)
        _check_override_keys(ns.command, over)
        cfg = resolve_config(ns.command, ns.config, over)
        HANDLERS[ns.command](cfg)
    except NumericalContractError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except np.linalg.LinAlgError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except (ValueError, TypeError, KeyError) as exc:
        return _fail(EXIT_VALIDATION, exc)
    print(json.dumps({"command": ns.command, "out": cfg["out"], "status": "ok"}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
