"""Command-line experiment runner.

Each subcommand resolves its parameters from built-in defaults, then an
optional ``key = value`` config file, then explicit flags, validates them and
writes one CSV.  The resolved parameters and the library version are echoed as
``#`` comment lines at the top of the file.  ``--workers`` and the output path
are left out of that echo so output bytes do not depend on them.

Output goes to ``--output``, else to ``$ABPERC_OUTPUT_DIR/<command>.csv``,
else to stdout.

Exit codes: 0 success, 2 invalid parameters, 3 bracket or insufficient-data
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, csvio
from .bounds import (critical_intensity, lower_bound_curve, upper_bound_constant,
                     upper_envelope)
from .estimators import (AnnulusSpec, BracketError, InsufficientDataError, estimate_ab_crossing,
                         estimate_one_type_crossing, estimate_pivotal_ratio_sweep, estimate_theta_n,
                         finite_difference_theta, mid_annulus_point, russo_pivotal_estimate,
                         threshold_lambda, threshold_mu)
from .geometry import Ball, Box, Purpose, Role, RngStream, sample_poisson
from .lemmas import LemmaConstants, geo1_check, geo2_check, search_constants
from .thinning import classify_useful

OUTPUT_DIR_ENV = "ABPERC_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_BRACKET, EXIT_IO = 0, 2, 3, 4

# params never echoed into the CSV header
_RUNTIME_KEYS = ("workers", "output", "config")


def float_list(text: str) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def bool_value(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (flags, type, help)
_PARAMS = {
    "d": (("--d",), int, "dimension"),
    "r": (("--r",), float, "edge radius"),
    "lam": (("--lambda",), float, "A intensity"),
    "lambda0": (("--lambda0",), float, "A intensity before thinning"),
    "mu": (("--mu",), float, "B intensity"),
    "p": (("--p",), float, "retention probability of useful points"),
    "q": (("--q",), float, "retention probability of useless points"),
    "n": (("--n",), int, "outer radius of the annulus"),
    "L": (("--L",), float, "box side"),
    "trials": (("--trials",), int, "Monte Carlo trials"),
    "target": (("--target",), float, "target crossing probability"),
    "lo": (("--lo",), float, "lower end of the bisection bracket"),
    "hi": (("--hi",), float, "upper end of the bisection bracket"),
    "tol": (("--tol",), float, "bracket width at which bisection stops"),
    "stop_on_overlap": (("--stop-on-overlap",), bool_value,
                        "stop once both endpoint CIs contain the target"),
    "h": (("--h",), float, "finite-difference step (adds finite-difference rows)"),
    "mu_grid": (("--mu-grid",), float_list, "comma-separated B intensities"),
    "x": (("--x",), float_list, "comma-separated coordinates"),
    "y": (("--y",), float_list, "comma-separated coordinates"),
    "R": (("--R",), float, "sphere radius"),
    "delta": (("--delta",), float, "clearance"),
    "R_grid": (("--R-grid",), float_list, "comma-separated R values"),
    "r_grid": (("--r-grid",), float_list, "comma-separated r values"),
    "delta_grid": (("--delta-grid",), float_list, "comma-separated delta values"),
    "samples": (("--samples",), int, "sampled pairs per grid point"),
    "window": (("--window",), float, "max |x - y| of sampled pairs"),
    "lemma": (("--lemma",), str, "construction searched: geo1 or geo2"),
    "curve": (("--curve",), str, "lower, upper or both"),
    "c": (("--c",), float, "constant of the lower bound"),
    "lambda_c_2r": (("--lambda-c-2r",), float, "critical intensity for edge length 2r"),
    "upper_constant": (("--upper-constant",), float, "override of the upper-envelope constant"),
    "shape": (("--shape",), str, "box or ball"),
    "size": (("--size",), float, "box side or ball radius"),
    "marked": (("--marked",), bool_value, "write the marked A configuration instead"),
    "seed": (("--seed",), int, "master seed"),
}

_SEED_WORKERS = {"seed": 0}

DEFAULTS = {
    "sample": {"d": 2, "lam": 1.0, "mu": 0.0, "shape": "box", "size": 10.0, "marked": False},
    "crossing": {"d": 2, "r": 1.0, "lam": 1.0, "L": 16.0, "trials": 1000},
    "ab-crossing": {"d": 2, "r": 0.5, "lam": 1.8, "mu": 20.0, "L": 20.0, "trials": 1000},
    "theta": {"d": 2, "lambda0": 2.0, "mu": 1.0, "p": 0.7, "q": 0.7, "n": 4, "trials": 1000},
    "threshold-lambda": {"d": 2, "r": 1.0, "L": 16.0, "target": 0.5, "lo": 0.5, "hi": 3.0,
                         "tol": 0.01, "trials": 1000, "stop_on_overlap": True},
    "threshold-mu": {"d": 2, "r": 0.5, "lam": 1.8, "L": 20.0, "target": 0.5, "lo": 1.0,
                     "hi": 400.0, "tol": 1.0, "trials": 400, "stop_on_overlap": True},
    "russo": {"d": 2, "lambda0": 2.0, "mu": 1.0, "p": 0.7, "q": 0.7, "n": 4, "trials": 1000,
              "h": None},
    "ratio": {"d": 2, "lambda0": 2.0, "mu_grid": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], "p": 0.7,
              "q": 0.7, "n": 4, "trials": 10000, "x": None},
    "lemma": {"mode": "search", "lemma": "geo1", "d": 2, "x": None, "y": None, "R": 100.0, "r": 0.005,
              "delta": 0.005, "R_grid": [100.0, 200.0, 400.0], "r_grid": [0.005, 0.01, 0.02],
              "delta_grid": [2e-4, 4e-4, 0.005, 0.01], "samples": 10000, "window": 3.0},
    "bounds": {"curve": "both", "c": 1.0, "delta_grid": [0.5, 0.25, 0.125], "d": 2, "r": 0.5,
               "lambda_c_2r": None, "upper_constant": None},
}
for _d in DEFAULTS.values():
    _d.update(_SEED_WORKERS)
del _d

HELP = {
    "sample": "sample A (and B) Poisson points",
    "crossing": "one-type box crossing probability",
    "ab-crossing": "AB box crossing probability",
    "theta": "annulus crossing probability of the thinned process",
    "threshold-lambda": "bisect the one-type crossing curve in lambda",
    "threshold-mu": "bisect the AB crossing curve in mu",
    "russo": "pivotal-count derivatives of theta_n",
    "ratio": "pivotal probability ratio over a mu grid",
    "lemma": "check or search the rerouting constructions",
    "bounds": "evaluate the mu_c bound curves",
}


@dataclass
class ExperimentSpec:
    command: str
    params: dict
    output: str | None = None
    workers: int = 1
    unknown: list = field(default_factory=list)


# ------------------------------------------------------------------ parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abperc", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"abperc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, defaults in DEFAULTS.items():
        sp = sub.add_parser(cmd, help=HELP[cmd])
        if cmd == "lemma":
            sp.add_argument("mode", choices=("geo1", "geo2", "search"))
        for name in defaults:
            if name == "mode":
                continue
            flags, typ, hlp = _PARAMS[name]
            sp.add_argument(*flags, dest=name, type=typ, default=None,
                            help=f"{hlp} (default: {_show(defaults[name])})")
        sp.add_argument("--config", default=None, help="key = value file; flags override it")
        sp.add_argument("--output", "-o", default=None,
                        help=f"CSV path (default: ${OUTPUT_DIR_ENV}/<command>.csv or stdout)")
        sp.add_argument("--workers", type=int, default=None, help="trial threads (default: 1)")
    return parser


def _show(v):
    if isinstance(v, list):
        return ",".join(csvio.format_value(x) for x in v)
    return v


def _config_aliases(command):
    aliases = {}
    for name in DEFAULTS[command]:
        aliases[name] = name
        if name in _PARAMS:
            for flag in _PARAMS[name][0]:
                aliases[flag.lstrip("-").replace("-", "_")] = name
    aliases["workers"] = "workers"
    return aliases


def read_config(path: str, command: str):
    """Parse a ``key = value`` file into ``(params, unknown_keys)``."""
    aliases = _config_aliases(command)
    params, unknown = {}, []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line is not key = value: {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            name = aliases.get(key.replace("-", "_"))
            if name is None:
                unknown.append(key)
                continue
            if name == "workers":
                params[name] = int(value)
            elif name == "mode":
                params[name] = value
            else:
                typ = _PARAMS[name][1]
                params[name] = None if value.lower() == "none" else typ(value)
    return params, unknown


def resolve(args: argparse.Namespace) -> ExperimentSpec:
    command = args.command
    params = dict(DEFAULTS[command])
    unknown = []
    workers = 1
    if args.config:
        cfg, unknown = read_config(args.config, command)
        workers = cfg.pop("workers", workers)
        params.update(cfg)
    for name in DEFAULTS[command]:
        v = getattr(args, name, None)
        if v is not None:
            params[name] = v
    if args.workers is not None:
        workers = args.workers
    return ExperimentSpec(command, params, args.output, workers, unknown)


# --------------------------------------------------------------- validation

def validate(spec: ExperimentSpec) -> list:
    """Violations of the subcommand's parameter constraints; empty iff runnable."""
    out = [f"{k}: unknown config key" for k in spec.unknown]
    if spec.command not in DEFAULTS:
        return out + [f"command: unknown subcommand {spec.command!r}"]
    p = spec.params
    cmd = spec.command

    def need(cond, msg):
        if not cond:
            out.append(msg)

    def finite(name):
        v = p.get(name)
        return isinstance(v, (int, float)) and math.isfinite(v)

    if not (isinstance(spec.workers, int) and spec.workers >= 1):
        out.append("workers: must be an integer >= 1")
    need(isinstance(p.get("seed"), int) and 0 <= p["seed"] < 2 ** 64, "seed: must be in [0, 2^64)")
    need(isinstance(p.get("d"), int) and p["d"] >= 1, "d: must be an integer >= 1")
    for name in ("lam", "lambda0", "mu"):
        if name in p:
            need(finite(name) and p[name] >= 0, f"{name}: must be finite and >= 0")
    for name in ("p", "q"):
        if name in p:
            if cmd in ("russo", "ratio"):
                need(finite(name) and 0 < p[name] < 1, f"{name}: must lie in (0, 1)")
            else:
                need(finite(name) and 0 <= p[name] <= 1, f"{name} ∈ [0,1]: got {p[name]}")
    if "trials" in p:
        need(isinstance(p["trials"], int) and p["trials"] >= 1, "trials: must be an integer >= 1")
    if "n" in p:
        need(isinstance(p["n"], int) and p["n"] >= 2, "n: annulus radius must be an integer >= 2")
    if "r" in p and cmd != "lemma":
        need(finite("r") and p["r"] > 0, "r: must be positive")
    if "L" in p and finite("L") and finite("r"):
        need(p["L"] > 4 * p["r"], f"L: box side must exceed 4r (L={p['L']}, r={p['r']})")
    if cmd.startswith("threshold"):
        need(finite("target") and 0 < p["target"] < 1, "target: must lie in (0, 1)")
        need(finite("lo") and finite("hi") and 0 <= p["lo"] < p["hi"], "lo, hi: need 0 <= lo < hi")
        need(finite("tol") and p["tol"] > 0, "tol: must be positive")
    if cmd == "russo" and p.get("h") is not None:
        h = p["h"]
        ok = finite("h") and h > 0 and all(0 < p[k] - h and p[k] + h < 1 for k in ("p", "q")
                                           if finite(k))
        need(ok, "h: must be positive with p +/- h and q +/- h inside (0, 1)")
    if cmd == "ratio":
        need(bool(p["mu_grid"]) and all(m >= 0 and math.isfinite(m) for m in p["mu_grid"]),
             "mu_grid: needs at least one finite mu >= 0")
        if p.get("x") is not None and isinstance(p.get("d"), int):
            need(len(p["x"]) == p["d"], "x: needs d coordinates")
            if isinstance(p.get("n"), int) and len(p["x"]) == p["d"]:
                need(math.hypot(*p["x"]) <= p["n"] + 1, "x: must lie in B_(n+1)")
    if cmd == "sample":
        need(p["shape"] in ("box", "ball"), "shape: must be box or ball")
        need(finite("size") and p["size"] > 0, "size: must be positive")
    if cmd == "lemma":
        need(p["mode"] in ("geo1", "geo2", "search"), "mode: must be geo1, geo2 or search")
        need(isinstance(p.get("d"), int) and p["d"] >= 2, "d: constructions need d >= 2")
        if p["mode"] == "search":
            need(p["lemma"] in ("geo1", "geo2"), "lemma: must be geo1 or geo2")
            need(isinstance(p["samples"], int) and p["samples"] >= 1, "samples: must be >= 1")
            need(finite("window") and p["window"] > 1, "window: must exceed 1")
            for name in ("R_grid", "r_grid", "delta_grid"):
                need(bool(p[name]), f"{name}: must be non-empty")
            for R in p["R_grid"]:
                for r in p["r_grid"]:
                    for dl in p["delta_grid"]:
                        try:
                            LemmaConstants(R, r, dl)
                        except ValueError as exc:
                            out.append(f"grid point (R={R}, r={r}, delta={dl}): {exc}")
        else:
            try:
                LemmaConstants(p["R"], p["r"], p["delta"])
            except (TypeError, ValueError) as exc:
                out.append(f"R, r, delta: {exc}")
            for name in ("x", "y"):
                need(p.get(name) is not None and len(p[name]) == p.get("d"),
                     f"{name}: needs d comma-separated coordinates")
    if cmd == "bounds":
        need(p["curve"] in ("lower", "upper", "both"), "curve: must be lower, upper or both")
        need(finite("c") and p["c"] > 0, "c: must be positive")
        need(bool(p["delta_grid"]) and all(v > 0 for v in p["delta_grid"]),
             "delta_grid: values must be positive")
        need(finite("r") and p["r"] > 0, "r: must be positive")
        if p.get("lambda_c_2r") is None and p.get("upper_constant") is None and p["curve"] != "lower":
            need(p.get("d") in (2, 3), "lambda_c_2r: no reference value for this d; pass it")
    return out


# -------------------------------------------------------------- execution

def _result_row(exp, p, est, *, r=None, lam=None, mu=None, pp=None, qq=None, n_or_L=None):
    return [exp, p["d"], r, lam, mu, pp, qq, n_or_L, est.trials, p["seed"], est.p_hat,
            est.std_err, est.ci_low, est.ci_high]


def _run_sample(p, workers):
    d, seed = p["d"], p["seed"]
    region = Box.cube(p["size"], d) if p["shape"] == "box" else Ball(np.zeros(d), p["size"])
    A = sample_poisson(p["lam"], region, RngStream(seed, Purpose.A_POINTS))
    B = sample_poisson(p["mu"], region.enlarged(0.5), RngStream(seed, Purpose.B_POINTS), Role.B)
    if p["marked"]:
        marked = classify_useful(A, B, stream=RngStream(seed, Purpose.THINNING))
        return csvio.marked_columns(d), csvio.marked_rows(marked)
    return csvio.point_columns(d), csvio.points_rows(A, B)


def _run_threshold(cmd, p, workers):
    common = dict(d=p["d"], workers=workers, stop_on_overlap=p["stop_on_overlap"])
    args = (p["target"], p["lo"], p["hi"], p["tol"], p["trials"], p["seed"])
    if cmd == "threshold-lambda":
        res = threshold_lambda(p["r"], p["L"], *args, **common)
        lam, mu = None, None
    else:
        res = threshold_mu(p["lam"], p["r"], p["L"], *args, **common)
        lam, mu = p["lam"], None
    rows = []
    lo, hi = p["lo"], p["hi"]
    for step, (x, est) in enumerate(res.trace):
        if step >= 2:
            if est.p_hat < p["target"]:
                lo = x
            else:
                hi = x
        last = step == len(res.trace) - 1
        rows.append([cmd, p["d"], p["r"], lam, mu, p["L"], p["trials"], p["seed"], p["target"],
                     step, x, est.p_hat, est.std_err, est.ci_low, est.ci_high, lo, hi,
                     res.conclusive if last else None])
    return csvio.THRESHOLD_COLUMNS, rows


def execute(spec: ExperimentSpec):
    """Run a validated spec; returns ``(columns, rows)``."""
    cmd, p, w = spec.command, spec.params, spec.workers
    if cmd == "sample":
        return _run_sample(p, w)
    if cmd == "crossing":
        est = estimate_one_type_crossing(p["lam"], p["r"], p["L"], p["trials"], p["seed"],
                                         d=p["d"], workers=w)
        return csvio.RESULT_COLUMNS, [_result_row(cmd, p, est, r=p["r"], lam=p["lam"],
                                                  n_or_L=p["L"])]
    if cmd == "ab-crossing":
        est = estimate_ab_crossing(p["lam"], p["mu"], p["r"], p["L"], p["trials"], p["seed"],
                                   d=p["d"], workers=w)
        return csvio.RESULT_COLUMNS, [_result_row(cmd, p, est, r=p["r"], lam=p["lam"],
                                                  mu=p["mu"], n_or_L=p["L"])]
    if cmd == "theta":
        est = estimate_theta_n(p["lambda0"], p["mu"], p["p"], p["q"], AnnulusSpec(p["n"]),
                               p["trials"], p["seed"], d=p["d"], workers=w)
        return csvio.RESULT_COLUMNS, [_result_row(cmd, p, est, r=1.0, lam=p["lambda0"],
                                                  mu=p["mu"], pp=p["p"], qq=p["q"],
                                                  n_or_L=p["n"])]
    if cmd.startswith("threshold"):
        return _run_threshold(cmd, p, w)
    if cmd == "russo":
        head = [cmd, p["d"], p["lambda0"], p["mu"], p["p"], p["q"], p["n"], p["trials"], p["seed"]]
        spec_ = AnnulusSpec(p["n"])
        est = russo_pivotal_estimate(p["lambda0"], p["mu"], p["p"], p["q"], spec_, p["trials"],
                                     p["seed"], d=p["d"], workers=w)
        rows = [head + ["p", "pivotal", est.d_dp, est.std_err_p],
                head + ["q", "pivotal", est.d_dq, est.std_err_q]]
        if p.get("h") is not None:
            fd = finite_difference_theta(p["lambda0"], p["mu"], p["p"], p["q"], p["h"], spec_,
                                         p["trials"], p["seed"], d=p["d"], workers=w)
            rows += [head + ["p", "finite-difference", fd.d_dp, fd.std_err_p],
                     head + ["q", "finite-difference", fd.d_dq, fd.std_err_q]]
        return csvio.DERIVATIVE_COLUMNS, rows
    if cmd == "ratio":
        spec_ = AnnulusSpec(p["n"])
        x = tuple(p["x"]) if p.get("x") is not None else mid_annulus_point(spec_, p["d"])
        ests = estimate_pivotal_ratio_sweep(x, p["lambda0"], p["mu_grid"], p["p"], p["q"], spec_,
                                            p["trials"], p["seed"], d=p["d"], workers=w)
        rows = [[cmd, p["d"], p["lambda0"], mu, p["p"], p["q"], p["n"], p["trials"], p["seed"],
                 *x, e.num_hat, e.den_hat, e.ratio, e.std_err, e.degenerate]
                for mu, e in zip(p["mu_grid"], ests)]
        return csvio.ratio_columns(p["d"]), rows
    if cmd == "lemma":
        return _run_lemma(p, w)
    if cmd == "bounds":
        return _run_bounds(p)
    raise ValueError(f"unknown subcommand {cmd!r}")


def _run_lemma(p, workers):
    if p["mode"] == "search":
        grid = {"R": p["R_grid"], "r": p["r_grid"], "delta": p["delta_grid"]}
        rep = search_constants(p["d"], p["lemma"], grid,
                               p["samples"], p["seed"], window=p["window"], workers=workers)
        rows = [[row.R, row.r, row.delta, row.min_margin, row.worst_item, row.samples]
                for row in rep.rows]
        return csvio.LEMMA_SEARCH_COLUMNS, rows
    consts = LemmaConstants(p["R"], p["r"], p["delta"])
    check = geo1_check if p["mode"] == "geo1" else geo2_check
    res = check(np.array(p["x"]), np.array(p["y"]), consts)
    rows = [[p["mode"], p["R"], p["r"], p["delta"], item, m, m >= 0]
            for item, m in res.item_margins.items()]
    return csvio.LEMMA_CHECK_COLUMNS, rows


def _run_bounds(p):
    d, r = p["d"], p["r"]
    rows = []
    want_lower = p["curve"] in ("lower", "both")
    want_upper = p["curve"] in ("upper", "both")
    const = None
    if want_upper:
        const = p.get("upper_constant")
        if const is None:
            lam = p.get("lambda_c_2r") or critical_intensity(d, 2 * r)
            const = upper_bound_constant(lam, r, d)
    for delta in p["delta_grid"]:
        rows.append([delta,
                     lower_bound_curve(p["c"], delta) if want_lower else None,
                     upper_envelope(delta, const, d) if want_upper else None])
    return csvio.BOUND_COLUMNS, rows


def header_lines(spec: ExperimentSpec) -> list:
    lines = [f"abperc {__version__}", f"command = {spec.command}"]
    for key in sorted(spec.params):
        if key in _RUNTIME_KEYS:
            continue
        v = spec.params[key]
        lines.append(f"{key} = {_show(v) if isinstance(v, list) else csvio.format_value(v)}")
    return lines


def output_path(spec: ExperimentSpec):
    if spec.output:
        return spec.output
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base:
        name = spec.command + (f"-{spec.params['mode']}" if spec.command == "lemma" else "")
        return os.path.join(base, f"{name}.csv")
    return None


def run(spec: ExperimentSpec, stdout=None, stderr=None) -> int:
    """Validate, execute and write ``spec``; returns the process exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    problems = validate(spec)
    if problems:
        for msg in problems:
            print(f"abperc: invalid parameter: {msg}", file=stderr)
        return EXIT_INVALID
    try:
        columns, rows = execute(spec)
    except (BracketError, InsufficientDataError) as exc:
        print(f"abperc: {exc}", file=stderr)
        return EXIT_BRACKET
    except ValueError as exc:
        print(f"abperc: invalid parameter: {exc}", file=stderr)
        return EXIT_INVALID
    text = csvio.render(columns, rows, header_lines(spec))
    path = output_path(spec)
    try:
        if path is None or path == "-":
            stdout.write(text)
        else:
            with open(path, "w", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        print(f"abperc: cannot write output: {exc}", file=stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = resolve(args)
    except OSError as exc:
        print(f"abperc: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"abperc: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
