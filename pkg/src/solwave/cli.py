"""``solwave`` command line: configs in, CSV and JSON reports out.

Every subcommand reads one TOML config (see ``docs/formats.md``).  Outputs go
to the config's ``output`` directory (``SOLWAVE_OUTPUT`` overrides it) and
are written atomically.  Exit codes: 0 success, 1 error, 2 a ``--check``
threshold was violated.
"""
from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
import tempfile
import warnings

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics, evolve, linops, modulation, resolvent, spectrum
from .model import (FieldState, Grid, NonlinearCoupling, SolwaveError, mu_omega,
                    solitary_from_C, solitary_from_omega)


class ConfigError(SolwaveError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# config

_TOP = ("coupling", "C", "omega", "theta0", "beta", "seed", "output", "grid", "time",
        "perturbation", "fit", "spectrum", "resolvent", "stability", "check")
_SECTIONS = {
    "grid": ("L", "n"),
    "time": ("t_end", "dt", "snapshots", "snapshot_every", "stride"),
    "perturbation": ("kind", "amplitude", "width", "center"),
    "fit": ("window",),
    "spectrum": ("region", "density"),
    "resolvent": ("lambda", "y"),
    "stability": ("T_ref", "remainder_window"),
}
_KINDS = ("gaussian", "odd-bump", "scaled-tangent")


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_config(source):
    """Parse and normalize a config; every problem is collected before raising.

    ``source`` is a path or an already parsed mapping.  Returns a dict with
    all defaults filled and keys in canonical order.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{source}: {exc}"]) from exc
        except OSError as exc:
            raise ConfigError([f"{source}: {exc.strerror}"]) from exc
    else:
        raw = dict(source)
    errors = []
    for key in raw:
        if key not in _TOP:
            errors.append(f"unknown key '{key}'")
    for sec, keys in _SECTIONS.items():
        val = raw.get(sec, {})
        if not isinstance(val, dict):
            errors.append(f"'{sec}' must be a table")
            continue
        for key in val:
            if key not in keys:
                errors.append(f"unknown key '{sec}.{key}'")

    def num(path, value, lo=None, hi=None, strict_lo=False, integer=False):
        if value is None:
            return None
        if not _is_num(value) or (integer and not isinstance(value, int)):
            errors.append(f"'{path}' must be {'an integer' if integer else 'a number'}, got {value!r}")
            return None
        if not math.isfinite(value):
            errors.append(f"'{path}' must be finite")
            return None
        if lo is not None and (value <= lo if strict_lo else value < lo):
            errors.append(f"'{path}' must be {'>' if strict_lo else '>='} {lo}, got {value}")
        if hi is not None and value > hi:
            errors.append(f"'{path}' must be <= {hi}, got {value}")
        return value

    cfg = {}
    coup = raw.get("coupling")
    if not isinstance(coup, dict):
        errors.append("'coupling' is required: {kind = \"polynomial\", coeffs = [...]}")
    else:
        if coup.get("kind", "polynomial") != "polynomial":
            errors.append(f"'coupling.kind' must be 'polynomial', got {coup.get('kind')!r}")
        coeffs = coup.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs or not all(_is_num(c) for c in coeffs):
            errors.append("'coupling.coeffs' must be a non-empty list of numbers")
        for key in coup:
            if key not in ("kind", "coeffs"):
                errors.append(f"unknown key 'coupling.{key}'")
        cfg["coupling"] = {"kind": "polynomial", "coeffs": [float(c) for c in coeffs or [] if _is_num(c)]}
    C = num("C", raw.get("C"), 0.0, strict_lo=True)
    omega = num("omega", raw.get("omega"), 0.0, strict_lo=True)
    if (raw.get("C") is None) == (raw.get("omega") is None):
        errors.append("exactly one of 'C' and 'omega' must be given")
    cfg["C"] = C
    cfg["omega"] = omega
    cfg["theta0"] = num("theta0", raw.get("theta0", 0.0)) or 0.0
    beta = num("beta", raw.get("beta", 2.0))
    cfg["beta"] = 2.0 if beta is None else float(beta)
    if beta is not None and beta < 2:
        warnings.warn(f"beta = {beta}: the decay estimates assume beta >= 2", stacklevel=2)
    cfg["seed"] = num("seed", raw.get("seed", 0), 0, integer=True) or 0
    out = raw.get("output", "solwave-out")
    if not isinstance(out, str):
        errors.append("'output' must be a string")
        out = "solwave-out"
    cfg["output"] = out

    g = raw.get("grid", {}) if isinstance(raw.get("grid", {}), dict) else {}
    n = num("grid.n", g.get("n"), 5, integer=True)
    if isinstance(n, int) and n % 2 == 0:
        errors.append(f"'grid.n' must be odd (the origin is a node), got {n}")
    cfg["grid"] = {"L": num("grid.L", g.get("L"), 0.0, strict_lo=True), "n": n}

    t = raw.get("time", {}) if isinstance(raw.get("time", {}), dict) else {}
    dt = num("time.dt", t.get("dt", 1e-3), 0.0, hi=1e-2, strict_lo=True)
    t_end = num("time.t_end", t.get("t_end", 50.0), 0.0, strict_lo=True)
    every = num("time.snapshot_every", t.get("snapshot_every", 0.5), 0.0, strict_lo=True)
    snaps = t.get("snapshots")
    if snaps is not None and (not isinstance(snaps, list) or not all(_is_num(s) for s in snaps)):
        errors.append("'time.snapshots' must be a list of numbers")
        snaps = None
    stride = num("time.stride", t.get("stride", 1), 1, integer=True)
    cfg["time"] = {"t_end": t_end, "dt": dt, "snapshot_every": every,
                   "snapshots": None if snaps is None else [float(s) for s in snaps], "stride": stride}

    p = raw.get("perturbation", {}) if isinstance(raw.get("perturbation", {}), dict) else {}
    kind = p.get("kind", "gaussian")
    if kind not in _KINDS:
        errors.append(f"'perturbation.kind' must be one of {', '.join(_KINDS)}, got {kind!r}")
    cfg["perturbation"] = {"kind": kind,
                           "amplitude": num("perturbation.amplitude", p.get("amplitude", 0.05), 0.0),
                           "width": num("perturbation.width", p.get("width", 1.0), 0.0, strict_lo=True),
                           "center": num("perturbation.center", p.get("center", 0.0))}

    f = raw.get("fit", {}) if isinstance(raw.get("fit", {}), dict) else {}
    cfg["fit"] = {"window": _pair("fit.window", f.get("window", [5.0, 50.0]), errors)}
    s = raw.get("spectrum", {}) if isinstance(raw.get("spectrum", {}), dict) else {}
    region = s.get("region")
    if region is not None and (not isinstance(region, list) or len(region) != 4
                               or not all(_is_num(v) for v in region)):
        errors.append("'spectrum.region' must be [re_lo, re_hi, im_lo, im_hi]")
        region = None
    dens = s.get("density", [161, 161])
    if not isinstance(dens, list) or len(dens) != 2 or not all(isinstance(v, int) and v > 2 for v in dens):
        errors.append("'spectrum.density' must be two integers > 2")
        dens = [161, 161]
    cfg["spectrum"] = {"region": region, "density": dens}
    r = raw.get("resolvent", {}) if isinstance(raw.get("resolvent", {}), dict) else {}
    cfg["resolvent"] = {"lambda": _pair("resolvent.lambda", r.get("lambda", [1.0, 0.0]), errors, ordered=False),
                        "y": num("resolvent.y", r.get("y", 2.0))}
    st = raw.get("stability", {}) if isinstance(raw.get("stability", {}), dict) else {}
    cfg["stability"] = {"T_ref": num("stability.T_ref", st.get("T_ref"), 0.0, strict_lo=True),
                        "remainder_window": _pair("stability.remainder_window",
                                                  st.get("remainder_window", [10.0, 50.0]), errors)}
    chk = raw.get("check", {})
    cfg["check"] = {}
    if not isinstance(chk, dict):
        errors.append("'check' must be a table of metric = [lo, hi]")
    else:
        for key in sorted(chk):
            cfg["check"][key] = _pair(f"check.{key}", chk[key], errors, ordered=False)
    if errors:
        raise ConfigError(errors)
    return cfg


def _pair(path, value, errors, ordered=True):
    if not isinstance(value, list) or len(value) != 2 or not all(_is_num(v) for v in value):
        errors.append(f"'{path}' must be a list of two numbers")
        return None
    lo, hi = float(value[0]), float(value[1])
    if ordered and not lo < hi:
        errors.append(f"'{path}' must be increasing, got {value}")
    return [lo, hi]


# ---------------------------------------------------------------------------
# building blocks from a config

def build_wave(cfg):
    coupling = NonlinearCoupling.polynomial(cfg["coupling"]["coeffs"])
    if cfg["C"] is not None:
        return solitary_from_C(coupling, cfg["C"], cfg["theta0"])
    waves = solitary_from_omega(coupling, cfg["omega"], theta=cfg["theta0"])
    if not waves:
        raise SolwaveError(f"no solitary wave with omega = {cfg['omega']}")
    if len(waves) > 1:
        warnings.warn(f"{len(waves)} waves share omega = {cfg['omega']}; using the smallest amplitude",
                      stacklevel=2)
    return waves[0]


def build_grid(cfg, wave):
    g = cfg["grid"]
    default = Grid.for_wave(wave)
    return Grid(g["L"] or default.L, g["n"] or default.n)


def perturbation(cfg, wave, grid):
    p = cfg["perturbation"]
    x = grid.x
    d, w, c = p["amplitude"], p["width"], p["center"]
    if p["kind"] == "gaussian":
        vals = d * np.exp(-((x - c) / w) ** 2)
    elif p["kind"] == "odd-bump":
        u = (x - c) / w
        vals = d * u * np.exp(-u * u)
    else:
        vals = d * wave.domega_profile(x)
    return FieldState(grid, vals.astype(complex))


def snapshot_times(cfg):
    t = cfg["time"]
    if t["snapshots"] is not None:
        return sorted(t["snapshots"])
    k = int(round(t["t_end"] / t["snapshot_every"]))
    return [round(i * t["snapshot_every"], 12) for i in range(k + 1)]


# ---------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, bool) or v is None:
        return {True: "true", False: "false", None: "null"}[v]
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(v).__name__}")


def to_json(obj, indent=0):
    """JSON text with every float at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_fmt(str(k))}: {to_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if not len(obj):
            return "[]"
        return "[" + ", ".join(to_json(v, indent + 1) for v in obj) + "]"
    return _fmt(obj)


def to_csv(header, columns):
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_atomic(path, text):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


class Outputs:
    def __init__(self, cfg, override=None):
        self.root = override or os.environ.get("SOLWAVE_OUTPUT") or cfg["output"]
        self.written = []

    def write(self, name, text):
        path = os.path.join(self.root, name)
        write_atomic(path, text)
        self.written.append(path)
        return path


# ---------------------------------------------------------------------------
# subcommands; each returns a flat dict of metrics for --check

def cmd_solitary(cfg, args, out):
    wave = build_wave(cfg)
    info = {"C": wave.C, "kappa": wave.kappa, "omega": wave.omega, "theta": wave.theta,
            "a": wave.a, "a_prime": wave.a_prime, "b": wave.b, "alpha": wave.alpha, "beta": wave.beta,
            "charge": wave.charge}
    try:
        info["mu"] = mu_omega(wave)
    except SolwaveError as exc:
        info["mu"] = None
        info["mu_error"] = str(exc)
    info["case"] = spectrum.classify(wave).case
    out.write("solitary.json", to_json(info) + "\n")
    return {k: v for k, v in info.items() if isinstance(v, float)}


def cmd_spectrum(cfg, args, out):
    wave = build_wave(cfg)
    rep = spectrum.classify(wave)
    data = rep.to_dict()
    region = cfg["spectrum"]["region"]
    if region is not None:
        roots = spectrum.rootfind_physical(wave, region, tuple(cfg["spectrum"]["density"]))
        data["numeric_roots"] = [{"re": float(r.real), "im": float(r.imag)} for r in roots]
    out.write("spectrum.json", to_json(data) + "\n")
    return {"n_roots": float(len(rep.nonzero_roots)), "taylor_coeff": rep.taylor_coeff}


def cmd_resolvent(cfg, args, out):
    wave = build_wave(cfg)
    lam = complex(*(args.lam if args.lam is not None else cfg["resolvent"]["lambda"]))
    y = args.y if args.y is not None else cfg["resolvent"]["y"]
    grid = build_grid(cfg, wave)
    if cfg["grid"]["n"] is None:
        grid = Grid(min(grid.L, 20.0), 801)
    rep = resolvent.verify_kernel(lam, y, grid, wave)
    data = {"interior_residual": rep.interior_residual, "order": rep.order,
            "jump_xy": rep.jump_xy, "jump_x0": rep.jump_x0}
    out.write("resolvent.json", to_json(data) + "\n")
    return data


def _t_end_dt(cfg, args):
    t_end = args.t_end if args.t_end is not None else cfg["time"]["t_end"]
    dt = args.dt if args.dt is not None else cfg["time"]["dt"]
    return t_end, dt


def cmd_linear_decay(cfg, args, out):
    wave = build_wave(cfg)
    grid = build_grid(cfg, wave)
    t_end, dt = _t_end_dt(cfg, args)
    chi0 = linops.project_pc(perturbation(cfg, wave, grid), wave)
    times = [t for t in snapshot_times(cfg) if t <= t_end + 1e-12]
    _, snaps = linops.evolve_linear(chi0, wave, t_end, dt, times, cfg["time"]["stride"])
    ts = np.array(sorted(snaps))
    norms, b0, b1 = [], [], []
    for t in ts:
        proj = linops.project_p0(snaps[t], wave)
        b0.append(proj.b0)
        b1.append(proj.b1)
        norms.append(diagnostics.weighted_norm(proj.transversal, "inf", -cfg["beta"]))
    out.write("linear_decay.csv", to_csv(["t", "norm_Linf_negbeta", "b0", "b1"], [ts, norms, b0, b1]))
    fit = diagnostics.decay_exponent(ts, norms, tuple(cfg["fit"]["window"]))
    data = {"fit_exponent": fit.exponent, "fit_stderr": fit.stderr, "window": list(fit.window)}
    out.write("linear_decay.json", to_json(data) + "\n")
    return {"fit_exponent": fit.exponent, "fit_stderr": fit.stderr}


def _run(cfg, args, scheme=None):
    wave = build_wave(cfg)
    grid = build_grid(cfg, wave)
    t_end, dt = _t_end_dt(cfg, args)
    psi0 = wave.field(grid) + perturbation(cfg, wave, grid)
    times = [t for t in snapshot_times(cfg) if t <= t_end + 1e-12]
    if getattr(args, "snapshots", None):
        times = sorted(args.snapshots)
    traj = evolve.evolve_nonlinear(psi0, wave.coupling, t_end, dt, scheme or "volterra", times,
                                   cfg["time"]["stride"])
    return wave, traj


def cmd_evolve(cfg, args, out):
    _, traj = _run(cfg, args, args.scheme)
    b = traj.boundary
    out.write("boundary.csv", to_csv(["t", "re", "im"], [b.times, b.values.real, b.values.imag]))
    for t, f in traj.snapshots:
        out.write(f"snapshot_t{t:.6f}.csv", to_csv(["x", "re", "im"], [f.x, f.values.real, f.values.imag]))
    metrics = {}
    if len(traj.snapshots) >= 2:
        rep = diagnostics.conservation_report(traj)
        out.write("conservation.json", to_json(rep.to_dict()) + "\n")
        metrics = {"charge_drift_rel": rep.charge_drift_rel, "energy_drift_rel": rep.energy_drift_rel}
    return metrics


def cmd_stability(cfg, args, out):
    wave, traj = _run(cfg, args)
    trace = modulation.build_trace(traj.snapshots, wave.coupling, wave)
    norms = np.array([diagnostics.weighted_norm(c, "inf", -cfg["beta"]) for c in trace.chi])
    out.write("modulation.csv", to_csv(
        ["t", "omega", "theta", "gamma", "norm_chi", "dot_omega", "dot_gamma"],
        [trace.times, trace.omega, trace.theta, trace.gamma, norms, trace.dot_omega, trace.dot_gamma]))
    maj = modulation.majorant(trace, cfg["beta"])
    out.write("majorant.csv", to_csv(["t", "chi_term", "rate_term", "M"],
                                     [maj.times, maj.chi_term, maj.rate_term, maj.running]))
    fit_chi = diagnostics.decay_exponent(trace.times, norms, tuple(cfg["fit"]["window"]))
    T_ref = cfg["stability"]["T_ref"] or float(trace.times[-1])
    split = modulation.asymptotic_split(traj, trace, T_ref, phi2=False)
    win = tuple(cfg["stability"]["remainder_window"])
    fit_rem = diagnostics.decay_exponent(split.times, split.norm, win)
    data = {"fit_exponent_chi": fit_chi.exponent, "fit_exponent_remainder": fit_rem.exponent,
            "omega_infinity_estimate": float(trace.omega[-1]), "M_sup": maj.M,
            "max_orthogonality_residual": float(np.max(trace.orthogonality)),
            "phi_plus_truncation_scale": split.truncation_scale}
    out.write("asymptotics.json", to_json(data) + "\n")
    return data


COMMANDS = {
    "solitary": cmd_solitary,
    "spectrum": cmd_spectrum,
    "resolvent-verify": cmd_resolvent,
    "linear-decay": cmd_linear_decay,
    "evolve": cmd_evolve,
    "stability": cmd_stability,
}


def check_metrics(metrics, thresholds):
    """Messages for every metric outside its ``[lo, hi]`` band (missing metrics fail too)."""
    bad = []
    for key, (lo, hi) in thresholds.items():
        v = metrics.get(key)
        if v is None or not (lo <= v <= hi):
            bad.append(f"{key} = {v} outside [{lo}, {hi}]")
    return bad


# ---------------------------------------------------------------------------
# entry point

def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _complex_pair(text):
    parts = _floats(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 're,im'")
    return parts


def build_parser():
    parser = argparse.ArgumentParser(prog="solwave", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--output", default=None, help="output directory (overrides the config)")
        p.add_argument("--check", action="store_true", help="exit 2 if a [check] threshold fails")
        if name in ("linear-decay", "evolve", "stability"):
            p.add_argument("--t-end", type=float, default=None)
            p.add_argument("--dt", type=float, default=None)
        if name == "evolve":
            p.add_argument("--scheme", choices=("volterra", "cn"), default="volterra")
            p.add_argument("--snapshots", type=_floats, default=None)
        if name == "resolvent-verify":
            p.add_argument("--lambda", dest="lam", type=_complex_pair, default=None)
            p.add_argument("--y", type=float, default=None)
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        cfg = validate_config(args.config)
    limiter = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=args.threads)
    out = Outputs(cfg, args.output)
    with limiter:
        metrics = COMMANDS[args.command](cfg, args, out)
    for path in out.written:
        print(path)
    if args.check:
        bad = check_metrics(metrics, cfg["check"])
        for msg in bad:
            print(f"check failed: {msg}", file=sys.stderr)
        return 2 if bad else 0
    return 0


def main(argv=None):
    try:
        return run(argv)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    except SolwaveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
