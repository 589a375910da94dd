"""Command-line front end: ``mirrorspec <subcommand> [flags]``.

Exit codes: 0 pass, 2 configuration error, 3 partial result or precision
limit, 4 numeric failure, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .asymptotics import (
    Variant,
    counting_curve,
    karamata_check,
    leading_coefficient,
    phase_integral,
    sandwich_check,
    weyl_fit,
    weyl_fit_function,
)
from .birman_schwinger import MIN_NODES, bs_counting_check
from .coherent import (
    TestFunction,
    anti_wick_check,
    lower_symbol_check,
    plancherel_check,
)
from .errors import FitError, MirrorSpecError, NumericError, ParameterError, RangeError, UnsupportedFamilyError
from .model import ModelParams, frame_for
from .quantization import OscillatorBasisSpec
from .spectrum import (
    DiscreteSpectrumWarning,
    SpectrumResult,
    converged_spectrum,
    load_spectrum,
    trusted_lambda,
)

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4, 5


class ConfigError(Exception):
    """Bad flag or config value; the message names the field."""


# ---------------------------------------------------------------------------
# parsing helpers


def parse_grid(text: str, field: str) -> list[float]:
    """``lo:hi:steps`` (log-spaced, inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, steps = text.split(":")
            lo, hi, steps = float(lo), float(hi), int(steps)
            if steps < 0:
                raise ValueError("negative step count")
            if steps == 0:
                return []
            if lo <= 0 or hi <= 0:
                raise ValueError("log-spaced grid needs positive ends")
            return [float(v) for v in np.geomspace(lo, hi, steps)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{field}: cannot parse {text!r} ({exc})") from None


def _grid_value(value, field: str) -> list[float] | None:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{field}: expected a list of numbers") from None
    return parse_grid(str(value), field)


COMMON_DEFAULTS = {
    "family": "zeta",
    "b": 1.0,
    "zeta": 1.0,
    "m": 1,
    "n": 1,
    "backend": "osc",
    "want": 10,
    "tol": 1e-8,
    "a": 2 * math.pi,
    "format": "csv",
    "seed": 42,
}

SUBCOMMANDS = ("spectrum", "sandwich", "weyl", "heat", "bs", "coherent-check", "volume")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    # defaults are None so that a config file can fill what the flags leave out
    g.add_argument("--family", choices=["zeta", "mn"])
    g.add_argument("--b", type=float)
    g.add_argument("--zeta", type=float)
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--a", type=float, help="coherent-frame Gaussian exponent (default 2*pi)")
    s = common.add_argument_group("spectrum")
    s.add_argument("--backend", choices=["osc", "grid", "both"])
    s.add_argument("--want", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--spectrum-file", help="read eigenvalues from a CSV/JSON file instead of computing them")
    o = common.add_argument_group("output")
    o.add_argument("--out", help="output path (default: stdout)")
    o.add_argument("--format", choices=["csv", "json"])
    o.add_argument("--seed", type=int)
    o.add_argument("--config", help="JSON file of flag values; explicit flags override it")

    parser = argparse.ArgumentParser(prog="mirrorspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mirrorspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    sub.add_parser("spectrum", parents=[common], help="certified eigenvalues")

    p = sub.add_parser("sandwich", parents=[common], help="lower <= Riesz mean <= upper table")
    p.add_argument("--lambda-grid")

    p = sub.add_parser("weyl", parents=[common], help="three-term Weyl fit of the Riesz mean")
    p.add_argument("--lambda-grid", help="fit window lo:hi:points")
    p.add_argument("--band", type=float, help="allowed relative deviation of A (default 0.10 zeta, 0.15 mn)")
    p.add_argument("--synthetic", help="fit exact data A,B,C instead of a spectrum")
    p.add_argument("--curve", help="also write (lambda, N/log^2 lambda) plot data to this path")

    p = sub.add_parser("heat", parents=[common], help="Karamata table for the heat trace")
    p.add_argument("--t-grid")
    p.add_argument("--band", type=float)
    p.add_argument("--synthetic", action="store_true", help="use the spectrum with N = floor(C log^2 lambda)")

    p = sub.add_parser("bs", parents=[common], help="Birman-Schwinger counting check")
    p.add_argument("--lambda-grid")
    p.add_argument("--nodes", type=int)

    p = sub.add_parser("coherent-check", parents=[common], help="coherent-state identities on random functions")
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--zero-function", action="store_true", help="check the zero function only")

    p = sub.add_parser("volume", parents=[common], help="phase-space integrals")
    p.add_argument("--lambda-grid")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge config file and flags (flags win) over the defaults."""
    cfg = dict(COMMON_DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"--config: cannot read {args.config!r} ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("--config: top level must be a JSON object")
        known = set(vars(args)) - {"command", "config"}
        for key, value in data.items():
            dest = key.replace("-", "_")
            if dest not in known:
                raise ConfigError(f"--config: unknown field {key!r}")
            cfg[dest] = value
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None and value is not False:
            cfg[key] = value
        else:
            cfg.setdefault(key, value)
    cfg["command"] = args.command
    return cfg


def params_from_config(cfg: dict) -> ModelParams:
    try:
        if cfg["family"] == "zeta":
            return ModelParams.zeta_family(float(cfg["b"]), float(cfg["zeta"]))
        if cfg["family"] == "mn":
            return ModelParams.mn_family(float(cfg["b"]), int(cfg["m"]), int(cfg["n"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"--family/--b/--zeta/--m/--n: {exc}") from None
    raise ConfigError(f"--family: expected 'zeta' or 'mn', got {cfg['family']!r}")


def _positive(cfg: dict, key: str, kind=float):
    v = cfg.get(key)
    try:
        v = kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"--{key.replace('_', '-')}: expected a number, got {v!r}") from None
    if not v > 0:
        raise ConfigError(f"--{key.replace('_', '-')}: must be positive, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# output


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k not in ("out", "curve")}
    blob = json.dumps(keep, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def header_lines(cfg: dict, params: ModelParams | None) -> list[str]:
    lines = [f"mirrorspec {__version__} {cfg['command']}"]
    if params is not None:
        lines.append("params: " + json.dumps(params.as_dict(), sort_keys=True))
    lines.append(f"config-hash: {config_hash(cfg)}")
    return lines


def render(cfg: dict, params: ModelParams | None, columns: Sequence[str], rows: Sequence[Sequence],
           extra: dict | None = None, notes: Sequence[str] = ()) -> str:
    """CSV with ``#`` header lines, or JSON with a leading ``header`` object."""
    head = header_lines(cfg, params) + [str(n) for n in notes]
    if cfg["format"] == "json":
        doc = {"header": head, "columns": list(columns), "rows": [list(r) for r in rows]}
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, default=_json_default) + "\n"
    buf = io.StringIO()
    for line in head:
        buf.write(f"# {line}\r\n")
    if extra:
        for k, v in extra.items():
            buf.write(f"# {k}: {json.dumps(v, default=_json_default)}\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "pass" if v else "fail"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(cfg: dict, text: str, stdout) -> None:
    if cfg.get("out"):
        write_atomic(cfg["out"], text)
    else:
        stdout.write(text)


# ---------------------------------------------------------------------------
# spectra


BACKENDS = {"osc": "oscillator", "grid": "grid"}


def obtain_spectrum(cfg: dict, params: ModelParams, want: int | None = None) -> SpectrumResult:
    if cfg.get("spectrum_file"):
        try:
            spec = load_spectrum(cfg["spectrum_file"])
        except OSError as exc:
            raise ConfigError(f"--spectrum-file: cannot read {cfg['spectrum_file']!r} ({exc.strerror})") from None
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"--spectrum-file: {exc}") from None
        if spec.params is None:
            spec = SpectrumResult(spec.eigenvalues, spec.certified_count, spec.certificates, params, spec.backend,
                                  spec.resolution, spec.history, spec.converged, spec.complete, None, spec.notes)
        elif spec.params != params:
            raise ConfigError(f"--spectrum-file: file is for {spec.params.label}, config asks for {params.label}")
        return spec
    backend = cfg["backend"]
    if backend == "both":
        backend = "osc"
    want = want or _positive(cfg, "want", int)
    tol = _positive(cfg, "tol")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscreteSpectrumWarning)
        return converged_spectrum(params, BACKENDS[backend], want=want, tol=tol)


def cmd_spectrum(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    want = _positive(cfg, "want", int)
    tol = _positive(cfg, "tol")
    if not params.has_discrete_spectrum:
        stderr.write("warning: zeta = 0 has purely continuous spectrum [2, inf); nothing can be certified\n")
    backends = ["osc", "grid"] if cfg["backend"] == "both" else [cfg["backend"]]
    results = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscreteSpectrumWarning)
        for bk in backends:
            results[bk] = converged_spectrum(params, BACKENDS[bk], want=want, tol=tol)
    spec = results[backends[0]]
    count = min(want, spec.certified_count)
    rows = [(j + 1, float(spec.eigenvalues[j]), float(spec.certificates[j])) for j in range(count)]
    notes = list(spec.notes)
    columns = ["index", "eigenvalue", "certificate"]
    status = EXIT_OK if spec.converged else EXIT_PARTIAL
    if len(backends) == 2:
        other = results["grid"]
        shared = min(count, other.certified_count)
        rel = [abs(other.eigenvalues[j] - spec.eigenvalues[j]) / spec.eigenvalues[j] for j in range(shared)]
        columns.append("grid_eigenvalue")
        rows = [r + (float(other.eigenvalues[j]) if j < other.certified_count else "",) for j, r in enumerate(rows)]
        worst = max(rel, default=0.0)
        notes.append(f"backend agreement: max relative difference {worst:.3e} over {shared} eigenvalues")
        if shared < count:
            status = max(status, EXIT_PARTIAL)
        # agreement is judged against the requested tolerance, widened by the grid's own certificates
        budget = [(tol * spec.eigenvalues[j] + spec.certificates[j] + other.certificates[j]) / spec.eigenvalues[j]
                  for j in range(shared)]
        if any(r > max(bd, 1e-6) for r, bd in zip(rel, budget)):
            status = EXIT_VERIFY
    extra = {"certified_count": spec.certified_count, "converged": spec.converged}
    emit(cfg, render(cfg, params, columns, rows, extra, notes), stdout)
    return status


def cmd_sandwich(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    default = [10.0, 30.0, 100.0] if params.is_zeta else [10.0, 50.0]
    lams = _grid_value(cfg.get("lambda_grid"), "--lambda-grid")
    lams = default if lams is None else lams
    if not lams:
        raise ConfigError("--lambda-grid: empty grid")
    if any(not lam > 0 for lam in lams):
        raise ConfigError("--lambda-grid: values must be positive")
    frame = frame_for(params, _positive(cfg, "a"))
    spec = obtain_spectrum(cfg, params)
    rep = sandwich_check(spec, frame, lams)
    rows = [(r.lam, r.lower, r.riesz, r.upper, r.verdict) for r in rep.rows]
    extra = {"budget": [r.budget for r in rep.rows]}
    emit(cfg, render(cfg, params, ["lambda", "lower", "riesz", "upper", "verdict"], rows, extra), stdout)
    return EXIT_OK if rep.passed else EXIT_VERIFY


def _window(cfg: dict) -> tuple[tuple[float, float] | None, int]:
    text = cfg.get("lambda_grid")
    if text is None:
        return None, 60
    parts = str(text).split(":")
    try:
        if len(parts) == 2:
            return (float(parts[0]), float(parts[1])), 60
        if len(parts) == 3:
            return (float(parts[0]), float(parts[1])), int(parts[2])
    except ValueError:
        pass
    raise ConfigError(f"--lambda-grid: expected lo:hi or lo:hi:points, got {text!r}")


def cmd_weyl(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    window, points = _window(cfg)
    band = cfg.get("band")
    band = float(band) if band is not None else (0.10 if params.is_zeta else 0.15)
    if cfg.get("synthetic"):
        try:
            A, B, C = (float(v) for v in str(cfg["synthetic"]).split(","))
        except ValueError:
            raise ConfigError(f"--synthetic: expected A,B,C, got {cfg['synthetic']!r}") from None
        f: Callable[[float], float] = lambda lam: A * lam * math.log(lam) ** 2 + B * lam * math.log(lam) + C * lam  # noqa: E731
        fit = weyl_fit_function(f, window or (math.e, 1e4), points, predicted=A)
        spec = None
    else:
        spec = obtain_spectrum(cfg, params, want=max(_positive(cfg, "want", int), 10))
        fit = weyl_fit(spec, window, points)
    dev = fit.deviation
    rows = [(fit.A, fit.B, fit.C, fit.predicted, dev, fit.residual, fit.window[0], fit.window[1])]
    cols = ["A", "B", "C", "predicted", "deviation", "residual", "lambda_lo", "lambda_hi"]
    emit(cfg, render(cfg, params, cols, rows), stdout)
    if cfg.get("curve"):
        if spec is None:
            raise ConfigError("--curve needs a spectrum, not --synthetic")
        lams = np.geomspace(math.e, fit.window[1], 200)
        curve = counting_curve(spec, lams)
        write_atomic(cfg["curve"], render(cfg, params, ["lambda", "N_over_log2"], curve))
    return EXIT_OK if dev is not None and abs(dev) <= band else EXIT_VERIFY


def synthetic_weyl_spectrum(params: ModelParams, t_min: float) -> SpectrumResult:
    """Eigenvalues ``exp(sqrt(j / C))`` so that ``N(lam) = floor(C log^2 lam)`` exactly."""
    coef = leading_coefficient(params)
    top = math.log(2000.0 / t_min)
    jmax = int(coef * top * top) + 1
    j = np.arange(1, jmax + 1)
    ev = np.exp(np.sqrt(j / coef))
    return SpectrumResult.from_values(ev, params=params, complete=True)


def cmd_heat(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    ts = _grid_value(cfg.get("t_grid"), "--t-grid")
    if ts is None:
        ts = [float(t) for t in np.geomspace(1e-1, 1e-6, 11)]
    if not ts:
        raise ConfigError("--t-grid: empty grid")
    if any(not (0 < t < 1) for t in ts):
        raise ConfigError("--t-grid: values must lie in (0, 1)")
    band = float(cfg["band"]) if cfg.get("band") is not None else 0.25
    if cfg.get("synthetic"):
        spec = synthetic_weyl_spectrum(params, min(ts))
    else:
        spec = obtain_spectrum(cfg, params, want=max(_positive(cfg, "want", int), 10))
    rep = karamata_check(spec, ts, band)
    rows = [(r.t, r.value, r.tail, r.ratio, "ok" if r.usable else "tail-dominated") for r in rep.rows]
    extra = {"status": rep.status, "smallest_usable_t": rep.smallest_usable_t, "monotone": rep.monotone,
             "trend_passed": rep.trend_passed}
    emit(cfg, render(cfg, params, ["t", "heat_trace", "tail_bound", "ratio", "flag"], rows, extra), stdout)
    if rep.status == "precision":
        return EXIT_PARTIAL
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_bs(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    if not params.is_zeta:
        raise ConfigError("--family: the bs subcommand supports the zeta family only")
    nodes = cfg.get("nodes") if cfg.get("nodes") is not None else 400
    if int(nodes) < MIN_NODES:
        raise ConfigError(f"--nodes: must be at least {MIN_NODES}, got {nodes}")
    lams = _grid_value(cfg.get("lambda_grid"), "--lambda-grid")
    lams = [5.0, 10.0, 20.0] if lams is None else lams
    if not lams:
        raise ConfigError("--lambda-grid: empty grid")
    spec = obtain_spectrum(cfg, params)
    rep = bs_counting_check(params, lams, spec, int(nodes))
    rows = [(r.lam, r.n_spec, r.bs_count, r.verdict) for r in rep.rows]
    extra = {"drift": [r.drift for r in rep.rows], "bs_count_doubled": [r.bs_count_refined for r in rep.rows]}
    emit(cfg, render(cfg, params, ["lambda", "N_spec", "bs_count", "verdict"], rows, extra), stdout)
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_coherent_check(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    frame = frame_for(params, _positive(cfg, "a"))
    count = cfg.get("count") if cfg.get("count") is not None else 20
    size = cfg.get("size") if cfg.get("size") is not None else 8
    if int(count) < 1 or int(size) < 1:
        raise ConfigError("--count/--size: must be positive")
    rng = np.random.default_rng(int(cfg["seed"]))
    rows = []
    if cfg.get("zero_function"):
        funcs = [TestFunction(np.zeros(int(size)), OscillatorBasisSpec(int(size)))]
    else:
        funcs = [TestFunction.random(rng, int(size)) for _ in range(int(count))]
    for i, psi in enumerate(funcs):
        for rep in (plancherel_check(psi, frame), anti_wick_check(psi, params, frame)):
            rows.append((rep.check, i, rep.lhs, rep.rhs, rep.tol, rep.passed))
    if not cfg.get("zero_function"):
        for i in range(int(count)):
            p = tuple(rng.uniform(-1.5, 1.5, 2))
            rep = lower_symbol_check(params, frame, p)
            rows.append((rep.check, i, rep.lhs, rep.rhs, rep.tol, rep.passed))
    emit(cfg, render(cfg, params, ["check", "index", "lhs", "rhs", "tol", "verdict"], rows), stdout)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_VERIFY


def cmd_volume(cfg: dict, stdout, stderr) -> int:
    params = params_from_config(cfg)
    frame = frame_for(params, _positive(cfg, "a"))
    lams = _grid_value(cfg.get("lambda_grid"), "--lambda-grid")
    lams = [10.0, 100.0, 1000.0] if lams is None else lams
    if not lams:
        raise ConfigError("--lambda-grid: empty grid")
    variant = Variant(cfg.get("variant") or "volume")
    rows = []
    for lam in lams:
        rep = phase_integral(params, frame, variant, lam)
        rows.append((lam, rep.value, rep.error_estimate, rep.value / math.log(lam) ** 2 if lam > 1 else ""))
    cols = ["lambda", "value", "error_estimate", "value_over_log2"]
    emit(cfg, render(cfg, params, cols, rows, {"variant": variant.value}), stdout)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sandwich": cmd_sandwich,
    "weyl": cmd_weyl,
    "heat": cmd_heat,
    "bs": cmd_bs,
    "coherent-check": cmd_coherent_check,
    "volume": cmd_volume,
}


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports malformed flags itself
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, stdout, stderr)
    except (ConfigError, ParameterError, UnsupportedFamilyError, FitError) as exc:
        stderr.write(f"mirrorspec: error: {exc}\n")
        return EXIT_CONFIG
    except RangeError as exc:
        stderr.write(f"mirrorspec: out of trusted range: {exc}\n")
        return EXIT_PARTIAL
    except (NumericError, MirrorSpecError, FloatingPointError) as exc:
        stderr.write(f"mirrorspec: numeric failure: {exc}\n")
        return EXIT_NUMERIC


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
