"""Command-line front end: ``rlmfcs <command> --config FILE --out DIR``.

Every command reads one TOML or JSON file, validates it, runs, and writes
CSV files whose comment header carries the code version and the fully
resolved configuration, plus a ``<command>_manifest.json``.  Exit codes:
0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .baths import BathConfig
from .current_fluct import CutoffSpec, dot_occupation_limit, peak_structure, stat_expectations
from .errors import ConfigError, NumericalError
from .fcs_analytic import (CountingFields, Direction, QuadratureSpec, cumulant, fluctuation_gap,
                           large_deviation, levitov_lesovik_closed)
from .finite_time_engine import (EngineBases, EngineRun, appendix_a_check, current_series,
                                 fit_relaxation, slope_extract,
                                 transient_window_end)
from .scattering import ModelParams, spread_limit_check

__all__ = ["main", "load_config", "COMMANDS"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# -- config ---------------------------------------------------------------------

def load_config(path: str | Path) -> dict:
    """Parse a TOML (``.toml``) or JSON file into a dict."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from None
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None


def _section(cfg: Mapping, name: str, allowed: set, required: set = frozenset()) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    missing = set(required) - set(sec)
    if missing:
        raise ConfigError(f"missing keys in [{name}]: {sorted(missing)}")
    return dict(sec)


def _model(cfg) -> ModelParams:
    sec = _section(cfg, "model", {"tau", "epsilon"}, {"tau"})
    return ModelParams(**sec)


def _baths(cfg) -> BathConfig:
    if "baths" not in cfg:
        raise ConfigError("missing [baths] section")
    return BathConfig.from_mapping(_section(cfg, "baths", {"beta1", "beta2", "mu1", "mu2", "n_d"}))


def _quad(cfg) -> QuadratureSpec:
    sec = _section(cfg, "quadrature", {"rel_tol", "abs_tol", "max_subdivisions", "window_factor"})
    return QuadratureSpec(**sec)


def _direction(cfg) -> Direction:
    try:
        return Direction(cfg.get("direction", Direction.GAIN_LEAD1.value))
    except ValueError:
        raise ConfigError(f"direction must be one of {[d.value for d in Direction]}") from None


def _grid(spec, name: str) -> np.ndarray:
    """A list of numbers, or a table ``{start, stop, num}`` (endpoint excluded)
    or ``{start, stop, step}`` (endpoint included when reached)."""
    if isinstance(spec, Mapping):
        keys = set(spec)
        if keys == {"start", "stop", "num"}:
            return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]), endpoint=False)
        if keys == {"start", "stop", "step"}:
            n = int(math.floor((spec["stop"] - spec["start"]) / spec["step"] + 1e-9)) + 1
            return float(spec["start"]) + float(spec["step"]) * np.arange(n)
        raise ConfigError(f"{name}: grid table needs start/stop and num or step")
    try:
        arr = np.asarray(spec, dtype=float).ravel()
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers or a grid table") from None
    return arr


def _nonempty(arr, name):
    if arr.size == 0:
        raise ConfigError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite values")
    return arr


def _engine(cfg, params: ModelParams, baths: BathConfig):
    sec = _section(cfg, "engine", {"L", "window", "free_window", "t0", "mu_points"}, {"L", "window"})
    bases = EngineBases(params, sec["L"], sec["window"], sec.get("free_window"))
    run = EngineRun(t0=float(sec.get("t0", 0.0)), t=0.0, mu_points=int(sec.get("mu_points", 16)))
    bases.check_window(baths)
    return bases, run


# -- output ---------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


class _Writer:
    def __init__(self, out: Path, command: str, resolved: dict):
        self.out = out
        self.command = command
        self.resolved = resolved
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows) -> None:
        path = self.out / name
        meta = json.dumps({"command": self.command, "version": __version__, "config": self.resolved},
                          sort_keys=True, default=_json_default)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# rlmfcs {__version__}\n# manifest: {meta}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(name)

    def manifest(self, extra: dict) -> Path:
        path = self.out / f"{self.command}_manifest.json"
        body = {"command": self.command, "version": __version__, "config": self.resolved,
                "files": self.files, **extra}
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _resolved_common(params, baths, quad, direction) -> dict:
    return {"model": asdict(params), "baths": baths.to_dict(), "quadrature": asdict(quad),
            "direction": direction.value}


# -- commands -------------------------------------------------------------------

def cmd_lldf(cfg: Mapping, out: Path) -> dict:
    """F(lambda) from the determinant integrand and the closed form, their gap,
    cumulants, and optionally the fluctuation-relation gap."""
    params, baths, quad, direction = _model(cfg), _baths(cfg), _quad(cfg), _direction(cfg)
    sec = _section(cfg, "lldf", {"lambdas", "lambda_im", "mu", "cumulants", "fluctuation"}, {"lambdas"})
    lams = _nonempty(_grid(sec["lambdas"], "lldf.lambdas"), "lldf.lambdas")
    lam_im = float(sec.get("lambda_im", 0.0))
    mu = float(sec.get("mu", 0.0))
    kmax = int(sec.get("cumulants", 2))
    check_fr = bool(sec.get("fluctuation", False))
    if not 0 <= kmax <= 6:
        raise ConfigError("lldf.cumulants must lie in 0..6")
    if check_fr and (baths.beta1 != baths.beta2 or math.isinf(baths.beta1)):
        raise ConfigError("fluctuation check needs beta1 == beta2 (finite)")
    rows = []
    for lr in lams:
        lam = complex(lr, lam_im)
        f_det = large_deviation(CountingFields(lam, mu), baths, params, quad, direction=direction)
        f_ll = levitov_lesovik_closed(CountingFields(lam), baths, params, quad, direction=direction)
        row = [lam.real, lam.imag, mu, f_det.real, f_det.imag, f_ll.real, f_ll.imag, abs(f_det - f_ll)]
        if check_fr:
            row.append(fluctuation_gap(lam, baths, params, quad, direction=direction))
        rows.append(row)
    header = ["lambda_re", "lambda_im", "mu", "F_det_re", "F_det_im", "F_ll_re", "F_ll_im", "gap"]
    if check_fr:
        header.append("fluctuation_gap")
    resolved = {**_resolved_common(params, baths, quad, direction), "lldf": {
        "lambdas": lams.tolist(), "lambda_im": lam_im, "mu": mu, "cumulants": kmax, "fluctuation": check_fr}}
    w = _Writer(out, "lldf", resolved)
    w.csv("lldf.csv", header, rows)
    cums = {str(k): cumulant(k, baths, params, quad, direction=direction) for k in range(1, kmax + 1)}
    w.csv("lldf_cumulants.csv", ["k", "cumulant"], [[int(k), v] for k, v in cums.items()])
    return {"writer": w, "report": {"max_gap": max(r[7] for r in rows), "cumulants": cums,
                                    "transmission": "probability |w/2|^2"}}


def cmd_finite_time(cfg: Mapping, out: Path) -> dict:
    """log P(lambda, t) for both projector variants, slopes, basis diagnostics."""
    params, baths, quad, direction = _model(cfg), _baths(cfg), _quad(cfg), _direction(cfg)
    bases, run = _engine(cfg, params, baths)
    sec = _section(cfg, "finite_time", {"lambdas", "times", "guide_eta", "compare_analytic"},
                   {"lambdas", "times"})
    lams = _nonempty(_grid(sec["lambdas"], "finite_time.lambdas"), "finite_time.lambdas")
    times = _nonempty(_grid(sec["times"], "finite_time.times"), "finite_time.times")
    guide = sec.get("guide_eta")
    for t in times:
        run.validate(bases.L, t)
    sign = -1.0 if direction is Direction.TRANSFER_1_TO_2 else 1.0
    rows, slopes = [], []
    for lam in lams:
        for which in ("two_projector", "one_projector"):
            fit = slope_extract(run, sign * lam, times, baths, params, bases, which,
                                guide_eta=(guide if guide is not None and abs(abs(lam) - np.pi) < 1e-12 else None))
            for t, lp in zip(fit.t, fit.log_p):
                rows.append([lam, 0.0, t, "avg" if which == "two_projector" else "0", lp.real, lp.imag])
            srow = [lam, which, fit.slope.real, fit.slope.imag, fit.intercept.real, fit.intercept.imag,
                    fit.residual, fit.ambiguous]
            if sec.get("compare_analytic", True):
                f = large_deviation(CountingFields(lam), baths, params, quad, direction=direction)
                srow += [f.real, f.imag]
            slopes.append(srow)
    resolved = {**_resolved_common(params, baths, quad, direction),
                "engine": {"L": bases.L, "window": bases.window, "free_window": bases.free_window,
                           "t0": run.t0, "mu_points": run.mu_points},
                "finite_time": {"lambdas": lams.tolist(), "times": times.tolist(), "guide_eta": guide}}
    w = _Writer(out, "finite_time", resolved)
    w.csv("finite_time.csv", ["lambda_re", "lambda_im", "t", "mu_or_avg", "logP_re", "logP_im"], rows)
    sh = ["lambda", "variant", "slope_re", "slope_im", "intercept_re", "intercept_im", "residual", "ambiguous"]
    if sec.get("compare_analytic", True):
        sh += ["F_re", "F_im"]
    w.csv("finite_time_slopes.csv", sh, slopes)
    return {"writer": w, "report": {"diagnostics": bases.diagnostics()}}


def cmd_relax(cfg: Mapping, out: Path) -> dict:
    """Local current after the quench, with optional decay-rate fit."""
    params, baths, quad, direction = _model(cfg), _baths(cfg), _quad(cfg), _direction(cfg)
    bases, run = _engine(cfg, params, baths)
    sec = _section(cfg, "relax", {"times", "late_times", "fit_from"}, {"times"})
    times = _nonempty(_grid(sec["times"], "relax.times"), "relax.times")
    for t in times:
        run.validate(bases.L, t)
    cur = current_series(times, run, baths, params, bases, direction)
    c1 = cumulant(1, baths, params, quad, direction=direction)
    # cumulant(1) follows `direction`; the current is reported in the same convention
    report: dict[str, Any] = {"I_stat_landauer": c1}
    if "late_times" in sec:
        late_t = _nonempty(_grid(sec["late_times"], "relax.late_times"), "relax.late_times")
        for t in late_t:
            run.validate(bases.L, t)
        late = current_series(late_t, run, baths, params, bases, direction)
        stat, floor = float(late.mean()), float(late.std())
        report.update(I_stat_engine=stat, noise_floor=floor)
        if "fit_from" in sec:
            t_end = transient_window_end(times, cur, stat, floor)
            freqs = [baths.mu1 - params.epsilon, baths.mu2 - params.epsilon]
            fit = fit_relaxation(times, cur, stat, freqs, float(sec["fit_from"]), t_end)
            report.update(rate=fit.rate, rate_over_gamma=fit.rate / params.gamma,
                          fit_residual=fit.residual, fit_window=[fit.t_first, fit.t_last])
    resolved = {**_resolved_common(params, baths, quad, direction),
                "engine": {"L": bases.L, "window": bases.window, "free_window": bases.free_window,
                           "t0": run.t0}, "relax": {k: (v if not isinstance(v, np.ndarray) else v.tolist())
                                                     for k, v in sec.items()}}
    w = _Writer(out, "relax", resolved)
    w.csv("relax.csv", ["t", "current", "deviation_from_landauer"], [[t, c, c - c1] for t, c in zip(times, cur)])
    return {"writer": w, "report": report}


def cmd_spread(cfg: Mapping, out: Path) -> dict:
    """Convergence of the spread-impurity constant to the resolved limit."""
    params = _model(cfg)
    sec = _section(cfg, "spread", {"momenta", "a_sequence"}, {"momenta", "a_sequence"})
    ps = _nonempty(_grid(sec["momenta"], "spread.momenta"), "spread.momenta")
    avals = _nonempty(_grid(sec["a_sequence"], "spread.a_sequence"), "spread.a_sequence")
    rows, summary = [], []
    for p in ps:
        rep = spread_limit_check(float(p), avals, params)
        for a, d, dph in zip(rep.a, rep.deviation, rep.phase_deviation):
            rows.append([p, a, d, dph])
        summary.append([p, rep.order, rep.phase_order, rep.monotone, rep.exact])
    w = _Writer(out, "spread", {"model": asdict(params), "spread": {"momenta": ps.tolist(),
                                                                    "a_sequence": avals.tolist()}})
    w.csv("spread.csv", ["p", "a", "deviation", "phase_deviation"], rows)
    w.csv("spread_orders.csv", ["p", "order", "phase_order", "monotone", "exact"], summary)
    return {"writer": w, "report": {}}


def cmd_appb(cfg: Mapping, out: Path) -> dict:
    """Three-peak structure of the integrated current over a cutoff sweep."""
    params, baths, quad = _model(cfg), _baths(cfg), _quad(cfg)
    sec = _section(cfg, "appb", {"t", "Lambdas"}, {"t", "Lambdas"})
    t = float(sec["t"])
    lams = _nonempty(_grid(sec["Lambdas"], "appb.Lambdas"), "appb.Lambdas")
    rows = []
    for lam in lams:
        cut = CutoffSpec(lam)
        ex = stat_expectations(cut, baths, params, quad)
        ps = peak_structure(t, cut, baths, params, quad, expectations=ex)
        rows.append([lam, ps.A0.real, ps.Aplus.real, ps.Aplus.imag, ps.Aminus.real, ps.Aminus.imag,
                     ps.position, (ps.A0 + ps.Aplus + ps.Aminus).real, ps.mean, ex.dd, ex.od.real, ex.od.imag, ex.oo])
    w = _Writer(out, "appb", {**_resolved_common(params, baths, quad, Direction.GAIN_LEAD1),
                              "appb": {"t": t, "Lambdas": lams.tolist()}})
    w.csv("appb.csv", ["Lambda", "A0", "Aplus_re", "Aplus_im", "Aminus_re", "Aminus_im", "peak_pos",
                       "sum_rule", "mean", "dd", "od_re", "od_im", "oo"], rows)
    return {"writer": w, "report": dot_occupation_limit(baths, params, quad)}


def cmd_appa(cfg: Mapping, out: Path) -> dict:
    """Trace of powers of the finite-time delta kernel versus the linear law."""
    sec = _section(cfg, "appa", {"k", "times", "spacing", "p_max"}, {"k", "times"})
    times = _nonempty(_grid(sec["times"], "appa.times"), "appa.times")
    rep = appendix_a_check(int(sec["k"]), times, float(sec.get("spacing", 0.01)), float(sec.get("p_max", 5.0)))
    w = _Writer(out, "appa", {"appa": {"k": rep.k, "times": times.tolist(),
                                       "spacing": float(sec.get("spacing", 0.01)),
                                       "p_max": float(sec.get("p_max", 5.0))}})
    w.csv("appa.csv", ["t", "trace_re", "trace_im", "remainder_re", "remainder_im"],
          [[t, z.real, z.imag, r.real, r.imag] for t, z, r in zip(rep.t, rep.trace, rep.remainder)])
    return {"writer": w, "report": {"predicted_slope": rep.predicted_slope, "fitted_slope": rep.fitted_slope,
                                    "slope_error": rep.slope_error}}


COMMANDS: dict[str, Callable[[Mapping, Path], dict]] = {
    "lldf": cmd_lldf,
    "finite-time": cmd_finite_time,
    "relax": cmd_relax,
    "spread": cmd_spread,
    "appb": cmd_appb,
    "appa": cmd_appa,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rlmfcs", description="Counting statistics of the resonant-level model.")
    ap.add_argument("--version", action="version", version=f"rlmfcs {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").splitlines()[0])
        p.add_argument("--config", required=True, help="TOML or JSON configuration file")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
        p.add_argument("--seed", type=int, default=None, help="accepted for interface stability; unused")
    return ap


def _error_report(out: Path, command: str, kind: str, exc: Exception, code: int) -> None:
    body = {"command": command, "version": __version__, "status": kind,
            "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(body), file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}_error.json").write_text(json.dumps(body, indent=2) + "\n")
    except OSError:
        pass


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    command = args.command.replace("-", "_")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = load_config(args.config)
        from threadpoolctl import threadpool_limits

        start = time.perf_counter()
        with threadpool_limits(limits=args.threads):
            result = COMMANDS[args.command](cfg, out)
        w = result["writer"]
        w.manifest({"report": result["report"], "seed": args.seed, "threads": args.threads,
                    "elapsed_s": time.perf_counter() - start})
    except ConfigError as exc:
        _error_report(out, command, "invalid_config", exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except NumericalError as exc:
        _error_report(out, command, "numerical_failure", exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
