"""Command-line front end.

Simulation CSV schema (``run`` and ``figure``)::

    strategy,d,power_db,mse,mse_ci95,avg_power,mu,blocks,seed

Bound and analytic rows use the same columns with ``mse_ci95 = 0`` and
``blocks = 0``.  Exit codes: 0 ok, 2 configuration error, 3 numerical
failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import __version__
from .bounds import BoundCapWarning, DEFAULT_U_MAX, llb, tlb
from .model import (ConfigError, model_from_config, reference_discrete_channel, reference_rayleigh_channel,
                    reference_source)
from .nocsi import CounterexampleSpec, counterexample, no_csi_strict
from .sim import (CSV_COLUMNS, EstimatePoint, PointSpec, SweepSpec, ValidationFailure, compare_modes,
                  db_to_linear, run_sweep, to_csv)
from .strategies import CalibrationFailure
from .svgplot import svg_from_csv
from .waterfill import NumericalFailure, strict_delay_optimal

log = logging.getLogger("delaylt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4

_TOP_KEYS = {"model", "run", "output"}
_RUN_KEYS = {"strategy", "delay", "power_db", "blocks", "seed", "mode", "u_max"}
_OUT_KEYS = {"directory", "format"}

FIGURES = {
    "fig4": dict(channel="discrete", kinds=["LTHM"], delays=[1, 3, 9, 41],
                 powers=[0, 5, 10, 15, 20, 25, 30], blocks=20_000),
    "fig5": dict(channel="rayleigh", kinds=["LTSM"], delays=[1, 3, 9, 41],
                 powers=[0, 5, 10, 15, 20, 25, 30], blocks=20_000),
    "fig6": dict(channel="rayleigh", kinds=["LTHM", "LTSM"], delays=[1, 3, 5, 7, 9, 15, 21],
                 powers=[10], blocks=20_000),
    "fig7": dict(channel="discrete", kinds=[], delays=[1],
                 powers=[-5, 0, 5, 10, 15, 20, 25, 30], blocks=0),
}


# --------------------------------------------------------------------------
# Config
# --------------------------------------------------------------------------

def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    bad = set(section) - allowed
    if bad:
        raise ConfigError(f"unknown keys in {where}: {sorted(bad)}")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    _reject_unknown(cfg, _TOP_KEYS, "config")
    run = cfg.get("run") or {}
    _reject_unknown(run, _RUN_KEYS, "run")
    strat = run.get("strategy")
    if strat is not None:
        if not isinstance(strat, dict):
            raise ConfigError("run.strategy must be a mapping")
        _reject_unknown(strat, {"kind"}, "run.strategy")
    _reject_unknown(cfg.get("output") or {}, _OUT_KEYS, "output")
    return cfg


def _model(cfg: dict, default_channel: str = "rayleigh"):
    if "model" in cfg:
        return model_from_config(cfg["model"])
    ch = reference_rayleigh_channel() if default_channel == "rayleigh" else reference_discrete_channel()
    return reference_source(), ch


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def _as_list(v):
    if v is None:
        return None
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _settings(args, cfg: dict, defaults: dict) -> dict:
    """Merge command-line flags over config values over defaults."""
    run = cfg.get("run") or {}
    out = cfg.get("output") or {}
    s = dict(defaults)
    for key, cfg_key in (("delays", "delay"), ("powers", "power_db")):
        if run.get(cfg_key) is not None:
            s[key] = _as_list(run[cfg_key])
    for key in ("blocks", "seed", "mode", "u_max"):
        if run.get(key) is not None:
            s[key] = run[key]
    if (run.get("strategy") or {}).get("kind") is not None:
        s["kinds"] = _as_list(run["strategy"]["kind"])
    if out.get("directory") is not None:
        s["out"] = out["directory"]
    if out.get("format") is not None:
        s["format"] = out["format"]
    for key, attr in (("delays", "delay"), ("powers", "power_db"), ("blocks", "blocks"),
                      ("seed", "seed"), ("out", "out"), ("format", "format")):
        v = getattr(args, attr, None)
        if v is not None:
            s[key] = v
    if getattr(args, "strategy", None):
        s["kinds"] = [args.strategy]
    if s.get("format") not in ("csv", "svg", "both"):
        raise ConfigError(f"unknown format {s.get('format')!r}")
    try:
        s["blocks"] = int(s["blocks"])
        s["seed"] = int(s["seed"])
        s["delays"] = [int(d) for d in s["delays"]]
        s["powers"] = [float(p) for p in s["powers"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return s


def _emit(name: str, text: str, s: dict) -> None:
    """Write CSV and/or SVG into the output directory (stdout without one)."""
    fmt = s.get("format", "csv")
    out = s.get("out")
    svg = svg_from_csv(text) if fmt in ("svg", "both") else None
    if out is None:
        sys.stdout.write(text if fmt != "svg" else svg)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    if fmt in ("csv", "both"):
        (d / f"{name}.csv").write_text(text)
        print(d / f"{name}.csv")
    if svg is not None:
        (d / f"{name}.svg").write_text(svg)
        print(d / f"{name}.svg")


def _rows_csv(header: Sequence[str], rows) -> str:
    from .sim import _fmt
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _bound_point(name: str, d: int, power_db: float, value: float) -> EstimatePoint:
    P = db_to_linear(power_db)
    return EstimatePoint(strategy=name, d=d, power_db=power_db, mse=value, mse_ci95=0.0,
                         avg_power=P, power_ci95=0.0, mu=math.nan, blocks=0, seed=0)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_strict_delay(args, cfg) -> int:
    s = _settings(args, cfg, dict(delays=[1], powers=[-5, 0, 5, 10, 15, 20, 25, 30], blocks=0,
                                  seed=0, out=None, format="csv"))
    source, channel = _model(cfg, "discrete")
    rows = []
    for db in s["powers"]:
        t = strict_delay_optimal(source, channel, db_to_linear(db))
        rows.append((db, t.avg_distortion, t.lam))
    _emit("strict_delay", _rows_csv(("power_db", "distortion", "lambda"), rows), s)
    return EXIT_OK


def _figure_rows(name: str, s: dict, source, channel) -> list[EstimatePoint]:
    pts: list[EstimatePoint] = []
    if name == "fig7":
        for db in s["powers"]:
            P = db_to_linear(db)
            pts.append(_bound_point("LT-CSI", 1, db, strict_delay_optimal(source, channel, P).avg_distortion))
            pts.append(_bound_point("LT-noCSI", 1, db, no_csi_strict(source, channel, P).avg_distortion))
            pts.append(_bound_point("TLB-CSI", 1, db, tlb(source, channel, P).distortion))
            pts.append(_bound_point("TLB-noCSI", 1, db, tlb(source, channel, P, encoder_csi=False).distortion))
        return pts
    sweep = SweepSpec(s["kinds"], s["delays"], s["powers"], s["blocks"], s["seed"], s.get("mode", "analytic"))
    pts.extend(run_sweep(sweep, source, channel))
    for db in s["powers"]:
        value = tlb(source, channel, db_to_linear(db)).distortion
        if name == "fig6":
            pts.extend(_bound_point("TLB", d, db, value) for d in s["delays"])
        else:
            pts.append(_bound_point("TLB", 0, db, value))
    if name == "fig6":
        for db in s["powers"]:
            for d in s["delays"]:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", BoundCapWarning)
                    b = llb(source, channel, d, db_to_linear(db), u_max=int(s.get("u_max", DEFAULT_U_MAX)))
                pts.append(_bound_point("LLB", d, db, b.distortion))
    return pts


def cmd_figure(args, cfg) -> int:
    preset = FIGURES[args.name]
    s = _settings(args, cfg, dict(kinds=preset["kinds"], delays=preset["delays"],
                                  powers=preset["powers"], blocks=preset["blocks"], seed=0,
                                  out=None, format="both"))
    source, channel = _model(cfg, preset["channel"])
    pts = _figure_rows(args.name, s, source, channel)
    _emit(args.name, to_csv(pts), s)
    return EXIT_OK if all(p.failed is None for p in pts) else EXIT_NUMERIC


def cmd_run(args, cfg) -> int:
    s = _settings(args, cfg, dict(kinds=["LTSM"], delays=[1], powers=[10.0], blocks=10_000, seed=0,
                                  out=None, format="csv", mode="analytic"))
    if args.mode is not None:
        s["mode"] = args.mode
    source, channel = _model(cfg)
    pts = run_sweep(SweepSpec(s["kinds"], s["delays"], s["powers"], s["blocks"], s["seed"], s["mode"]),
                    source, channel)
    _emit("run", to_csv(pts), s)
    return EXIT_OK if all(p.failed is None for p in pts) else EXIT_NUMERIC


def cmd_compare(args, cfg) -> int:
    s = _settings(args, cfg, dict(kinds=["LTHM"], delays=[3], powers=[10.0], blocks=100_000, seed=0,
                                  out=None, format="csv"))
    source, channel = _model(cfg)
    ok = True
    rows = []
    for kind in s["kinds"]:
        for d in ([1] if kind == "strict" else s["delays"]):
            for db in s["powers"]:
                a, b, agree = compare_modes(PointSpec(kind, d, db, s["blocks"], s["seed"]), source, channel)
                rows.append((kind, d, db, a.mse, a.mse_ci95, b.mse, b.mse_ci95, int(agree)))
                ok &= agree
    _emit("compare", _rows_csv(("strategy", "d", "power_db", "mse_analytic", "ci_analytic",
                                "mse_noise", "ci_noise", "agree"), rows), s)
    if not ok:
        raise ValidationFailure("analytic and noise-sampled estimates disagree")
    return EXIT_OK


def cmd_bounds(args, cfg) -> int:
    s = _settings(args, cfg, dict(delays=[1, 3, 5, 9], powers=[0, 5, 10, 15], blocks=0, seed=0,
                                  out=None, format="csv", u_max=DEFAULT_U_MAX))
    if args.u_max is not None:
        s["u_max"] = args.u_max
    source, channel = _model(cfg)
    rows = []
    for db in s["powers"]:
        P = db_to_linear(db)
        rows.append(("TLB-CSI", 0, db, tlb(source, channel, P).distortion, "", ""))
        rows.append(("TLB-noCSI", 0, db, tlb(source, channel, P, encoder_csi=False).distortion, "", ""))
        for d in s["delays"]:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", BoundCapWarning)
                b = llb(source, channel, d, P, u_max=int(s["u_max"]))
            for w in caught:
                print(f"warning: d={d}, {db:g} dB: {w.message}", file=sys.stderr)
            rows.append(("LLB", d, db, b.distortion, b.aux["u_star"], int(b.aux["at_cap"])))
    _emit("bounds", _rows_csv(("kind", "d", "power_db", "distortion", "u_star", "at_cap"), rows), s)
    return EXIT_OK


def cmd_no_csi(args, cfg) -> int:
    s = _settings(args, cfg, dict(delays=[1], powers=[-5, 0, 5, 10, 15, 20, 25, 30], blocks=0, seed=0,
                                  out=None, format="csv"))
    source, channel = _model(cfg, "discrete")
    rows = []
    for db in s["powers"]:
        P = db_to_linear(db)
        t = no_csi_strict(source, channel, P)
        rows.append((db, t.avg_distortion, strict_delay_optimal(source, channel, P).avg_distortion,
                     tlb(source, channel, P, encoder_csi=False).distortion, t.lam))
    _emit("no_csi", _rows_csv(("power_db", "lt_no_csi", "lt_csi", "tlb_no_csi", "lambda"), rows), s)
    return EXIT_OK


def _equal_split(p1: float, P: float) -> float:
    """Common value x = P11 = P12 = P21 that spends the budget P."""
    p2 = 1.0 - p1
    return 2.0 * P / (p1 * p1 + 2.0 * p1 * p2)


def cmd_counterexample(args, cfg) -> int:
    try:
        if args.p12 is None and args.p21 is None:
            x = _equal_split(args.p1, args.budget)
            spec = CounterexampleSpec(p1=args.p1, var1=args.var1, h1=args.h1, P=args.budget,
                                      P11=x, P12=x, P21=x)
        else:
            spec = CounterexampleSpec.from_mixed(args.p12 or 0.0, args.p21 or 0.0, p1=args.p1,
                                                 var1=args.var1, h1=args.h1, P=args.budget)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from None
    d1, d2 = counterexample(spec)
    verdict = "non-diagonal wins" if d2 < d1 else ("tie" if d2 == d1 else "diagonal wins")
    print(f"P11={spec.P11:.6g} P12={spec.P12:.6g} P21={spec.P21:.6g}")
    print(f"D1 (diagonal)   = {d1:.6f}")
    print(f"D2 (repetition) = {d2:.6f}")
    print(f"verdict: {verdict}")
    return EXIT_OK


def cmd_plot(args, cfg) -> int:
    try:
        text = Path(args.csv).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from None
    svg = svg_from_csv(text)
    if args.output:
        Path(args.output).write_text(svg)
    else:
        sys.stdout.write(svg)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, sim: bool = False) -> None:
    p.add_argument("--config", metavar="PATH", help="YAML config (sections: model, run, output)")
    p.add_argument("--seed", type=int, help="root seed (default 0)")
    p.add_argument("--out", metavar="DIR", help="output directory (default: stdout)")
    p.add_argument("--power-db", dest="power_db", type=_floats, metavar="LIST",
                   help="comma-separated powers in dB")
    p.add_argument("--delay", type=_ints, metavar="LIST", help="comma-separated delays")
    p.add_argument("--format", choices=("csv", "svg", "both"))
    if sim:
        p.add_argument("--blocks", type=int, help="blocks per grid point")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="delaylt", description=__doc__.split("\n\n")[0],
        epilog="CSV columns: " + ",".join(CSV_COLUMNS) +
               ".  Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 validation failure.",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("strict-delay", help="optimal strict-delay allocation: power_db,distortion,lambda")
    _common(p)
    p.set_defaults(func=cmd_strict_delay)

    p = sub.add_parser("figure", help="figure presets (CSV plus SVG)")
    p.add_argument("name", choices=sorted(FIGURES))
    _common(p, sim=True)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("run", help="simulate LTHM / LTSM / strict-delay grid points")
    _common(p, sim=True)
    p.add_argument("--strategy", choices=("strict", "LTHM", "LTSM"))
    p.add_argument("--mode", choices=("analytic", "noise"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="analytic versus noise-sampled estimator (exit 4 on mismatch)")
    _common(p, sim=True)
    p.add_argument("--strategy", choices=("strict", "LTHM", "LTSM"))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bounds", help="TLB with/without encoder CSI and LLB per delay")
    _common(p)
    p.add_argument("--u-max", dest="u_max", type=int, help=f"LLB search cap (default {DEFAULT_U_MAX})")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("no-csi", help="strict-delay LT without encoder CSI")
    _common(p)
    p.set_defaults(func=cmd_no_csi)

    p = sub.add_parser("counterexample", help="diagonal versus repetition two-slot schemes")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--p1", type=float, default=0.5)
    p.add_argument("--var1", type=float, default=1.0)
    p.add_argument("--h1", type=float, default=1.0)
    p.add_argument("--budget", type=float, default=1.0, help="average power P")
    p.add_argument("--p12", type=float, help="power on request pair (1, 2); P11 takes the rest")
    p.add_argument("--p21", type=float, help="power on request pair (2, 1)")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("plot", help="render an SVG from a CSV written by this tool")
    p.add_argument("csv")
    p.add_argument("-o", "--output", metavar="SVG")
    p.add_argument("--config", metavar="PATH")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None))
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalFailure, CalibrationFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
