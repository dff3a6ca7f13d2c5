"""Command line interface: single evaluations, optimization scans and oracle suites.

Exit codes: 0 success, 1 verification failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources

from mcdqkd.bounds import SecurityBudget
from mcdqkd.channel import REFERENCE_CHANNEL, ChannelParams, observe
from mcdqkd.decoy import IntensityProfile
from mcdqkd.keyrate import FixedPointError, KeyRateReport, key_rate, solve_security_fixed_point
from mcdqkd.optimize import RATE_SCALE, OptimizationConfig, OptimizationResult, optimize
from mcdqkd.oracles import bound_validity_check, coverage_check

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2

FORMATS = ("table", "csv", "json")

DEFAULTS: dict[str, object] = {
    "channel.p_ap": REFERENCE_CHANNEL.p_ap,
    "channel.p_dc": REFERENCE_CHANNEL.p_dc,
    "channel.e_mis": REFERENCE_CHANNEL.e_mis,
    "channel.eta_ch": REFERENCE_CHANNEL.eta_ch,
    "channel.eta_sys": REFERENCE_CHANNEL.eta_sys,
    "security.kappa": 1e-15,
    "security.eps_cor": 1e-15,
    "grid.k": [3, 4, 5, 6],
    "grid.sx_exponents": [5, 6, 7, 8, 9, 10, 11],
    "optimizer.restarts": 32,
    "optimizer.seed": 0,
    "optimizer.spacing_min": 0.1,
    "optimizer.vacuum_gap_min": 1e-3,
    "optimizer.mu_min": 1e-6,
    "optimizer.mu_max": 1.0,
    "optimizer.tolerance": 1e-9,
    "optimizer.screen": 1024,
    "optimizer.max_evals": 400_000,
    "output.format": "table",
    "output.path": None,
    "output.reference": False,
}

_INT_KEYS = {"optimizer.restarts", "optimizer.seed", "optimizer.screen", "optimizer.max_evals"}
_BOOL_KEYS = {"output.reference"}

REFERENCE_COLUMN = "R_prime_-5_reported"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        location = ""
        if field is not None:
            location += f"field '{field}'"
        if line is not None:
            location += f"{', ' if location else ''}line {line}"
        super().__init__(f"{location}: {message}" if location else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    channel: ChannelParams = REFERENCE_CHANNEL
    kappa: float = 1e-15
    eps_cor: float = 1e-15
    grid_k: tuple[int, ...] = (3, 4, 5, 6)
    grid_sx: tuple[float, ...] = (5, 6, 7, 8, 9, 10, 11)
    optimizer: dict = field(default_factory=dict)
    output_format: str = "table"
    output_path: str | None = None
    reference: bool = False

    def __post_init__(self) -> None:
        if not self.grid_k:
            raise ConfigError("grid must not be empty", "grid.k")
        if not self.grid_sx:
            raise ConfigError("grid must not be empty", "grid.sx_exponents")
        if self.output_format not in FORMATS:
            raise ConfigError(f"must be one of {FORMATS}, got {self.output_format!r}", "output.format")

    def optimization_config(self, k: int, s_x: float) -> OptimizationConfig:
        return OptimizationConfig(k=k, s_x=s_x, **self.optimizer)

    @property
    def cells(self) -> list[tuple[int, float]]:
        return sorted({(k, 10.0 ** e) for k in self.grid_k for e in self.grid_sx})


def _flatten(tree: dict, prefix: str = "") -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _line_of(text: str, key: str) -> int | None:
    leaf = key.rsplit(".", 1)[-1]
    for needle in (f'"{key}"', f'"{leaf}"'):
        for number, line in enumerate(text.splitlines(), start=1):
            if needle in line:
                return number
    return None


def _coerce(key: str, value: object) -> object:
    if key in ("grid.k", "grid.sx_exponents"):
        if not isinstance(value, list):
            value = [value]
        if key == "grid.k":
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise ValueError("expected a list of integers")
        elif not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ValueError("expected a list of numbers")
        return value
    if key == "output.format":
        if value not in FORMATS:
            raise ValueError(f"must be one of {FORMATS}")
        return value
    if key == "output.path":
        if value is not None and not isinstance(value, str):
            raise ValueError("expected a string path")
        return value
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ValueError("expected true or false")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError("expected a number")
    if key in _INT_KEYS:
        if isinstance(value, float) and not value.is_integer():
            raise ValueError("expected an integer")
        return int(value)
    return float(value)


def parse_config(text: str) -> dict[str, object]:
    """Parse a JSON document with nested or dotted keys into a validated flat mapping."""
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    if not isinstance(tree, dict):
        raise ConfigError("top level must be an object", line=1)
    values = dict(DEFAULTS)
    for key, value in _flatten(tree).items():
        if key not in DEFAULTS:
            raise ConfigError("unknown key", key, _line_of(text, key))
        try:
            values[key] = _coerce(key, value)
        except ValueError as exc:
            raise ConfigError(str(exc), key, _line_of(text, key)) from None
    return values


def build_run_config(values: dict[str, object]) -> RunConfig:
    def wrap(key, build):
        try:
            return build()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), key) from None

    channel = wrap(
        "channel",
        lambda: ChannelParams(
            **{name: values[f"channel.{name}"] for name in ("p_ap", "p_dc", "e_mis", "eta_ch", "eta_sys")}
        ),
    )
    optimizer = {
        name: values[f"optimizer.{name}"]
        for name in (
            "restarts", "seed", "spacing_min", "vacuum_gap_min", "mu_min",
            "mu_max", "tolerance", "screen", "max_evals",
        )
    }
    optimizer["screen"] = max(optimizer["screen"], optimizer["restarts"])
    config = RunConfig(
        channel=channel,
        kappa=values["security.kappa"],
        eps_cor=values["security.eps_cor"],
        grid_k=tuple(values["grid.k"]),
        grid_sx=tuple(values["grid.sx_exponents"]),
        optimizer=optimizer,
        output_format=values["output.format"],
        output_path=values["output.path"],
        reference=values["output.reference"],
    )
    wrap("security", lambda: SecurityBudget(eps_sec=0.5, eps_cor=config.eps_cor, kappa=config.kappa))
    for k, s_x in config.cells:
        wrap("optimizer", lambda: config.optimization_config(k, s_x))
    return config


def load_reference() -> dict[tuple[int, float], tuple[float, float]]:
    """Published ``(R'_-5, R_-5)`` per ``(k, s_X)``; display-only reference data."""
    text = resources.files("mcdqkd").joinpath("data/reference_rates.csv").read_text()
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    return {
        (int(r["k"]), float(r["s_x"])): (float(r["R_prime_-5"]), float(r["R_-5"])) for r in rows
    }


# ----------------------------------------------------------------------------- rows


def result_row(k: int, s_x: float, result: OptimizationResult) -> dict[str, object]:
    rep = result.best_report
    return {
        "k": k,
        "s_x": float(s_x),
        "R": rep.R,
        "R_-5": rep.R * RATE_SCALE,
        "p_X": result.best_p_X,
        "mu": list(result.best_mu),
        "p_mu": list(result.best_p_mu),
        "eps_sec": rep.eps_sec,
        "l_final": rep.l_final,
        "e_p": rep.e_p,
        "e_Z1": rep.e_Z1,
        "feasible": rep.feasible,
        "vacuous_gamma": rep.vacuous_gamma,
        "converged": result.converged,
        "evals": result.evals,
    }


def report_row(report: KeyRateReport) -> dict[str, object]:
    return {
        "R": report.R,
        "R_-5": report.R * RATE_SCALE,
        "raw_R": report.raw_R,
        "eps_sec": report.eps_sec,
        "l_final": report.l_final,
        "e_p": report.e_p,
        "e_Z1": report.e_Z1,
        "gamma": report.gamma,
        "lambda_EC": report.lambda_EC,
        "y_Z1": report.y_Z1,
        "y_X1": report.y_X1,
        "deviation_X": report.deviation_X,
        "feasible": report.feasible,
        "vacuous_gamma": report.vacuous_gamma,
        "iterations": report.iterations,
    }


def _csv_cell(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(_csv_cell(v) for v in value)
    return str(value)


def _table_cell(value: object) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.5e}"
    if isinstance(value, (list, tuple)):
        return ",".join(_table_cell(v) for v in value)
    return str(value)


def format_csv(rows: list[dict[str, object]]) -> str:
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(rows[0].keys())
    for row in rows:
        writer.writerow(_csv_cell(v) for v in row.values())
    return buffer.getvalue()


def format_json(rows: list[dict[str, object]]) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v

    return json.dumps([{k: clean(v) for k, v in row.items()} for row in rows], indent=2) + "\n"


def _align(header: list[str], body: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"


def format_key_value(rows: list[dict[str, object]]) -> str:
    chunks = []
    for row in rows:
        width = max(len(k) for k in row)
        chunks.append("\n".join(f"{k.ljust(width)}  {_table_cell(v)}" for k, v in row.items()) + "\n")
    return "\n".join(chunks)


def format_scan_table(rows: list[dict[str, object]], reference: bool) -> str:
    """Rows indexed by ``s_X``, one rate column per ``k`` (plus the published baseline)."""
    ks = sorted({row["k"] for row in rows})
    sxs = sorted({row["s_x"] for row in rows})
    by_cell = {(row["k"], row["s_x"]): row for row in rows}
    header = ["s_X"]
    for k in ks:
        if reference:
            header.append(f"k={k} R'_-5 (reported)")
        header.append(f"k={k} R_-5")
    body = []
    for s_x in sxs:
        line = [_table_cell(s_x)]
        for k in ks:
            row = by_cell.get((k, s_x))
            if reference:
                ref = row.get(REFERENCE_COLUMN) if row else None
                line.append(_table_cell(ref) if ref is not None else "-")
            line.append(_table_cell(row["R_-5"]) if row else "-")
        body.append(line)
    return _align(header, body)


def render(rows: list[dict[str, object]], fmt: str, *, scan: bool = False, reference: bool = False) -> str:
    if fmt == "csv":
        return format_csv(rows)
    if fmt == "json":
        return format_json(rows)
    if scan:
        return format_scan_table(rows, reference)
    return format_key_value(rows)


# ----------------------------------------------------------------------------- runs


def run_scan(config: RunConfig) -> tuple[int, str]:
    """Optimize every ``(k, s_X)`` cell of the grid; rows are ordered by ``(k, s_X)``."""
    reference = load_reference() if config.reference else {}
    rows = []
    for k, s_x in config.cells:
        logging.getLogger(__name__).info("optimizing k=%d s_x=%g", k, s_x)
        row = result_row(k, s_x, optimize(config.channel, config.optimization_config(k, s_x), config.kappa, config.eps_cor))
        if config.reference:
            ref = reference.get((k, s_x))
            row[REFERENCE_COLUMN] = ref[0] if ref else math.nan
        rows.append(row)
    return EXIT_OK, render(rows, config.output_format, scan=True, reference=config.reference)


def run_verify(trials: int, ks: list[int], coverage_trials: int, seed: int) -> tuple[int, str]:
    lines = []
    failed = False
    for k in ks:
        report = bound_validity_check(trials, k, seed)
        ok = report.violations == 0
        failed |= not ok
        lines.append(
            f"{'PASS' if ok else 'FAIL'} bound_validity k={k} trials={trials} "
            f"violations(Y0,Y1,e1)=({report.violations_y0},{report.violations_y1},{report.violations_e1}) "
            f"worst_excess={report.worst_excess:.3e}"
        )
    cov = coverage_check(0.1, 1000, trials=coverage_trials, seed=seed)
    failed |= not cov.passed
    lines.append(
        f"{'PASS' if cov.passed else 'FAIL'} coverage eps={cov.eps} s={cov.s} trials={cov.trials} "
        f"rate_low={cov.rate_low:.4f} rate_high={cov.rate_high:.4f} allowed={cov.allowed:.4f}"
    )
    return (EXIT_VERIFY_FAILED if failed else EXIT_OK), "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------- argparse


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON configuration file (nested or dotted keys)")
    parser.add_argument("--format", choices=FORMATS, help="output format")
    parser.add_argument("--out", help="write output to this file instead of stdout")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcdqkd", description="Finite-key decoy-state BB84 key rates.")
    sub = parser.add_subparsers(dest="command", required=True)

    rate = sub.add_parser("rate", help="evaluate the key rate at explicit parameters")
    _common(rate)
    rate.add_argument("--mu", type=_float_list, required=True, help="intensities, decreasing, comma-separated")
    rate.add_argument("--p-mu", type=_float_list, required=True, help="usage probabilities, comma-separated")
    rate.add_argument("--p-x", type=float, required=True, help="X-basis probability")
    rate.add_argument("--sx", type=float, required=True, help="raw key length s_X")
    rate.add_argument("--eps-sec", type=float, help="fixed eps_sec (default: solve eps_sec = kappa * l_final)")

    opt = sub.add_parser("optimize", help="optimize one (k, s_X) cell")
    _common(opt)
    opt.add_argument("--k", type=int, required=True, help="number of intensities")
    opt.add_argument("--sx", type=float, required=True, help="raw key length s_X")
    opt.add_argument("--restarts", type=int, help="Nelder-Mead starts")

    scan = sub.add_parser("scan", help="optimize every cell of a (k, s_X) grid")
    _common(scan)
    scan.add_argument("--k", type=_int_list, help="comma-separated k values (overrides grid.k)")
    scan.add_argument("--sx", type=_float_list, help="comma-separated s_X values, e.g. 1e5,1e7")
    scan.add_argument("--restarts", type=int, help="Nelder-Mead starts per cell")
    scan.add_argument("--reference", action="store_true", help="add the published baseline column")

    verify = sub.add_parser("verify", help="run the decoy-bound and coverage oracles")
    _common(verify)
    verify.add_argument("--trials", type=int, default=1000, help="bound-validity trials per k")
    verify.add_argument("--k", type=_int_list, default=[3, 5], help="comma-separated k values")
    verify.add_argument("--coverage-trials", type=int, default=10_000, help="coverage Monte Carlo trials")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}") from None
        values = parse_config(text)
    if args.seed is not None:
        values["optimizer.seed"] = args.seed
    if getattr(args, "restarts", None) is not None:
        values["optimizer.restarts"] = args.restarts
    if args.format is not None:
        values["output.format"] = args.format
    if args.out is not None:
        values["output.path"] = args.out
    if getattr(args, "reference", False):
        values["output.reference"] = True
    if args.command == "scan":
        if args.k is not None:
            values["grid.k"] = args.k
        if args.sx is not None:
            if any(s <= 0 for s in args.sx):
                raise ConfigError("s_X values must be positive", "--sx")
            values["grid.sx_exponents"] = [_exponent(s) for s in args.sx]
    return build_run_config(values)


def _exponent(s_x: float) -> float:
    e = math.log10(s_x)
    # snap exact powers of ten so the grid reproduces s_X bit for bit
    return round(e) if 10.0 ** round(e) == s_x else e


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "scan":
            status, text = run_scan(config)
        elif args.command == "optimize":
            result = optimize(config.channel, config.optimization_config(args.k, args.sx), config.kappa, config.eps_cor)
            status, text = EXIT_OK, render([result_row(args.k, args.sx, result)], config.output_format)
        elif args.command == "rate":
            status, text = EXIT_OK, render([_rate_row(args, config)], config.output_format)
        else:
            seed = config.optimizer["seed"]
            status, text = run_verify(args.trials, args.k, args.coverage_trials, seed)
    except (ValueError, FixedPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(text, config.output_path)
    return status


def _rate_row(args: argparse.Namespace, config: RunConfig) -> dict[str, object]:
    profile = IntensityProfile(tuple(args.mu), tuple(args.p_mu))
    observed = observe(config.channel, profile)
    if args.eps_sec is not None:
        report = key_rate(profile, observed, args.p_x, args.sx, SecurityBudget(args.eps_sec, config.eps_cor))
    else:
        report = solve_security_fixed_point(profile, observed, args.p_x, args.sx, config.kappa, config.eps_cor)
    return report_row(report)


if __name__ == "__main__":
    sys.exit(main())
