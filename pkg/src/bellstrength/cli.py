"""Command-line front end for the package's benchmark outputs.

Four subcommands write plot-ready files: ``table1`` (the three-state
d = 3 benchmark), ``figure1`` (strength and entanglement against local
dimension), ``additivity`` (independent copies of a test versus one big
test), and ``simulate`` (finite-sample strength on a growing trial
schedule).

CSV files start with ``# key=value`` lines echoing the resolved
configuration, then a header row, then data rows.  Shared columns always
come first, in the order (d, divergence_bits, entanglement_bits, mode,
certificate_gap); commands with extra outputs append columns after
those.  Numbers carry nine significant digits; empty cells stand for
values that do not apply.  JSON output mirrors the same content as
{"config": {...}, "rows": [...]}.  Files are written atomically, and
everything emitted parses back via ``parse_csv`` / ``parse_json`` /
``load_output`` from this module.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .bell import cglmp_functional, quantum_value
from .errors import InvalidParameterError
from .experiment import empirical_strength, sample_trials
from .optimizer import (
    EXACT_DIM_CAP,
    _golden_max,
    additivity_comparison,
    conjectured_optimum,
    figure1_sweep,
    optimize_state_exact,
)
from .quantum import (
    cglmp_measurements,
    entropy_of_entanglement,
    maximally_entangled,
    quantum_behavior,
    three_level_state,
    uniform_settings,
)
from .strength import min_kl_local

CORE_COLUMNS = ("d", "divergence_bits", "entanglement_bits", "mode",
                "certificate_gap")
MODES = ("auto", "exact", "conjectured")
FORMATS = ("csv", "json")
SIMULATION_SCHEDULE = (10**3, 10**4, 10**5, 10**6)


@dataclass(frozen=True)
class RunConfig:
    """Resolved invocation: every flag made explicit, defaults applied."""

    command: str
    d: int | None
    d_max: int | None
    tol: float
    mode: str
    copies: int | None
    seed: int | None
    out: str
    format: str

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParameterError(f"tolerance must be positive, got {self.tol}")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.format not in FORMATS:
            raise InvalidParameterError(
                f"format must be one of {FORMATS}, got {self.format!r}"
            )
        if self.d is not None and self.d < 2:
            raise InvalidParameterError(f"dimension must be >= 2, got {self.d}")
        if self.d_max is not None and self.d_max < (self.d or 2):
            raise InvalidParameterError(
                f"d-max {self.d_max} is below the start of the range"
            )
        if self.copies is not None and self.copies < 1:
            raise InvalidParameterError(f"copies must be >= 1, got {self.copies}")

    def echo_items(self) -> list[tuple[str, object]]:
        """Configuration as ordered pairs, None fields skipped."""
        pairs = [("command", self.command), ("d", self.d), ("d_max", self.d_max),
                 ("tol", self.tol), ("mode", self.mode), ("copies", self.copies),
                 ("seed", self.seed), ("out", self.out), ("format", self.format)]
        return [(k, v) for k, v in pairs if v is not None]


# ---------------------------------------------------------------------------
# serialization


def format_number(x: float) -> str:
    return f"{x:.9g}"


def _cell(value) -> str:
    """One CSV cell.  None means not-applicable and prints empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if not np.isfinite(value) else format_number(float(value))
    return str(value)


def _json_value(value):
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if not np.isfinite(value) else float(format_number(float(value)))
    return str(value)


def render_csv(echo, header, rows) -> str:
    lines = [f"# {key}={_cell(value)}" for key, value in echo]
    lines.append(",".join(header))
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def render_json(echo, header, rows) -> str:
    payload = {
        "config": {key: _json_value(value) for key, value in echo},
        "rows": [
            {col: _json_value(v) for col, v in zip(header, row)} for row in rows
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _typed(text: str):
    """Inverse of _cell for one field: '' -> None, then int, float, bool."""
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_csv(text: str) -> tuple[dict, list[dict]]:
    """Read back an emitted CSV: ({echo key: value}, [row dicts])."""
    lines = [line for line in text.splitlines() if line != ""]
    meta = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("# "):
            body_start = i
            break
        key, _, raw = line[2:].partition("=")
        meta[key] = _typed(raw)
    header = lines[body_start].split(",")
    rows = [
        dict(zip(header, (_typed(cell) for cell in line.split(","))))
        for line in lines[body_start + 1:]
    ]
    return meta, rows


def parse_json(text: str) -> tuple[dict, list[dict]]:
    payload = json.loads(text)
    return payload["config"], payload["rows"]


def load_output(path: str) -> tuple[dict, list[dict]]:
    """Parse an emitted file by extension (.json, anything else CSV)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return parse_json(text)
    return parse_csv(text)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bellstrength-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# subcommands; each returns (header, rows, extra echo pairs, all converged)


def _solver_route(d: int, mode: str) -> str:
    if mode == "auto":
        return "exact" if d <= EXACT_DIM_CAP else "conjectured"
    return mode


def cmd_table1(config: RunConfig):
    """Three d = 3 benchmark states: flat, peak violation, peak divergence."""
    d = 3
    alice = cglmp_measurements(d, "alice")
    bob = cglmp_measurements(d, "bob")
    settings = uniform_settings(2)
    functional = cglmp_functional(d)
    sign = -1.0 if functional.direction == "min" else 1.0

    def family_violation(gamma: float) -> float:
        return sign * quantum_value(functional, three_level_state(gamma), alice, bob)

    grid = np.linspace(1e-3, 1 / np.sqrt(2) - 1e-3, 65)
    k = int(np.argmax([family_violation(g) for g in grid]))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    gamma_v, _ = _golden_max(family_violation, lo, hi, 1e-10)

    rows = []
    ok = True

    def solve_row(state, label, parameter):
        nonlocal ok
        try:
            fit = min_kl_local(quantum_behavior(state, alice, bob, settings), config.tol)
            rows.append((d, fit.divergence_bits, entropy_of_entanglement(state),
                         "exact", fit.certificate_gap, label, parameter, None))
        except Exception as exc:  # noqa: BLE001 - per-row fault reporting
            ok = False
            rows.append((d, None, None, "exact", None, label, parameter, str(exc)))

    solve_row(maximally_entangled(d), "flat", 1 / np.sqrt(3))
    solve_row(three_level_state(gamma_v), "peak-violation", gamma_v)
    try:
        report = optimize_state_exact(d, tol=config.tol)
        rows.append((d, report.divergence_bits, report.entanglement_bits, "exact",
                     report.consistency_residual, "peak-divergence",
                     float(report.best_state.coeffs[0]), None))
        ok = ok and report.converged
    except Exception as exc:  # noqa: BLE001
        ok = False
        rows.append((d, None, None, "exact", None, "peak-divergence", None, str(exc)))

    header = CORE_COLUMNS + ("state", "parameter", "error")
    return header, rows, [], ok


def cmd_figure1(config: RunConfig):
    """Strength and entanglement for every dimension in the range."""
    sweep = figure1_sweep(config.d, config.d_max, config.mode, config.tol)
    rows = [
        (r.d, r.divergence_bits, r.entanglement_bits, r.mode, r.certificate_gap,
         r.error)
        for r in sweep
    ]
    ok = all(r.error is None for r in sweep)
    return CORE_COLUMNS + ("error",), rows, [], ok


def cmd_additivity(config: RunConfig):
    """Copies of the optimal base test against one test on d^k levels."""
    report = additivity_comparison(config.d, config.copies, tol=config.tol)
    route = _solver_route(config.d, "auto")
    rows = [
        (report.d_base, report.single_strength, report.single_entanglement,
         route, None, "single"),
        (report.composite_dim, report.product_strength,
         report.copies * report.single_entanglement, "identity",
         report.identity_residual, "product"),
    ]
    if report.bundled_strength is not None:
        rows.append((report.composite_dim, report.bundled_strength, None,
                     "exact", None, "bundled"))
    if report.composite_strength is not None:
        rows.append((report.composite_dim, report.composite_strength,
                     report.composite_entanglement, "conjectured", None,
                     "one-test"))
    extra = [("product_wins", report.product_wins)] if report.product_wins is not None else []
    return CORE_COLUMNS + ("comparison",), rows, extra, report.converged


def cmd_simulate(config: RunConfig):
    """Empirical strength of the optimal d-test on a growing trial schedule."""
    route = _solver_route(config.d, config.mode)
    report = (
        optimize_state_exact(config.d, tol=config.tol)
        if route == "exact"
        else conjectured_optimum(config.d, tol=config.tol)
    )
    q = quantum_behavior(
        report.best_state,
        cglmp_measurements(config.d, "alice"),
        cglmp_measurements(config.d, "bob"),
        uniform_settings(2),
    )
    asymptotic = report.divergence_bits
    rows = []
    ok = report.converged
    for i, trials in enumerate(SIMULATION_SCHEDULE):
        fit = empirical_strength(sample_trials(q, trials, config.seed + i), config.tol)
        rows.append((config.d, fit.divergence_bits, report.entanglement_bits,
                     "empirical", fit.certificate_gap, trials, asymptotic,
                     abs(fit.divergence_bits - asymptotic)))
    header = CORE_COLUMNS + ("trials", "asymptotic_bits", "gap_bits")
    return header, rows, [], ok


_COMMANDS = {
    "table1": cmd_table1,
    "figure1": cmd_figure1,
    "additivity": cmd_additivity,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------------------
# argument handling


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellstrength",
        description="Statistical strength of Bell tests, in bits per trial.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *, d=None, d_max=None, copies=None, seed=None,
            mode=False):
        p = sub.add_parser(name, help=help_text)
        if d is not None:
            p.add_argument("--d", type=int, default=d, help="local dimension")
        if d_max is not None:
            p.add_argument("--d-max", dest="d_max", type=int, default=d_max,
                           help="last dimension of the sweep")
        if mode:
            p.add_argument("--mode", choices=MODES, default="auto",
                           help="solver route (auto = exact up to d = 6)")
        if copies is not None:
            p.add_argument("--copies", type=int, default=copies,
                           help="independent copies of the base test")
        if seed is not None:
            p.add_argument("--seed", type=int, default=seed, help="sampling seed")
        p.add_argument("--tol", type=float, default=1e-9, help="solver tolerance")
        p.add_argument("--out", default=None, help="output path")
        p.add_argument("--format", choices=FORMATS, default="csv",
                       help="output format")
        return p

    add("table1", "three-state d = 3 benchmark table")
    add("figure1", "strength against local dimension", d=2, d_max=8, mode=True)
    add("additivity", "independent copies versus one big test", d=4, copies=2)
    add("simulate", "finite-sample strength on a trial schedule", d=2, seed=0,
        mode=True)
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        d=getattr(args, "d", None),
        d_max=getattr(args, "d_max", None),
        tol=args.tol,
        mode=getattr(args, "mode", "auto"),
        copies=getattr(args, "copies", None),
        seed=getattr(args, "seed", None),
        out=args.out if args.out else f"{args.command}.{args.format}",
        format=args.format,
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        header, rows, extra_echo, ok = _COMMANDS[config.command](config)
    except Exception as exc:  # noqa: BLE001 - fail with a message, not a trace
        print(f"error: {exc}", file=sys.stderr)
        return 1
    echo = config.echo_items() + extra_echo
    text = (
        render_json(echo, header, rows)
        if config.format == "json"
        else render_csv(echo, header, rows)
    )
    _atomic_write(config.out, text)
    print(f"wrote {config.out} ({len(rows)} rows)")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
