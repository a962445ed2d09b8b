"""Command-line driver.

Configuration files are flat ``key = value`` text (``key value`` also works,
``#`` starts a comment).  Explicit initial data is given as repeated blocks::

    init_mode = 1
    init_re = 0.01
    init_im = 0.0

Each block sets the coefficient of the first complex component at that mode
(components comma separated in d >= 2); the conjugate partner is implied.
Without blocks the initial data is a seeded random c.c. pair with
``||w||_m1 = amplitude``.

Exit codes: 0 when every verdict passes, 1 on a verdict failure, 2 on a
configuration or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import __version__
from .acceptance import CRITERIA, SENSITIVITY_ENTRY
from .nf_coefficients import (
    ACTIVE_KINDS,
    DEFAULT_TABLE,
    coefficient_rows,
    scan_divisors,
    squared_radii,
)
from .shell_dynamics import shell_csv_header, shell_csv_row
from .simulation import (
    SYSTEMS,
    IntegrationError,
    conjugacy_experiment,
    csv_header,
    csv_row,
    diagnostics,
    flow_spec,
    initial_pair,
    integrate,
    state_for_system,
)
from .spectral_core import Lattice, ModeIndex
from .transforms import DEFAULT_DELTA, BallError

log = logging.getLogger("kirchhoff_nf")

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG = 0, 1, 2
MAX_TOTAL_TIME = 1e6
Z6_HALF_TOL = 1e-13


class ConfigError(ValueError):
    pass


@dataclass
class SimulationConfig:
    dimension: int = 1
    radius: float = 3.0
    system: str = "normalized"
    dt: float = 1e-3
    steps: int = 1000
    s_list: list[float] = field(default_factory=lambda: [0.5, 1.0])
    delta: float = DEFAULT_DELTA
    seed: int = 0
    out: str = "-"
    amplitude: float = 1e-2
    record_every: int = 1
    initial: dict = field(default_factory=dict)

    SCALARS = {"dimension": int, "radius": float, "system": str, "dt": float, "steps": int,
               "delta": float, "seed": int, "out": str, "amplitude": float, "record_every": int}

    @classmethod
    def from_text(cls, text: str, overrides: list[str] = ()) -> "SimulationConfig":
        pairs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, _, value = line.partition(" ")
            pairs.append((lineno, key.strip(), value.strip()))
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            pairs.append((0, key.strip(), value.strip()))
        cfg = cls()
        pending = None  # mode of an open init block
        for lineno, key, value in pairs:
            where = f"line {lineno}" if lineno else "override"
            try:
                if key in cls.SCALARS:
                    setattr(cfg, key, cls.SCALARS[key](value))
                elif key == "s_list":
                    cfg.s_list = [float(x) for x in value.replace(",", " ").split()]
                elif key == "init_mode":
                    if pending is not None:
                        raise ConfigError(f"{where}: init block for {pending} lacks init_re/init_im")
                    pending = [tuple(int(x) for x in value.split(",")), None, None]
                elif key in ("init_re", "init_im"):
                    if pending is None:
                        raise ConfigError(f"{where}: {key} without a preceding init_mode")
                    pending[1 if key == "init_re" else 2] = float(value)
                    if pending[1] is not None and pending[2] is not None:
                        cfg.initial[pending[0]] = complex(pending[1], pending[2])
                        pending = None
                else:
                    raise ConfigError(f"{where}: unknown key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{where}: bad value for {key}: {value!r}") from exc
        if pending is not None:
            raise ConfigError(f"init block for {pending[0]} is incomplete")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | None, overrides: list[str] = ()) -> "SimulationConfig":
        text = ""
        if path:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, overrides)

    def validate(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise ConfigError("dimension must be 1, 2 or 3")
        if self.radius < 1:
            raise ConfigError("radius must be at least 1")
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {', '.join(SYSTEMS)}")
        if not self.dt > 0 or self.steps <= 0:
            raise ConfigError("dt and steps must be positive")
        if self.dt * self.steps > MAX_TOTAL_TIME:
            raise ConfigError(f"dt * steps must not exceed {MAX_TOTAL_TIME:g}")
        if not self.s_list or any(s < 0 for s in self.s_list):
            raise ConfigError("s_list must hold nonnegative reals")
        if not self.delta > 0 or self.amplitude < 0 or self.record_every <= 0:
            raise ConfigError("delta and record_every must be positive, amplitude nonnegative")
        for mode in self.initial:
            if len(mode) != self.dimension or not any(mode):
                raise ConfigError(f"init_mode {mode} is not a nonzero mode of dimension {self.dimension}")

    def lattice(self) -> Lattice:
        lat = Lattice.ball(self.dimension, self.radius)
        for mode in self.initial:
            if ModeIndex(mode).sq > self.radius**2:
                raise ConfigError(f"init_mode {mode} lies outside the truncation radius")
        return lat

    def initial_pair(self):
        return initial_pair(self.lattice(), self.initial, self.amplitude, self.seed)


@dataclass
class RunReport:
    verdicts: dict[str, bool] = field(default_factory=dict)
    observed: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def summary(self) -> str:
        lines = [f"[{'PASS' if ok else 'FAIL'}] {name}" for name, ok in self.verdicts.items()]
        lines += [f"  {name} = {value:.6g}" for name, value in self.observed.items()]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


@contextmanager
def _output(path: str) -> Iterator:
    if path in ("", "-"):
        yield sys.stdout
        return
    try:
        handle = open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
    with handle:
        yield handle


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: SimulationConfig) -> RunReport:
    if cfg.system == "shell":
        return cmd_shell(cfg)
    pair = cfg.initial_pair()
    if cfg.system == "normalized" and pair.norm(pair.lattice.m1) > cfg.delta:
        raise ConfigError(f"normalized system needs ||u||_m1 <= delta = {cfg.delta}")
    state = state_for_system(cfg.system, pair)
    flow = flow_spec(cfg.system, pair.lattice, cfg.delta)
    report = RunReport()
    worst_half, energy0, drift, skipped = 0.0, None, 0.0, 0
    with _output(cfg.out) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(csv_header(cfg.s_list))
        for _, t, st in integrate(flow, state, cfg.dt, cfg.steps, cfg.record_every):
            try:
                rec = diagnostics(cfg.system, t, st, cfg.s_list, cfg.delta)
            except BallError:
                skipped += 1
                rec = None
            if rec is None:
                writer.writerow([f"{t:.17g}"] + ["nan"] * (len(cfg.s_list) * 2 + 2))
                continue
            writer.writerow(csv_row(rec))
            energy0 = rec.energy if energy0 is None else energy0
            drift = max(drift, abs(rec.energy - energy0))
            for s, z in zip(cfg.s_list, rec.z6):
                if s == 0.5:
                    worst_half = max(worst_half, abs(z))
    if 0.5 in cfg.s_list:
        report.verdicts["z6 at s = 1/2 vanishes"] = worst_half <= Z6_HALF_TOL
        report.observed["max |z6(1/2)|"] = worst_half
    report.observed["energy drift (relative)"] = drift / abs(energy0) if energy0 else drift
    if skipped:
        report.notes.append(f"{skipped} records outside the normal-form ball were written as nan")
    return report


def cmd_shell(cfg: SimulationConfig) -> RunReport:
    pair = cfg.initial_pair()
    spec = state_for_system("shell", pair)
    flow = flow_spec("shell", sq_radii=spec.sq_radii)
    report = RunReport()
    e0 = spec.sobolev_sq(0.5)
    drift = 0.0
    with _output(cfg.out) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(shell_csv_header(spec.sq_radii, cfg.s_list))
        for _, t, st in integrate(flow, spec, cfg.dt, cfg.steps, cfg.record_every):
            writer.writerow(shell_csv_row(t, st, cfg.s_list))
            drift = max(drift, abs(st.sobolev_sq(0.5) - e0))
    rate = (drift / abs(e0) if e0 else drift) / (cfg.dt * cfg.steps)
    report.verdicts["sum lambda S conserved"] = rate <= 1e-12
    report.observed["relative drift per unit time"] = rate
    return report


def cmd_conjugacy(cfg: SimulationConfig) -> RunReport:
    pair = cfg.initial_pair()
    rep = conjugacy_experiment(pair, cfg.dt, cfg.steps, cfg.record_every, cfg.delta)
    report = RunReport()
    report.verdicts["discrepancy <= C (dt^4 + 1e-10)"] = rep.passed
    report.observed["max discrepancy"] = rep.max_discrepancy
    report.observed["threshold"] = rep.threshold
    report.observed["C"] = rep.constant
    with _output(cfg.out) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["t", "discrepancy"])
        for t, d in zip(rep.times, rep.discrepancies):
            writer.writerow([f"{t:.17g}", f"{d:.17g}"])
    return report


def cmd_verify(cfg: SimulationConfig, only: list[int] | None = None,
               corrupt: tuple | None = None) -> RunReport:
    table = DEFAULT_TABLE
    if corrupt is not None:
        kind, nj, nl, nk = corrupt
        table = DEFAULT_TABLE.perturbed(kind, nj, nl, nk)
    report = RunReport()
    for n in only or sorted(CRITERIA):
        if n == 3:
            res = CRITERIA[3](table, SENSITIVITY_ENTRY)
        else:
            res = CRITERIA[n](seed=cfg.seed + n)
        print(res.line(), flush=True)
        report.verdicts[f"criterion {n}"] = res.passed
        for key, value in res.observed.items():
            report.observed[f"{n}.{key}"] = float(value)
    return report


def cmd_divisor_scan(cfg: SimulationConfig) -> RunReport:
    report = RunReport()
    worst, bounds_ok, p_ok, rows = 0.0, True, True, 0
    with _output(cfg.out) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        d = cfg.dimension
        head = ([f"j{i}" for i in range(d)] + [f"l{i}" for i in range(d)] + [f"k{i}" for i in range(d)]
                + ["div_k+j+l", "div_k+j-l", "div_k-j+l", "div_k-j-l", "p", "ratio_k-j+l", "ratio_k-j-l"])
        writer.writerow(head)
        for rep in scan_divisors(d, cfg.radius):
            rows += 1
            bounds_ok &= all(rep.bound_ok.values())
            if rep.all_nonzero:
                p_ok &= abs(rep.p) >= 1
            worst = max(worst, *rep.ratios.values())
            writer.writerow([*rep.j, *rep.l, *rep.k]
                            + [f"{rep.divisors[lab]:.17g}" for lab in ("k+j+l", "k+j-l", "k-j+l", "k-j-l")]
                            + [rep.p] + [f"{rep.ratios[lab]:.17g}" for lab in ("k-j+l", "k-j-l")])
    report.verdicts["divisor bounds with C = 27"] = bounds_ok
    report.verdicts["|p| >= 1 when all factors nonzero"] = p_ok
    report.observed["triples"] = rows
    report.observed["max ratio"] = worst
    return report


def cmd_coeff_dump(cfg: SimulationConfig) -> RunReport:
    sq = squared_radii(cfg.dimension, cfg.radius)
    exact = cfg.dimension == 1
    with _output(cfg.out) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["kind", "j_sq", "l_sq", "k_sq", "value"])
        count = 0
        for kind, nj, nl, nk, value in coefficient_rows(ACTIVE_KINDS, sq, exact=exact):
            text = str(value) if exact else f"{float(value):.17g}"
            writer.writerow([kind, nj, nl, nk, text])
            count += 1
    report = RunReport()
    report.observed["rows"] = count
    return report


# ---------------------------------------------------------------------------
# entry point


def _corrupt_entry(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 4 or parts[0] not in ACTIVE_KINDS:
        raise argparse.ArgumentTypeError("expected KIND,j_sq,l_sq,k_sq")
    try:
        return parts[0], *(int(x) for x in parts[1:])
    except ValueError as exc:
        raise argparse.ArgumentTypeError("squared radii must be integers") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kirchhoff-nf", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log integrator events")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("simulate", "integrate a system and write the trajectory CSV"),
        ("shell", "integrate the closed shell system"),
        ("conjugacy", "compare the (f, g) flow with the pushed-forward normalized flow"),
        ("verify", "run the acceptance criteria"),
        ("divisor-scan", "write small-divisor reports for all radius triples"),
        ("coeff-dump", "write the quintic coefficient tables"),
    ]:
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("config", nargs="?", help="key = value configuration file")
        cmd.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="override a configuration key")
        if name == "verify":
            cmd.add_argument("--only", type=lambda s: [int(x) for x in s.split(",")],
                             help="comma separated criterion numbers")
            cmd.add_argument("--corrupt-table", type=_corrupt_entry, metavar="KIND,J,L,K",
                             help="perturb one coefficient by 1/1000 (sensitivity control)")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "shell": cmd_shell,
    "conjugacy": cmd_conjugacy,
    "divisor-scan": cmd_divisor_scan,
    "coeff-dump": cmd_coeff_dump,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = SimulationConfig.load(args.config, args.overrides)
        if args.command == "verify":
            if args.only and any(n not in CRITERIA for n in args.only):
                raise ConfigError(f"criteria are numbered 1 to {len(CRITERIA)}")
            report = cmd_verify(cfg, args.only, args.corrupt_table)
        else:
            report = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, BallError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
