"""Command-line front end.

Exit codes: 0 success, 1 verification failed, 2 bad input, 3 solver failure,
4 audit failure, 5 dimension cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .core import OperationClass
from .dilution import DimensionCapError, asymptotic_sweep, synthesize
from .fileio import (
    FormatError,
    dumps,
    load_channel,
    load_state,
    matrix_to_json,
    protocol_to_json,
)
from .monotones import DimensionError, MonotoneResult, all_monotones
from .sdp import SdpOptions, SolverError
from .verify import RepresentationError, audit_protocol, check_class, check_cptp

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_SOLVER, EXIT_AUDIT, EXIT_CAP = range(6)

log = logging.getLogger("coherence_dilution")


@dataclass(frozen=True)
class RunConfig:
    command: str
    state: Path | None
    channel: Path | None
    op_class: OperationClass | None
    epsilon: float
    n_max: int
    seed: int
    out: Path | None
    tol: float | None

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        if not 0.0 <= ns.epsilon < 1.0:
            raise FormatError(f"--epsilon must lie in [0, 1), got {ns.epsilon}")
        if ns.nmax < 1:
            raise FormatError(f"--nmax must be at least 1, got {ns.nmax}")
        if ns.tol is not None and ns.tol <= 0:
            raise FormatError("--tol must be positive")
        op = OperationClass.parse(ns.op_class) if ns.op_class else None
        return cls(ns.command, ns.state, ns.channel, op, ns.epsilon, ns.nmax, ns.seed,
                   ns.out, ns.tol)

    def sdp_options(self) -> SdpOptions | None:
        return SdpOptions(gap_tol=self.tol) if self.tol else None


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        out.write_text(text + "\n")


def _require(value, flag: str):
    if value is None:
        raise FormatError(f"{flag} is required for this command")
    return value


def _result_json(r: MonotoneResult) -> dict:
    d = {"value_bits": r.value_bits, "method": r.method, "exact": r.exact}
    if r.delta_star is not None:
        d["delta_star"] = [float(p) for p in r.delta_star.probs]
    if r.rho_prime is not None:
        d["rho_prime"] = matrix_to_json(r.rho_prime.matrix)
    if r.ensemble is not None:
        d["ensemble_size"] = len(r.ensemble)
    return d


def cmd_monotone(cfg: RunConfig) -> int:
    rho = load_state(_require(cfg.state, "--state"))
    try:
        values = all_monotones(rho, cfg.epsilon, seed=cfg.seed)
    except SolverError as exc:
        log.error("solver failure while computing monotones: %s", exc)
        return EXIT_SOLVER
    report = {"command": "monotone", "seed": cfg.seed, "epsilon": cfg.epsilon, "dim": rho.dim,
              "monotones": {k: _result_json(v) for k, v in values.items()}, "timestamp": _timestamp()}
    _emit(dumps(report), cfg.out)
    return EXIT_OK


def cmd_dilute(cfg: RunConfig) -> int:
    rho = load_state(_require(cfg.state, "--state"))
    cls = _require(cfg.op_class, "--class")
    proto = synthesize(rho, cfg.epsilon, cls, cfg.sdp_options())
    cert = audit_protocol(proto, cfg.tol) if cfg.tol else audit_protocol(proto)
    summary = {"command": "dilute", "seed": cfg.seed, "class": cls.value, "epsilon": cfg.epsilon,
               "M": proto.M, "cost_bits": proto.cost_bits, "fidelity": proto.achieved_fidelity,
               "bounds": [proto.bound_lo, proto.bound_hi], "certificate": cert.to_dict(),
               "timestamp": _timestamp()}
    if cfg.out is None:
        summary["protocol"] = protocol_to_json(proto)
    else:
        cfg.out.write_text(dumps(protocol_to_json(proto)) + "\n")
        summary["protocol_file"] = str(cfg.out)
    sys.stdout.write(dumps(summary) + "\n")
    if not cert.passed:
        log.error("audit failed: %s", cert.witness)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    rho = load_state(_require(cfg.state, "--state"))
    cls = _require(cfg.op_class, "--class")
    rows = asymptotic_sweep(rho, cfg.n_max, cfg.epsilon, cls, cfg.sdp_options())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "cost_per_copy", "asymptotic_reference"])
    for r in rows:
        writer.writerow([r.n, f"{r.cost_per_copy:.12g}", f"{r.asymptotic_reference:.12g}"])
    summary = {"command": "sweep", "seed": cfg.seed, "class": cls.value, "epsilon": cfg.epsilon,
               "nmax": cfg.n_max, "timestamp": _timestamp()}
    if cfg.out is None:
        sys.stdout.write(buf.getvalue())
        sys.stderr.write(dumps(summary) + "\n")
    else:
        cfg.out.write_text(buf.getvalue())
        summary["csv_file"] = str(cfg.out)
        summary["rows"] = [[r.n, r.cost_per_copy, r.asymptotic_reference] for r in rows]
        sys.stdout.write(dumps(summary) + "\n")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    ch = load_channel(_require(cfg.channel, "--channel"))
    cls = _require(cfg.op_class, "--class")
    kw = {"tol": cfg.tol} if cfg.tol else {}
    cptp = check_cptp(ch, **kw)
    try:
        member = check_class(ch, cls, **kw)
    except RepresentationError as exc:
        raise FormatError(str(exc)) from None
    passed = cptp.passed and member.passed
    report = {"command": "verify", "seed": cfg.seed, "class": cls.value,
              "verdict": "pass" if passed else "fail",
              "cptp": cptp.to_dict(), "membership": member.to_dict(), "timestamp": _timestamp()}
    _emit(dumps(report), cfg.out)
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {"monotone": cmd_monotone, "dilute": cmd_dilute, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coherence-dilution",
                                     description="Coherence monotones and dilution protocols.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--state", type=Path, help="state JSON file")
    common.add_argument("--channel", type=Path, help="channel JSON file")
    common.add_argument("--class", dest="op_class", choices=[c.value for c in OperationClass])
    common.add_argument("--epsilon", type=float, default=0.0)
    common.add_argument("--nmax", type=int, default=4)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--tol", type=float, default=None, help="tolerance override")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("monotone", parents=[common], help="compute every applicable monotone")
    sub.add_parser("dilute", parents=[common], help="synthesize and audit a dilution protocol")
    sub.add_parser("sweep", parents=[common], help="per-copy cost over tensor powers (CSV)")
    sub.add_parser("verify", parents=[common], help="certify a channel against a class")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    ns = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except FormatError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (DimensionCapError, DimensionError) as exc:
        log.error("%s", exc)
        return EXIT_CAP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["RunConfig", "build_parser", "main"]
