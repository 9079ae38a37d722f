"""Channel certification, random free channels, and monotone property suites."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Channel,
    ChoiChannel,
    DensityMatrix,
    KrausChannel,
    OperationClass,
    apply_map,
    as_choi,
    choi_from_action,
    fidelity,
    maximally_coherent,
    mix_channels,
    random_density,
    random_pure,
)
from .dilution import DilutionProtocol
from .monotones import c_0, c_delta_max, c_max, coherence_rank

CP_TOL = 1e-9
TP_TOL = 1e-9
EQ_TOL = 1e-8       # equality-type checks
OPT_TOL = 1e-6      # optimisation-derived quantities
FIDELITY_SLACK = 1e-7


class RepresentationError(ValueError):
    """IO/SIO membership was requested for a channel given only as a Choi matrix."""


@dataclass(frozen=True)
class Certificate:
    subject: str
    claim: str
    passed: bool
    tolerance: float
    witness: dict | None = None
    checks: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {"subject": self.subject, "claim": self.claim, "verdict": self.verdict,
                "tolerance": self.tolerance, "checks": dict(self.checks), "witness": self.witness}


def _mat(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.atleast_2d(a)]


def _basis(d: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def _subject(ch: Channel) -> str:
    kind = "kraus" if isinstance(ch, KrausChannel) else "choi"
    return f"{kind}:{ch.in_dim}->{ch.out_dim}"


# -- certification -------------------------------------------------------------


def check_cptp(ch: Channel, tol: float = CP_TOL) -> Certificate:
    """CP from the Choi spectrum, TP from completeness or the Choi partial trace."""
    choi = as_choi(ch)
    w, u = np.linalg.eigh(choi.choi)
    eye = np.eye(ch.in_dim)
    if isinstance(ch, KrausChannel):
        tp_dev = ch.completeness() - eye
    else:
        tp_dev = choi.partial_trace_output() - eye
    tp_err = float(np.max(np.abs(tp_dev)))
    checks = {"cp": bool(w[0] >= -tol), "tp": bool(tp_err <= tol)}
    witness = None
    if not checks["cp"]:
        witness = {"kind": "choi_eigenvector", "eigenvalue": float(w[0]),
                   "vector": _mat(u[:, 0][None, :])[0]}
    elif not checks["tp"]:
        witness = {"kind": "trace_deviation", "max_abs": tp_err, "deviation": _mat(tp_dev)}
    return Certificate(_subject(ch), "cptp", all(checks.values()), tol, witness, checks)


def _column_support(k: np.ndarray, tol: float):
    return [np.flatnonzero(np.abs(k[:, i]) > tol) for i in range(k.shape[1])]


def _check_kraus_structure(ch: KrausChannel, strict: bool, tol: float):
    for n, k in enumerate(ch.kraus_ops):
        for i, rows in enumerate(_column_support(k, tol)):
            if rows.size > 1:
                e = _basis(ch.in_dim, i, i)
                return {"kind": "kraus_column", "kraus_index": n, "column": i, "rows": rows.tolist(),
                        "input": _mat(e), "output": _mat(k @ e @ k.conj().T)}
        if strict:
            kt = k.conj().T
            for a, cols in enumerate(_column_support(kt, tol)):
                if cols.size > 1:
                    e = _basis(ch.out_dim, a, a)
                    return {"kind": "kraus_row", "kraus_index": n, "row": a, "columns": cols.tolist(),
                            "input": _mat(e), "output": _mat(kt @ e @ k)}
    return None


def check_class(ch: Channel, cls, tol: float = EQ_TOL) -> Certificate:
    """Membership of ``ch`` in an operation class.

    MIO is checked on basis states, DIO on the full ``|i><j|`` basis.  IO/SIO
    certify the given Kraus decomposition only; a Choi-only channel raises
    :class:`RepresentationError`.
    """
    cls = OperationClass.parse(cls)
    d = ch.in_dim
    witness = None
    if cls is OperationClass.MIO:
        for i in range(d):
            out = apply_map(ch, _basis(d, i, i))
            off = out - np.diag(np.diag(out))
            if np.max(np.abs(off)) > tol:
                witness = {"kind": "basis_state", "index": i, "input": _mat(_basis(d, i, i)),
                           "output": _mat(out), "max_offdiag": float(np.max(np.abs(off)))}
                break
    elif cls is OperationClass.DIO:
        for i in range(d):
            for j in range(d):
                e = _basis(d, i, j)
                lhs = apply_map(ch, np.diag(np.diag(e)))
                out = apply_map(ch, e)
                rhs = np.diag(np.diag(out))
                err = float(np.max(np.abs(lhs - rhs)))
                if err > tol:
                    witness = {"kind": "covariance", "input_index": [i, j], "input": _mat(e),
                               "map_of_dephased": _mat(lhs), "dephased_output": _mat(rhs), "error": err}
                    break
            if witness:
                break
    else:
        if not isinstance(ch, KrausChannel):
            raise RepresentationError(f"{cls.value.upper()} membership needs a Kraus decomposition")
        witness = _check_kraus_structure(ch, cls is OperationClass.SIO, tol)
    return Certificate(_subject(ch), cls.value, witness is None, tol, witness)


# -- sampling ------------------------------------------------------------------


def _random_columns(rng, n_ops: int, d: int) -> np.ndarray:
    c = rng.normal(size=(n_ops, d)) + 1j * rng.normal(size=(n_ops, d))
    return c / np.linalg.norm(c, axis=0, keepdims=True)


def _sample_sio(rng, d: int) -> KrausChannel:
    n_ops = int(rng.integers(1, d + 2))
    c = _random_columns(rng, n_ops, d)
    ops = []
    for n in range(n_ops):
        perm = rng.permutation(d)
        k = np.zeros((d, d), dtype=complex)
        k[perm, np.arange(d)] = c[n]
        ops.append(k)
    return KrausChannel(ops)


def _sample_io(rng, d: int) -> KrausChannel:
    # a Fourier twirl over diagonal input phases cancels the cross terms that
    # colliding functions f_n would otherwise leave in the completeness sum
    n_ops = int(rng.integers(1, d + 2))
    c = _random_columns(rng, n_ops, d)
    phases = [np.exp(2j * np.pi * k * np.arange(d) / d) for k in range(d)]
    ops = []
    for n in range(n_ops):
        f = rng.integers(0, d, size=d)
        k = np.zeros((d, d), dtype=complex)
        k[f, np.arange(d)] = c[n]
        ops += [k * ph[None, :] / np.sqrt(d) for ph in phases]
    return KrausChannel(ops)


def _diagonal_unitary(rng, d: int) -> KrausChannel:
    return KrausChannel([np.diag(np.exp(2j * np.pi * rng.random(d)))])


def _affine_sample(rng, d: int, mio: bool) -> ChoiChannel:
    """``omega -> d/(d-1)[(<Psi|omega|Psi> - tr/d) rho' + (tr - <Psi|omega|Psi>) delta]``.

    CP because ``rho' <= d Delta(rho')`` and ``rho' <= I``; with
    ``delta = Delta(rho')`` the map is covariant under dephasing.
    """
    rho_p = random_density(d, rng, rank=int(rng.integers(1, d + 1))).matrix
    delta = np.diag(np.diag(rho_p))
    if mio:
        w = rng.random()
        delta = (1.0 - w) * delta + w * np.eye(d) / d
    psi = maximally_coherent(d).density().matrix

    def action(op):
        tr, ov = np.trace(op), np.trace(psi @ op)
        return d / (d - 1) * ((ov - tr / d) * rho_p + (tr - ov) * delta)

    return choi_from_action(action, d, d)


def sample_channel(cls, dim: int, seed) -> Channel:
    """Random channel inside ``cls`` (for DIO/MIO, inside a documented subset).

    SIO/IO samples are Kraus channels; DIO/MIO samples are Choi channels mixing
    SIO or IO samples, diagonal unitaries and dimension-``dim`` affine maps.
    """
    cls = OperationClass.parse(cls)
    if dim < 2:
        raise ValueError("sample_channel needs dim >= 2")
    rng = np.random.default_rng(seed)
    if cls is OperationClass.SIO:
        return _sample_sio(rng, dim)
    if cls is OperationClass.IO:
        return _sample_io(rng, dim)
    if cls is OperationClass.DIO:
        parts = [_sample_sio(rng, dim), _diagonal_unitary(rng, dim), _affine_sample(rng, dim, mio=False)]
    else:
        parts = [_sample_io(rng, dim), _affine_sample(rng, dim, mio=True)]
    weights = rng.dirichlet(np.ones(len(parts)) * 0.7)
    return mix_channels(parts, weights / weights.sum())


# -- property suites -----------------------------------------------------------


_MONOTONES = {"c_max": c_max, "c_delta_max": c_delta_max, "c_0": c_0}
_MATCHED = {
    ("c_max", OperationClass.MIO), ("c_delta_max", OperationClass.DIO),
    ("c_0", OperationClass.IO), ("c_0", OperationClass.MIO),
}


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def _selective_c0(ch: KrausChannel, amps: np.ndarray) -> float:
    total = 0.0
    for k in ch.kraus_ops:
        out = k @ amps
        p = float(np.vdot(out, out).real)
        if p > 1e-14:
            total += p * math.log2(coherence_rank(out))
    return total


def property_suite_monotonicity(monotone: str, cls, trials: int = 200, seed: int = 0,
                                dim: int = 2, tol: float = OPT_TOL) -> dict:
    """Check ``C(Lambda(rho)) <= C(rho) + tol`` on random (state, channel) pairs.

    ``c_0`` runs on pure inputs only: under IO the selective average over Kraus
    branches is tested, under MIO the deterministic output.
    """
    cls = OperationClass.parse(cls)
    if (monotone, cls) not in _MATCHED:
        raise ValueError(f"{monotone} is not paired with {cls.value} in the suites")
    fn = _MONOTONES[monotone]
    violations, worst = [], -np.inf
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        ch = sample_channel(cls, dim, rng)
        pure = monotone == "c_0" or trial % 4 == 0
        if pure:
            amps = random_pure(dim, rng).amplitudes
            rho = DensityMatrix(np.outer(amps, amps.conj()))
        else:
            rho = random_density(dim, rng)
        before = fn(rho).value_bits
        if monotone == "c_0" and cls is OperationClass.IO:
            after = _selective_c0(ch, amps)
        else:
            after = fn(DensityMatrix(apply_map(ch, rho.matrix))).value_bits
        excess = after - before
        worst = max(worst, excess)
        if excess > tol:
            violations.append({"trial": trial, "state": _mat(rho.matrix), "before": before,
                               "after": after, "choi": _mat(as_choi(ch).choi)})
    return {"suite": "monotonicity", "monotone": monotone, "class": cls.value, "dim": dim,
            "trials": trials, "violations": violations, "max_excess": float(worst),
            "tolerances": {"monotone": tol}, "seed": seed}


CONVEX_AVERAGE_BOUND = 0.5 * math.log2(3)


def mixture_counterexample_state() -> DensityMatrix:
    """Equal mixture of the maximally coherent qutrit and the maximally mixed qutrit."""
    return DensityMatrix(0.5 * maximally_coherent(3).density().matrix + 0.5 * np.eye(3) / 3)


def property_suite_convexity(trials: int = 200, seed: int = 0, dim: int = 3,
                             tol: float = OPT_TOL) -> dict:
    """Quasi-convexity of C_max and C_delta_max on random mixtures, plus the C_0 counterexample."""
    violations, worst = [], -np.inf
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        k = int(rng.integers(2, 5))
        parts = [random_density(dim, rng, rank=int(rng.integers(1, dim + 1))) for _ in range(k)]
        p = rng.dirichlet(np.ones(k))
        mix = DensityMatrix(sum(w * r.matrix for w, r in zip(p, parts)))
        for name, fn in (("c_max", c_max), ("c_delta_max", c_delta_max)):
            lhs = fn(mix).value_bits
            rhs = max(fn(r).value_bits for r in parts)
            worst = max(worst, lhs - rhs)
            if lhs > rhs + tol:
                violations.append({"trial": trial, "monotone": name, "mixture": lhs, "max_part": rhs,
                                   "weights": p.tolist(), "parts": [_mat(r.matrix) for r in parts]})
    c0b = c_0(mixture_counterexample_state()).value_bits
    return {"suite": "convexity", "trials": trials, "violations": violations,
            "max_excess": float(worst),
            "c0_counterexample": {"value": c0b, "convex_bound": CONVEX_AVERAGE_BOUND,
                                  "strictly_exceeds": bool(c0b > CONVEX_AVERAGE_BOUND + tol)},
            "tolerances": {"monotone": tol}, "seed": seed}


# -- protocol audit ------------------------------------------------------------


def audit_protocol(p: DilutionProtocol, tol: float = EQ_TOL) -> Certificate:
    """Pass only if the protocol is CPTP, in its class, meets the fidelity and bounds."""
    checks = {}
    witness = None
    ch = p.channel
    checks["resource_dim"] = ch.in_dim == p.M and ch.out_dim == p.target.dim
    if not checks["resource_dim"]:
        witness = {"kind": "dimension", "in_dim": ch.in_dim, "M": p.M}
        return Certificate(_subject(ch), f"protocol:{p.op_class.value}", False, tol, witness, checks)
    cptp = check_cptp(ch)
    checks["cptp"] = cptp.passed
    try:
        cls_cert = check_class(ch, p.op_class, tol)
        checks["class"] = cls_cert.passed
    except RepresentationError:
        cls_cert = None
        checks["class"] = False
    out = apply_map(ch, maximally_coherent(p.M).density().matrix)
    out_err = float(np.max(np.abs(out - p.rho_prime.matrix)))
    checks["output_matches_witness"] = out_err <= tol
    fid = fidelity(p.target, DensityMatrix(out)) if cptp.passed else 0.0
    checks["fidelity"] = fid >= 1.0 - p.epsilon - FIDELITY_SLACK
    cost = p.cost_bits
    checks["bounds"] = p.bound_lo - OPT_TOL <= cost <= p.bound_hi + 1e-9
    if not checks["cptp"]:
        witness = cptp.witness
    elif not checks["class"]:
        witness = cls_cert.witness if cls_cert else {"kind": "representation"}
    elif not checks["output_matches_witness"]:
        witness = {"kind": "output", "max_abs_error": out_err}
    elif not checks["fidelity"]:
        witness = {"kind": "fidelity", "fidelity": fid, "required": 1.0 - p.epsilon}
    elif not checks["bounds"]:
        witness = {"kind": "bounds", "cost_bits": cost, "bound_lo": p.bound_lo, "bound_hi": p.bound_hi}
    return Certificate(_subject(ch), f"protocol:{p.op_class.value}", all(checks.values()), tol,
                       witness, checks)


def dephasing_covariance_error(ch: Channel) -> float:
    """Largest entry of ``Lambda(Delta(E_ij)) - Delta(Lambda(E_ij))`` over the basis."""
    d = ch.in_dim
    err = 0.0
    for i in range(d):
        for j in range(d):
            e = _basis(d, i, j)
            out = apply_map(ch, e)
            err = max(err, float(np.max(np.abs(apply_map(ch, np.diag(np.diag(e))) - np.diag(np.diag(out))))))
    return err


__all__ = [
    "Certificate", "RepresentationError", "mixture_counterexample_state", "audit_protocol", "check_class",
    "check_cptp", "dephasing_covariance_error", "property_suite_convexity",
    "property_suite_monotonicity", "sample_channel",
]
