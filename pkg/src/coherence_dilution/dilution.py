"""Explicit dilution channels that turn a maximally coherent resource into a target.

MIO and DIO maps are built as Choi matrices from their action on ``|i><j|``.
IO/SIO maps are built as Kraus operators from a majorization argument: for
each ensemble member the uniform vector on M' entries is a mixture of
permutations of the member's squared amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.optimize

from .core import (
    Channel,
    DensityMatrix,
    KrausChannel,
    OperationClass,
    StateLike,
    apply_channel,
    as_density,
    choi_from_action,
    dephase,
    dmax,
    fidelity,
    maximally_coherent,
    tensor_power,
)
from .monotones import (
    AMP_TOL,
    Ensemble,
    c_0_eps,
    c_delta_max_eps,
    c_f,
    c_max_eps,
    c_r,
    project_to_state,
)
from .sdp import SdpOptions

INTEGER_SNAP = 1e-9
SOLVER_SNAP = 5e-7    # relative; SDP witnesses carry this much noise in lambda
FIDELITY_SLACK = 1e-7
MIX_TOL = 1e-9
# largest tensor-power dimension per sweep kind
MAX_SDP_SWEEP_DIM = 16
MAX_PURE_SWEEP_DIM = 4096
MAX_MIXED_RANK_DIM = 4


class DimensionCapError(ValueError):
    """The requested tensor power is beyond the supported dimension."""


class MajorizationError(ValueError):
    """A majorization relation required by the construction does not hold."""


@dataclass(frozen=True, eq=False)
class DilutionProtocol:
    """A free channel taking ``Psi_M`` to a state within ``epsilon`` of the target."""

    op_class: OperationClass
    M: int
    channel: Channel
    target: DensityMatrix
    epsilon: float
    achieved_fidelity: float
    bound_lo: float
    bound_hi: float
    rho_prime: DensityMatrix

    @property
    def cost_bits(self) -> float:
        return math.log2(self.M)

    def output(self) -> DensityMatrix:
        return apply_channel(self.channel, maximally_coherent(self.M))


@dataclass(frozen=True, eq=False)
class PermutationMixture:
    """Weights ``lambda_pi`` over permutations, with ``(pi v)_i = v[pi[i]]``."""

    perms: tuple
    weights: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return sum(w * v[list(p)] for p, w in zip(self.perms, self.weights))

    def __len__(self):
        return len(self.perms)


class CostReport(NamedTuple):
    cost_bits: float
    protocol: DilutionProtocol
    certificate: object


# -- majorization --------------------------------------------------------------


def majorize_check(m, v, tol: float = 1e-9) -> bool:
    """True iff ``m`` is majorized by ``v`` (descending prefix sums of m never exceed v's)."""
    m, v = np.asarray(m, dtype=float), np.asarray(v, dtype=float)
    if m.shape != v.shape:
        raise ValueError("majorization needs equal-length vectors")
    if abs(m.sum() - v.sum()) > 1e-9:
        raise ValueError(f"sums differ: {m.sum()} vs {v.sum()}")
    pm = np.cumsum(np.sort(m)[::-1])
    pv = np.cumsum(np.sort(v)[::-1])
    return bool(np.all(pm <= pv + tol))


def _t_transform_matrix(m_sorted, v_sorted):
    """Doubly stochastic D with ``m = D v`` for descending vectors, from T-transforms."""
    n = v_sorted.size
    x = v_sorted.copy()
    d = np.eye(n)
    for _ in range(n):
        over = np.flatnonzero(x - m_sorted > MIX_TOL * 1e-3)
        if over.size == 0:
            break
        j = over[-1]
        under = [k for k in range(j + 1, n) if x[k] < m_sorted[k] - MIX_TOL * 1e-3]
        if not under:
            break
        k = under[0]
        amount = min(x[j] - m_sorted[j], m_sorted[k] - x[k])
        s = amount / (x[j] - x[k])
        t = np.eye(n)
        t[[j, k], [j, k]] = 1.0 - s
        t[j, k] = t[k, j] = s
        x = t @ x
        d = t @ d
    return d


def _has_perfect_matching(mask: np.ndarray) -> bool:
    if mask.shape[0] == 0:
        return True
    cost = np.where(mask, 0.0, 1.0)
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return cost[rows, cols].sum() == 0


def _lexicographic_matching(mask: np.ndarray) -> np.ndarray:
    # row by row, the smallest column that still leaves a perfect matching
    n = mask.shape[0]
    cols, free = [], list(range(n))
    for i in range(n):
        for c in free:
            if not mask[i, c]:
                continue
            rest = [f for f in free if f != c]
            if _has_perfect_matching(mask[np.ix_(range(i + 1, n), rest)]):
                cols.append(c)
                free = rest
                break
    return np.array(cols)


def _bottleneck_permutation(d: np.ndarray):
    """Perfect matching on the support of ``d`` maximising its smallest entry (lexicographic ties)."""
    vals = np.unique(d[d > 0])[::-1]
    lo, hi = 0, vals.size - 1
    best = None
    # largest threshold admitting a perfect matching, by bisection over the sorted values
    while lo <= hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(d >= vals[mid]):
            best, hi = vals[mid], mid - 1
        else:
            lo = mid + 1
    return None if best is None else _lexicographic_matching(d >= best)


def permutation_mixture(m, v) -> PermutationMixture:
    """Permutations of ``v`` whose convex mixture equals ``m`` (requires ``m`` majorized by ``v``)."""
    m, v = np.asarray(m, dtype=float), np.asarray(v, dtype=float)
    if not majorize_check(m, v):
        raise MajorizationError("m is not majorized by v")
    n = m.size
    # entries equal up to round-off count as ties (lower index first)
    om = np.lexsort((np.arange(n), -np.round(m, 12)))
    ov = np.lexsort((np.arange(n), -np.round(v, 12)))
    ds = _t_transform_matrix(m[om], v[ov])
    # back to the original orderings: m[om] = ds v[ov]
    full = np.zeros((n, n))
    full[np.ix_(om, ov)] = ds
    perms, weights = [], []
    rest = full.copy()
    for _ in range(n * n):
        if rest.max(initial=0.0) <= 1e-13:
            break
        cols = _bottleneck_permutation(np.where(rest > 1e-13, rest, 0.0))
        if cols is None:
            break
        w = float(rest[np.arange(n), cols].min())
        perms.append(tuple(int(c) for c in cols))
        weights.append(w)
        rest[np.arange(n), cols] -= w
    weights = np.array(weights)
    mix = PermutationMixture(tuple(perms), weights / weights.sum())
    if np.max(np.abs(mix.apply(v) - m)) > MIX_TOL:
        raise MajorizationError("Birkhoff decomposition failed to reproduce m")
    return mix


# -- MIO / DIO -----------------------------------------------------------------


def _resource_size(lam: float) -> int:
    near = round(lam)
    if abs(lam - near) <= INTEGER_SNAP and near >= 1:
        return int(near)
    return int(math.ceil(lam))


def _dominated_pair(rho_p: np.ndarray, delta: np.ndarray, lam: float, M: int):
    """Mix rho' toward delta so that ``rho' <= M delta`` holds for ``M < lam``."""
    if M >= lam or lam <= 1.0:
        return rho_p
    eta = (lam - M) / (lam - 1.0)
    return (1.0 - eta) * rho_p + eta * delta


def _choose_size(rho, rho_p, delta, lam, epsilon):
    """``ceil(lam)``, or the integer just below when lam exceeds it by solver noise only.

    The lower integer is accepted only if mixing rho' toward delta keeps the
    fidelity requirement.
    """
    M = _resource_size(lam)
    low = math.floor(lam)
    if low >= 1 and low < M and lam - low <= SOLVER_SNAP * low:
        cand = project_to_state(_dominated_pair(rho_p, delta, lam, low))
        if fidelity(rho, cand) >= 1.0 - epsilon - FIDELITY_SLACK:
            return low
    return M


def _affine_map(M: int, rho_p: np.ndarray, delta: np.ndarray) -> Channel:
    psi = maximally_coherent(M).density().matrix

    def action(op):
        tr = np.trace(op)
        ov = np.trace(psi @ op)
        return M / (M - 1) * ((ov - tr / M) * rho_p + (tr - ov) * delta)

    return choi_from_action(action, M, rho_p.shape[0])


def _constant_map(out: np.ndarray) -> Channel:
    return choi_from_action(lambda op: np.trace(op) * out, 1, out.shape[0])


def _build_affine(rho: DensityMatrix, epsilon: float, cls: OperationClass, result) -> DilutionProtocol:
    rho_p = result.rho_prime.matrix
    if cls is OperationClass.MIO:
        delta = result.delta_star.density().matrix
    else:
        delta = dephase(result.rho_prime).matrix
    # size the resource from the exact ratio of this pair, not the reported bound
    lam = 2.0 ** dmax(result.rho_prime, DensityMatrix(delta))
    M = _choose_size(rho, rho_p, delta, lam, epsilon)
    if M == 1:
        out = project_to_state(delta).matrix
        channel = _constant_map(out)
    else:
        out = project_to_state(_dominated_pair(rho_p, delta, lam, M)).matrix
        if cls is OperationClass.DIO:
            delta = np.diag(np.diag(out))
        channel = _affine_map(M, out, delta)
    out_state = DensityMatrix(out)
    return DilutionProtocol(cls, M, channel, rho, epsilon, fidelity(rho, out_state),
                            result.value_bits, result.value_bits + 1.0, out_state)


def synthesize_mio(rho: StateLike, epsilon: float, opts: SdpOptions | None = None) -> DilutionProtocol:
    """MIO dilution through a smoothed C_max witness ``rho' <= lambda delta``."""
    rho = as_density(rho)
    _check_eps(epsilon)
    return _build_affine(rho, epsilon, OperationClass.MIO, c_max_eps(rho, epsilon, opts))


def synthesize_dio(rho: StateLike, epsilon: float, opts: SdpOptions | None = None) -> DilutionProtocol:
    """DIO variant: the incoherent partner is ``Delta(rho')`` itself."""
    rho = as_density(rho)
    _check_eps(epsilon)
    return _build_affine(rho, epsilon, OperationClass.DIO, c_delta_max_eps(rho, epsilon, opts))


# -- IO / SIO ------------------------------------------------------------------


def _kraus_for_member(p: float, amps: np.ndarray, m_size: int) -> list:
    d = amps.size
    target = np.zeros(d)
    target[:m_size] = 1.0 / m_size
    mass = np.abs(amps) ** 2
    mass = mass / mass.sum()
    if not majorize_check(target, mass):
        raise MajorizationError(f"uniform vector on {m_size} entries is not majorized by the member")
    mix = permutation_mixture(target, mass)
    ops = []
    for perm, lam in zip(mix.perms, mix.weights):
        k = np.zeros((d, m_size), dtype=complex)
        for i in range(m_size):
            k[perm[i], i] = np.sqrt(p * lam * m_size) * amps[perm[i]]
        if np.any(k):
            ops.append(k)
    return ops


def synthesize_io(rho: StateLike, epsilon: float, strict: bool = False,
                  opts: SdpOptions | None = None, amp_tol: float = AMP_TOL) -> DilutionProtocol:
    """IO (or SIO with ``strict``) dilution from the smoothed C_0 ensemble.

    Every Kraus operator ``|pi(i)><i|``-shaped, so one construction serves both
    classes.  Mixed targets are optimal relative to the C_0 feasibility search.
    """
    rho = as_density(rho)
    _check_eps(epsilon)
    res = c_0_eps(rho, epsilon, opts, amp_tol)
    ens: Ensemble = res.ensemble
    if np.max(np.abs(ens.density() - res.rho_prime.matrix)) > 1e-7:
        raise ValueError("ensemble is inconsistent with the smoothed state")
    m_size = max(ens.ranks(amp_tol))
    ops = []
    for p, st in zip(ens.weights, ens.states):
        a = np.asarray(st.amplitudes).copy()
        a[np.abs(a) <= amp_tol * np.abs(a).max()] = 0.0
        ops += _kraus_for_member(float(p), a / np.linalg.norm(a), m_size)
    channel = KrausChannel(ops)
    out = DensityMatrix(sum(k @ np.full((m_size, m_size), 1.0 / m_size) @ k.conj().T for k in ops))
    cls = OperationClass.SIO if strict else OperationClass.IO
    cost = res.value_bits
    return DilutionProtocol(cls, m_size, channel, rho, epsilon, fidelity(rho, out), cost, cost, out)


# -- dispatch ------------------------------------------------------------------


def _check_eps(epsilon: float):
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")


def synthesize(rho: StateLike, epsilon: float, cls, opts: SdpOptions | None = None) -> DilutionProtocol:
    cls = OperationClass.parse(cls)
    if cls is OperationClass.MIO:
        return synthesize_mio(rho, epsilon, opts)
    if cls is OperationClass.DIO:
        return synthesize_dio(rho, epsilon, opts)
    return synthesize_io(rho, epsilon, strict=cls is OperationClass.SIO, opts=opts)


def one_shot_cost(rho: StateLike, epsilon: float, cls, opts: SdpOptions | None = None) -> CostReport:
    """Synthesize the protocol for ``cls`` and audit it."""
    from .verify import audit_protocol

    proto = synthesize(rho, epsilon, cls, opts)
    return CostReport(proto.cost_bits, proto, audit_protocol(proto))


@dataclass(frozen=True)
class SweepRow:
    n: int
    cost_per_copy: float
    asymptotic_reference: float


def _sweep_cap(rho: DensityMatrix, n: int, cls: OperationClass):
    if rho.is_incoherent():
        return  # every row is 0 without any computation
    dim = rho.dim ** n
    if cls in (OperationClass.MIO, OperationClass.DIO):
        cap = MAX_SDP_SWEEP_DIM
    elif rho.pure_amplitudes() is not None:
        cap = MAX_PURE_SWEEP_DIM
    else:
        cap = MAX_MIXED_RANK_DIM
    if dim > cap:
        raise DimensionCapError(f"{cls.value} sweep supports dimension <= {cap}; n={n} gives {dim}")


def asymptotic_sweep(rho: StateLike, n_max: int, epsilon: float, cls,
                     opts: SdpOptions | None = None) -> list[SweepRow]:
    """``(1/n) C^eps(rho^{(x)n})`` for n = 1..n_max next to the asymptotic rate.

    For MIO/DIO the per-copy value is the smoothed monotone that lower-bounds
    the cost within one bit; for IO/SIO it equals the cost exactly.
    """
    rho = as_density(rho)
    cls = OperationClass.parse(cls)
    _check_eps(epsilon)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    for n in range(1, n_max + 1):
        _sweep_cap(rho, n, cls)
    if cls in (OperationClass.MIO, OperationClass.DIO):
        ref = c_r(rho).value_bits
        mono = c_max_eps if cls is OperationClass.MIO else c_delta_max_eps
    else:
        ref = c_f(rho).value_bits
        mono = c_0_eps
    pure = rho.pure_amplitudes()
    rows = []
    for n in range(1, n_max + 1):
        if pure is not None:
            amps = pure
            for _ in range(n - 1):
                amps = np.kron(amps, pure)
            big = amps
        else:
            big = tensor_power(rho, n)
        if rho.is_incoherent():
            value = 0.0
        else:
            value = mono(big, epsilon, opts).value_bits
        rows.append(SweepRow(n, value / n, ref))
    return rows
