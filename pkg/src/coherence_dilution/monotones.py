"""Coherence quantities: relative entropy, formation, max-relative entropy,
dephased max-relative entropy, log coherence rank, and ε-smoothed variants.

All values are in bits.  Smoothing minimises a quantity over the fidelity
ball ``{rho' : F(rho, rho') >= 1 - eps}`` with F the squared fidelity.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.optimize

from .core import (
    DensityMatrix,
    IncoherentState,
    PureState,
    StateLike,
    as_density,
    dephase,
    dmax,
    entropy,
    fidelity,
    hermitian_part,
)
from .sdp import SdpOptions, SdpProblem, SolverError, feasibility, solve

AMP_TOL = 1e-9          # relative to the largest amplitude
MASS_TOL = 1e-12        # slack on the truncation mass test
BISECTION_TOL = 1e-7    # bits
ZERO_CHECK_BITS = 1e-6  # below this, look for an incoherent state in the ball
MAX_MIXED_DIM = 4
ROOF_RESTARTS = 64


class DimensionError(ValueError):
    """The requested computation exceeds the supported dimension."""


class SmoothingMethod(enum.Enum):
    JOINT_SDP = "joint_sdp"
    BISECTION = "bisection"
    PURE_TRUNCATION = "pure_truncation"
    BRUTE_FORCE = "brute_force"


@dataclass(frozen=True)
class SmoothingParams:
    epsilon: float
    method: SmoothingMethod | None = None  # None picks the natural method

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Pure-state decomposition ``rho = sum_j p_j |psi_j><psi_j|``."""

    weights: np.ndarray
    states: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        states = tuple(s if isinstance(s, PureState) else PureState(s) for s in self.states)
        if w.size != len(states) or w.size == 0:
            raise ValueError("one weight per state required")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-8:
            raise ValueError("ensemble weights must be a probability vector")
        if len({s.dim for s in states}) != 1:
            raise ValueError("ensemble states must share one dimension")
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def density(self) -> np.ndarray:
        return sum(p * np.outer(s.amplitudes, s.amplitudes.conj())
                   for p, s in zip(self.weights, self.states))

    def ranks(self, amp_tol: float = AMP_TOL) -> list[int]:
        return [coherence_rank(s.amplitudes, amp_tol) for s in self.states]

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True, eq=False)
class MonotoneResult:
    """A value in bits plus whatever witness the computation produced.

    ``exact`` is False when the value is only a certified upper bound
    (e.g. a heuristic convex-roof search).
    """

    value_bits: float
    method: str
    delta_star: IncoherentState | None = None
    rho_prime: DensityMatrix | None = None
    ensemble: Ensemble | None = None
    exact: bool = True

    def __float__(self):
        return float(self.value_bits)


Smoothing = Union[float, SmoothingParams]


def _params(sp: Smoothing) -> SmoothingParams:
    return sp if isinstance(sp, SmoothingParams) else SmoothingParams(float(sp))


def coherence_rank(amplitudes: np.ndarray, amp_tol: float = AMP_TOL) -> int:
    a = np.abs(np.asarray(amplitudes))
    if a.size == 0 or a.max() == 0:
        return 0
    return int(np.sum(a > amp_tol * a.max()))


def project_to_state(m: np.ndarray) -> DensityMatrix:
    """Nearest-by-clamping density matrix to a numerically perturbed one."""
    w, u = np.linalg.eigh(hermitian_part(m))
    w = np.clip(w, 0.0, None)
    return DensityMatrix((u * (w / w.sum())) @ u.conj().T)


def _incoherent_result(rho: DensityMatrix, method: str) -> MonotoneResult:
    return MonotoneResult(0.0, method, delta_star=IncoherentState(rho.diagonal / rho.diagonal.sum()),
                          rho_prime=rho, ensemble=_diagonal_ensemble(rho.diagonal))


def _diagonal_ensemble(diag: np.ndarray) -> Ensemble:
    d = diag.size
    idx = [i for i in range(d) if diag[i] > 0]
    states = [np.eye(d, dtype=complex)[i] for i in idx]
    w = diag[idx] / diag[idx].sum()
    return Ensemble(w, tuple(states))


def _eigen_ensemble(rho: DensityMatrix) -> Ensemble:
    w, u = rho.eigh()
    keep = w > 1e-14
    w = w[keep]
    return Ensemble(w / w.sum(), tuple(u[:, k] for k in np.flatnonzero(keep)))


# -- closed forms ----------------------------------------------------------


def c_r(rho: StateLike) -> MonotoneResult:
    """Relative entropy of coherence, ``S(Delta(rho)) - S(rho)``."""
    rho = as_density(rho)
    dp = dephase(rho)
    if rho.is_incoherent():
        return MonotoneResult(0.0, "incoherent", delta_star=IncoherentState(dp.diagonal))
    value = max(entropy(dp.diagonal) - entropy(rho.matrix), 0.0)
    return MonotoneResult(value, "closed-form", delta_star=IncoherentState(dp.diagonal))


def c_delta_max(rho: StateLike) -> MonotoneResult:
    """``log2 min{l : rho <= l Delta(rho)}`` via the largest eigenvalue of
    ``Delta^{-1/2} rho Delta^{-1/2}`` on the support of the diagonal."""
    rho = as_density(rho)
    if rho.is_incoherent():
        return MonotoneResult(0.0, "incoherent", delta_star=IncoherentState(rho.diagonal))
    diag = rho.diagonal
    supp = diag > 1e-14 * diag.max()
    if rho.pure_amplitudes(tol=1e-13) is not None:
        # Delta^-1/2 psi has unit-modulus entries on the support
        lam = float(np.count_nonzero(supp))
    else:
        sub = rho.matrix[np.ix_(supp, supp)]
        inv_half = 1.0 / np.sqrt(diag[supp])
        lam = np.linalg.eigvalsh(hermitian_part(inv_half[:, None] * sub * inv_half[None, :]))[-1]
    return MonotoneResult(max(float(np.log2(lam)), 0.0), "eigenvalue",
                          delta_star=IncoherentState(diag))


# -- SDP-based -------------------------------------------------------------


def c_max(rho: StateLike, opts: SdpOptions | None = None) -> MonotoneResult:
    """``min_delta D_max(rho || delta)`` from the SDP ``min sum q : diag(q) >= rho``.

    The reported value is the eigenvalue-exact ``D_max(rho || q/sum q)`` at
    the solver's witness, which is never above ``log2 sum q``.
    """
    rho = as_density(rho)
    if rho.is_incoherent():
        return _incoherent_result(rho, "incoherent")
    r = rho.matrix
    p = SdpProblem()
    p.vector("q", rho.dim)
    p.minimize(lambda v: v["q"].sum())
    p.add_psd(lambda v: np.diag(v["q"]) - r, "dominance")
    sol = solve(p, opts)
    if not sol.optimal:
        raise SolverError(f"C_max SDP ended with status {sol.status.value}")
    q = np.clip(sol.values["q"], 0.0, None)
    delta = IncoherentState(q / q.sum())
    value = min(dmax(rho, delta), float(np.log2(q.sum())))
    return MonotoneResult(max(value, 0.0), "sdp", delta_star=delta, rho_prime=rho)


def _fidelity_parts(rho: DensityMatrix):
    """Support compression so the fidelity block has a strict interior."""
    w, u = rho.eigh()
    keep = w > 1e-12 * w[-1]
    return np.diag(w[keep]).astype(complex), u[:, keep]


def _add_fidelity_ball(p: SdpProblem, rho: DensityMatrix, eps: float, var: str):
    """Constrain ``F(rho, rho') >= 1 - eps`` for the Hermitian expression ``var``.

    Uses ``sqrt F(rho, s) = max Re Tr X`` over ``[[rho, X], [X^dagger, s]] >= 0``
    written on the support of rho.
    """
    dd, v = _fidelity_parts(rho)
    k = dd.shape[0]
    p.complex_matrix("_X", k, k)
    root = np.sqrt(1.0 - eps)

    def block(vals):
        x = vals["_X"]
        s = v.conj().T @ _expr(vals, var) @ v
        return np.block([[dd, x], [x.conj().T, s]])

    p.add_psd(block, "fidelity_block")
    p.add_psd(lambda vals: np.trace(vals["_X"]).real - root, "fidelity_bound")


def _expr(vals, var):
    return var(vals) if callable(var) else vals[var]


def _incoherent_in_ball(rho: DensityMatrix, eps: float, opts) -> IncoherentState | None:
    """An incoherent state within the fidelity ball, or None if none is found.

    The closest incoherent state comes from an SDP; its fidelity is then
    recomputed directly, so a returned state always satisfies the ball.
    """
    dd, v = _fidelity_parts(rho)
    k, d = dd.shape[0], rho.dim
    p = SdpProblem()
    p.vector("p", d)
    p.complex_matrix("_X", k, k)
    p.minimize(lambda vals: -np.trace(vals["_X"]).real)
    p.add_psd(lambda vals: np.block([[dd, vals["_X"]],
                                     [vals["_X"].conj().T, v.conj().T @ np.diag(vals["p"]) @ v]]),
              "fidelity_block")
    p.add_psd(lambda vals: np.diag(vals["p"]), "probabilities")
    p.add_equality(lambda vals: vals["p"].sum() - 1.0, "normalisation")
    sol = solve(p, opts)
    if not sol.optimal:
        return None
    q = np.clip(sol.values["p"], 0.0, None)
    delta = IncoherentState(q / q.sum())
    return delta if fidelity(rho, delta.density()) >= 1.0 - eps else None


def _zero_result(delta: IncoherentState, method: str) -> MonotoneResult:
    return MonotoneResult(0.0, method, delta_star=delta, rho_prime=delta.density())


def c_max_eps(rho: StateLike, sp: Smoothing, opts: SdpOptions | None = None) -> MonotoneResult:
    """Smoothed C_max via one joint SDP over (rho', q, X)."""
    sp = _params(sp)
    rho = as_density(rho)
    if sp.method not in (None, SmoothingMethod.JOINT_SDP):
        raise ValueError(f"c_max_eps supports only the joint SDP, got {sp.method}")
    if sp.epsilon == 0.0:
        return c_max(rho, opts)
    if rho.is_incoherent():
        return _incoherent_result(rho, "incoherent")
    d = rho.dim
    p = SdpProblem()
    p.vector("q", d)
    p.hermitian("rho_p", d)
    p.minimize(lambda v: v["q"].sum())
    p.add_psd(lambda v: np.diag(v["q"]) - v["rho_p"], "dominance")
    p.add_psd(lambda v: v["rho_p"], "state")
    p.add_equality(lambda v: np.trace(v["rho_p"]).real - 1.0, "trace")
    _add_fidelity_ball(p, rho, sp.epsilon, "rho_p")
    sol = solve(p, opts)
    if not sol.optimal:
        raise SolverError(f"smoothed C_max SDP ended with status {sol.status.value}")
    rho_p = project_to_state(sol.values["rho_p"])
    q = np.clip(sol.values["q"], 0.0, None)
    delta = IncoherentState(q / q.sum())
    value = max(dmax(rho_p, delta), 0.0)
    if value < ZERO_CHECK_BITS:
        inc = _incoherent_in_ball(rho, sp.epsilon, opts)
        if inc is not None:
            return _zero_result(inc, "joint-sdp")
    return MonotoneResult(value, "joint-sdp", delta_star=delta, rho_prime=rho_p)


def _delta_feasible(rho: DensityMatrix, eps: float, t: float, opts):
    d = rho.dim
    p = SdpProblem()
    p.hermitian("rho_p", d)
    p.add_psd(lambda v: t * np.diag(np.diag(v["rho_p"])) - v["rho_p"], "dominance")
    p.add_psd(lambda v: v["rho_p"], "state")
    p.add_equality(lambda v: np.trace(v["rho_p"]).real - 1.0, "trace")
    _add_fidelity_ball(p, rho, eps, "rho_p")
    res = feasibility(p, opts)
    # only strictly interior points count, so witnesses satisfy the ball exactly
    ok = res.feasible and res.margin > 0.0
    return ok, (res.witness["rho_p"] if ok else None)


def c_delta_max_eps(rho: StateLike, sp: Smoothing, opts: SdpOptions | None = None,
                    tol: float = BISECTION_TOL) -> MonotoneResult:
    """Smoothed C_Δ,max by bisection on ``log2 t`` with a feasibility SDP per step."""
    sp = _params(sp)
    rho = as_density(rho)
    if sp.method not in (None, SmoothingMethod.BISECTION):
        raise ValueError(f"c_delta_max_eps supports only bisection, got {sp.method}")
    base = c_delta_max(rho)
    if sp.epsilon == 0.0 or base.value_bits == 0.0:
        return MonotoneResult(base.value_bits, "eigenvalue", delta_star=base.delta_star, rho_prime=rho)
    eps = sp.epsilon
    inc = _incoherent_in_ball(rho, eps, opts)
    if inc is not None:
        return _zero_result(inc, "bisection")
    lo, hi = 0.0, base.value_bits
    best = rho
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, w = _delta_feasible(rho, eps, 2.0 ** mid, opts)
        if ok:
            hi, best = mid, project_to_state(w)
        else:
            lo = mid
    wit = c_delta_max(best)
    return MonotoneResult(wit.value_bits, "bisection", delta_star=wit.delta_star, rho_prime=best)


# -- coherence rank ------------------------------------------------------------


def _factor_width_problem(d: int, size: int):
    """Variables P_S >= 0 on every support mask S of the given size."""
    masks = list(itertools.combinations(range(d), size))
    p = SdpProblem()
    for k, s in enumerate(masks):
        p.hermitian(f"P{k}", size)
        p.add_psd(lambda v, k=k: v[f"P{k}"], f"mask{k}")

    def total(v):
        out = np.zeros((d, d), dtype=complex)
        for k, s in enumerate(masks):
            out[np.ix_(s, s)] += v[f"P{k}"]
        return out

    return p, masks, total


def _mask_ensemble(witness: dict, masks, d: int) -> Ensemble:
    weights, states = [], []
    for k, s in enumerate(masks):
        w, u = np.linalg.eigh(hermitian_part(witness[f"P{k}"]))
        for lam, vec in zip(w, u.T):
            if lam > 1e-13:
                amp = np.zeros(d, dtype=complex)
                amp[list(s)] = vec
                weights.append(lam)
                states.append(amp)
    weights = np.array(weights)
    return Ensemble(weights / weights.sum(), tuple(states))


def _rank_feasible(rho: DensityMatrix, size: int, eps: float, opts):
    d = rho.dim
    p, masks, total = _factor_width_problem(d, size)
    if eps == 0.0:
        r = rho.matrix
        p.add_equality(lambda v: total(v) - r, "decomposition")
    else:
        p.add_equality(lambda v: np.trace(total(v)).real - 1.0, "trace")
        _add_fidelity_ball(p, rho, eps, total)
    res = feasibility(p, opts)
    if not res.feasible:
        return None
    return _mask_ensemble(res.witness, masks, d)


def _vector_input(x) -> np.ndarray | None:
    if isinstance(x, PureState):
        return np.asarray(x.amplitudes)
    if isinstance(x, (DensityMatrix, IncoherentState)):
        return None
    a = np.asarray(x)
    if a.ndim != 1:
        return None
    return PureState(a).amplitudes


def c_0(rho: StateLike, opts: SdpOptions | None = None, amp_tol: float = AMP_TOL) -> MonotoneResult:
    """Log of the smallest achievable maximum coherence rank over decompositions.

    Pure states are counted directly.  For mixed states, "some decomposition
    has every element supported on at most T basis vectors" is the same as
    ``rho`` being a sum of PSD blocks on T-element masks, which is decided by
    an SDP feasibility problem for each T.  Amplitude-vector inputs return no
    ``rho_prime`` (the ensemble carries the state).
    """
    vec = _vector_input(rho)
    if vec is not None:
        return MonotoneResult(float(np.log2(coherence_rank(vec, amp_tol))), "rank-count",
                              ensemble=Ensemble([1.0], (PureState(vec),)))
    rho = as_density(rho)
    amps = rho.pure_amplitudes()
    if amps is not None:
        t = coherence_rank(amps, amp_tol)
        return MonotoneResult(float(np.log2(t)), "rank-count", rho_prime=rho,
                              ensemble=Ensemble([1.0], (amps / np.linalg.norm(amps),)))
    if rho.is_incoherent():
        return _incoherent_result(rho, "incoherent")
    d = rho.dim
    if d > MAX_MIXED_DIM:
        raise DimensionError(f"mixed-state C_0 supports d <= {MAX_MIXED_DIM}, got {d}")
    for size in range(2, d):
        ens = _rank_feasible(rho, size, 0.0, opts)
        if ens is not None:
            return MonotoneResult(float(np.log2(size)), "factor-width-sdp", rho_prime=rho, ensemble=ens)
    return MonotoneResult(float(np.log2(d)), "factor-width-sdp", rho_prime=rho, ensemble=_eigen_ensemble(rho))


def truncate_pure(amplitudes: np.ndarray, eps: float):
    """Smallest top-T truncation keeping mass >= 1 - eps.

    Returns ``(T, truncated normalised amplitudes, kept mass)``; ties in the
    sort are broken by lower index first.
    """
    a = np.asarray(amplitudes, dtype=complex)
    mass = np.abs(a) ** 2
    order = np.lexsort((np.arange(a.size), -mass))
    cum = np.cumsum(mass[order])
    t = int(np.searchsorted(cum, (1.0 - eps) * cum[-1] - MASS_TOL * cum[-1]) + 1)
    t = min(t, a.size)
    keep = order[:t]
    out = np.zeros_like(a)
    out[keep] = a[keep]
    kept = float(cum[t - 1] / cum[-1])
    return t, out / np.linalg.norm(out), kept


def c_0_eps(rho: StateLike, sp: Smoothing, opts: SdpOptions | None = None,
            amp_tol: float = AMP_TOL) -> MonotoneResult:
    """Smoothed C_0.

    Pure targets use the top-T truncation (fidelity with a pure target is
    linear, so the best T-sparse mixed state is no better than the best
    T-sparse pure one).  Mixed targets, or ``BRUTE_FORCE`` on pure ones,
    run a factor-width feasibility SDP with the fidelity ball for T = 1..d.
    """
    sp = _params(sp)
    eps = sp.epsilon
    vec = _vector_input(rho)
    if vec is not None and sp.method in (None, SmoothingMethod.PURE_TRUNCATION):
        # amplitude vectors skip the dense density matrix (tensor powers get large)
        nz = np.abs(vec) > amp_tol * np.abs(vec).max()
        t, trunc, _ = truncate_pure(np.where(nz, vec, 0.0), eps)
        return MonotoneResult(float(np.log2(t)), "pure-truncation",
                              ensemble=Ensemble([1.0], (PureState(trunc),)))
    rho = as_density(rho)
    amps = rho.pure_amplitudes()
    if eps == 0.0 and sp.method is not SmoothingMethod.BRUTE_FORCE:
        return c_0(rho, opts, amp_tol)
    if amps is not None and sp.method in (None, SmoothingMethod.PURE_TRUNCATION):
        nz = np.abs(amps) > amp_tol * np.abs(amps).max()
        t, trunc, _ = truncate_pure(np.where(nz, amps, 0.0), eps)
        st = PureState(trunc)
        return MonotoneResult(float(np.log2(t)), "pure-truncation", rho_prime=st.density(),
                              ensemble=Ensemble([1.0], (st,)))
    if sp.method is SmoothingMethod.PURE_TRUNCATION:
        raise ValueError("pure truncation requires a pure target")
    if sp.method not in (None, SmoothingMethod.BRUTE_FORCE):
        raise ValueError(f"c_0_eps does not support {sp.method}")
    d = rho.dim
    if d > MAX_MIXED_DIM:
        raise DimensionError(f"mixed-state smoothed C_0 supports d <= {MAX_MIXED_DIM}, got {d}")
    for size in range(1, d):
        ens = _rank_feasible(rho, size, eps, opts)
        if ens is not None:
            rp = project_to_state(ens.density())
            return MonotoneResult(float(np.log2(size)), "factor-width-sdp", rho_prime=rp, ensemble=ens)
    return MonotoneResult(float(np.log2(d)), "factor-width-sdp", rho_prime=rho, ensemble=_eigen_ensemble(rho))


# -- convex roof ---------------------------------------------------------------


def _roof_objective(amps_rows: np.ndarray) -> float:
    a = np.abs(amps_rows) ** 2
    p = a.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a > 1e-300, a * np.log2(np.where(a > 1e-300, a, 1.0)), 0.0)
        plog = np.where(p > 1e-300, p * np.log2(np.where(p > 1e-300, p, 1.0)), 0.0)
    return float(-terms.sum() + plog.sum())


def _isometry(x: np.ndarray, n: int, r: int) -> np.ndarray:
    g = (x[:n * r] + 1j * x[n * r:]).reshape(n, r)
    w, _, vh = np.linalg.svd(g, full_matrices=False)
    return w @ vh


def c_f(rho: StateLike, restarts: int = ROOF_RESTARTS, seed: int = 0,
        max_dim: int = MAX_MIXED_DIM) -> MonotoneResult:
    """Coherence of formation.

    Mixed states: decompositions ``psi_j = sum_k U_jk sqrt(l_k) |e_k>`` over
    isometries U with rank**2 rows, minimised from random restarts.  The
    result is an upper bound (``exact=False``).
    """
    rho = as_density(rho)
    amps = rho.pure_amplitudes()
    if amps is not None:
        return MonotoneResult(entropy(np.abs(amps) ** 2), "closed-form", rho_prime=rho,
                              ensemble=Ensemble([1.0], (amps / np.linalg.norm(amps),)))
    if rho.is_incoherent():
        return _incoherent_result(rho, "incoherent")
    d = rho.dim
    if d > max_dim:
        raise DimensionError(f"convex-roof search supports d <= {max_dim}, got {d}")
    w, u = rho.eigh()
    keep = w > 1e-12
    b = (u[:, keep] * np.sqrt(w[keep])).T  # r x d
    r = b.shape[0]
    n = r * r
    size = 2 * n * r

    def fun(x):
        return _roof_objective(_isometry(x, n, r) @ b)

    rng = np.random.default_rng(seed)
    eye = np.zeros(size)
    eye[:n * r] = np.eye(n, r).reshape(-1)
    starts = [eye] + [rng.normal(size=size) for _ in range(restarts - 1)]
    best_x, best = None, np.inf
    for x0 in starts:
        res = scipy.optimize.minimize(fun, x0, method="L-BFGS-B", options={"ftol": 1e-13, "gtol": 1e-9})
        if res.fun < best - 1e-12:
            best, best_x = res.fun, res.x
    rows = _isometry(best_x, n, r) @ b
    p = np.sum(np.abs(rows) ** 2, axis=1)
    keep_rows = p > 1e-14
    ens = Ensemble(p[keep_rows] / p[keep_rows].sum(),
                   tuple(row / np.linalg.norm(row) for row in rows[keep_rows]))
    return MonotoneResult(max(best, 0.0), "roof-search", rho_prime=rho, ensemble=ens, exact=False)


def all_monotones(rho: StateLike, epsilon: float = 0.0, seed: int = 0) -> dict:
    """Every applicable quantity for ``rho`` (skips those beyond dimension caps)."""
    rho = as_density(rho)
    out = {"c_r": c_r(rho), "c_max": c_max(rho), "c_delta_max": c_delta_max(rho)}
    pure = rho.pure_amplitudes() is not None
    if pure or rho.dim <= MAX_MIXED_DIM:
        out["c_f"] = c_f(rho, seed=seed)
        out["c_0"] = c_0(rho)
    if epsilon > 0:
        out["c_max_eps"] = c_max_eps(rho, epsilon)
        out["c_delta_max_eps"] = c_delta_max_eps(rho, epsilon)
        if pure or rho.dim <= MAX_MIXED_DIM:
            out["c_0_eps"] = c_0_eps(rho, epsilon)
    return out
