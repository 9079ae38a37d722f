"""Small dense SDP solver: primal path-following with a log-det barrier.

Problems are written against named variables (real scalars/vectors, Hermitian
and general complex matrix blocks) using plain numpy expressions; every
objective and constraint expression is linearised at build time and checked
to be affine.  Complex Hermitian blocks are embedded as real symmetric blocks
``[[Re, -Im], [Im, Re]]`` so the Newton system stays real.

Example::

    p = SdpProblem()
    p.vector("q", 2)
    p.minimize(lambda v: v["q"].sum())
    p.add_psd(lambda v: np.diag(v["q"]) - rho)
    sol = solve(p)
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class SdpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


class SdpError(ValueError):
    """Malformed problem (non-affine or non-Hermitian expression, bad shapes)."""


class SolverError(RuntimeError):
    """The solver did not converge, or a problem expected feasible was not."""


@dataclass(frozen=True)
class SdpOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-8
    max_iter: int = 500
    mu: float = 20.0
    box: float = 1e4  # |y_i| <= box keeps the barrier bounded on unbounded sets


@dataclass
class SdpSolution:
    status: SdpStatus
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    gap: float = float("inf")
    iterations: int = 0
    certificate: list | None = None

    @property
    def optimal(self) -> bool:
        return self.status is SdpStatus.OPTIMAL


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: dict | None
    margin: float
    certificate: list | None = None
    iterations: int = 0


class _Var:
    __slots__ = ("name", "kind", "shape", "offset", "size")

    def __init__(self, name, kind, shape, offset, size):
        self.name, self.kind, self.shape, self.offset, self.size = name, kind, shape, offset, size


class SdpProblem:
    """Container for variables, a linear objective and affine constraints."""

    def __init__(self):
        self._vars: list[_Var] = []
        self._names: set[str] = set()
        self.n_params = 0
        self._objective: Callable | None = None
        self._psd: list[tuple[str, Callable]] = []
        self._eq: list[tuple[str, Callable]] = []

    # -- variables ---------------------------------------------------------
    def _add(self, name, kind, shape, size):
        if name in self._names:
            raise SdpError(f"duplicate variable {name!r}")
        self._names.add(name)
        self._vars.append(_Var(name, kind, shape, self.n_params, size))
        self.n_params += size

    def scalar(self, name: str):
        self._add(name, "scalar", (), 1)

    def vector(self, name: str, n: int):
        self._add(name, "vector", (n,), n)

    def hermitian(self, name: str, n: int):
        self._add(name, "hermitian", (n, n), n * n)

    def complex_matrix(self, name: str, m: int, n: int):
        self._add(name, "complex", (m, n), 2 * m * n)

    # -- expressions ---------------------------------------------------------
    def minimize(self, fn: Callable):
        self._objective = fn

    def add_psd(self, fn: Callable, name: str | None = None):
        """Constrain ``fn(vars)`` (Hermitian matrix or real scalar) to be PSD."""
        self._psd.append((name or f"psd{len(self._psd)}", fn))

    def add_equality(self, fn: Callable, name: str | None = None):
        """Constrain ``fn(vars) == 0`` entrywise (real and imaginary parts)."""
        self._eq.append((name or f"eq{len(self._eq)}", fn))

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for v in self._vars:
            seg = x[v.offset:v.offset + v.size]
            if v.kind == "scalar":
                out[v.name] = float(seg[0])
            elif v.kind == "vector":
                out[v.name] = np.array(seg, dtype=float)
            elif v.kind == "hermitian":
                n = v.shape[0]
                h = np.diag(seg[:n]).astype(complex)
                iu = np.triu_indices(n, 1)
                k = len(iu[0])
                h[iu] = seg[n:n + k] + 1j * seg[n + k:n + 2 * k]
                h[(iu[1], iu[0])] = seg[n:n + k] - 1j * seg[n + k:n + 2 * k]
                out[v.name] = h
            else:
                m, n = v.shape
                out[v.name] = (seg[:m * n] + 1j * seg[m * n:]).reshape(m, n)
        return out

    # -- compilation -------------------------------------------------------
    def _linearize(self, fn, label):
        p = self.n_params
        zero = np.zeros(p)
        c0 = np.asarray(fn(self.unpack(zero)), dtype=complex)
        coeffs = np.empty((p,) + c0.shape, dtype=complex)
        for i in range(p):
            e = zero.copy()
            e[i] = 1.0
            coeffs[i] = np.asarray(fn(self.unpack(e)), dtype=complex) - c0
        rng = np.random.default_rng(12345)
        x = rng.normal(size=p)
        direct = np.asarray(fn(self.unpack(x)), dtype=complex)
        if direct.shape != c0.shape:
            raise SdpError(f"{label}: expression shape depends on the variables")
        pred = c0 + np.tensordot(x, coeffs, axes=1)
        scale = 1.0 + np.max(np.abs(direct), initial=0.0)
        if np.max(np.abs(direct - pred), initial=0.0) > 1e-8 * scale:
            raise SdpError(f"{label}: expression is not affine in the variables")
        return c0, coeffs

    def compile(self) -> "_Compiled":
        if self._objective is None:
            c = np.zeros(self.n_params)
            c_const = 0.0
        else:
            c0, coeffs = self._linearize(self._objective, "objective")
            if c0.shape != ():
                raise SdpError("objective must be scalar")
            if np.max(np.abs(coeffs.imag), initial=0.0) > 1e-12 or abs(c0.imag) > 1e-12:
                raise SdpError("objective must be real")
            c, c_const = coeffs.real.copy(), float(c0.real)

        blocks = []
        for label, fn in self._psd:
            c0, coeffs = self._linearize(fn, label)
            if c0.ndim == 0:
                c0, coeffs = c0.reshape(1, 1), coeffs.reshape(-1, 1, 1)
            if c0.ndim != 2 or c0.shape[0] != c0.shape[1]:
                raise SdpError(f"{label}: PSD expression must be a square matrix")
            herm = np.max(np.abs(c0 - c0.conj().T), initial=0.0)
            herm = max(herm, np.max(np.abs(coeffs - np.conj(np.swapaxes(coeffs, 1, 2))), initial=0.0))
            if herm > 1e-10:
                raise SdpError(f"{label}: PSD expression is not Hermitian")
            blocks.append(_Block(label, c0, coeffs))

        rows, rhs = [], []
        for label, fn in self._eq:
            c0, coeffs = self._linearize(fn, label)
            c0 = c0.reshape(-1)
            coeffs = coeffs.reshape(self.n_params, -1)
            for part in (np.real, np.imag):
                a, b = part(coeffs).T, -part(c0)
                for r, bb in zip(a, b):
                    if np.max(np.abs(r), initial=0.0) < 1e-14:
                        if abs(bb) > 1e-12:
                            raise SdpError(f"{label}: constant equality constraint is violated")
                        continue
                    rows.append(r)
                    rhs.append(bb)
        a_eq = np.array(rows).reshape(len(rows), self.n_params)
        return _Compiled(self, c, c_const, blocks, a_eq, np.array(rhs, dtype=float))


class _Block:
    """One PSD constraint, stored embedded as a real symmetric block."""

    def __init__(self, label, c0, coeffs):
        self.label = label
        self.complex_dim = c0.shape[0]
        self.is_complex = (np.max(np.abs(c0.imag), initial=0.0) > 0
                           or np.max(np.abs(coeffs.imag), initial=0.0) > 0)
        if self.is_complex:
            self.C = _embed(c0)
            self.A = _embed(coeffs)
        else:
            self.C = np.ascontiguousarray(c0.real)
            self.A = np.ascontiguousarray(coeffs.real)

    def unembed(self, m):
        if not self.is_complex:
            return m
        n = self.complex_dim
        return m[:n, :n] + 1j * m[n:, :n]


def _embed(h):
    re, im = h.real, h.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


class _Compiled:
    def __init__(self, problem, c, c_const, blocks, a_eq, b_eq):
        self.problem = problem
        self.c, self.c_const = c, c_const
        self.blocks = blocks
        self.a_eq, self.b_eq = a_eq, b_eq

    def reduce(self):
        """Eliminate equalities: ``x = x0 + Z y``.  Returns None if inconsistent."""
        p = self.problem.n_params
        if self.a_eq.shape[0] == 0:
            return np.zeros(p), np.eye(p)
        x0, *_ = np.linalg.lstsq(self.a_eq, self.b_eq, rcond=None)
        if np.max(np.abs(self.a_eq @ x0 - self.b_eq)) > 1e-9 * (1 + np.max(np.abs(self.b_eq))):
            return None
        z = scipy.linalg.null_space(self.a_eq, rcond=1e-12)
        return x0, z


class _Barrier:
    """Barrier machinery over reduced coordinates ``y``.

    Each block is ``F_k(y) = C_k + sum_j y_j A_kj`` (real symmetric).  Along a
    Newton direction the barrier is ``-sum log(1 + a mu_i)`` with ``mu`` the
    eigenvalues of ``L^-1 dF L^-T``, so the step length is found by an exact
    one-dimensional search without further factorisations.
    """

    def __init__(self, consts, coeffs, c, opts: SdpOptions):
        self.consts, self.c, self.opts = consts, c, opts
        self.coeffs = [A.reshape(A.shape[0], -1) for A in coeffs]
        self.box = opts.box
        self.m = sum(C.shape[0] for C in consts) + 2 * c.size
        self.newton_steps = 0

    def matrices(self, y):
        return [C + (y @ A).reshape(C.shape) for C, A in zip(self.consts, self.coeffs)]

    def is_interior(self, y):
        if np.max(np.abs(y), initial=0.0) >= self.box:
            return False
        try:
            for f in self.matrices(y):
                np.linalg.cholesky(f)
        except np.linalg.LinAlgError:
            return False
        return True

    def derivs(self, y):
        """Gradient, the Jacobian ``J`` with Hessian ``J^T J``, and the scaled blocks."""
        p = y.size
        g, rows, scaled = np.zeros(p), [], []
        for f, A in zip(self.matrices(y), self.coeffs):
            n = f.shape[0]
            L = np.linalg.cholesky(f)
            li = scipy.linalg.solve_triangular(L, np.eye(n), lower=True, check_finite=False)
            B = li @ A.reshape(p, n, n) @ li.T
            g -= np.trace(B, axis1=1, axis2=2)
            bf = B.reshape(p, -1)
            rows.append(bf.T)
            scaled.append(bf)
        up, lo = 1.0 / (self.box - y), 1.0 / (self.box + y)
        g += up - lo
        rows += [np.diag(up), np.diag(lo)]
        return g, np.vstack(rows), scaled

    @staticmethod
    def _newton_direction(jac, grad):
        # R from QR of J keeps the conditioning of J rather than of J^T J
        r = scipy.linalg.qr(jac, mode="r", check_finite=False)[0][:jac.shape[1]]
        diag = np.abs(np.diag(r))
        if diag.size and diag.min() > 1e-13 * diag.max():
            w = scipy.linalg.solve_triangular(r, -grad, trans="T", check_finite=False)
            return scipy.linalg.solve_triangular(r, w, check_finite=False)
        return np.linalg.lstsq(jac.T @ jac, -grad, rcond=None)[0]

    @staticmethod
    def _step_length(slope, mu):
        """Minimise ``a * slope - sum log(1 + a mu)`` over ``0 < a <= 1`` (interior)."""
        neg = mu[mu < 0]
        hi = min(1.0, 0.99 / float(np.max(-neg))) if neg.size else 1.0
        if slope - np.sum(mu / (1.0 + hi * mu)) <= 0:
            return hi
        lo, a = 0.0, 0.5 * hi
        for _ in range(60):
            den = 1.0 + a * mu
            d1 = slope - np.sum(mu / den)
            if d1 < 0:
                lo = a
            else:
                hi = a
            d2 = np.sum((mu / den) ** 2)
            a_new = a - d1 / d2 if d2 > 0 else 0.5 * (lo + hi)
            if not lo < a_new < hi:
                a_new = 0.5 * (lo + hi)
            if abs(a_new - a) <= 1e-10 * a:
                return a_new
            a = a_new
        return a

    def center(self, y, t, stop=None):
        """Newton centering on ``t c.y + phi(y)``; returns (y, stopped)."""
        prev_dec = np.inf
        for _ in range(200):
            if self.newton_steps >= self.opts.max_iter:
                return y, False
            g, jac, scaled = self.derivs(y)
            grad = t * self.c + g
            dy = self._newton_direction(jac, grad)
            dec = float(-grad @ dy)
            if not np.isfinite(dec) or dec <= 2e-10:
                break
            if dec < 1e-6 and dec > 0.5 * prev_dec:
                break  # round-off floor: the decrement no longer shrinks
            prev_dec = dec
            mu = np.concatenate([
                np.linalg.eigvalsh((dy @ bf).reshape(int(np.sqrt(bf.shape[1])), -1))
                for bf in scaled] + [-dy / (self.box - y), dy / (self.box + y)])
            alpha = self._step_length(t * float(self.c @ dy), mu)
            y_new = y + alpha * dy
            while not self.is_interior(y_new) and alpha > 1e-12:
                alpha *= 0.5
                y_new = y + alpha * dy
            y = y_new
            self.newton_steps += 1
            if stop is not None and stop(y):
                return y, True
            if dec < 1e-14:
                break
        return y, False

    def duals(self, y, t):
        return [np.linalg.inv(f) / t for f in self.matrices(y)]


def _phase1(blocks, x0, z, opts, decide_feasibility: bool):
    """Maximise s subject to F_k(x0 + Z y) - s I >= 0.

    Returns (status, y, s, certificate, steps) with status in
    {"strict", "boundary", "infeasible", "max_iter"}.
    """
    q = z.shape[1]
    consts, coeffs = [], []
    for b in blocks:
        C = b.C + np.tensordot(x0, b.A, axes=1)
        A = np.tensordot(z.T, b.A, axes=1) if q else np.zeros((0,) + C.shape)
        eye = np.eye(C.shape[0])
        consts.append(C)
        coeffs.append(np.concatenate([A, -eye[None]], axis=0))
    s0 = min(np.linalg.eigvalsh(C)[0] for C in consts)
    y = np.zeros(q + 1)
    if s0 > 0:
        return "strict", y[:q], s0, None, 0
    y[-1] = s0 - 1.0
    c = np.zeros(q + 1)
    c[-1] = -1.0
    bar = _Barrier(consts, coeffs, c, opts)
    t = 1.0
    stop = lambda yy: yy[-1] > 0.0  # noqa: E731
    while True:
        y, hit = bar.center(y, t, stop)
        if hit:
            return "strict", y[:q], y[-1], None, bar.newton_steps
        if bar.newton_steps >= opts.max_iter:
            return "max_iter", y[:q], y[-1], None, bar.newton_steps
        gap = bar.m / t
        s = y[-1]
        if s + gap < -opts.feas_tol:
            cert = [b.unembed(zk) for b, zk in zip(blocks, bar.duals(y, t))]
            return "infeasible", y[:q], s, cert, bar.newton_steps
        if gap < 0.1 * opts.feas_tol and s >= -opts.feas_tol:
            return "boundary", y[:q], s, None, bar.newton_steps
        t *= opts.mu


def solve(problem: SdpProblem, opts: SdpOptions | None = None) -> SdpSolution:
    """Minimise the objective; see :class:`SdpSolution` for the outcome."""
    opts = opts or SdpOptions()
    comp = problem.compile()
    red = comp.reduce()
    if red is None:
        return SdpSolution(SdpStatus.INFEASIBLE)
    x0, z = red
    if not comp.blocks:
        raise SdpError("problem has no PSD constraints")
    status, y, s, cert, steps = _phase1(comp.blocks, x0, z, opts, decide_feasibility=False)
    if status == "infeasible":
        return SdpSolution(SdpStatus.INFEASIBLE, certificate=cert, iterations=steps)
    if status == "max_iter":
        return SdpSolution(SdpStatus.MAX_ITER, iterations=steps)
    relax = opts.feas_tol if status == "boundary" else 0.0

    consts, coeffs = [], []
    for b in comp.blocks:
        C = b.C + np.tensordot(x0, b.A, axes=1) + relax * np.eye(b.C.shape[0])
        consts.append(C)
        coeffs.append(np.tensordot(z.T, b.A, axes=1))
    c_red = z.T @ comp.c
    bar = _Barrier(consts, coeffs, c_red, opts)
    bar.newton_steps = steps
    if not bar.is_interior(y):
        return SdpSolution(SdpStatus.INFEASIBLE, iterations=steps)
    t = max(1.0, bar.m / (1.0 + abs(float(comp.c @ (x0 + z @ y)))))
    while True:
        y, _ = bar.center(y, t)
        gap = bar.m / t
        if gap < opts.gap_tol:
            status = SdpStatus.OPTIMAL
            break
        if bar.newton_steps >= opts.max_iter:
            status = SdpStatus.MAX_ITER
            break
        t *= opts.mu
    x = x0 + z @ y
    cert = [b.unembed(zk) for b, zk in zip(comp.blocks, bar.duals(y, t))]
    return SdpSolution(status, problem.unpack(x), float(comp.c @ x + comp.c_const), gap,
                       bar.newton_steps, cert)


def feasibility(problem: SdpProblem, opts: SdpOptions | None = None) -> FeasibilityResult:
    """Decide whether the constraints admit a point (up to ``feas_tol``).

    Raises :class:`SolverError` when the iteration cap is hit.
    """
    opts = opts or SdpOptions()
    comp = problem.compile()
    red = comp.reduce()
    if red is None:
        return FeasibilityResult(False, None, -np.inf)
    x0, z = red
    if not comp.blocks:
        return FeasibilityResult(True, problem.unpack(x0), np.inf)
    status, y, s, cert, steps = _phase1(comp.blocks, x0, z, opts, decide_feasibility=True)
    if status == "max_iter":
        raise SolverError(f"feasibility check hit the iteration cap ({opts.max_iter})")
    if status == "infeasible":
        return FeasibilityResult(False, None, float(s), cert, steps)
    return FeasibilityResult(True, problem.unpack(x0 + z @ y), float(s), None, steps)
