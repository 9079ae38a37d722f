"""States, channels and the Hermitian linear algebra used throughout the package.

Every state lives in a fixed computational basis ``{|0>, ..., |d-1>}``; the
incoherent (free) states are the diagonal density matrices in that basis.

Fidelity follows the squared convention ``F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``
everywhere in the package.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

PSD_TOL = 1e-9        # relative to the spectral norm
TRACE_TOL = 1e-8
SUPPORT_TOL = 1e-10   # relative eigenvalue cut-off for supports in dmax
TP_TOL = 1e-9
FIDELITY_CUT = 1e-14  # relative eigenvalue floor inside fidelity


class StateError(ValueError):
    """Raised when an array is not a valid quantum state."""


class ChannelError(ValueError):
    """Raised when a channel cannot be applied (dimension mismatch, not TP)."""


def hermitian_part(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    return 0.5 * (a + a.conj().T)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix through its eigendecomposition."""
    w, u = np.linalg.eigh(hermitian_part(a))
    w = np.clip(w, 0.0, None)
    return (u * np.sqrt(w)) @ u.conj().T


def entropy(probs_or_rho: np.ndarray) -> float:
    """Shannon / von Neumann entropy in bits."""
    x = np.asarray(probs_or_rho)
    if x.ndim == 2:
        x = np.linalg.eigvalsh(hermitian_part(x))
    x = np.real(x)
    x = x[x > 1e-15]
    return float(-np.sum(x * np.log2(x)))


def binary_entropy(p: float) -> float:
    return entropy(np.array([p, 1.0 - p]))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, PSD, unit-trace complex matrix.

    The input is symmetrized as ``(A + A^dagger)/2``; eigenvalues down to
    ``-PSD_TOL * ||A||`` are accepted as round-off.
    """

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise StateError(f"density matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise StateError("density matrix has non-finite entries")
        if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(a))):
            raise StateError("density matrix is not Hermitian")
        a = hermitian_part(a)
        tr = np.trace(a).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"density matrix has trace {tr}, expected 1")
        w = np.linalg.eigvalsh(a)
        if w[0] < -PSD_TOL * max(1.0, abs(w[-1])):
            raise StateError(f"density matrix has negative eigenvalue {w[0]:.3e}")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def is_incoherent(self, tol: float = 1e-9) -> bool:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return bool(np.max(np.abs(off), initial=0.0) <= tol)

    def eigh(self):
        return np.linalg.eigh(self.matrix)

    def rank(self, tol: float = 1e-10) -> int:
        w = np.linalg.eigvalsh(self.matrix)
        return int(np.sum(w > tol * max(w[-1], 1e-300)))

    def pure_amplitudes(self, tol: float = 1e-10) -> np.ndarray | None:
        """Amplitude vector if the state is pure (rank one), else ``None``."""
        w, u = self.eigh()
        if w[-2:-1].size and w[-2] > tol:
            return None
        v = u[:, -1]
        # fix global phase: first nonzero amplitude real positive
        k = int(np.argmax(np.abs(v) > 1e-12))
        v = v * np.exp(-1j * np.angle(v[k]))
        return v

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        norm = np.vdot(a, a).real
        if a.size == 0 or abs(norm - 1.0) > TRACE_TOL:
            raise StateError(f"pure state must have unit norm, got {norm}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> DensityMatrix:
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()))

    def __repr__(self):
        return f"PureState(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class IncoherentState:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0 or np.any(p < -1e-12) or abs(p.sum() - 1.0) > TRACE_TOL:
            raise StateError("incoherent state needs a probability vector")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return self.probs.size

    def density(self) -> DensityMatrix:
        return DensityMatrix(np.diag(self.probs).astype(complex))


StateLike = Union[DensityMatrix, PureState, IncoherentState, np.ndarray, Sequence]


def as_density(x: StateLike) -> DensityMatrix:
    """Coerce a state-like value; 1-d arrays are read as pure-state amplitudes."""
    if isinstance(x, DensityMatrix):
        return x
    if isinstance(x, (PureState, IncoherentState)):
        return x.density()
    a = np.asarray(x, dtype=complex)
    if a.ndim == 1:
        return PureState(a).density()
    return DensityMatrix(a)


class OperationClass(enum.Enum):
    MIO = "mio"
    DIO = "dio"
    IO = "io"
    SIO = "sio"

    @classmethod
    def parse(cls, value: "str | OperationClass") -> "OperationClass":
        if isinstance(value, OperationClass):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown operation class {value!r}") from None

    def is_subclass_of(self, other: "OperationClass") -> bool:
        """Containment of the free-operation classes (SIO in IO, DIO; both in MIO)."""
        return other in _SUPERSETS[self]


_SUPERSETS = {
    OperationClass.SIO: {OperationClass.SIO, OperationClass.IO, OperationClass.DIO, OperationClass.MIO},
    OperationClass.IO: {OperationClass.IO, OperationClass.MIO},
    OperationClass.DIO: {OperationClass.DIO, OperationClass.MIO},
    OperationClass.MIO: {OperationClass.MIO},
}


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Channel ``rho -> sum_n K rho K^dagger`` with ``out_dim x in_dim`` operators."""

    kraus_ops: tuple
    in_dim: int = field(default=0)
    out_dim: int = field(default=0)

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex, ndmin=2) for k in self.kraus_ops)
        if not ops:
            raise ChannelError("Kraus channel needs at least one operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise ChannelError("Kraus operators must share one shape")
        if self.in_dim and self.in_dim != shape[1] or self.out_dim and self.out_dim != shape[0]:
            raise ChannelError("declared dimensions disagree with Kraus operator shape")
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)
        object.__setattr__(self, "in_dim", shape[1])
        object.__setattr__(self, "out_dim", shape[0])

    def completeness(self) -> np.ndarray:
        return sum(k.conj().T @ k for k in self.kraus_ops)

    def __repr__(self):
        return f"KrausChannel(in_dim={self.in_dim}, out_dim={self.out_dim}, n_ops={len(self.kraus_ops)})"


@dataclass(frozen=True, eq=False)
class ChoiChannel:
    """Channel stored as ``J = sum_ij |i><j| (x) Lambda(|i><j|)`` (input factor first)."""

    choi: np.ndarray
    in_dim: int
    out_dim: int

    def __post_init__(self):
        j = np.asarray(self.choi, dtype=complex)
        n = self.in_dim * self.out_dim
        if j.shape != (n, n):
            raise ChannelError(f"Choi matrix shape {j.shape} does not match {self.in_dim}x{self.out_dim}")
        j = hermitian_part(j)
        j.setflags(write=False)
        object.__setattr__(self, "choi", j)

    def blocks(self) -> np.ndarray:
        """Array ``B[i, j] = Lambda(|i><j|)`` of shape (in, in, out, out)."""
        d, e = self.in_dim, self.out_dim
        return self.choi.reshape(d, e, d, e).transpose(0, 2, 1, 3)

    def partial_trace_output(self) -> np.ndarray:
        d, e = self.in_dim, self.out_dim
        return np.einsum("iaja->ij", self.choi.reshape(d, e, d, e))

    def __repr__(self):
        return f"ChoiChannel(in_dim={self.in_dim}, out_dim={self.out_dim})"


Channel = Union[KrausChannel, ChoiChannel]


def dephase(rho: StateLike) -> DensityMatrix:
    rho = as_density(rho)
    return DensityMatrix(np.diag(np.diag(rho.matrix)))


def _fidelity_root(a: np.ndarray) -> np.ndarray:
    # eigenvalues at round-off level would turn into ~1e-8 after the square root
    w, u = np.linalg.eigh(hermitian_part(a))
    w = np.where(w > FIDELITY_CUT * max(w[-1], 0.0), w, 0.0)
    return (u * np.sqrt(w)) @ u.conj().T


def fidelity(rho: StateLike, sigma: StateLike) -> float:
    """Squared Uhlmann fidelity, clipped to [0, 1].

    Computed as the squared trace norm of ``sqrt(rho) sqrt(sigma)``.
    """
    rho, sigma = as_density(rho), as_density(sigma)
    if rho.dim != sigma.dim:
        raise StateError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    sv = np.linalg.svd(_fidelity_root(rho.matrix) @ _fidelity_root(sigma.matrix), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(max(f, 0.0), 1.0)


def maximally_coherent(m: int) -> PureState:
    if int(m) != m or m < 1:
        raise ValueError(f"M must be a positive integer, got {m}")
    m = int(m)
    return PureState(np.full(m, 1.0 / np.sqrt(m), dtype=complex))


def support_projector(a: np.ndarray, tol: float = SUPPORT_TOL):
    """Eigen-decomposition restricted to eigenvalues above ``tol * ||a||``."""
    w, u = np.linalg.eigh(hermitian_part(a))
    keep = w > tol * max(w[-1], 0.0)
    return w[keep], u[:, keep]


def dmax(rho: StateLike, sigma: StateLike) -> float:
    """Max-relative entropy ``log2 min{l : rho <= l sigma}`` (``inf`` off support)."""
    rho, sigma = as_density(rho), as_density(sigma)
    if rho.dim != sigma.dim:
        raise StateError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    w, u = support_projector(sigma.matrix)
    r = rho.matrix
    outside = r - u @ (u.conj().T @ r)
    if np.linalg.norm(outside, 2) > 1e-8 * max(np.linalg.norm(r, 2), 1e-300):
        return float("inf")
    inv_half = 1.0 / np.sqrt(w)
    k = (inv_half[:, None] * (u.conj().T @ r @ u)) * inv_half[None, :]
    lam = np.linalg.eigvalsh(hermitian_part(k))[-1]
    return float(np.log2(lam))


def relative_entropy(rho: StateLike, sigma: StateLike) -> float:
    """Umegaki relative entropy in bits (``inf`` off support)."""
    rho, sigma = as_density(rho), as_density(sigma)
    ws, us = support_projector(sigma.matrix)
    r = rho.matrix
    if np.linalg.norm(r - us @ (us.conj().T @ r), 2) > 1e-8:
        return float("inf")
    log_sigma = (us * np.log2(ws)) @ us.conj().T
    return float(-entropy(r) - np.real(np.trace(r @ log_sigma)))


def tensor(a: StateLike, b: StateLike) -> DensityMatrix:
    a, b = as_density(a), as_density(b)
    return DensityMatrix(np.kron(a.matrix, b.matrix))


def tensor_power(rho: StateLike, n: int) -> DensityMatrix:
    rho = as_density(rho)
    out = rho.matrix
    for _ in range(n - 1):
        out = np.kron(out, rho.matrix)
    return DensityMatrix(out)


def is_trace_preserving(ch: Channel, tol: float = TP_TOL) -> bool:
    eye = np.eye(ch.in_dim)
    if isinstance(ch, KrausChannel):
        return bool(np.max(np.abs(ch.completeness() - eye)) <= tol)
    return bool(np.max(np.abs(ch.partial_trace_output() - eye)) <= tol)


def apply_map(ch: Channel, op: np.ndarray) -> np.ndarray:
    """Apply the linear map to an arbitrary (not necessarily Hermitian) operator."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (ch.in_dim, ch.in_dim):
        raise ChannelError(f"channel expects {ch.in_dim}-dim input, got shape {op.shape}")
    if isinstance(ch, KrausChannel):
        return sum(k @ op @ k.conj().T for k in ch.kraus_ops)
    d, e = ch.in_dim, ch.out_dim
    return np.einsum("ij,iajb->ab", op, ch.choi.reshape(d, e, d, e))


def apply_channel(ch: Channel, rho: StateLike) -> DensityMatrix:
    rho = as_density(rho)
    if rho.dim != ch.in_dim:
        raise ChannelError(f"channel expects {ch.in_dim}-dim input, got {rho.dim}")
    if not is_trace_preserving(ch):
        raise ChannelError("channel is not trace preserving")
    return DensityMatrix(hermitian_part(apply_map(ch, rho.matrix)))


def kraus_to_choi(ch: KrausChannel) -> ChoiChannel:
    # J = sum_n vec(K_n^T)... built directly as sum_n |K_n>><<K_n| with input index first
    d, e = ch.in_dim, ch.out_dim
    j = np.zeros((d * e, d * e), dtype=complex)
    for k in ch.kraus_ops:
        v = k.T.reshape(-1)  # v[i*e + a] = K[a, i]
        j += np.outer(v, v.conj())
    return ChoiChannel(j, d, e)


def choi_from_action(action, in_dim: int, out_dim: int) -> ChoiChannel:
    """Build the Choi matrix of a linear map from its action on ``|i><j|``."""
    j = np.zeros((in_dim, out_dim, in_dim, out_dim), dtype=complex)
    for a in range(in_dim):
        for b in range(in_dim):
            e = np.zeros((in_dim, in_dim), dtype=complex)
            e[a, b] = 1.0
            j[a, :, b, :] = action(e)
    return ChoiChannel(j.reshape(in_dim * out_dim, in_dim * out_dim), in_dim, out_dim)


def as_choi(ch: Channel) -> ChoiChannel:
    return ch if isinstance(ch, ChoiChannel) else kraus_to_choi(ch)


def identity_channel(d: int) -> KrausChannel:
    return KrausChannel([np.eye(d)])


def dephasing_channel(d: int) -> KrausChannel:
    ops = []
    for i in range(d):
        k = np.zeros((d, d))
        k[i, i] = 1.0
        ops.append(k)
    return KrausChannel(ops)


def mix_channels(channels: Sequence[Channel], weights: Sequence[float]) -> Channel:
    """Convex combination; stays in Kraus form when every component is Kraus."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be a probability vector")
    if all(isinstance(c, KrausChannel) for c in channels):
        ops = [np.sqrt(w) * k for c, w in zip(channels, weights) if w > 0 for k in c.kraus_ops]
        return KrausChannel(ops)
    chois = [as_choi(c) for c in channels]
    d, e = chois[0].in_dim, chois[0].out_dim
    return ChoiChannel(sum(w * c.choi for c, w in zip(chois, weights)), d, e)


# -- random sampling -------------------------------------------------------


def random_pure(d: int, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(v / np.linalg.norm(v))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Ginibre-ensemble state; ``rank`` defaults to full rank."""
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    a = g @ g.conj().T
    return DensityMatrix(a / np.trace(a).real)


def random_incoherent(d: int, rng: np.random.Generator) -> DensityMatrix:
    p = rng.dirichlet(np.ones(d))
    return DensityMatrix(np.diag(p).astype(complex))
