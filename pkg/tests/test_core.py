import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coherence_dilution.core import (
    ChannelError,
    ChoiChannel,
    DensityMatrix,
    IncoherentState,
    KrausChannel,
    PureState,
    StateError,
    apply_channel,
    apply_map,
    choi_from_action,
    dephase,
    dephasing_channel,
    dmax,
    fidelity,
    identity_channel,
    kraus_to_choi,
    maximally_coherent,
    random_density,
    random_pure,
    relative_entropy,
    tensor,
)
from coherence_dilution.verify import sample_channel

import oracles

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=2, max_value=4)


def _haar_unitary(d, rng):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


class TestStates:
    def test_rejects_bad_matrices(self):
        with pytest.raises(StateError):
            DensityMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(StateError):
            DensityMatrix(np.array([[0.5, 1.0], [0.0, 0.5]]))
        with pytest.raises(StateError):
            DensityMatrix(np.array([[1.5, 0.0], [0.0, -0.5]]))
        with pytest.raises(StateError):
            PureState([1.0, 1.0])
        with pytest.raises(StateError):
            IncoherentState([0.7, 0.7])

    def test_tiny_negative_eigenvalue_accepted(self):
        rho = DensityMatrix(np.diag([1.0 + 1e-11, -1e-11]))
        assert rho.dim == 2

    def test_pure_amplitudes(self):
        psi = random_pure(3, np.random.default_rng(1))
        amps = psi.density().pure_amplitudes()
        assert abs(abs(np.vdot(amps, psi.amplitudes)) - 1) < 1e-10
        assert DensityMatrix(np.eye(2) / 2).pure_amplitudes() is None


class TestDephase:
    def test_fixed_point(self):
        rho = DensityMatrix(np.diag([0.3, 0.7]))
        assert np.allclose(dephase(rho).matrix, np.diag([0.3, 0.7]))

    def test_psi2(self):
        assert np.allclose(dephase(maximally_coherent(2)).matrix, np.eye(2) / 2)

    def test_entrywise(self, rng):
        rho = random_density(3, rng)
        out = dephase(rho).matrix
        assert np.allclose(np.diag(out), np.diag(rho.matrix))
        assert np.allclose(out - np.diag(np.diag(out)), 0)

    @given(seeds, dims)
    def test_idempotent_and_trace_preserving(self, seed, d):
        rho = random_density(d, np.random.default_rng(seed))
        once = dephase(rho)
        assert np.allclose(dephase(once).matrix, once.matrix)
        assert abs(np.trace(once.matrix) - 1) < 1e-12


class TestFidelity:
    def test_examples(self, rng):
        rho = random_density(3, rng)
        assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)
        assert fidelity(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(0.0, abs=1e-12)
        assert fidelity(maximally_coherent(2), np.eye(2) / 2) == pytest.approx(0.5, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(StateError):
            fidelity(np.eye(2) / 2, np.eye(3) / 3)

    @given(seeds, dims)
    def test_pure_pure_overlap(self, seed, d):
        rng = np.random.default_rng(seed)
        a, b = random_pure(d, rng), random_pure(d, rng)
        assert fidelity(a, b) == pytest.approx(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2, abs=1e-9)

    @given(seeds, dims)
    def test_symmetric_unitarily_invariant_and_oracle(self, seed, d):
        rng = np.random.default_rng(seed)
        r, s = random_density(d, rng), random_density(d, rng, rank=1)
        f = fidelity(r, s)
        assert f == pytest.approx(fidelity(s, r), abs=1e-8)
        u = _haar_unitary(d, rng)
        ur = DensityMatrix(u @ r.matrix @ u.conj().T)
        us = DensityMatrix(u @ s.matrix @ u.conj().T)
        assert fidelity(ur, us) == pytest.approx(f, abs=1e-8)
        assert f == pytest.approx(oracles.fidelity(r.matrix, s.matrix), abs=1e-9)


class TestMaximallyCoherent:
    def test_examples(self):
        assert np.allclose(maximally_coherent(1).amplitudes, [1.0])
        assert np.allclose(maximally_coherent(2).amplitudes, [2 ** -0.5] * 2)
        assert np.allclose(maximally_coherent(4).amplitudes, [0.5] * 4)

    @pytest.mark.parametrize("m", [0, -1, 2.5])
    def test_invalid(self, m):
        with pytest.raises(ValueError):
            maximally_coherent(m)


class TestDmax:
    def test_examples(self, rng):
        rho = random_density(3, rng)
        assert dmax(rho, rho) == pytest.approx(0.0, abs=1e-9)
        for m in (2, 3, 5):
            assert dmax(maximally_coherent(m), np.eye(m) / m) == pytest.approx(np.log2(m), abs=1e-12)
        assert dmax(np.diag([1.0, 0]), np.diag([0, 1.0])) == np.inf

    def test_partial_support(self):
        # rho inside the support of a rank-deficient sigma
        sigma = np.diag([0.5, 0.5, 0.0])
        rho = np.diag([0.9, 0.1, 0.0])
        assert dmax(rho, sigma) == pytest.approx(np.log2(1.8), abs=1e-12)

    @given(seeds, dims)
    def test_dominates_relative_entropy(self, seed, d):
        rng = np.random.default_rng(seed)
        r, s = random_density(d, rng), random_density(d, rng)
        assert dmax(r, s) >= relative_entropy(r, s) - 1e-9


class TestTensor:
    def test_trivial_factor(self, rng):
        rho = random_density(3, rng)
        assert np.allclose(tensor(rho, np.array([[1.0]])).matrix, rho.matrix)

    def test_diagonal(self):
        p, q = np.array([0.2, 0.8]), np.array([0.1, 0.3, 0.6])
        assert np.allclose(tensor(np.diag(p), np.diag(q)).matrix, np.diag(np.kron(p, q)))

    def test_psi2_squared_is_psi4(self):
        # the product basis order is already the relabelled standard basis
        assert np.allclose(tensor(maximally_coherent(2), maximally_coherent(2)).matrix,
                           maximally_coherent(4).density().matrix)


class TestChannels:
    def test_identity_and_dephasing(self, rng):
        rho = random_density(3, rng)
        assert np.allclose(apply_channel(identity_channel(3), rho).matrix, rho.matrix)
        assert np.allclose(apply_channel(dephasing_channel(3), rho).matrix, dephase(rho).matrix)

    def test_sio_on_psi2(self):
        out = apply_channel(sample_channel("sio", 2, 7), maximally_coherent(2))
        assert abs(np.trace(out.matrix) - 1) < 1e-10
        assert np.linalg.eigvalsh(out.matrix)[0] > -1e-10

    def test_errors(self):
        with pytest.raises(ChannelError):
            apply_channel(identity_channel(2), np.eye(3) / 3)
        with pytest.raises(ChannelError):
            apply_channel(KrausChannel([0.9 * np.eye(2)]), np.eye(2) / 2)
        with pytest.raises(ChannelError):
            KrausChannel([np.eye(2), np.eye(3)])
        with pytest.raises(ChannelError):
            ChoiChannel(np.eye(3), 2, 2)

    def test_identity_choi_rank_one(self):
        j = kraus_to_choi(identity_channel(3)).choi
        w = np.linalg.eigvalsh(j)
        assert np.sum(w > 1e-10) == 1
        assert w[-1] == pytest.approx(3.0)

    def test_dephasing_choi_diagonal(self):
        j = kraus_to_choi(dephasing_channel(3)).choi
        assert np.allclose(j - np.diag(np.diag(j)), 0)

    def test_io_choi_reproduces_basis_action(self):
        ch = sample_channel("io", 3, 11)
        choi = kraus_to_choi(ch)
        for i in range(3):
            for j in range(3):
                e = np.zeros((3, 3))
                e[i, j] = 1
                direct = sum(k @ e @ k.conj().T for k in ch.kraus_ops)
                assert np.allclose(apply_map(choi, e), direct, atol=1e-12)

    def test_choi_from_action_matches_kraus(self, rng):
        ch = sample_channel("sio", 3, 3)
        built = choi_from_action(lambda op: apply_map(ch, op), 3, 3)
        assert np.allclose(built.choi, kraus_to_choi(ch).choi, atol=1e-12)

    @settings(max_examples=30)
    @given(seeds, st.sampled_from(["sio", "io", "dio", "mio"]), dims)
    def test_representations_agree(self, seed, cls, d):
        ch = sample_channel(cls, d, seed)
        rho = random_density(d, np.random.default_rng(seed + 1))
        via_choi = apply_channel(kraus_to_choi(ch) if isinstance(ch, KrausChannel) else ch, rho)
        assert np.allclose(apply_channel(ch, rho).matrix, via_choi.matrix, atol=1e-9)
        assert abs(np.trace(via_choi.matrix) - 1) < 1e-9
