import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qlwe_lab import qsim
from qlwe_lab.qsim import PureState, Register
from qlwe_lab.zq_math import rho_w


def basis_state(q, k):
    a = np.zeros(q)
    a[k] = 1
    return PureState.from_table([Register.cyclic(q)], a)


def test_qft_of_zero_and_back():
    st0 = basis_state(4, 0)
    out = qsim.qft(st0)
    assert np.allclose(out.amplitudes, 0.5)
    assert np.allclose(qsim.qft(out, inverse=True).amplitudes, st0.amplitudes)
    flat = PureState.from_table([Register.cyclic(4)], np.ones(4))
    assert np.allclose(qsim.qft(flat, inverse=True).amplitudes, [1, 0, 0, 0])


def test_qft_needs_cyclic_register():
    s = PureState.from_table([Register.grid([0.0, 0.5])], [1, 1])
    with pytest.raises(qsim.StateError):
        qsim.qft(s)


def test_qft_of_phased_gaussian_gives_gaussian():
    # sum_j rho_sigma(j - c) w^{j b} |j>  ->  ~ rho_{q/sigma}(e) e^{2 pi i c e / q} at label b + e
    q, sigma, c, b = 64, 6.0, 1.5, 9
    j = np.arange(q)
    jc = np.where(j > q / 2, j - q, j)
    amps = rho_w(sigma, jc, c) * np.exp(2j * np.pi * j * b / q)
    out = qsim.qft(PureState.from_table([Register.cyclic(q)], amps))
    # the kernel w^{+jy} sends mass to y = -b - e
    e = np.arange(-q // 2 + 1, q // 2 + 1)
    ref = np.zeros(q, dtype=complex)
    ref[(-b - e) % q] = rho_w(q / sigma, e) * np.exp(-2j * np.pi * c * e / q)
    ref /= np.linalg.norm(ref)
    assert qsim.trace_distance_vectors(out.amplitudes, ref) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 24), st.integers(0, 2 ** 32 - 1))
def test_qft_unitary(q, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=q) + 1j * rng.normal(size=q)
    s = PureState.from_table([Register.cyclic(q)], a)
    out = qsim.qft(s)
    assert out.norm == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(qsim.qft(out, inverse=True).amplitudes, s.amplitudes, atol=1e-12)


def test_overlap_and_trace_distance():
    a, b = basis_state(3, 0), basis_state(3, 1)
    assert qsim.overlap(a, b) == 0
    assert qsim.trace_distance_pure(a, a) == 0
    assert qsim.trace_distance_pure(a, b) == 1
    with pytest.raises(qsim.StateError):
        qsim.overlap(a, basis_state(4, 0))
    with pytest.raises(qsim.StateError):
        qsim.trace_distance_vectors(np.zeros(3), np.ones(3))


def test_trace_distance_gaussians_closed_form():
    q, R = 97, 16
    x = np.arange(q * R) / R
    x = np.where(x > q / 2, x - q, x)
    u = rho_w(8, x)
    v = rho_w(10, x)
    closed = math.sqrt((8 - 10) ** 2 / (8 ** 2 + 10 ** 2))
    assert qsim.trace_distance_vectors(u, v) == pytest.approx(closed, rel=1e-6)
    assert qsim.trace_distance_vectors(u, v) == pytest.approx(0.156173761888606, abs=1e-12)


def test_state_dimension_cap():
    with pytest.raises(qsim.StateError, match="cap"):
        qsim.RegisterShape((Register.cyclic(1 << 13), Register.cyclic(1 << 12)))


def test_rejection_sampling():
    rng = np.random.default_rng(0)
    s = PureState.from_table([Register.cyclic(5)], np.arange(1, 6))
    out, M = qsim.rejection_sample(s, np.ones(5), rng)
    assert M == pytest.approx(1.0)
    assert np.allclose(out.amplitudes, s.amplitudes)
    flat = PureState.from_table([Register.cyclic(8)], np.ones(8))
    gamma = np.zeros(8)
    gamma[[2, 5]] = 1
    _, M = qsim.rejection_sample(flat, gamma, rng)
    assert M == pytest.approx(2 / 8)
    with pytest.raises(qsim.StateError):
        qsim.rejection_sample(flat, np.full(8, 1.5), rng)


def test_measure_basis_state_and_uniform():
    rng = np.random.default_rng(1)
    lab, post = qsim.measure(basis_state(6, 4), 0, rng)
    assert lab == 4 and post.amplitudes[4] == 1
    flat = PureState.from_table([Register.cyclic(7)], np.ones(7))
    p = qsim.marginal(flat)
    draws = rng.choice(7, size=10 ** 5, p=p)
    obs = np.bincount(draws, minlength=7)
    assert stats.chisquare(obs).pvalue > 0.01
    got = [qsim.measure(flat, 0, rng)[0] for _ in range(700)]
    assert set(got) == set(range(7))


def test_measure_in_basis():
    rng = np.random.default_rng(2)
    s = PureState.from_table([Register.cyclic(3)], [0.3, 0.4j, 0.5])
    k, post = qsim.measure_in_basis(s, 0, np.eye(3), rng)
    assert abs(post.amplitudes[k]) == pytest.approx(1.0)
    H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    plus = PureState.from_table([Register.cyclic(2)], H[1])
    assert all(qsim.measure_in_basis(plus, 0, H, rng)[0] == 1 for _ in range(20))
    with pytest.raises(qsim.StateError):
        qsim.measure_in_basis(plus, 0, np.ones((2, 2)), rng)


def test_relabel_phase():
    s = PureState.from_table([Register.cyclic(4)], [0.1, 0.2, 0.3, 0.4])
    same = qsim.apply_relabel_phase(s, 0, {})
    assert np.allclose(same.amplitudes, s.amplitudes)
    swap = {1: (2, 1.0), 2: (1, 1.0)}
    back = qsim.apply_relabel_phase(qsim.apply_relabel_phase(s, 0, swap), 0, swap)
    assert np.allclose(back.amplitudes, s.amplitudes)
    with pytest.raises(qsim.StateError):
        qsim.apply_relabel_phase(s, 0, {0: (1, 1.0)})


def test_relabel_two_point_state_to_phase_qubit():
    q, a, s_ = 8, 3, 5
    j1, j2 = 1, 4
    g = {j1: 0.6 * np.exp(0.7j), j2: 0.8 * np.exp(-1.1j)}
    amps = np.zeros(q, dtype=complex)
    for j in (j1, j2):
        amps[j] = g[j] * np.exp(2j * np.pi * j * a * s_ / q)
    st_ = PureState.from_table([Register.cyclic(q)], amps)
    # equalise the weights first, as rejection sampling would
    st_ = st_.with_amplitudes(amps / np.abs(np.where(amps == 0, 1, amps)), normalize=True)
    u = {j: (i, np.conj(g[j]) / abs(g[j])) for i, j in enumerate((j1, j2))}
    out = qsim.apply_relabel_phase(st_, 0, u).amplitudes[:2]
    ref = np.array([1, np.exp(2j * np.pi * (j2 - j1) * a * s_ / q)])
    assert qsim.trace_distance_vectors(out, ref) < 1e-12


def test_ensemble_probabilities_checked():
    s = basis_state(2, 0)
    qsim.Ensemble([(0.25, s), (0.75, s)])
    with pytest.raises(qsim.StateError):
        qsim.Ensemble([(0.5, s), (0.6, s)])


def test_split_register():
    x = np.arange(-7, 8)
    s = PureState.from_table([Register.grid(x)], np.ones(len(x)))
    ks, mat = qsim.split_register(s, 0, 5)
    assert list(ks) == [-2, -1, 0, 1]
    assert np.count_nonzero(mat) == len(x)
