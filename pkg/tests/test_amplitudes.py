import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlwe_lab import amplitudes as am
from qlwe_lab.qsim import trace_distance_vectors
from qlwe_lab.zq_math import ParameterError, rho_w


def test_spec_values():
    assert am.RealGaussian(3.0)(0) == 1
    f = am.ComplexGaussian(5.0, 7.0)
    assert f(3) == pytest.approx(f(-3))
    g = am.LinearPhaseGaussian(4.0, 1.3, 8)
    assert g(2) == pytest.approx(rho_w(4.0, 2) * np.exp(2j * np.pi * 1.3 * 2 / 8))
    assert np.array_equal(am.BoundedUniform(2)(np.arange(-3, 4)), [0, 1, 1, 1, 1, 1, 0])


def test_spec_validation():
    with pytest.raises(ParameterError):
        am.RealGaussian(-1.0)
    with pytest.raises(ParameterError):
        am.Tabulated((0, 1), (1.0,))
    with pytest.raises(ParameterError):
        am.Tabulated((0,), (float("nan"),))
    with pytest.raises(ParameterError):
        am.spec_from_json('{"variant": "nope"}')


@pytest.mark.parametrize("spec", [
    am.RealGaussian(2.5), am.LinearPhaseGaussian(3.0, 0.25, 9), am.ComplexGaussian(4.0, 5.0),
    am.BoundedUniform(3), am.half_phase_gaussian(2.0), am.delta(),
])
def test_json_roundtrip(spec):
    back = am.spec_from_json(spec.to_json())
    lab = spec.support()
    assert np.allclose(back(lab), spec(lab))


def test_gen_slwe_delta_is_classical():
    rng = np.random.default_rng(0)
    s = am.SecretKey([3, 5], 8)
    smp = am.gen_slwe(2, 8, am.delta(), s, rng)
    expect = int(np.dot(smp.a, [3, 5])) % 8
    assert abs(smp.state.amplitudes[expect]) == pytest.approx(1.0)


def test_gen_slwe_zero_secret_centered_at_zero():
    rng = np.random.default_rng(1)
    s = am.SecretKey([0, 0], 8)
    for _ in range(5):
        smp = am.gen_slwe(2, 8, am.RealGaussian(2.0), s, rng)
        assert np.argmax(np.abs(smp.state.amplitudes)) == 0


def test_gen_slwe_gaussian_pointwise():
    rng = np.random.default_rng(2)
    q = 8
    s = am.SecretKey([1, 6], q)
    smp = am.gen_slwe(2, q, am.RealGaussian(4.0), s, rng)
    b = int(np.dot(smp.a, [1, 6])) % q
    ref = np.zeros(q)
    for e in range(-40, 41):
        ref[(b + e) % q] += math.exp(-math.pi * e * e / 16)
    ref /= np.linalg.norm(ref)
    assert np.allclose(smp.state.amplitudes, ref, atol=1e-12)


def test_phase_zero_matches_plain_and_conjugate_undoes():
    # q wide enough that no two errors fold onto one label
    q, n = 97, 2
    s = am.SecretKey([2, 7], q)
    spec = am.RealGaussian(3.0)
    a = np.array([4, 1])
    plain = am.gen_slwe(n, q, spec, s, np.random.default_rng(0), a=a)
    ph0 = am.gen_slwe_phase(n, q, spec, s, am.HiddenPhase(np.zeros(1), 0.0), np.random.default_rng(0), a=a)
    assert np.allclose(plain.state.amplitudes, ph0.state.amplitudes)
    theta = 0.37
    ph = am.gen_slwe_phase(n, q, spec, s, am.HiddenPhase(np.zeros(1), theta), np.random.default_rng(0), a=a)
    b = int(np.dot(a, s.s)) % q
    lab = np.arange(q)
    e = np.mod(lab - b + q // 2, q) - q // 2
    undone = ph.state.amplitudes * np.exp(-2j * np.pi * e * theta)
    assert trace_distance_vectors(undone, plain.state.amplitudes) < 1e-12
    with pytest.raises(ParameterError):
        am.gen_slwe_phase(n, q, spec, s, am.HiddenPhase(np.zeros(1), float("inf")), np.random.default_rng(0))


def test_phase_sample_hides_record():
    q = 9
    s = am.SecretKey([1], q)
    smp = am.gen_slwe_phase(1, q, am.RealGaussian(3.0), s, am.HiddenPhase(np.ones(2), 0.1),
                            np.random.default_rng(3))
    view = smp.public_view()
    assert isinstance(view, am.SlweSample)
    assert not hasattr(view, "hidden")


def test_linear_phase_equals_phase_record():
    q, sigma, c = 9, 3.0, 1.7
    s = am.SecretKey([4], q)
    a = np.array([2])
    lp = am.gen_slwe(1, q, am.LinearPhaseGaussian(sigma, c, q), s, np.random.default_rng(0), a=a)
    hp = am.gen_slwe_phase(1, q, am.RealGaussian(sigma), s, am.HiddenPhase(np.zeros(1), c / q),
                           np.random.default_rng(0), a=a)
    assert trace_distance_vectors(lp.state.amplitudes, hp.state.amplitudes) < 1e-12


def test_dcp_qubit_examples():
    rng = np.random.default_rng(4)
    a, qb = am.gen_dcp_qubit(3, 7, am.SecretKey([0, 0, 0], 7), rng)
    assert np.allclose(qb.amplitudes, [1 / math.sqrt(2)] * 2)
    _, qb = am.gen_dcp_qubit(2, 7, am.SecretKey([3, 1], 7), rng, a=[0, 0])
    assert np.allclose(qb.amplitudes, [1 / math.sqrt(2)] * 2)
    _, qb = am.gen_dcp_qubit(1, 4, am.SecretKey([1], 4), rng, a=[1])
    assert np.allclose(qb.amplitudes, np.array([1, 1j]) / math.sqrt(2))


def test_complex_gaussian_state():
    real = am.complex_gaussian_state(3.0, math.inf)
    assert np.allclose(real.amplitudes.imag, 0)
    with pytest.raises(ParameterError):
        am.complex_gaussian_state(10.0, 5.0, halfwidth=5)


def test_complex_gaussian_overlap_same_residue():
    r, t = 40.0, 5
    H = math.ceil(4 * r)
    z = np.arange(-H, H + 1 + 2 * t)
    def amp(c):
        x = (z - c).astype(float)
        return rho_w(r, x) * np.exp(-1j * np.pi * x * x / t)
    u, v = amp(0), amp(2 * t)
    ov = abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    assert ov == pytest.approx(rho_w(r / math.sqrt(2), t), rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.floats(0.5, 6.0), st.integers(0, 2 ** 32 - 1))
def test_gen_slwe_normalised_and_shifted(q, sigma, seed):
    rng = np.random.default_rng(seed)
    s = am.SecretKey.random(2, q, rng)
    smp = am.gen_slwe(2, q, am.RealGaussian(sigma), s, rng)
    assert smp.state.norm == pytest.approx(1.0)
    zero = am.gen_slwe(2, q, am.RealGaussian(sigma), am.SecretKey([0, 0], q), rng, a=smp.a)
    b = int(np.dot(smp.a, s.s)) % q
    assert np.allclose(np.roll(zero.state.amplitudes, b), smp.state.amplitudes)
