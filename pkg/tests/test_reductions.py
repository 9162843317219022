import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlwe_lab import reductions as rd
from qlwe_lab.amplitudes import SecretKey
from qlwe_lab.qsim import trace_distance_vectors
from qlwe_lab.zq_math import ParameterError, centered, rho_w


def params_q9(**kw):
    return rd.EdcpParams(1, 4, 9, 2.5, 4.0 / 9, 0.01, **kw)


def spread_matrix(rng, q, m, lam):
    while True:
        A = rng.integers(0, q, (1, m))
        if rd.lambda1(A, q) >= lam:
            return A


def test_params_checks():
    with pytest.raises(ParameterError, match="log2"):
        rd.EdcpParams(1, 2, 9, 4.0, 0.5, 0.01)
    with pytest.raises(ParameterError, match="floor"):
        rd.EdcpParams(1, 4, 9, 1.0, 0.5, 0.01)
    with pytest.raises(ParameterError, match="strict"):
        rd.EdcpParams(1, 4, 9, 4.0, 0.5, 0.01, strict=True)


def test_sigma_c_examples():
    p = rd.EdcpParams(2, 8, 9, 4.0, 8.0 / 9, 0.01)
    sig, c = rd.edcp_sigma_c(p, [1, 0], [2, 0])
    assert sig == pytest.approx(32 / math.sqrt(80), rel=1e-14)
    assert c == pytest.approx(-0.4, rel=1e-14)
    assert rd.edcp_sigma_c(p, [1, 0], [0, 5])[1] == 0
    assert rd.edcp_sigma_c(p, [0, 0], [3, 1]) == (pytest.approx(4.0), 0)


def test_center_distribution_examples():
    p = rd.EdcpParams(2, 8, 9, 4.0, 8.0 / 9, 0.01)
    step, sc = rd.center_distribution_params(p, [1, 0])
    assert step == pytest.approx(16 / 80)
    assert sc == pytest.approx(16 / math.sqrt(160), rel=1e-14)
    assert rd.center_distribution_params(p, [0, 0])[1] == 0


@settings(max_examples=60, deadline=None)
@given(st.floats(2.0, 20.0), st.floats(0.5, 30.0), st.lists(st.integers(-3, 3), min_size=4, max_size=4))
def test_sigma_c_relation(alpha, bq, e):
    q = 97
    p = rd.EdcpParams(1, 7, q, alpha, bq / q, 0.001)
    e = np.array(e)
    sig = rd.edcp_sigma_c(p, e, np.zeros(4))[0]
    sc = rd.center_distribution_params(p, e)[1]
    assert sc == pytest.approx(alpha * np.linalg.norm(e) / (math.sqrt(2) * bq) * sig, rel=1e-12, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(2.0, 10.0), st.floats(1.0, 20.0), st.lists(st.integers(-3, 3), min_size=3, max_size=3),
       st.lists(st.integers(-15, 15), min_size=3, max_size=3))
def test_amplitude_identity(alpha, bq, e, x):
    # rho_alpha(j) rho_bq(x + j e) = C rho_sigma(j - c) for every j
    p = rd.EdcpParams(1, 7, 97, alpha, bq / 97, 0.001)
    e, x = np.array(e, float), np.array(x, float)
    sig, c = rd.edcp_sigma_c(p, e, x)
    j = np.arange(-6, 7, dtype=float)
    lhs = -np.pi * (j / alpha) ** 2 - np.pi * np.sum((x + j[:, None] * e) ** 2, axis=1) / bq ** 2
    rhs = -np.pi * ((j - c) / sig) ** 2
    gap = lhs - rhs
    assert np.allclose(gap, gap[0], rtol=0, atol=1e-9 * max(1.0, abs(gap[0])))


def test_lambda1_matches_enumeration():
    rng = np.random.default_rng(0)
    A = rng.integers(0, 9, (1, 4))
    best = min(np.linalg.norm(centered(v * A[0], 9)) for v in range(1, 9))
    assert rd.lambda1(A, 9) == pytest.approx(min(best, 9))


def test_fit_recovers_gaussian():
    j = np.arange(-4, 5)
    sig, c = rd.fit_gaussian_amplitudes(j, rho_w(2.3, j, 0.7))
    assert sig == pytest.approx(2.3, rel=1e-10)
    assert c == pytest.approx(0.7, abs=1e-10)
    with pytest.raises(ParameterError):
        rd.fit_gaussian_amplitudes(j, np.exp(j ** 2 / 10.0))


def test_edcp_sample_fit_matches_formula():
    prm = params_q9()
    for i in range(10):
        rng = np.random.default_rng([3, i])
        A = spread_matrix(rng, 9, 4, 5.0)
        s = rng.integers(0, 9, 1)
        e = rng.integers(-1, 2, 4)
        smp = rd.lwe_to_edcp(A, np.mod(A.T @ s + e, 9), prm, rng, secret=(s, e))
        sf, cf, res = rd.edcp_amplitude_fit(smp, 9)
        assert abs(sf - smp.hidden.sigma) <= 1e-6
        assert abs(cf - smp.hidden.c) <= 1e-6
        assert smp.identity_error <= 1e-9


def test_edcp_state_support_is_coset():
    # amplitude on (j, w) is nonzero only where w = v + j s
    prm = params_q9()
    rng = np.random.default_rng(4)
    A = spread_matrix(rng, 9, 4, 5.0)
    s = np.array([5])
    e = np.array([1, 0, -1, 0])
    smp = rd.lwe_to_edcp(A, np.mod(A.T @ s + e, 9), prm, rng, secret=(s, e))
    t = smp.state.tensor
    v = int(smp.hidden.v[0])
    for j, w in itertools.product(range(9), range(9)):
        if abs(t[j, w]) > 0:
            assert w == (v + j * 5) % 9
    assert np.array_equal(np.mod(smp.y, 9), np.mod(A.T @ smp.hidden.v + smp.hidden.x, 9))


def test_zero_error_gives_zero_center():
    prm = params_q9()
    rng = np.random.default_rng(5)
    A = spread_matrix(rng, 9, 4, 5.0)
    s = np.array([2])
    smp = rd.lwe_to_edcp(A, np.mod(A.T @ s, 9), prm, rng, secret=(s, np.zeros(4, dtype=int)))
    assert smp.hidden.c == 0
    assert smp.hidden.sigma == pytest.approx(2.5)


def test_dense_matches_structured_profile():
    # the dense route tabulates the measured register exhaustively
    prm = rd.EdcpParams(1, 4, 5, 2.0, 0.6, 0.01)
    rng = np.random.default_rng(6)
    A = np.array([[1, 2, 2, 1]])
    s = np.array([3])
    e = np.array([1, 0, 0, 0])
    dense = rd.lwe_to_edcp(A, np.mod(A.T @ s + e, 5), prm, rng, method="dense")
    assert "dense" in dense.flags
    t = dense.state.tensor
    prof = np.abs(t).max(axis=1)
    assert np.count_nonzero(np.abs(t).sum(axis=0) > 1e-12) == 5
    assert prof.max() > 0


def test_unknown_method():
    prm = params_q9()
    A = np.ones((1, 4), dtype=int)
    with pytest.raises(ParameterError):
        rd.lwe_to_edcp(A, np.zeros(4), prm, np.random.default_rng(0), method="other")


def test_v_uniform():
    from scipy import stats
    prm = params_q9()
    rng = np.random.default_rng(7)
    A = spread_matrix(rng, 9, 4, 5.0)
    s, e = np.array([4]), np.array([0, 1, 0, 0])
    b = np.mod(A.T @ s + e, 9)
    vs = [int(rd.lwe_to_edcp(A, b, prm, rng, secret=(s, e)).hidden.v[0]) for _ in range(2000)]
    assert stats.chisquare(np.bincount(vs, minlength=9)).pvalue > 0.01


def test_phase_output_matches_reference():
    prm = params_q9()
    rng = np.random.default_rng(8)
    A = spread_matrix(rng, 9, 4, 5.0)
    s, e = np.array([7]), np.array([1, -1, 0, 1])
    b = np.mod(A.T @ s + e, 9)
    for _ in range(20):
        smp = rd.lwe_to_edcp(A, b, prm, rng, secret=(s, e))
        out = rd.edcp_to_slwe_phase(smp, rng, 1, 9)
        ref = rd.phased_reference_state(9, smp.hidden.sigma, smp.hidden.c, int(out.a @ s) % 9)
        assert trace_distance_vectors(out.state.amplitudes, ref.amplitudes) <= 1e-3
        assert out.hidden.theta == pytest.approx(smp.hidden.c / 9)


def test_phase_output_conjugate_gives_plain():
    q, sigma, c, b0 = 9, 3.0, 0.8, 4
    ph = rd.phased_reference_state(q, sigma, c, b0)
    plain = rd.phased_reference_state(q, sigma, 0.0, b0)
    # undo the phase on every integer error before folding
    w = q / sigma
    H = math.ceil(8 * w) + q
    err = np.arange(-H, H + 1)
    amps = np.zeros(q, dtype=complex)
    np.add.at(amps, np.mod(b0 + err, q), rho_w(w, err))
    assert trace_distance_vectors(amps, plain.amplitudes) < 1e-10
    assert trace_distance_vectors(ph.amplitudes, plain.amplitudes) > 1e-3


def test_phase_output_zero_center_is_plain_gaussian():
    q = 9
    plain = rd.phased_reference_state(q, 3.0, 0.0, 2)
    assert np.allclose(plain.amplitudes.imag, 0)


def test_width_grid():
    assert rd.width_grid(1.0, 10, 2) == pytest.approx([10, 11.03553, 12.07107, 13.10660, 14.14214], abs=1e-5)
    g1 = rd.width_grid(0.5, 4, 1)
    assert g1 == pytest.approx([2, 2 * (1 + (math.sqrt(2) - 1) / 2), 2 * math.sqrt(2)])
    with pytest.raises(ParameterError):
        rd.width_grid(1.0, 10, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 5.0), st.integers(2, 200), st.integers(1, 8), st.floats(0.0001, 1.0))
def test_width_grid_covers_interval(alpha, q, m, frac):
    g = rd.width_grid(alpha, q, m)
    target = alpha * q * (1 + (math.sqrt(2) - 1) * frac)
    assert g[0] == pytest.approx(alpha * q) and g[-1] == pytest.approx(math.sqrt(2) * alpha * q)
    assert any(g[j] < target <= g[j + 1] * (1 + 1e-12) for j in range(len(g) - 1))


def test_verify_secret_rejects_random():
    rng = np.random.default_rng(9)
    q, n, m = 97, 2, 16
    bound = m * (2.0) ** 2
    rejected = 0
    for _ in range(50):
        A2 = rng.integers(0, q, (n, m))
        s = rng.integers(0, q, n)
        b2 = np.mod(A2.T @ s + rng.integers(-1, 2, m), q)
        assert rd.verify_secret(A2, b2, s, q, bound)
        wrong = rng.integers(0, q, n)
        rejected += not rd.verify_secret(A2, b2, wrong, q, bound) or np.array_equal(wrong, s)
    assert rejected >= 49


def test_guess_e_zero_error_fast_path():
    rng = np.random.default_rng(10)
    prm = params_q9()
    A = rng.integers(0, 9, (1, 4))
    while rd.solve_mod(A.T, np.zeros(4, dtype=int), 9) is None:
        A = rng.integers(0, 9, (1, 4))
    s = np.array([6])
    def never(*args):
        raise AssertionError("solver must not be called")
    got, E = rd.guess_E_driver(A, np.mod(A.T @ s, 9), prm, never, rng)
    assert got.matches(SecretKey(s, 9)) and E == 0


def test_guess_e_with_cheating_oracle():
    q, m = 97, 7
    # gamma chosen so the enumeration runs E = 1, 2, 3
    prm = rd.EdcpParams(1, m, q, 4.0, 4.0 / q, math.sqrt(3 / m) / q)
    rng = np.random.default_rng(11)
    A = spread_matrix(rng, q, m, 18.0)
    s = np.array([30])
    e = np.array([1, 0, -1, 0, 0, 0, 0])
    b = np.mod(A.T @ s + e, q)
    # fresh instance with the same secret and an error inside the m gamma^2 q^2 ball
    A2 = rng.integers(0, q, (1, m))
    b2 = np.mod(A2.T @ s + np.array([0, 1, 0, 0, -1, 0, 0]), q)
    calls = []

    def oracle(samples, f, q_, n_, rng_):
        # reads the hidden width; answers correctly only when the guessed width matches
        true_w = q_ / samples[0].hidden.meta["sigma"]
        calls.append(f.sigma)
        if abs(f.sigma - true_w) < 1e-9:
            return SecretKey(s, q_)
        return SecretKey(np.mod(s + 1 + rng_.integers(0, q_ - 1, 1), q_), q_)

    got, E = rd.guess_E_driver(A, b, prm, oracle, rng, ell=2, verify=(A2, b2), secret=(s, e))
    assert got.matches(SecretKey(s, q))
    assert E == int(e @ e)
    assert len(calls) == E


def test_regev_sample_on_lattice_point():
    rec = rd.regev_generate_sample(np.array([[1.0]]), [2.0], 5, 0.16, 0.8, 48.0, 128,
                                   np.random.default_rng(0))
    assert rec.params["t"] == pytest.approx(0.8)
    assert rd.regev_distance(rec) < 0.01


def test_regev_distance_decreases_in_R():
    sig = rd.width_grid(0.16, 5, 2)[1]
    d = []
    for R in (64, 128, 256, 512):
        rec = rd.regev_generate_sample(np.array([[1.0]]), [3 + 1 / 64], 5, 0.16, sig, 48.0, R,
                                       np.random.default_rng(1))
        d.append(rd.regev_distance(rec))
    assert all(a > b for a, b in zip(d, d[1:]))
    assert d[2] <= 0.01
    assert np.allclose(rec.params["p_a"], 1 / 5, atol=1e-9)


def test_regev_coherent_wrap_matches_closed_form():
    sig = rd.width_grid(0.16, 5, 2)[0]
    rec = rd.regev_generate_sample(np.array([[1.0]]), [3 + 1 / 64], 5, 0.16, sig, 48.0, 64,
                                   np.random.default_rng(2), coherent_wrap=True)
    assert rd.regev_distance(rec) < 1e-10


def test_phase_aligned_distance():
    u = np.array([1.0, 2.0, 3.0])
    assert rd.phase_aligned_distance(u, u * np.exp(1.3j)) < 1e-14
    assert rd.phase_aligned_distance(u, np.array([3.0, 2.0, 1.0])) > 0.1


@pytest.mark.parametrize("b1,b2,expected", [(8, 10, 0.156173761888606), (10, 10, 0.0), (5, 20, 0.72760687510899)])
def test_gaussian_state_distance(b1, b2, expected):
    num, closed = rd.gaussian_state_distance(b1, b2, 97, 16)
    assert closed == pytest.approx(math.sqrt((b1 - b2) ** 2 / (b1 ** 2 + b2 ** 2)), abs=1e-15)
    assert abs(num - closed) <= 1e-6
    assert num == pytest.approx(expected, abs=1e-9)
    if b1 == b2:
        assert num == 0.0


@pytest.mark.parametrize("lattice", ["Z", "2Z", "Z2"])
def test_tail_bounds(lattice):
    rep = rd.verify_tail_bounds(lattice, (6.0, 8.0, 12.0))
    assert rep["pass"]
    assert len(rep["rows"]) == 75
    assert all(r["additive_margin"] > 0 for r in rep["rows"])


def test_tail_margin_shrinks_towards_deep_hole():
    rep = rd.verify_tail_bounds("Z", (8.0,))
    m = [r["additive_margin"] for r in rep["rows"]]
    assert m[0] > m[-1]


def test_csv_headers():
    assert rd.edcp_csv([(0, 1, 1, 0, 0, 0)]).startswith("trial,sigma_formula,sigma_fit,c_formula,c_fit,l2_resid\n")
    assert rd.regev_csv([(64, 0.1)]).startswith("R,l2_distance\n")


def test_obstruction_known_vs_unknown_phase():
    from qlwe_lab.amplitudes import SecretKey as SK
    rng = np.random.default_rng(12)
    n, q, width = 2, 8, 4.0
    s = SK.random(n, q, rng)
    thetas = rd.hidden_center_phases(4096, q, 0.5, 2.0, rng)
    smp = rd.phased_samples(n, q, width, s, thetas, rng)
    unknown = rd.bit_extraction_success(smp, width, q, n, s, rng, known_phase=False)
    known = rd.bit_extraction_success(smp, width, q, n, s, rng, known_phase=True)
    assert unknown["rounds"] >= 3
    assert unknown["success"] <= 0.6
    assert known["success"] >= 0.95
