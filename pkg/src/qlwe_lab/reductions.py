"""LWE -> extrapolated DCP -> phased S|LWE> pipeline, the width-guessing driver,
and the small-lattice slice of the quantized Regev sample generation."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .amplitudes import HiddenPhase, RealGaussian, SecretKey, SlwePhaseSample
from .qsim import DEFAULT_CAP, Ensemble, PureState, Register, StateError, measure, qft, trace_distance_vectors
from .zq_math import (TAIL_CUT, ParameterError, centered, dual_basis, gaussian_mass, lambda1_inf_check,
                      lattice_points, nearest_lattice_point, rho_w, sample_dgauss_z, smoothing_parameter,
                      solve_mod)


# ---------------------------------------------------------------- EDCP types


@dataclass(frozen=True)
class EdcpParams:
    n: int
    m: int
    q: int
    alpha: float
    beta: float
    gamma: float
    strict: bool = False
    alpha_floor: float = 2.0
    cutoff: float = 1.0

    def __post_init__(self):
        if self.m < self.n * math.log2(self.q):
            raise ParameterError(f"m={self.m} below n log2 q = {self.n * math.log2(self.q):.2f}")
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ParameterError("alpha, beta, gamma must be positive")
        if self.alpha < self.alpha_floor:
            raise ParameterError(f"alpha={self.alpha} below floor {self.alpha_floor}")
        if self.strict:
            lo = self.alpha * self.gamma * math.sqrt(self.m)
            bq = self.beta * self.q
            hi = 1 / (16 * math.sqrt(self.m * math.log(bq))) if bq > 1 else 0.0
            if not lo < self.beta < hi:
                raise ParameterError(f"strict mode needs {lo:.4g} < beta < {hi:.4g}, got {self.beta}")


@dataclass(frozen=True)
class EdcpHidden:
    v: np.ndarray
    x: np.ndarray
    sigma: float
    c: float


@dataclass(frozen=True)
class EdcpSample:
    y: np.ndarray
    state: PureState
    hidden: EdcpHidden | None = field(default=None, repr=False)
    flags: tuple = ()
    identity_error: float = 0.0


def edcp_sigma_c(params: EdcpParams, e, x) -> tuple[float, float]:
    e = np.asarray(e, dtype=float)
    x = np.asarray(x, dtype=float)
    bq = params.beta * params.q
    den = params.alpha ** 2 * float(e @ e) + bq ** 2
    return params.alpha * bq / math.sqrt(den), -params.alpha ** 2 * float(x @ e) / den


def center_distribution_params(params: EdcpParams, e) -> tuple[float, float]:
    """(step, sigma_c) of the lattice Gaussian followed by the center."""
    e = np.asarray(e, dtype=float)
    ee = float(e @ e)
    den = params.alpha ** 2 * ee + (params.beta * params.q) ** 2
    return params.alpha ** 2 / den, params.alpha ** 2 * math.sqrt(ee) / math.sqrt(2 * den)


def x_covariance(params: EdcpParams, e) -> np.ndarray:
    """Width matrix (beta q)^2 Sigma / 2 of the offset x."""
    e = np.asarray(e, dtype=float)
    bq = params.beta * params.q
    Sig = np.eye(len(e)) + (params.alpha / bq) ** 2 * np.outer(e, e)
    return bq ** 2 * Sig / 2


def lambda1(A: np.ndarray, q: int) -> float:
    """Shortest nonzero vector of L_q(A) = {A^T v + q z} by enumeration over v."""
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    if q ** n > 1 << 22:
        raise ParameterError("enumeration of q^n vectors too large")
    V = np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64)[1:]
    L = centered(V @ A, q)
    best = float(np.sqrt(np.min(np.sum(L.astype(float) ** 2, axis=1)))) if len(L) else float(q)
    return min(best, float(q))


def truncation_radius(params: EdcpParams, lam1: float) -> float:
    bq = params.beta * params.q
    tail = 1.5 * bq * math.sqrt(params.m * math.log(max(bq, math.e)))
    return min(lam1 / 2 - params.alpha * params.gamma * params.q * params.cutoff, tail)


def decode_lwe(A: np.ndarray, b: np.ndarray, q: int):
    """Brute-force nearest secret; only the simulator uses this to lay out the exact state."""
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    S = np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64)
    E = centered(np.asarray(b)[None, :] - S @ A, q)
    i = int(np.argmin(np.sum(E.astype(float) ** 2, axis=1)))
    return S[i], E[i].astype(np.int64)


def _j_labels(q: int) -> np.ndarray:
    return centered(np.arange(q), q).astype(np.int64)


def _residual_table(params: EdcpParams, A, s, e, v, x) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude array over (j, w) and the 1-d table over centered j."""
    q, n = params.q, params.n
    jc = _j_labels(q)
    vals = rho_w(params.alpha, jc) * np.exp(
        -np.pi * np.sum((x[None, :] + jc[:, None] * e[None, :]).astype(float) ** 2, axis=1) / (params.beta * q) ** 2)
    amps = np.zeros((q,) + (q,) * n, dtype=complex)
    w = np.mod(v[None, :] + jc[:, None] * s[None, :], q)
    for j, wj, a in zip(np.mod(jc, q), w, vals):
        amps[(j,) + tuple(wj)] = a
    return amps, vals


def _sample_offset(params: EdcpParams, e, radius: float, rng, max_tries: int = 10000):
    """Exact draw from P(x) ~ sum_j rho_alpha(j)^2 rho_bq(x + j e)^2 on ||x|| < radius."""
    q = params.q
    jc = _j_labels(q)
    pj = rho_w(params.alpha, jc) ** 2
    pj = pj / pj.sum()
    bq = params.beta * q
    for _ in range(max_tries):
        j = int(rng.choice(jc, p=pj))
        z = sample_dgauss_z(bq, rng, params.m, squared=True).astype(np.int64)
        x = z - j * e
        if float(x @ x) < radius ** 2:
            return x
    raise ParameterError("truncation radius rejects almost every offset; enlarge q or shrink beta")


def lwe_to_edcp(A, b, params: EdcpParams, rng: np.random.Generator, method: str = "structured",
                secret=None) -> EdcpSample:
    """One extrapolated DCP sample from a classical LWE instance.

    ``structured`` samples (v, x) from their exact joint law and builds the
    residual state over (j, v + j s); ``dense`` tabulates the third register
    over Z_q^m and measures it.
    """
    A = np.asarray(A, dtype=np.int64) % params.q
    b = np.asarray(b, dtype=np.int64) % params.q
    q, n, m = params.q, params.n, params.m
    flags = []
    if q ** n <= 1 << 22 and not lambda1_inf_check(A, q):
        flags.append("lambda1_inf_below_q_over_4")
    if method == "dense":
        return _lwe_to_edcp_dense(A, b, params, rng, tuple(flags))
    if method != "structured":
        raise ParameterError(f"unknown method {method!r}")
    s, e = decode_lwe(A, b, q) if secret is None else (np.asarray(secret[0]) % q, np.asarray(secret[1]))
    lam = lambda1(A, q)
    R = truncation_radius(params, lam)
    if R <= 0:
        raise ParameterError(f"truncation radius {R:.3f} not positive (lambda1 = {lam:.3f})")
    x = _sample_offset(params, e, R, rng)
    v = rng.integers(0, q, n)
    y = np.mod(A.T @ v + x, q)
    amps, vals = _residual_table(params, A, s, e, v, x)
    sig, c = edcp_sigma_c(params, e, x)
    jc = _j_labels(q).astype(float)
    # log-domain check of rho_alpha(j) rho_bq(x + j e) = C rho_sigma(j - c)
    lv = -np.pi * (jc / params.alpha) ** 2 - np.pi * np.sum(
        (x[None, :] + jc[:, None] * e[None, :]) ** 2, axis=1) / (params.beta * q) ** 2
    gap = lv + np.pi * ((jc - c) / sig) ** 2
    ident = float(np.max(np.abs(np.expm1(gap - gap[np.argmin(np.abs(jc - c))]))))
    regs = [Register.cyclic(q)] * (n + 1)
    st = PureState.from_table(regs, amps)
    return EdcpSample(y, st, EdcpHidden(v, x, sig, c), tuple(flags), ident)


def _lwe_to_edcp_dense(A, b, params: EdcpParams, rng, flags) -> EdcpSample:
    q, n, m = params.q, params.n, params.m
    if q * q ** n * q ** m > DEFAULT_CAP:
        raise StateError(f"dense EDCP state has q^(1+n+m) = {q ** (1 + n + m)} amplitudes; above cap")
    jc = _j_labels(q)
    X = np.array(list(itertools.product(range(q), repeat=m)), dtype=np.int64)
    Xc = centered(X, q)
    gx = np.exp(-np.pi * np.sum(Xc.astype(float) ** 2, axis=1) / (params.beta * q) ** 2)
    Vs = np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64)
    pw = q ** np.arange(m)[::-1]
    py = np.zeros(q ** m)
    for j in jc:
        for v in Vs:
            idx = np.mod(A.T @ v - j * b + X, q) @ pw
            np.add.at(py, idx, rho_w(params.alpha, j) ** 2 * gx ** 2)
    py /= py.sum()
    yi = int(rng.choice(len(py), p=py))
    y = np.array([(yi // p) % q for p in pw], dtype=np.int64)
    amps = np.zeros((q,) + (q,) * n, dtype=complex)
    for j in jc:
        for v in Vs:
            xv = centered(y - A.T @ v + j * b, q)
            amps[(j % q,) + tuple(v)] = rho_w(params.alpha, j) * math.exp(
                -math.pi * float(xv @ xv) / (params.beta * q) ** 2)
    st = PureState.from_table([Register.cyclic(q)] * (n + 1), amps)
    return EdcpSample(y, st, None, flags + ("dense",))


def fit_gaussian_amplitudes(j, amps) -> tuple[float, float]:
    """Fit a2 j^2 + a1 j + a0 to log|amps|; returns (sigma, c)."""
    j = np.asarray(j, dtype=float)
    la = np.log(np.abs(np.asarray(amps)))
    a2, a1, _ = np.polyfit(j, la, 2)
    if a2 >= 0:
        raise ParameterError("amplitudes are not log-concave; no Gaussian fit")
    return math.sqrt(-math.pi / a2), -a1 / (2 * a2)


def edcp_amplitude_fit(sample: EdcpSample, q: int):
    """Fit the j-profile of a structured sample; returns (sigma, c, l2 residual)."""
    t = sample.state.tensor.reshape(q, -1)
    jc = _j_labels(q)
    prof = np.abs(t).max(axis=1)[np.mod(jc, q)]
    keep = prof > 1e-250
    sig, c = fit_gaussian_amplitudes(jc[keep], prof[keep])
    ref = rho_w(sig, jc, c)
    resid = float(np.linalg.norm(prof / np.linalg.norm(prof) - ref / np.linalg.norm(ref)))
    return sig, c, resid


def edcp_to_slwe_phase(sample: EdcpSample, rng: np.random.Generator, n: int, q: int) -> SlwePhaseSample:
    st = sample.state
    for i in range(1, n + 1):
        st = qft(st, i)
    a_hat = np.zeros(n, dtype=np.int64)
    for i in range(1, n + 1):
        lab, st = measure(st, i, rng)
        a_hat[i - 1] = int(lab)
    sl = st.tensor[(slice(None),) + tuple(a_hat)]
    # drop the global phase so the largest entry is real
    k = int(np.argmax(np.abs(sl)))
    sl = sl * np.exp(-1j * np.angle(sl[k]))
    one = PureState.from_table([Register.cyclic(q)], sl)
    out = qft(one, 0)
    a = np.mod(-a_hat, q)
    h = sample.hidden
    rec = HiddenPhase(np.asarray(sample.y), h.c / q if h else float("nan"),
                      {"sigma": h.sigma, "c": h.c} if h else {})
    return SlwePhaseSample(a, np.asarray(sample.y), out, rec if h else None)


def phased_reference_state(q: int, sigma: float, c: float, b0: int) -> PureState:
    """sum_e rho_{q/sigma}(e) exp(2 pi i c e / q) |b0 + e mod q>, summed over all integers e."""
    w = q / sigma
    H = math.ceil(TAIL_CUT * w) + q
    e = np.arange(-H, H + 1)
    amps = np.zeros(q, dtype=complex)
    np.add.at(amps, np.mod(b0 + e, q), rho_w(w, e) * np.exp(2j * np.pi * c * e / q))
    return PureState.from_table([Register.cyclic(q)], amps)


# ---------------------------------------------------------------- guess-E driver

Solver = Callable[..., object]


def sigma_of_E(params: EdcpParams, E: float) -> float:
    bq = params.beta * params.q
    return params.alpha * bq / math.sqrt(params.alpha ** 2 * E + bq ** 2)


def verify_secret(A2, b2, s, q: int, bound: float) -> bool:
    r = centered(np.asarray(b2) - np.asarray(A2).T @ np.asarray(s), q).astype(float)
    return bool(float(r @ r) <= bound)


def guess_E_driver(A, b, params: EdcpParams, solver: Solver, rng: np.random.Generator, ell: int = 4,
                   verify=None, secret=None):
    """Enumerate E = |e|^2, build ell phased samples, ask the solver, keep what verifies.

    ``verify`` is an extra classical instance (A2, b2) with the same secret.
    Returns (SecretKey, E) or raises RuntimeError.
    """
    q, n, m = params.q, params.n, params.m
    A = np.asarray(A, dtype=np.int64) % q
    b = np.asarray(b, dtype=np.int64) % q
    bound = m * params.gamma ** 2 * q ** 2
    A2, b2 = verify if verify is not None else (A, b)
    s0 = solve_mod(A.T, b, q)
    if s0 is not None and verify_secret(A2, b2, s0, q, 0.0 if verify is None else bound):
        return SecretKey(s0, q), 0
    for E in range(1, math.ceil(bound) + 1):
        samples = [edcp_to_slwe_phase(lwe_to_edcp(A, b, params, rng, secret=secret), rng, n, q)
                   for _ in range(ell)]
        f = RealGaussian(q / sigma_of_E(params, E))
        cand = solver(samples, f, q, n, rng)
        if cand is None:
            continue
        s = cand.s if isinstance(cand, SecretKey) else np.asarray(cand)
        if verify_secret(A2, b2, s, q, bound):
            return SecretKey(s, q), E
    raise RuntimeError("no guess of |e|^2 produced a verified secret")


# ---------------------------------------------------------------- CSV


def edcp_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "sigma_formula", "sigma_fit", "c_formula", "c_fit", "l2_resid"])
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
    return buf.getvalue()


def regev_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R", "l2_distance"])
    for R, d in rows:
        w.writerow([int(R), repr(float(d))])
    return buf.getvalue()


# ---------------------------------------------------------------- Regev sample generation


def width_grid(alpha: float, q: float, m: int) -> list[float]:
    if m < 1:
        raise ParameterError("m must be >= 1")
    return [alpha * q * (1 + (math.sqrt(2) - 1) * i / (2 * m)) for i in range(2 * m + 1)]


@dataclass(frozen=True)
class RegevSampleRecord:
    a: np.ndarray
    ensemble: Ensemble = field(repr=False)
    ys: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)
    ks: np.ndarray | None = field(default=None, repr=False)


def _u_grid_gaussian(width: float, q: int, R: int) -> np.ndarray:
    """rho_width(e) on e in Z_{qR}/R, centered representatives, index = R e mod qR."""
    k = centered(np.arange(q * R), q * R)
    return rho_w(width, k / R)


def _u_grid_periodic(width: float, q: int, R: int, phase_rate: float = 0.0) -> np.ndarray:
    """sum over all e in Z/R of rho_width(e) exp(2 pi i e phase_rate), folded mod q."""
    H = int(math.ceil((TAIL_CUT * width + q) * R))
    k = np.arange(-H, H + 1)
    out = np.zeros(q * R, dtype=complex)
    np.add.at(out, np.mod(k, q * R), rho_w(width, k / R) * np.exp(2j * np.pi * (k / R) * phase_rate))
    return out


def regev_generate_sample(B, x, q: int, alpha: float, sigma: float, r: float, R: int,
                          rng: np.random.Generator, eps: float = 1e-6, cap: int = DEFAULT_CAP,
                          a=None, coherent_wrap: bool = False) -> RegevSampleRecord:
    """Gaussian lattice state and Gaussian error; measure a; add <x, v>; QFT_R; keep the y ensemble.

    The lattice register holds v exactly.  Before the QFT it is split into
    (v mod R, round(v / R)); when the support of v is wider than R the
    quotient stays behind as garbage, so the ensemble runs over (y, k).
    ``coherent_wrap`` instead adds colliding v coherently, which no
    reversible circuit does but isolates the Fourier identity.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = B.shape[0]
    if d > 2:
        raise ParameterError("lattice dimension must be <= 2")
    if not np.allclose(B, np.round(B)):
        raise ParameterError("lattice basis must be integral")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not alpha * q - 1e-12 <= sigma <= math.sqrt(2) * alpha * q + 1e-12:
        raise ParameterError(f"sigma must lie in [alpha q, sqrt2 alpha q] = [{alpha * q}, {math.sqrt(2) * alpha * q}]")
    if not np.allclose(R * x @ B, np.round(R * x @ B), atol=1e-9):
        raise ParameterError("x must lie in L*/R")
    flags = []
    eta = smoothing_parameter(B, eps)
    if r <= 4 * q * eta:
        flags.append("r_below_smoothing_floor")
    if R ** d * q * R > cap:
        raise StateError(f"ensemble needs R^d q R = {R ** d * q * R} amplitudes; above cap {cap}")
    D = dual_basis(B)
    kx = nearest_lattice_point(D, x)
    xp = x - kx
    s = np.mod(np.rint(B.T @ kx).astype(np.int64), q)
    V = np.rint(lattice_points(B, TAIL_CUT * r)).astype(np.int64)
    K = np.rint(np.linalg.solve(B, V.T).T).astype(np.int64)
    code = np.mod(K, q) @ (q ** np.arange(d))
    wts = rho_w(r, np.linalg.norm(V, axis=1)) ** 2
    pa = np.bincount(code, weights=wts, minlength=q ** d)
    pa = pa / pa.sum()
    ac = int(rng.choice(q ** d, p=pa)) if a is None else int(np.dot(np.mod(a, q), q ** np.arange(d)))
    a_vec = np.array([(ac // q ** i) % q for i in range(d)], dtype=np.int64)
    Va = V[code == ac]
    amp_v = rho_w(r, np.linalg.norm(Va, axis=1))
    g = _u_grid_periodic(sigma, q, R)
    shift = np.mod(np.rint(R * (Va @ x)).astype(np.int64), q * R)
    quot = np.floor_divide(Va + R // 2, R)
    if coherent_wrap:
        quot = np.zeros_like(quot)
    ys_all = np.array(list(itertools.product(range(R), repeat=d)), dtype=np.int64)
    phis, ys, ks = [], [], []
    for kk in np.unique(quot, axis=0):
        sel = np.all(quot == kk, axis=1)
        G = np.stack([np.roll(g, int(sh)) for sh in shift[sel]])
        F = np.exp(2j * np.pi * (ys_all @ np.mod(Va[sel], R).T) / R) * amp_v[sel][None, :]
        phis.append(F @ G)
        ys.append(ys_all)
        ks.append(np.repeat(kk[None, :], len(ys_all), axis=0))
    phi = np.concatenate(phis)
    ys = np.concatenate(ys)
    ks = np.concatenate(ks)
    w = np.sum(np.abs(phi) ** 2, axis=1)
    p = w / w.sum()
    keep = p > 1e-300
    reg = Register.grid(np.arange(q * R) / R)
    members = [(float(pi), PureState.from_table([reg], ph)) for pi, ph in zip(p[keep], phi[keep])]
    tot = sum(mm[0] for mm in members)
    members = [(mm[0] / tot, mm[1]) for mm in members]
    t = math.sqrt(sigma ** 2 + r ** 2 * float(xp @ xp))
    params = {"r": r, "sigma": sigma, "t": t, "R": R, "q": q, "alpha": alpha, "basis": B.tolist(),
              "x_prime": xp.tolist(), "s": s.tolist(), "p_a": pa.tolist(), "flags": flags, "eta": eta,
              "garbage_weight": float(p[keep][np.any(ks[keep] != 0, axis=1)].sum())}
    return RegevSampleRecord(a_vec, Ensemble(members), ys[keep], params, ks[keep])


def regev_closed_form(rec: RegevSampleRecord, y) -> np.ndarray:
    """psi_t^{a,y}: rho_t(u) exp(2 pi i u r^2 <x', z(y)> / t^2) at <s, a> + u mod q, u over Z/R."""
    P = rec.params
    q, R, r, t = P["q"], P["R"], P["r"], P["t"]
    B = np.atleast_2d(np.asarray(P["basis"]))
    xp = np.asarray(P["x_prime"])
    s = np.asarray(P["s"])
    yR = np.atleast_1d(np.asarray(y, dtype=float)) / R
    z = yR - nearest_lattice_point(dual_basis(B) / q, yR)
    base = int(np.dot(s, rec.a)) % q
    return np.roll(_u_grid_periodic(t, q, R, r ** 2 * float(xp @ z) / t ** 2), base * R)


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> float:
    """min over global phase of || u/|u| - e^{i phi} v/|v| ||, without cancellation."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    ip = np.vdot(v, u)
    ph = ip / abs(ip) if abs(ip) > 0 else 1.0
    return float(np.linalg.norm(u - ph * v))


def regev_distance(rec: RegevSampleRecord) -> float:
    """Average over (y, garbage) of the phase-aligned l2 distance, weighted by probability."""
    tot = 0.0
    for (p, st), y in zip(rec.ensemble.members, rec.ys):
        tot += p * phase_aligned_distance(st.amplitudes, regev_closed_form(rec, y))
    return tot


def gaussian_state_distance(b1: float, b2: float, q: int, R: int) -> tuple[float, float]:
    """(numeric, closed form) trace distance of Gaussian states on Z_{qR}/R."""
    num = trace_distance_vectors(_u_grid_gaussian(b1, q, R), _u_grid_gaussian(b2, q, R))
    return num, math.sqrt((b1 - b2) ** 2 / (b1 ** 2 + b2 ** 2))


# ---------------------------------------------------------------- tail bounds


LATTICES = {"Z": np.array([[1.0]]), "2Z": np.array([[2.0]]), "Z2": np.eye(2)}


def _dual_sums(D: np.ndarray, sigma: float, u: np.ndarray):
    """(nearest dual point, sum of rho_{1/sigma}(x - u) over the other dual points)."""
    kap = nearest_lattice_point(D, u)
    pts = lattice_points(D, TAIL_CUT * 2 / sigma + np.linalg.norm(u - kap) + 2 * float(np.abs(D).max()), center=kap)
    far = np.linalg.norm(pts - kap, axis=1) > 1e-12
    diff = pts[far] - u
    others = float(np.sum(np.exp(-np.pi * sigma ** 2 * np.sum(diff * diff, axis=1))))
    return kap, others


def default_eps(basis: np.ndarray, sigma: float) -> float:
    """Twice the dual mass that the multiplicative bound needs; satisfies both preconditions."""
    D = dual_basis(basis)
    return min(0.5, 2 * gaussian_mass(D, 2 * math.sqrt(2) / sigma, exclude_zero=True))


def default_u_grid(name: str, k: int = 25) -> np.ndarray:
    D = dual_basis(LATTICES[name])
    hole = D.sum(axis=1) / 2
    return np.linspace(0, 1, k)[:, None] * hole[None, :]


def verify_tail_bounds(lattice: str, sigmas=(6.0, 8.0, 12.0), us=None, eps=None) -> dict:
    """Check both tail bounds pointwise; margins are RHS - LHS after cancelling the nearest term."""
    B = LATTICES[lattice]
    D = dual_basis(B)
    us = default_u_grid(lattice) if us is None else np.atleast_2d(us)
    rows, skipped = [], []
    for sig in sigmas:
        e = default_eps(B, sig) if eps is None else eps
        eta = smoothing_parameter(B, e)
        for u in us:
            u = np.atleast_1d(u).astype(float)
            kap, others = _dual_sums(D, sig, u)
            dist2 = float(np.sum((kap - u) ** 2))
            row = {"sigma": sig, "u": u.tolist(), "eps": e, "eta": eta}
            if sig > 2 * eta:
                row["additive_margin"] = e - others
            else:
                skipped.append((sig, u.tolist(), "additive"))
            if sig > 2 * math.sqrt(2) * eta:
                row["multiplicative_margin"] = e * math.exp(-math.pi * sig ** 2 * dist2 / 2) - others
                row["multiplicative_rel_margin"] = 1 - others / (e * math.exp(-math.pi * sig ** 2 * dist2 / 2))
            else:
                skipped.append((sig, u.tolist(), "multiplicative"))
            rows.append(row)
    ok = all(r.get("additive_margin", 1) > 0 and r.get("multiplicative_margin", 1) > 0 for r in rows)
    return {"lattice": lattice, "rows": rows, "skipped": skipped, "pass": ok}


# ---------------------------------------------------------------- unknown-phase obstruction


def hidden_center_phases(count: int, q: int, step: float, sigma_c: float, rng) -> np.ndarray:
    """theta = c / q with c ~ D_{step Z, sigma_c}."""
    if sigma_c <= 0:
        return np.zeros(count)
    return step * sample_dgauss_z(sigma_c / step, rng, count).astype(float) / q


def phased_samples(n: int, q: int, width: float, s: SecretKey, thetas, rng) -> list[SlwePhaseSample]:
    from .amplitudes import gen_slwe_phase
    f = RealGaussian(width)
    return [gen_slwe_phase(n, q, f, s, HiddenPhase(np.zeros(0, dtype=np.int64), float(th)), rng)
            for th in thetas]


def bit_extraction_success(samples: list[SlwePhaseSample], width: float, q: int, n: int, s: SecretKey,
                           rng, known_phase: bool = False) -> dict:
    """Sieve phased samples through the first digit stage and score parity readout.

    Unknown phase: the heavy pair and rejection weights come from the
    unphased amplitude.  Known phase: each sample uses its own phased
    amplitude table.  The score is the exact probability that the X
    measurement returns the true parity, averaged over surviving qubits.
    """
    from .amplitudes import LinearPhaseGaussian
    from .sieve_solver import X_BASIS, LabeledQubit, _digits, convert_samples, sieve_rounds
    if known_phase:
        specs = [LinearPhaseGaussian(width, smp.hidden.theta * q, q) for smp in samples]
    else:
        specs = [RealGaussian(width)] * len(samples)
    qubits = convert_samples([smp.public_view() for smp in samples], specs, q, n, rng)
    pool = sieve_rounds(qubits, n, q, rng)
    half = q // 2
    scores = []
    for qb in pool:
        lab = np.asarray(qb.label) % q
        if np.any((lab != 0) & (lab != half)) or not np.any(lab):
            continue
        bit = int(np.dot(lab // half, np.mod(s.s, 2))) % 2
        a = qb.amps / np.linalg.norm(qb.amps)
        scores.append(abs(np.vdot(X_BASIS[bit], a)) ** 2)
    return {"rounds": len(_digits(n, q)), "converted": len(qubits), "scored": len(scores),
            "success": float(np.mean(scores)) if scores else float("nan")}
