"""Center finding for complex Gaussian states, LWE-state construction and
witness-oblivious sampling over a composite modulus."""
from __future__ import annotations

import csv
import functools
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .amplitudes import complex_gaussian_state
from .qsim import PureState, Register, StateError, split_register
from .zq_math import (MIN_HALFWIDTH, TAIL_CUT, Modulus, ParameterError, centered, crt_combine,
                      rho_w, round_half_up, sample_dgauss_z, solve_mod)

VERIFY_THRESHOLD = 0.9
RETRY_BUDGET = 16


class RecoveryError(RuntimeError):
    pass


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class ClweParams:
    n: int
    m: int
    ell: int
    q: Modulus
    r: float
    log_slack: float = 1.0
    strict: bool = False

    def __post_init__(self):
        if min(self.n, self.m, self.ell) < 1:
            raise ParameterError("n, m, ell must be positive")
        if self.q.factors is None or len(self.q.factors) != self.ell:
            raise ParameterError(f"modulus needs exactly ell={self.ell} coprime factors")
        if self.m % self.ell:
            raise ParameterError("m must be divisible by ell")
        need = 2 * self.ell * self.n * self.log_slack * math.log(self.n)
        if self.m < need:
            raise ParameterError(f"m={self.m} below 2*ell*n*log_slack*ln n = {need:.1f}")
        if not self.r > 0:
            raise ParameterError("r must be positive")
        if self.strict:
            lo = 30 * self.n * math.log(self.n) * max(self.q.factors)
            hi = self.q.q / math.sqrt(self.n)
            if not lo < self.r < hi:
                raise ParameterError(f"strict mode needs {lo:.1f} < r < q/sqrt(n) = {hi:.1f}, got r={self.r}")

    @property
    def block(self) -> int:
        return self.m // self.ell


@dataclass(frozen=True)
class ObliviousSample:
    n: int
    m: int
    q: int
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)
    secret_width: float | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.int64) % self.q
        if A.shape != (self.n, self.m):
            raise ParameterError("A must be n x m")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", centered(np.asarray(self.b, dtype=np.int64), self.q).astype(np.int64))
        bad = set(self.provenance) - {"mode", "seed"}
        if bad:
            raise ParameterError(f"provenance may only carry mode and seed, got {sorted(bad)}")

    def to_json(self) -> str:
        d = {"n": self.n, "m": self.m, "q": self.q, "A": self.A.reshape(-1).tolist(),
             "b": self.b.tolist(), "provenance": dict(self.provenance)}
        if self.secret_width is not None:
            d["secret_width"] = self.secret_width
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ObliviousSample":
        d = json.loads(text)
        A = np.array(d["A"], dtype=np.int64).reshape(d["n"], d["m"])
        return ObliviousSample(d["n"], d["m"], d["q"], A, np.array(d["b"]), d.get("provenance", {}),
                               d.get("secret_width"))


@dataclass(frozen=True)
class ApproxObservation:
    A_j: np.ndarray
    y_tilde: np.ndarray
    q_j: int

    def __post_init__(self):
        object.__setattr__(self, "A_j", np.asarray(self.A_j, dtype=np.int64))
        object.__setattr__(self, "y_tilde", centered(np.asarray(self.y_tilde, dtype=np.int64), self.q_j))
        if self.A_j.shape[1] != self.y_tilde.shape[0]:
            raise ParameterError("y_tilde length must match the number of columns of A_j")


# ---------------------------------------------------------------- psi basis


def psi_basis(t: int) -> np.ndarray:
    """Rows are psi_d(x) = exp(-pi i (x - d)^2 / t) / sqrt(t), x, d in 0..t-1."""
    if t < 1:
        raise ParameterError("t must be >= 1")
    d = np.arange(t)[:, None]
    x = np.arange(t)[None, :]
    # reduce (x-d)^2 mod 2t before scaling to keep the phase argument small
    e = np.mod((x - d) ** 2, 2 * t)
    return np.exp(-1j * np.pi * e / t) / math.sqrt(t)


def psi_coefficients(rows: np.ndarray, t: int) -> np.ndarray:
    """<psi_d|v> for every row v (length t); chirp, DFT, chirp."""
    y = np.arange(t)
    chirp = np.exp(1j * np.pi * np.mod(y * y, 2 * t) / t)
    out = np.fft.fft(rows * chirp, axis=-1)
    return out * chirp / math.sqrt(t)


def center_regime(r: float, t: int, n: int) -> str:
    if n < 2 or r >= 30 * t * n * math.log(n):
        return "in_scope"
    return "out_of_guaranteed_range"


def center_bound(t: int, r: float, n: int) -> float:
    return 1 - 8 * math.pi * t * math.log(n) / r


# ---------------------------------------------------------------- center finding


class CenterFinder:
    """Two-stage measurement of one coordinate: high digits, then low digits in the psi basis.

    The split of the state is computed once, so repeated draws are cheap.
    """

    def __init__(self, state: PureState, t: int):
        if len(state.shape.registers) != 1:
            raise StateError("center finding needs a one-register state")
        self.t = int(t)
        self.ks, mat = split_register(state, 0, self.t)
        coef = psi_coefficients(mat, self.t)
        w = np.abs(coef) ** 2
        self.p_high = w.sum(axis=1) / w.sum()
        keep = self.p_high > 0
        self._rows = np.nonzero(keep)[0]
        self._p_high = self.p_high[keep] / self.p_high[keep].sum()
        wk = w[keep]
        self._cond = np.cumsum(wk / wk.sum(axis=1, keepdims=True), axis=1)
        self._cond[:, -1] = 1.0
        self.outcome = w.sum(axis=0) / w.sum()

    def draw(self, rng: np.random.Generator, size=None):
        k = rng.choice(len(self._rows), size=size, p=self._p_high)
        u = rng.random(size)
        if size is None:
            return int(np.searchsorted(self._cond[k], u, side="right"))
        return np.array([np.searchsorted(self._cond[i], v, side="right") for i, v in zip(k, u)])


def find_center(state: PureState, t: int, rng: np.random.Generator) -> int:
    return CenterFinder(state, t).draw(rng)


def exact_center_prob(t: int, r: float, c: int, truncation: float | None = None) -> float:
    """Probability of reading c mod t, as a direct double sum over (k, y)."""
    if t == 1:
        return 1.0
    H = math.ceil(TAIL_CUT * r) if truncation is None else int(truncation)
    if H < r * MIN_HALFWIDTH:
        raise ParameterError("truncation too small for r")
    c1 = int(c) % t
    k = np.arange((c1 - H) // t - 1, (c1 + H) // t + 2)
    y = np.arange(t)
    rows = rho_w(r, k[:, None] * t + y[None, :] - c1)
    x = np.arange(-H, H + 1)
    return float(np.sum(rows.sum(axis=1) ** 2) / (t * np.sum(rho_w(r, x) ** 2)))


@functools.lru_cache(maxsize=4096)
def outcome_distribution(r: float, t: int, c_mod: int) -> np.ndarray:
    """Born distribution of the psi-basis reading for a state centred at c_mod.

    The distribution depends on the center only through c mod t, so one
    table per residue is enough.
    """
    return CenterFinder(complex_gaussian_state(r, t, c_mod), t).outcome


def draw_center_readings(centers: np.ndarray, r: float, t: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.mod(np.asarray(centers, dtype=np.int64), t)
    out = np.empty(centers.shape, dtype=np.int64)
    for i, c in enumerate(centers.reshape(-1)):
        out.reshape(-1)[i] = rng.choice(t, p=outcome_distribution(float(r), int(t), int(c)))
    return out


def gaussian_overlap(r: float, t: float, c1: int, c2: int) -> complex:
    """Normalised <phi_c1|phi_c2> by direct summation on a common window."""
    H = math.ceil(TAIL_CUT * r)
    z = np.arange(min(c1, c2) - H, max(c1, c2) + H + 1)

    def amp(c):
        x = (z - c).astype(float)
        return rho_w(r, x) * np.exp(-1j * np.pi * np.mod(x * x, 2 * t) / t)

    u, v = amp(c1), amp(c2)
    return complex(np.vdot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


# ---------------------------------------------------------------- block recovery


def _groups(obs: ApproxObservation):
    n = obs.A_j.shape[0]
    g = obs.A_j.shape[1] // (2 * n)
    return n, g


def verify_candidate(A: np.ndarray, y: np.ndarray, s, q_j: int, threshold: float = VERIFY_THRESHOLD) -> bool:
    pred = np.mod(np.asarray(A).T @ np.asarray(s), q_j)
    return bool(np.mean(pred == np.mod(y, q_j)) >= threshold)


def recover_block(obs: ApproxObservation, threshold: float = VERIFY_THRESHOLD):
    """Solve on group i, check on group i + G/2; first candidate that passes wins."""
    n, G = _groups(obs)
    if G < 2:
        raise ParameterError(f"need at least 4n = {4 * n} columns, got {obs.A_j.shape[1]}")
    A = np.mod(obs.A_j, obs.q_j)
    y = np.mod(obs.y_tilde, obs.q_j)
    half = G // 2
    for i in range(half):
        cols = slice(2 * n * i, 2 * n * (i + 1))
        s = solve_mod(A[:, cols].T, y[cols], obs.q_j)
        if s is None:
            continue
        j = i + half
        vcols = slice(2 * n * j, 2 * n * (j + 1))
        if verify_candidate(A[:, vcols], y[vcols], s, obs.q_j, threshold):
            return np.asarray(s, dtype=np.int64) % obs.q_j
    return None


def crt_vector(parts: list[tuple[np.ndarray, int]]) -> np.ndarray:
    n = len(parts[0][0])
    return np.array([crt_combine([(int(v[i]), m) for v, m in parts]) for i in range(n)], dtype=np.int64)


# ---------------------------------------------------------------- C|LWE>


def _block_slices(params: ClweParams):
    B = params.block
    return [slice(j * B, (j + 1) * B) for j in range(params.ell)]


def recover_secret(A: np.ndarray, readings: np.ndarray, params: ClweParams):
    """Per-block recovery followed by CRT; None if any block fails."""
    parts = []
    for sl, qj in zip(_block_slices(params), params.q.factors):
        sj = recover_block(ApproxObservation(np.mod(A[:, sl], qj), readings[sl], qj))
        if sj is None:
            return None
        parts.append((sj, qj))
    return crt_vector(parts) if len(parts) > 1 else parts[0][0] % params.q.q


def _sampled_branch(A, params: ClweParams, rng):
    q = params.q.q
    for attempt in range(1, RETRY_BUDGET + 1):
        s = rng.integers(0, q, params.n)
        readings = np.empty(params.m, dtype=np.int64)
        for sl, qj in zip(_block_slices(params), params.q.factors):
            centers = np.mod(A[:, sl].T @ s, qj)
            readings[sl] = draw_center_readings(centers, params.r, qj, rng)
        rec = recover_secret(A, readings, params)
        if rec is not None:
            if not np.array_equal(np.mod(rec, q), s):
                raise RecoveryError("recovered secret differs from the branch secret")
            x = sample_dgauss_z(params.r, rng, params.m, squared=True).astype(np.int64)
            b = np.mod(A.T @ s + x, q)
            return b, {"s": s, "x": x, "attempts": attempt, "readings": readings}
    raise RecoveryError(f"recovery failed {RETRY_BUDGET} times; parameters look outside the guaranteed range")


def _coord_table(r: float, t: int, q: int) -> np.ndarray:
    """Row c: folded amplitudes of sum_x rho_r(x) e^{-pi i x^2/t} |c + x mod q>."""
    H = math.ceil(TAIL_CUT * r)
    x = np.arange(-H, H + 1)
    val = rho_w(r, x) * np.exp(-1j * np.pi * np.mod(x * x, 2 * t) / t)
    tab = np.zeros((q, q), dtype=complex)
    for c in range(q):
        np.add.at(tab[c], (c + x) % q, val)
    return tab


def _w_matrix(t: int, q: int) -> np.ndarray:
    """Unitary on Z_q: low digit y of z = k t + y goes to the psi basis index d."""
    P = psi_basis(t).conj()
    W = np.zeros((q, q), dtype=complex)
    for k in range(q // t):
        W[k * t:(k + 1) * t, k * t:(k + 1) * t] = P
    return W


def _coherent_tiny(A, params: ClweParams, cap: int = 1 << 22):
    q, n, m = params.q.q, params.n, params.m
    if q ** m > cap or q ** n > 64:
        raise StateError(f"coherent mode needs q^m <= {cap}; got q^m = {q ** m}")
    fac = params.q.factors
    tq = [fac[i // params.block] for i in range(m)]
    for t in fac:
        # the quadratic phase must be periodic mod q for the folded state to make sense
        if q % t or (q * (q // t)) % 2:
            raise ParameterError(f"phase exp(-pi i x^2/{t}) is not periodic mod {q}")
    tabs = {t: _coord_table(params.r, t, q) for t in set(tq)}
    Ws = {t: _w_matrix(t, q) for t in set(tq)}
    secrets = [np.array(s) for s in itertools.product(range(q), repeat=n)]

    def alpha(s):
        b = np.mod(A.T @ s, q)
        vecs = [Ws[tq[i]] @ tabs[tq[i]][b[i]] for i in range(m)]
        out = vecs[0]
        for v in vecs[1:]:
            out = np.multiply.outer(out, v)
        return out

    alphas = {tuple(s): alpha(s) for s in secrets}
    total = sum(alphas.values())
    # s'(d) from the low digits of every coordinate
    idx = [np.arange(q) % tq[i] for i in range(m)]
    blocks = _block_slices(params)
    stride = q ** np.arange(n)
    parts_by_block = []
    for sl, qj in zip(blocks, fac):
        cols = range(sl.start, sl.stop)
        table = {}
        for ds in itertools.product(range(qj), repeat=len(cols)):
            sj = recover_block(ApproxObservation(np.mod(A[:, sl], qj), np.array(ds), qj))
            table[ds] = sj
        parts_by_block.append((cols, qj, table))
    # enumerate all reading combinations across blocks
    combos = itertools.product(*[list(t[2].items()) for t in parts_by_block])
    sp_of = {}
    for combo in combos:
        pieces = [(v, qj) for (_, v), (_, qj, _) in zip(combo, parts_by_block)]
        if any(v is None for v, _ in pieces):
            sp = np.zeros(n, dtype=np.int64)
        else:
            sp = crt_vector(pieces) if len(pieces) > 1 else pieces[0][0]
        key = tuple(itertools.chain.from_iterable(ds for ds, _ in combo))
        sp_of[key] = int(np.dot(np.mod(sp, q), stride))
    # broadcast the d -> s' map over the full (k, d) index grid
    d_grid = np.stack(np.meshgrid(*idx, indexing="ij"), axis=-1).reshape(-1, m)
    keys = [tuple(row) for row in d_grid]
    label = np.array([sp_of[k] for k in keys], dtype=np.int64).reshape((q,) * m)
    kept = np.zeros_like(total)
    for s in secrets:
        code = int(np.dot(s, stride))
        mask = label == code
        kept[mask] += alphas[tuple(s)][mask]
    norm_out = math.sqrt(sum(float(np.sum(np.abs(a) ** 2)) for a in alphas.values()))
    ov = np.vdot(total, kept) / (np.linalg.norm(total) * norm_out)
    fid = min(1.0, abs(ov))
    # undo the psi-basis change on the s = 0 component
    v = kept
    for i in range(m):
        v = np.moveaxis(np.tensordot(Ws[tq[i]].conj().T, v, axes=([1], [i])), 0, i)
    st = PureState.from_table([Register.cyclic(q)] * m, v)
    ideal = total
    for i in range(m):
        ideal = np.moveaxis(np.tensordot(Ws[tq[i]].conj().T, ideal, axes=([1], [i])), 0, i)
    diag = {"trace_distance": math.sqrt(max(0.0, 1 - fid * fid)),
            "weight_on_zero": float(np.sum(np.abs(kept) ** 2)) / norm_out ** 2,
            "ideal": PureState.from_table([Register.cyclic(q)] * m, ideal)}
    return st, diag


def construct_clwe(A, params: ClweParams, mode: str, rng: np.random.Generator):
    """Returns (b, diagnostics) in sampled_branch mode, (state, diagnostics) in coherent_tiny mode."""
    A = np.asarray(A, dtype=np.int64) % params.q.q
    if A.shape != (params.n, params.m):
        raise ParameterError("A must be n x m")
    if mode == "sampled_branch":
        return _sampled_branch(A, params, rng)
    if mode == "coherent_tiny":
        return _coherent_tiny(A, params)
    raise ParameterError(f"unknown mode {mode!r}")


def oblivious_sample(A, params: ClweParams, rng: np.random.Generator, seed: int | None = None,
                     secret_width: float | None = None) -> ObliviousSample:
    b, _ = construct_clwe(A, params, "sampled_branch", rng)
    return ObliviousSample(params.n, params.m, params.q.q, A, b,
                           {"mode": "sampled_branch", "seed": seed}, secret_width)


def oblivious_sample_with_witness(A, params: ClweParams, rng: np.random.Generator, seed: int | None = None):
    """Harness entry point: the record plus the branch diagnostics kept apart from it."""
    b, diag = construct_clwe(A, params, "sampled_branch", rng)
    rec = ObliviousSample(params.n, params.m, params.q.q, A, b, {"mode": "sampled_branch", "seed": seed})
    return rec, diag


def error_stats_csv(errors: np.ndarray) -> str:
    """Rows coordinate,error_value,count for an (samples x m) error table."""
    errors = np.atleast_2d(np.asarray(errors, dtype=np.int64))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["coordinate", "error_value", "count"])
    for i in range(errors.shape[1]):
        vals, cnt = np.unique(errors[:, i], return_counts=True)
        for v, c in zip(vals, cnt):
            w.writerow([i, int(v), int(c)])
    return buf.getvalue()


# ---------------------------------------------------------------- modulus switching


def modulus_switch_condition(n: int, s_w: float, q_new: int, alpha: float, alpha_new: float,
                             omega: float | None = None) -> float:
    """Slack alpha'^2 - alpha^2 - (s_w sqrt(n)/q')^2 * omega; nonnegative means satisfied."""
    omega = 4 * math.log(n) if omega is None else omega
    return alpha_new ** 2 - alpha ** 2 - (s_w * math.sqrt(n) / q_new) ** 2 * omega


def switch_noise_width(n: int, s_w: float, q_new: int, alpha: float, alpha_new: float) -> float:
    """Width of the fresh noise so the total width is alpha' q'.

    Rounding b contributes width^2 pi/6; rounding A against a D_{Z^n, s_w}
    secret contributes n s_w^2 / 12.
    """
    drift2 = math.pi / 6 + n * s_w ** 2 / 12
    return math.sqrt(max(0.0, (alpha_new * q_new) ** 2 - (alpha * q_new) ** 2 - drift2))


def modulus_switch(sample: ObliviousSample, q_new: int, alpha: float, alpha_new: float,
                   rng: np.random.Generator, omega: float | None = None) -> ObliviousSample:
    q, n = sample.q, sample.n
    if q_new > q:
        raise ParameterError("target modulus must not exceed q")
    if q_new == q and alpha_new == alpha:
        return sample
    if sample.secret_width is None:
        raise ParameterError("sample needs a secret_width tag for modulus switching")
    s_w = sample.secret_width
    slack = modulus_switch_condition(n, s_w, q_new, alpha, alpha_new, omega)
    if slack < 0:
        raise ParameterError(f"alpha'^2 >= alpha^2 + (s sqrt(n)/q')^2 * omega fails by {-slack:.3e}")
    drift2 = math.pi / 6 + n * s_w ** 2 / 12
    if (alpha_new * q_new) ** 2 - (alpha * q_new) ** 2 < drift2:
        raise ParameterError("(alpha' q')^2 - (alpha q')^2 is below the rounding drift budget")
    scale = q_new / q
    A2 = np.mod(round_half_up(scale * np.mod(sample.A, q)).astype(np.int64), q_new)
    w = switch_noise_width(n, s_w, q_new, alpha, alpha_new)
    noise = sample_dgauss_z(w, rng, sample.m).astype(np.int64) if w > 0 else 0
    b2 = round_half_up(scale * np.mod(sample.b, q)).astype(np.int64) + noise
    return ObliviousSample(n, sample.m, q_new, A2, b2, dict(sample.provenance), s_w)


def _primes_from(x: int, count: int) -> list[int]:
    out, p = [], max(2, int(x))
    while len(out) < count:
        if all(p % d for d in range(2, int(math.isqrt(p)) + 1)):
            out.append(p)
        p += 1
    return out


def worked_example(n: int, omega: float | None = None) -> dict:
    """Concrete instance of the four-factor modulus-switching example.

    Picks four primes just large enough that 30 n ln n max q_i < q / sqrt(n),
    a prime q' in (q/2, q), s = sqrt(n), and the smallest admissible r'.
    """
    omega = 4 * math.log(n) if omega is None else omega
    base = max(3, math.isqrt(n))
    while True:
        fac = _primes_from(base, 4)
        q = math.prod(fac)
        lo = 30 * n * math.log(n) * max(fac)
        if lo < q / math.sqrt(n):
            break
        base += 1
    r = 1.01 * lo
    q_new = _primes_from(q // 2 + 1, 1)[0]
    s_w = math.sqrt(n)
    alpha = r / (math.sqrt(2) * q)
    need = math.sqrt(alpha ** 2 + (s_w * math.sqrt(n) / q_new) ** 2 * omega)
    r_new = need * math.sqrt(2) * q_new * 1.001
    alpha_new = r_new / (math.sqrt(2) * q_new)
    return {"n": n, "factors": fac, "q": q, "r": r, "q_new": q_new, "s": s_w, "r_new": r_new,
            "slack": modulus_switch_condition(n, s_w, q_new, alpha, alpha_new, omega),
            "satisfiable": modulus_switch_condition(n, s_w, q_new, alpha, alpha_new, omega) >= 0
            and q_new < q < 2 * q_new}
