"""Subexponential solver: heavy DFT pair, conversion to phase qubits, sieve.

The sieve for q = 2^k clears one binary digit of one label coordinate per
combine round.  Two labels that are both divisible by 2^j in a coordinate
and agree on bit j there have sum and difference divisible by 2^(j+1), so
either outcome of a combine keeps the pair.  After n(k-1) rounds every
label lies in {0, q/2}^n and a single X-basis measurement reveals the
parity <p, s> mod 2 for the pattern p.  Known low bits are then removed
from the phases of fresh qubits and the procedure repeats modulo q/2.

For odd prime q the sieve zeroes all but one coordinate and the remaining
phase w_q^{c s_i} is estimated by maximum likelihood over Z_q.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .amplitudes import AmplitudeSpec, SecretKey, SlweSample, Tabulated
from .qsim import PureState, Register, apply_relabel_phase, measure, qft, rejection_sample
from .zq_math import ParameterError, dft_amplitude, solve_mod

SQRT_HALF = 1 / math.sqrt(2)
# X basis and its pi/2 rotation (rows are basis vectors)
X_BASIS = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF
Y_BASIS = np.array([[1, 1j], [1, -1j]], dtype=complex) * SQRT_HALF


class HeavyPairAbort(RuntimeError):
    pass


class InsufficientQubits(RuntimeError):
    pass


@dataclass(frozen=True)
class HeavyPair:
    j1: int
    j2: int
    g1: complex
    g2: complex
    threshold: float

    def __post_init__(self):
        if self.j1 == self.j2:
            raise ParameterError("heavy pair needs distinct points")
        if min(abs(self.g1), abs(self.g2)) < self.threshold:
            raise ParameterError("heavy pair below threshold")

    @property
    def acceptance(self) -> float:
        return 2 * min(abs(self.g1), abs(self.g2)) ** 2


@dataclass
class LabeledQubit:
    label: np.ndarray
    state: PureState
    depth: int = 0

    @property
    def amps(self) -> np.ndarray:
        return self.state.amplitudes


@functools.lru_cache(maxsize=256)
def spec_dft(spec: AmplitudeSpec, q: int) -> np.ndarray:
    lab, val = spec.table()
    val = val / np.linalg.norm(_fold(lab, val, q))
    return dft_amplitude(lab, val, q)


def _fold(lab, val, q):
    out = np.zeros(q, dtype=complex)
    np.add.at(out, np.asarray(lab) % q, val)
    return out


def default_threshold(n: int, q: int) -> float:
    return 2.0 ** (-math.sqrt(n) * math.log2(q))


def find_heavy_pair(f: AmplitudeSpec, q: int, threshold: float) -> HeavyPair:
    """Lexicographically smallest pair j1 < j2, gcd(j2 - j1, q) = 1, maximising min |g|."""
    g = spec_dft(f, q)
    mag = np.abs(g)
    best, best_val = None, -1.0
    for j1 in range(q):
        for j2 in range(j1 + 1, q):
            if math.gcd(j2 - j1, q) != 1:
                continue
            v = min(mag[j1], mag[j2])
            if v > best_val * (1 + 1e-12) + 1e-300:
                best, best_val = (j1, j2), v
    if best is None or best_val < threshold:
        raise HeavyPairAbort(f"no admissible DFT pair above threshold {threshold:.3g}")
    j1, j2 = best
    return HeavyPair(j1, j2, complex(g[j1]), complex(g[j2]), threshold)


def slwe_to_dcp(sample: SlweSample, pair: HeavyPair, rng: np.random.Generator, q: int | None = None):
    """QFT, rejection sampling onto {j1, j2}, relabel to a phase qubit.

    Returns a LabeledQubit or None when rejection sampling fails.
    """
    st = sample.state
    q = st.shape.registers[0].q if q is None else q
    st = qft(st, 0)
    m = min(abs(pair.g1), abs(pair.g2))
    gamma = np.zeros(q)
    gamma[pair.j1] = m / abs(pair.g1)
    gamma[pair.j2] = m / abs(pair.g2)
    out, _ = rejection_sample(st, gamma, rng)
    if out is None:
        return None
    u = {pair.j1: (0, np.conj(pair.g1) / abs(pair.g1)),
         pair.j2: (1, np.conj(pair.g2) / abs(pair.g2))}
    out = apply_relabel_phase(out, 0, u)
    amps = out.amplitudes[:2]
    label = ((pair.j2 - pair.j1) * np.asarray(sample.a, dtype=np.int64)) % q
    return LabeledQubit(label, PureState.from_table([Register.cyclic(2)], amps))


_QUBIT_PAIR = None


def _pair_registers():
    global _QUBIT_PAIR
    if _QUBIT_PAIR is None:
        _QUBIT_PAIR = [Register.cyclic(2), Register.cyclic(2)]
    return _QUBIT_PAIR


def sieve_combine(x: LabeledQubit, y: LabeledQubit, rng: np.random.Generator, q: int) -> LabeledQubit:
    """CNOT x -> y, measure y.  Parity 0 gives label x + y, parity 1 gives x - y."""
    joint = np.kron(x.amps, y.amps)  # index 2*bx + by
    # CNOT: (1,0) <-> (1,1)
    joint = joint[[0, 1, 3, 2]]
    st = PureState.from_table(_pair_registers(), joint)
    par, st = measure(st, 1, rng)
    t = st.tensor
    if par == 0:
        amps, label = t[:, 0], (x.label + y.label) % q
    else:
        # remaining branches are |0,1> (y's phase) and |1,1> (x's phase)
        amps, label = t[:, 1], (x.label - y.label) % q
    return LabeledQubit(label, PureState.from_table([Register.cyclic(2)], amps),
                        max(x.depth, y.depth) + 1)


def _rephase(qb: LabeledQubit, shift: int, q: int) -> LabeledQubit:
    """Multiply the |1> branch by w_q^{-shift}."""
    a = qb.amps.copy()
    a[1] *= np.exp(-2j * np.pi * (shift % q) / q)
    return LabeledQubit(qb.label, PureState.from_table([Register.cyclic(2)], a), qb.depth)


def measure_x(qb: LabeledQubit, rng: np.random.Generator, basis=X_BASIS) -> int:
    """Return 0 for |+>-like, 1 for |->-like outcome."""
    p0 = abs(np.vdot(basis[0], qb.amps)) ** 2 / np.vdot(qb.amps, qb.amps).real
    return 0 if rng.random() < p0 else 1


# ---------------------------------------------------------------- q = 2^k


def _digits(n: int, Q: int):
    k = Q.bit_length() - 1
    return [(i, j) for j in range(k - 1) for i in range(n)]


def sieve_rounds(qubits: list[LabeledQubit], n: int, Q: int, rng: np.random.Generator,
                 rounds: int | None = None) -> list[LabeledQubit]:
    """Clear label digits of a power-of-two modulus Q, one digit per round.

    Pairs are formed inside buckets of equal next digit in insertion order,
    which is the greedy longest-common-low-digit match.
    """
    pool = list(qubits)
    digits = _digits(n, Q)
    if rounds is not None:
        digits = digits[:rounds]
    for i, j in digits:
        buckets: dict[int, list[LabeledQubit]] = {0: [], 1: []}
        out = []
        for qb in pool:
            b = (int(qb.label[i]) >> j) & 1
            if buckets[b]:
                out.append(sieve_combine(buckets[b].pop(), qb, rng, Q))
            else:
                buckets[b].append(qb)
        pool = out
    return pool


def _gf2_solve(eqs: list[tuple[np.ndarray, int]], n: int):
    rows = []
    for p, bit in eqs:
        v = [int(x) & 1 for x in p] + [bit & 1]
        for r in rows:
            lead = next(i for i in range(n) if r[i])
            if v[lead]:
                v = [a ^ b for a, b in zip(v, r)]
        if any(v[:n]):
            rows.append(v)
            # keep reduced form
            lead = next(i for i in range(n) if v[i])
            for k in range(len(rows) - 1):
                if rows[k][lead]:
                    rows[k] = [a ^ b for a, b in zip(rows[k], v)]
        if len(rows) == n:
            break
    if len(rows) < n:
        return None
    x = [0] * n
    for r in rows:
        lead = next(i for i in range(n) if r[i])
        x[lead] = r[n]
    return np.array(x, dtype=np.int64)


def _stage_weight(n: int, Q: int) -> int:
    return 2 ** len(_digits(n, Q)) * 2 ** (n + 2)


def budget(n: int, q: int) -> int:
    """Minimum qubit count accepted by kuperberg_solve."""
    if q & (q - 1) == 0:
        k = q.bit_length() - 1
        return sum(_stage_weight(n, q >> st) for st in range(k))
    return 64 * q * n * 4 ** (n - 1)


def extract_parities(pool: list[LabeledQubit], n: int, Q: int, rng) -> dict[tuple, list[int]]:
    half = Q // 2
    votes: dict[tuple, list[int]] = {}
    for qb in pool:
        lab = np.asarray(qb.label) % Q
        if np.any((lab != 0) & (lab != half)) or not np.any(lab):
            continue
        p = tuple(int(v) // half for v in lab)
        votes.setdefault(p, []).append(measure_x(qb, rng))
    return votes


def _solve_pow2(qubits: list[LabeledQubit], q: int, n: int, rng) -> np.ndarray:
    k = q.bit_length() - 1
    weights = [_stage_weight(n, q >> st) for st in range(k)]
    total = sum(weights)
    s_low = np.zeros(n, dtype=np.int64)
    start = 0
    for st in range(k):
        Q = q >> st
        cnt = len(qubits) * weights[st] // total if st < k - 1 else len(qubits) - start
        chunk = qubits[start:start + cnt]
        start += cnt
        prepared = []
        for qb in chunk:
            shift = int(np.dot(qb.label, s_low))
            qb = _rephase(qb, shift, q)
            prepared.append(LabeledQubit(np.asarray(qb.label) % Q, qb.state, qb.depth))
        pool = sieve_rounds(prepared, n, Q, rng)
        votes = extract_parities(pool, n, Q, rng)
        ranked = sorted(votes.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        eqs = [(np.array(p), int(sum(v) * 2 > len(v))) for p, v in ranked]
        bits = _gf2_solve(eqs, n)
        if bits is None:
            raise InsufficientQubits(
                f"stage {st} produced patterns of rank < {n}; budget(n={n}, q={q}) = {budget(n, q)}")
        s_low = s_low + (bits << st)
    return s_low % q


# ---------------------------------------------------------------- odd prime q


def _zero_other_coords(pool: list[LabeledQubit], n: int, q: int, keep: int, rng) -> list[LabeledQubit]:
    for i in range(n):
        if i == keep:
            continue
        buckets: dict[int, list[LabeledQubit]] = {}
        out = []
        for qb in pool:
            v = int(qb.label[i]) % q
            if v == 0:
                out.append(qb)
                continue
            key = min(v, q - v)
            b = buckets.setdefault(key, [])
            if b:
                other = b.pop()
                res = sieve_combine(other, qb, rng, q)
                if int(res.label[i]) % q == 0:
                    out.append(res)
            else:
                b.append(qb)
        pool = out
    return [qb for qb in pool if int(qb.label[keep]) % q != 0]


def _mle_phase(qubits: list[LabeledQubit], q: int, i: int, rng) -> int:
    v = np.arange(q)
    ll = np.zeros(q)
    for t, qb in enumerate(qubits):
        c = int(qb.label[i]) % q
        basis, phi = (X_BASIS, 0.0) if t % 2 == 0 else (Y_BASIS, np.pi / 2)
        out = measure_x(qb, rng, basis)
        p_plus = 0.5 * (1 + np.cos(2 * np.pi * c * v / q - phi))
        p = p_plus if out == 0 else 1 - p_plus
        ll += np.log(np.maximum(p, 1e-300))
    return int(np.argmax(ll))


def _is_prime(q: int) -> bool:
    return q > 1 and all(q % p for p in range(2, int(q ** 0.5) + 1))


def kuperberg_solve(qubits: list[LabeledQubit], q: int, n: int, rng: np.random.Generator) -> SecretKey:
    need = budget(n, q) if (q & (q - 1) == 0 or (_is_prime(q) and q <= 64)) else None
    if need is None:
        raise ParameterError("sieve supports q = 2^k or odd prime q <= 64")
    if len(qubits) < need:
        raise InsufficientQubits(f"{len(qubits)} qubits given, budget(n={n}, q={q}) = {need}")
    if q & (q - 1) == 0:
        return SecretKey(_solve_pow2(qubits, q, n, rng), q)
    s = np.zeros(n, dtype=np.int64)
    per = len(qubits) // n
    for i in range(n):
        pool = _zero_other_coords(qubits[i * per:(i + 1) * per], n, q, i, rng)
        if len(pool) < 8 * q:
            raise InsufficientQubits(f"coordinate {i}: {len(pool)} sieved qubits, budget {need}")
        s[i] = _mle_phase(pool, q, i, rng)
    return SecretKey(s, q)


# ---------------------------------------------------------------- driver


def convert_samples(samples, specs, q: int, n: int, rng, threshold: float | None = None):
    """Run the conversion on every sample; returns (qubits, attempts)."""
    thr = default_threshold(n, q) if threshold is None else threshold
    pairs: dict = {}
    out = []
    for smp, spec in zip(samples, specs):
        pair = pairs.get(spec)
        if pair is None:
            pair = pairs[spec] = find_heavy_pair(spec, q, thr)
        qb = slwe_to_dcp(smp, pair, rng, q)
        if qb is not None:
            out.append(qb)
    return out


def _is_delta(spec) -> bool:
    return isinstance(spec, Tabulated) and len(spec.labels) == 1


def solve_slwe(samples: list[SlweSample], spec, q: int, n: int, rng: np.random.Generator,
               threshold: float | None = None) -> SecretKey:
    """Heavy pair, conversion, sieve.  ``spec`` may be one spec or one per sample."""
    specs = list(spec) if isinstance(spec, (list, tuple)) else [spec] * len(samples)
    if all(_is_delta(sp) for sp in specs):
        # errorless: the state is a basis vector, read it off and do linear algebra
        A, b = [], []
        for smp, sp in zip(samples, specs):
            lab, _ = measure(smp.state, 0, rng)
            A.append(smp.a)
            b.append((int(lab) - sp.labels[0]) % q)
            if len(A) >= 4 * n:
                x = solve_mod(np.array(A), np.array(b), q)
                if x is not None:
                    return SecretKey(x, q)
        raise InsufficientQubits("no full-rank subsystem among the samples")
    qubits = convert_samples(samples, specs, q, n, rng, threshold)
    return kuperberg_solve(qubits, q, n, rng)
