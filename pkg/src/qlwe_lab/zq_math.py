"""Modular arithmetic, Gaussian functions, sampling and small lattice helpers.

Conventions used everywhere in the package:

* residues mod q are represented in the centered range (-q/2, q/2];
* ``round_half_up`` sends a + 1/2 to a + 1;
* rounding to the nearest multiple of q breaks ties upward as well;
* logarithms in probability bounds are natural.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# rho drops below 1e-16 of its peak beyond this many widths
TAIL_CUT = math.sqrt(16 * math.log(10) / math.pi)
# the minimum halfwidth multiplier accepted for Gaussian state tables
MIN_HALFWIDTH = math.sqrt(64 / (2 * math.pi))

ENUM_CAP = 1 << 22


class ParameterError(ValueError):
    """Raised when parameters are outside what a routine can handle."""


@dataclass(frozen=True)
class Modulus:
    q: int
    factors: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.q < 2:
            raise ParameterError(f"modulus must be >= 2, got {self.q}")
        if self.factors is not None:
            fs = tuple(int(f) for f in self.factors)
            object.__setattr__(self, "factors", fs)
            if math.prod(fs) != self.q:
                raise ParameterError(f"factors {fs} do not multiply to {self.q}")
            for a, b in itertools.combinations(fs, 2):
                if math.gcd(a, b) != 1:
                    raise ParameterError(f"factors {a} and {b} are not coprime")


@dataclass(frozen=True)
class GaussianParam:
    width: float
    center: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ParameterError(f"width must be positive, got {self.width}")


@dataclass(frozen=True)
class CovarianceSpec:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ParameterError("covariance must be square")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ParameterError("invalid covariance: not symmetric")
        if np.linalg.eigvalsh(m).min() <= 1e-10:
            raise ParameterError("invalid covariance: not positive definite")
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CosetGrid:
    """Points offset + k*step with |point| <= halfwidth."""

    step: float
    offset: float
    halfwidth: float

    def __post_init__(self):
        if not self.step > 0 or not self.halfwidth > 0:
            raise ParameterError("step and halfwidth must be positive")
        if len(self.points()) == 0:
            raise ParameterError("grid support is empty")

    def points(self) -> np.ndarray:
        lo = math.ceil((-self.halfwidth - self.offset) / self.step - 1e-9)
        hi = math.floor((self.halfwidth - self.offset) / self.step + 1e-9)
        return self.offset + self.step * np.arange(lo, hi + 1)


# ---------------------------------------------------------------- modular


def centered(x, q: int):
    """Reduce into (-q/2, q/2]."""
    r = np.mod(x, q)
    return np.where(r > q / 2, r - q, r) if np.ndim(r) else (r - q if r > q / 2 else r)


def round_half_up(a):
    return np.floor(np.asarray(a) + 0.5)


def round_to_multiple(a, q: float):
    """Nearest multiple of q, ties upward."""
    return q * np.floor(np.asarray(a) / q + 0.5)


def crt_combine(residues: Sequence[tuple[int, int]]) -> int:
    """Unique x in [0, prod m) with x = v mod m for every (v, m)."""
    mods = [int(m) for _, m in residues]
    for a, b in itertools.combinations(mods, 2):
        if math.gcd(a, b) != 1:
            raise ParameterError(f"moduli {a} and {b} are not coprime")
    M = math.prod(mods)
    x = 0
    for v, m in residues:
        Mi = M // m
        x += int(v) * Mi * pow(Mi, -1, m)
    return x % M


def factor_prime_powers(n: int) -> list[tuple[int, int]]:
    """Return [(p, p**k), ...] for the prime-power factorisation of n."""
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            pk = 1
            while n % p == 0:
                n //= p
                pk *= p
            out.append((p, pk))
        p += 1
    if n > 1:
        out.append((n, n))
    return out


def _solve_prime_power(M: np.ndarray, y: np.ndarray, p: int, pk: int):
    """Row-reduce M x = y mod p**k using unit pivots only.

    Returns the solution, or None when some column has no unit pivot
    (treated as rank deficient) or the system is inconsistent.
    """
    M = np.array(M, dtype=np.int64) % pk
    y = np.array(y, dtype=np.int64) % pk
    rows, cols = M.shape
    aug = np.concatenate([M, y[:, None]], axis=1)
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if aug[i, c] % p:
                piv = i
                break
        if piv is None:
            return None
        aug[[r, piv]] = aug[[piv, r]]
        inv = pow(int(aug[r, c]), -1, pk)
        aug[r] = (aug[r] * inv) % pk
        for i in range(rows):
            if i != r and aug[i, c]:
                aug[i] = (aug[i] - aug[i, c] * aug[r]) % pk
        r += 1
    if np.any(aug[cols:, -1] % pk):
        return None
    return aug[:cols, -1] % pk


def solve_mod(M: np.ndarray, y: np.ndarray, q: int):
    """Solve M x = y (mod q) for M with at least as many rows as columns.

    Works per prime-power factor of q and recombines by CRT.  Returns None
    when the system is rank deficient modulo some prime or inconsistent.
    """
    parts = []
    for p, pk in factor_prime_powers(q):
        x = _solve_prime_power(M, y, p, pk)
        if x is None:
            return None
        parts.append((x, pk))
    if len(parts) == 1:
        return parts[0][0] % q
    cols = M.shape[1]
    return np.array([crt_combine([(int(x[i]), pk) for x, pk in parts]) for i in range(cols)],
                    dtype=np.int64)


def lambda1_inf_check(A: np.ndarray, q: int) -> bool:
    """True iff every nonzero s gives ||A^T s mod q||_inf >= q/4 (centered)."""
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    if q ** n > ENUM_CAP:
        raise ParameterError(f"q^n = {q ** n} exceeds enumeration cap {ENUM_CAP}; use smaller n or q")
    S = np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64)[1:]
    V = centered(S @ A, q)
    return bool(np.all(np.abs(V).max(axis=1) >= q / 4))


# ---------------------------------------------------------------- Gaussians


def rho(param: GaussianParam, x):
    """exp(-pi (x - c)^2 / w^2); works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    return np.exp(-np.pi * (x - param.center) ** 2 / param.width ** 2)


def rho_w(width: float, x, center: float = 0.0):
    """Scalar-width shorthand for rho, elementwise."""
    x = np.asarray(x, dtype=float) - center
    return np.exp(-np.pi * x ** 2 / width ** 2)


def rho_vec(width: float, x) -> np.ndarray:
    """Gaussian of the euclidean norm along the last axis."""
    x = np.asarray(x, dtype=float)
    return np.exp(-np.pi * np.sum(x * x, axis=-1) / width ** 2)


def rho_cov(cov: CovarianceSpec, x) -> float:
    """exp(-pi x^T Sigma^{-1} x)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cov.dimension:
        raise ParameterError("vector length does not match covariance dimension")
    y = np.linalg.solve(cov.matrix, x.T).T
    return np.exp(-np.pi * np.sum(x * y, axis=-1))


def gaussian_support(width: float, center: float = 0.0, step: float = 1.0, offset: float = 0.0,
                     cut: float = TAIL_CUT) -> np.ndarray:
    """Grid points offset + k*step within cut*width of center."""
    lo = math.ceil((center - cut * width - offset) / step)
    hi = math.floor((center + cut * width - offset) / step)
    return offset + step * np.arange(lo, hi + 1)


def tail_loss(width: float, center: float, points: np.ndarray, step: float = 1.0,
              squared: bool = True) -> float:
    """Fraction of (squared) Gaussian mass on the grid that lies outside points."""
    p = 2.0 if squared else 1.0
    lo, hi = float(points.min()), float(points.max())
    span = max(hi - lo, 4 * width) + 8 * width
    left = lo - step * np.arange(1, int(span / step) + 2)
    right = hi + step * np.arange(1, int(span / step) + 2)
    w_in = np.sum(rho_w(width, points, center) ** p)
    w_out = np.sum(rho_w(width, left, center) ** p) + np.sum(rho_w(width, right, center) ** p)
    return float(w_out / (w_in + w_out))


def dft_amplitude(labels, values, q: int) -> np.ndarray:
    """g(j) = q^{-1/2} sum_e f(e) w_q^{je} for j = 0..q-1."""
    labels = np.asarray(labels, dtype=np.int64)
    values = np.asarray(values, dtype=complex)
    if labels.size == 0:
        raise ParameterError("empty amplitude support")
    folded = np.zeros(q, dtype=complex)
    np.add.at(folded, labels % q, values)
    # ifft carries the positive-exponent kernel and a 1/q factor
    return np.fft.ifft(folded) * math.sqrt(q)


def discrete_gaussian_table(grid: CosetGrid, param: GaussianParam, squared: bool = False):
    pts = grid.points()
    w = rho(param, pts)
    if squared:
        w = w * w
    tot = w.sum()
    if not tot > 0:
        raise ParameterError("Gaussian mass underflows on the truncated support")
    return pts, w / tot


def discrete_gaussian_sample(grid: CosetGrid, param: GaussianParam, rng: np.random.Generator,
                             size=None, squared: bool = False):
    """Table-inversion sampler for D_{grid, width} (probability ~ rho, or rho^2 if squared)."""
    pts, p = discrete_gaussian_table(grid, param, squared)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return pts[np.minimum(idx, len(pts) - 1)]


def sample_dgauss_z(width: float, rng: np.random.Generator, size=None, center: float = 0.0,
                    squared: bool = False):
    """D_{Z, width} around center, truncated at the standard tail cut."""
    eff = width / math.sqrt(2) if squared else width
    hw = TAIL_CUT * eff + abs(center) + 1
    grid = CosetGrid(1.0, 0.0, hw)
    return discrete_gaussian_sample(grid, GaussianParam(width, center), rng, size, squared)


# ---------------------------------------------------------------- lattices


def lattice_points(basis: np.ndarray, radius: float, center=None) -> np.ndarray:
    """All points B k (columns of B are basis vectors) within radius of center."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    d = B.shape[0]
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    k0 = np.linalg.solve(B, c)
    # coefficient bound from the smallest singular value
    smin = np.linalg.svd(B, compute_uv=False).min()
    K = int(math.ceil(radius / smin)) + 1
    rng_ = [np.arange(math.floor(k0[i]) - K, math.ceil(k0[i]) + K + 1) for i in range(d)]
    ks = np.array(list(itertools.product(*rng_)), dtype=float)
    pts = ks @ B.T
    keep = np.linalg.norm(pts - c, axis=1) <= radius
    return pts[keep]


def dual_basis(basis: np.ndarray) -> np.ndarray:
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    return np.linalg.inv(B).T


def nearest_lattice_point(basis: np.ndarray, u) -> np.ndarray:
    """kappa_L(u) by enumeration around the Babai point (dim <= 2)."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    k0 = np.round(np.linalg.solve(B, u))
    best, bd = None, np.inf
    for dk in itertools.product(range(-2, 3), repeat=B.shape[0]):
        p = B @ (k0 + np.array(dk))
        dd = np.linalg.norm(p - u)
        if dd < bd - 1e-12:
            best, bd = p, dd
    return best


def gaussian_mass(basis: np.ndarray, width: float, center=None, exclude_zero: bool = False) -> float:
    """sum over lattice points of rho_width(x - center)."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    c = np.zeros(B.shape[0]) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    pts = lattice_points(B, TAIL_CUT * width * 1.5 + 1e-9, c)
    if exclude_zero:
        pts = pts[np.linalg.norm(pts, axis=1) > 1e-12]
    return float(np.sum(rho_vec(width, pts - c)))


def smoothing_parameter(basis: np.ndarray, eps: float, lo: float = 1e-3, hi: float = 1e3) -> float:
    """eta_eps(L): smallest s with rho_{1/s}(L* minus 0) <= eps, by bisection."""
    D = dual_basis(basis)

    def excess(s):
        return gaussian_mass(D, 1.0 / s, exclude_zero=True) - eps

    if excess(hi) > 0:
        raise ParameterError("smoothing parameter above bisection range")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return hi


def banaszczyk_bound(t: float, n: int) -> float:
    """(t sqrt(2 pi e) exp(-pi t^2))^n, the tail factor for radius t sqrt(n)."""
    return (t * math.sqrt(2 * math.pi * math.e) * math.exp(-math.pi * t * t)) ** n


# ---------------------------------------------------------------- I/O


def amplitude_table_to_csv(labels: Iterable[int], values: Iterable[complex]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "re", "im"])
    for i, v in zip(labels, values):
        w.writerow([int(i), repr(float(np.real(v))), repr(float(np.imag(v)))])
    return buf.getvalue()


def amplitude_table_from_csv(text: str):
    rows = list(csv.DictReader(io.StringIO(text)))
    labels = np.array([int(r["index"]) for r in rows], dtype=np.int64)
    values = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return labels, values
