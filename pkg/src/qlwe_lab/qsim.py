"""Dense pure-state simulator over labelled multi-register domains."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

DEFAULT_CAP = 1 << 24


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class Register:
    """A cyclic Z_q register (labels 0..q-1) or a finite grid of labels."""

    kind: str
    labels: np.ndarray = field(repr=False)
    q: int | None = None

    @staticmethod
    def cyclic(q: int) -> "Register":
        return Register("cyclic", np.arange(q), int(q))

    @staticmethod
    def grid(labels) -> "Register":
        lab = np.asarray(labels)
        if lab.size == 0:
            raise StateError("empty grid register")
        return Register("grid", lab)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index_of(self, label) -> int:
        if self.kind == "cyclic":
            return int(label) % self.q
        hit = np.nonzero(np.isclose(self.labels, label, rtol=0, atol=1e-9))[0]
        if hit.size == 0:
            raise StateError(f"label {label} not in register")
        return int(hit[0])


@dataclass(frozen=True)
class RegisterShape:
    registers: tuple[Register, ...]
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "registers", tuple(self.registers))
        if self.dimension > self.cap:
            raise StateError(
                f"state dimension {self.dimension} exceeds cap {self.cap}; "
                f"register sizes {self.dims} must be reduced")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(r.size for r in self.registers)

    @property
    def dimension(self) -> int:
        return math.prod(self.dims)

    def same_as(self, other: "RegisterShape") -> bool:
        if self.dims != other.dims:
            return False
        return all(a.kind == b.kind and np.array_equal(a.labels, b.labels)
                   for a, b in zip(self.registers, other.registers))


@dataclass(frozen=True)
class PureState:
    shape: RegisterShape
    amplitudes: np.ndarray = field(repr=False)
    truncation_loss: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.size != self.shape.dimension:
            raise StateError("amplitude length does not match shape")
        if not np.linalg.norm(a) > 0:
            raise StateError("zero state")
        if not 0 <= self.truncation_loss < 0.5:
            raise StateError("truncation loss out of range")
        object.__setattr__(self, "amplitudes", a)

    @staticmethod
    def from_table(registers: Sequence[Register], amps, truncation_loss: float = 0.0,
                   normalize: bool = True) -> "PureState":
        a = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            a = a / np.linalg.norm(a)
        return PureState(RegisterShape(tuple(registers)), a, truncation_loss)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.shape.dims)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        return PureState(self.shape, self.amplitudes / self.norm, self.truncation_loss)

    def with_amplitudes(self, amps, normalize: bool = False) -> "PureState":
        a = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            a = a / np.linalg.norm(a)
        return PureState(self.shape, a, self.truncation_loss)

    def labels(self, register: int = 0) -> np.ndarray:
        return self.shape.registers[register].labels

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = len(self.shape.registers)
        w.writerow([f"label{i}" for i in range(k)] + ["re", "im"])
        for idx in np.ndindex(*self.shape.dims):
            v = self.tensor[idx]
            labs = [self.shape.registers[i].labels[j] for i, j in enumerate(idx)]
            w.writerow([repr(x.item()) if hasattr(x, "item") else x for x in labs]
                       + [repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()


@dataclass
class Ensemble:
    members: list[tuple[float, PureState]]

    def __post_init__(self):
        p = np.array([m[0] for m in self.members], dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
            raise StateError("ensemble probabilities must be nonnegative and sum to 1")

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([m[0] for m in self.members])


def _move(a: np.ndarray, register: int) -> np.ndarray:
    return np.moveaxis(a, register, 0)


def qft(state: PureState, register: int = 0, inverse: bool = False) -> PureState:
    """Fourier transform over Z_q on one cyclic register."""
    reg = state.shape.registers[register]
    if reg.kind != "cyclic":
        raise StateError("QFT needs a cyclic register")
    q = reg.q
    t = state.tensor
    if inverse:
        out = np.fft.fft(t, axis=register) / math.sqrt(q)
    else:
        out = np.fft.ifft(t, axis=register) * math.sqrt(q)
    return state.with_amplitudes(out)


def overlap(phi: PureState, psi: PureState) -> complex:
    if not phi.shape.same_as(psi.shape):
        raise StateError("shape mismatch")
    return complex(np.vdot(phi.amplitudes, psi.amplitudes))


def fidelity_amplitude(phi: PureState, psi: PureState) -> float:
    """|<phi|psi>| / (|phi| |psi|), global phase ignored."""
    return abs(overlap(phi, psi)) / (phi.norm * psi.norm)


def trace_distance_vectors(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise StateError("zero vector")
    f = min(1.0, abs(np.vdot(u, v)) / (nu * nv))
    return math.sqrt(max(0.0, 1.0 - f * f))


def trace_distance_pure(phi: PureState, psi: PureState) -> float:
    if not phi.shape.same_as(psi.shape):
        raise StateError("shape mismatch")
    return trace_distance_vectors(phi.amplitudes, psi.amplitudes)


def marginal(state: PureState, register: int = 0) -> np.ndarray:
    p = np.abs(_move(state.tensor, register)) ** 2
    p = p.reshape(p.shape[0], -1).sum(axis=1)
    return p / p.sum()


def rejection_sample(state: PureState, gamma, rng: np.random.Generator, register: int = 0):
    """Quantum rejection sampling with acceptance amplitudes gamma on one register.

    Returns (new_state or None, M) where M = sum gamma^2 |f|^2.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (state.shape.dims[register],):
        raise StateError("gamma must be a table over the register")
    if np.any(gamma < 0) or np.any(gamma > 1):
        raise StateError("gamma must lie in [0, 1]")
    t = _move(state.tensor, register) / state.norm
    shp = (-1,) + (1,) * (t.ndim - 1)
    out = t * gamma.reshape(shp)
    M = float(np.sum(np.abs(out) ** 2))
    if rng.random() >= M:
        return None, M
    out = np.moveaxis(out, 0, register) / math.sqrt(M)
    return state.with_amplitudes(out), M


def _collapse(state: PureState, register: int, idx: int) -> PureState:
    t = _move(state.tensor, register)
    out = np.zeros_like(t)
    out[idx] = t[idx]
    return state.with_amplitudes(np.moveaxis(out, 0, register), normalize=True)


def measure(state: PureState, register: int, rng: np.random.Generator):
    """Computational-basis measurement; returns (label, collapsed state)."""
    p = marginal(state, register)
    idx = int(rng.choice(len(p), p=p))
    return state.shape.registers[register].labels[idx], _collapse(state, register, idx)


def measure_in_basis(state: PureState, register: int, basis: np.ndarray, rng: np.random.Generator,
                     check: bool = True):
    """Measure one register in the orthonormal basis given by the rows of ``basis``.

    Returns (basis index, collapsed state).
    """
    B = np.asarray(basis, dtype=complex)
    d = state.shape.dims[register]
    if B.shape != (d, d):
        raise StateError("basis must be a square table over the register")
    if check and np.abs(B @ B.conj().T - np.eye(d)).max() > 1e-10:
        raise StateError("basis rows are not orthonormal")
    t = _move(state.tensor, register)
    flat = t.reshape(d, -1)
    coef = B.conj() @ flat  # row k: <b_k| applied to the register
    p = np.sum(np.abs(coef) ** 2, axis=1)
    p = p / p.sum()
    k = int(rng.choice(d, p=p))
    out = np.outer(B[k], coef[k]).reshape(t.shape)
    return k, state.with_amplitudes(np.moveaxis(out, 0, register), normalize=True)


def apply_relabel_phase(state: PureState, register: int,
                        mapping: Mapping[int, tuple[int, complex]] | Callable) -> PureState:
    """Move index i of a register to index mapping[i][0] with phase mapping[i][1].

    Indices absent from the mapping are left in place.  The map must be
    injective on the support of the state.
    """
    t = _move(state.tensor, register)
    d = t.shape[0]
    support = [i for i in range(d) if np.any(t[i] != 0)]
    out = np.zeros_like(t)
    used = set()
    for i in support:
        if callable(mapping):
            j, ph = mapping(i)
        else:
            j, ph = mapping.get(i, (i, 1.0))
        if abs(abs(ph) - 1) > 1e-9:
            raise StateError("relabel phases must have unit modulus")
        if j in used:
            raise StateError("relabel map is not injective on the support")
        used.add(j)
        out[j] = t[i] * ph
    return state.with_amplitudes(np.moveaxis(out, 0, register))


def split_register(state: PureState, register: int, t: int):
    """View a grid register of integer labels x as (floor(x/t), x mod t).

    Returns (high labels, (K, t) amplitude matrix) for a single-register state.
    Missing (k, y) cells are zero.
    """
    if len(state.shape.registers) != 1 or register != 0:
        raise StateError("split_register expects a one-register state")
    x = np.round(state.labels(0)).astype(np.int64)
    k = np.floor_divide(x, t)
    y = x - k * t
    ks = np.arange(k.min(), k.max() + 1)
    mat = np.zeros((len(ks), t), dtype=complex)
    mat[k - ks[0], y] = state.amplitudes
    return ks, mat
