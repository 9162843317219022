"""Error amplitudes and generators for the quantum LWE sample families."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .qsim import PureState, Register
from .zq_math import MIN_HALFWIDTH, TAIL_CUT, ParameterError, centered, rho_w, tail_loss


@dataclass(frozen=True)
class AmplitudeSpec:
    """Base class. Subclasses evaluate f(e) and know their integer support."""

    variant = "abstract"

    def __call__(self, e):
        raise NotImplementedError

    def support(self) -> np.ndarray:
        raise NotImplementedError

    def truncation_loss(self) -> float:
        return 0.0

    def table(self):
        lab = self.support()
        return lab, self(lab)

    def to_json(self) -> str:
        d = {"variant": self.variant}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class RealGaussian(AmplitudeSpec):
    sigma: float
    variant = "real_gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")

    def __call__(self, e):
        return rho_w(self.sigma, e).astype(complex)

    def support(self):
        h = math.floor(TAIL_CUT * self.sigma)
        return np.arange(-h, h + 1)

    def truncation_loss(self):
        return tail_loss(self.sigma, 0.0, self.support())


@dataclass(frozen=True)
class LinearPhaseGaussian(AmplitudeSpec):
    """rho_sigma(e) exp(2 pi i c e / q)."""

    sigma: float
    c: float
    q: int
    variant = "linear_phase_gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        return rho_w(self.sigma, e) * np.exp(2j * np.pi * self.c * e / self.q)

    def support(self):
        h = math.floor(TAIL_CUT * self.sigma)
        return np.arange(-h, h + 1)

    def truncation_loss(self):
        return tail_loss(self.sigma, 0.0, self.support())


@dataclass(frozen=True)
class ComplexGaussian(AmplitudeSpec):
    """rho_r(e) exp(-pi i e^2 / t); t = inf gives the real Gaussian."""

    r: float
    t: float
    variant = "complex_gaussian"

    def __post_init__(self):
        if not (self.r > 0 and self.t > 0):
            raise ParameterError("r and t must be positive")

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        ph = np.exp(-1j * np.pi * e * e / self.t) if math.isfinite(self.t) else 1.0
        return rho_w(self.r, e) * ph

    def support(self):
        h = math.floor(TAIL_CUT * self.r)
        return np.arange(-h, h + 1)

    def truncation_loss(self):
        return tail_loss(self.r, 0.0, self.support())


@dataclass(frozen=True)
class BoundedUniform(AmplitudeSpec):
    B: int
    variant = "bounded_uniform"

    def __post_init__(self):
        if not self.B > 0:
            raise ParameterError("B must be positive")

    def __call__(self, e):
        e = np.asarray(e)
        return np.where(np.abs(e) <= self.B, 1.0, 0.0).astype(complex)

    def support(self):
        return np.arange(-int(self.B), int(self.B) + 1)


@dataclass(frozen=True)
class Tabulated(AmplitudeSpec):
    labels: tuple = ()
    values: tuple = ()
    variant = "tabulated"

    def __post_init__(self):
        lab = tuple(int(x) for x in self.labels)
        val = tuple(complex(v) for v in self.values)
        if len(lab) != len(val) or not lab:
            raise ParameterError("tabulated amplitude needs matching nonempty labels and values")
        if not all(math.isfinite(v.real) and math.isfinite(v.imag) for v in val):
            raise ParameterError("tabulated entries must be finite")
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "values", val)

    def __call__(self, e):
        lut = dict(zip(self.labels, self.values))
        e = np.asarray(e)
        return np.vectorize(lambda x: lut.get(int(x), 0j), otypes=[complex])(e)

    def support(self):
        return np.array(self.labels, dtype=np.int64)

    def to_json(self):
        return json.dumps({"variant": self.variant, "labels": list(self.labels),
                           "re": [v.real for v in self.values], "im": [v.imag for v in self.values]},
                          sort_keys=True)


def delta() -> Tabulated:
    return Tabulated((0,), (1.0,))


def half_phase_gaussian(r: float) -> Tabulated:
    """Gaussian whose sign flips for negative inputs (prior-work comparison preset)."""
    h = math.floor(TAIL_CUT * r)
    e = np.arange(-h, h + 1)
    return Tabulated(tuple(e), tuple(rho_w(r, e) * np.where(e >= 0, 1.0, -1.0)))


def spec_from_json(obj) -> AmplitudeSpec:
    d = json.loads(obj) if isinstance(obj, str) else dict(obj)
    v = d.get("variant")
    if v == "real_gaussian":
        return RealGaussian(float(d["sigma"]))
    if v == "linear_phase_gaussian":
        return LinearPhaseGaussian(float(d["sigma"]), float(d["c"]), int(d["q"]))
    if v == "complex_gaussian":
        return ComplexGaussian(float(d["r"]), float(d["t"]))
    if v == "bounded_uniform":
        return BoundedUniform(int(d["B"]))
    if v == "tabulated":
        vals = [complex(a, b) for a, b in zip(d["re"], d.get("im", [0.0] * len(d["re"])))]
        return Tabulated(tuple(d["labels"]), tuple(vals))
    raise ParameterError(f"unknown amplitude variant {v!r}")


def eval_amplitude(spec: AmplitudeSpec, e):
    return spec(e)


# ---------------------------------------------------------------- samples


@dataclass(frozen=True)
class SecretKey:
    s: np.ndarray
    q: int

    def __post_init__(self):
        object.__setattr__(self, "s", centered(np.asarray(self.s, dtype=np.int64), self.q).astype(np.int64))

    def matches(self, other) -> bool:
        o = other.s if isinstance(other, SecretKey) else np.asarray(other)
        return bool(np.all(np.mod(self.s - o, self.q) == 0))

    @staticmethod
    def random(n: int, q: int, rng: np.random.Generator) -> "SecretKey":
        return SecretKey(rng.integers(0, q, n), q)


@dataclass(frozen=True)
class SlweSample:
    """Public data of one sample: vector a and its error state over Z_q."""

    a: np.ndarray
    state: PureState


@dataclass(frozen=True)
class HiddenPhase:
    y: np.ndarray
    theta: float
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SlwePhaseSample:
    """Sample with a phase exp(2 pi i e theta(y)) that solvers must not see.

    Solver code receives ``public_view()`` which is a plain ``SlweSample``
    plus the auxiliary y; the hidden record stays here.
    """

    a: np.ndarray
    y: np.ndarray
    state: PureState
    hidden: HiddenPhase | None = field(default=None, repr=False)

    def public_view(self) -> SlweSample:
        return SlweSample(self.a, self.state)


def _fold_state(q: int, shift: int, labels: np.ndarray, values: np.ndarray, loss: float) -> PureState:
    amps = np.zeros(q, dtype=complex)
    np.add.at(amps, (labels + shift) % q, values)
    return PureState.from_table([Register.cyclic(q)], amps, truncation_loss=loss)


def gen_slwe(n: int, q: int, spec: AmplitudeSpec, s: SecretKey, rng: np.random.Generator,
             a=None) -> SlweSample:
    a = rng.integers(0, q, n) if a is None else np.asarray(a, dtype=np.int64) % q
    b = int(np.dot(a, s.s)) % q
    lab, val = spec.table()
    return SlweSample(a, _fold_state(q, b, lab, val, spec.truncation_loss()))


def gen_slwe_phase(n: int, q: int, spec: AmplitudeSpec, s: SecretKey, record: HiddenPhase,
                   rng: np.random.Generator, a=None) -> SlwePhaseSample:
    if not math.isfinite(record.theta):
        raise ParameterError("theta must be finite")
    a = rng.integers(0, q, n) if a is None else np.asarray(a, dtype=np.int64) % q
    b = int(np.dot(a, s.s)) % q
    lab, val = spec.table()
    val = val * np.exp(2j * np.pi * lab * record.theta)
    st = _fold_state(q, b, lab, val, spec.truncation_loss())
    return SlwePhaseSample(a, np.asarray(record.y), st, record)


def gen_dcp_qubit(n: int, q: int, s: SecretKey, rng: np.random.Generator, a=None):
    a = rng.integers(0, q, n) if a is None else np.asarray(a, dtype=np.int64) % q
    ph = np.exp(2j * np.pi * (int(np.dot(a, s.s)) % q) / q)
    return a, PureState.from_table([Register.cyclic(2)], [1.0, ph])


def complex_gaussian_state(r: float, t: float, c: int = 0, halfwidth: float | None = None) -> PureState:
    """sum_x rho_r(x) exp(-pi i x^2/t) |x + c> on integer labels c - H..c + H."""
    if halfwidth is None:
        halfwidth = math.ceil(TAIL_CUT * r)
    if halfwidth < r * MIN_HALFWIDTH:
        raise ParameterError(f"halfwidth {halfwidth} below r*sqrt(64/2pi) = {r * MIN_HALFWIDTH:.1f}")
    H = int(math.floor(halfwidth))
    x = np.arange(-H, H + 1)
    amps = ComplexGaussian(r, t)(x)
    loss = tail_loss(r, 0.0, x)
    if loss > 1e-12:
        raise ParameterError(f"truncation loss {loss:.2e} above 1e-12")
    return PureState.from_table([Register.grid(x + int(c))], amps, truncation_loss=loss)
