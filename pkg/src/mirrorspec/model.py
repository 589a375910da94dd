"""Operator families, classical symbols and coherent-state symbols.

Both families are finite sums of Weyl-ordered exponentials ``c * exp(s P + t Q)``
with ``P = -i d/dx`` (so ``exp(-bP) psi(x) = psi(x + ib)``) and ``Q = x``.  The
phase-space variable ``k`` is the Fourier variable conjugate to ``x`` in
``exp(2 pi i k x)``, hence ``P`` has symbol ``2 pi k`` and the Weyl symbol of
``exp(sP + tQ)`` is ``exp(2 pi s k + t x)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, UnsupportedFamilyError


class Family(str, enum.Enum):
    ZETA = "zeta"
    MN = "mn"


@dataclass(frozen=True)
class ModelParams:
    """Which operator is being studied.

    ``Family.ZETA`` is ``U + U^-1 + V + zeta V^-1``; ``Family.MN`` is
    ``U + V + q^-mn U^-m V^-n`` with ``U = exp(-bP)``, ``V = exp(2 pi b Q)``.
    """

    family: Family
    b: float
    zeta: float = 1.0
    m: int = 1
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (self.b > 0 and math.isfinite(self.b)):
            raise ParameterError(f"b must be positive and finite, got {self.b!r}")
        if self.family is Family.ZETA:
            if not (self.zeta >= 0 and math.isfinite(self.zeta)):
                raise ParameterError(f"zeta must be nonnegative, got {self.zeta!r}")
        else:
            if int(self.m) != self.m or int(self.n) != self.n or self.m < 1 or self.n < 1:
                raise ParameterError(f"m, n must be positive integers, got ({self.m}, {self.n})")
            object.__setattr__(self, "m", int(self.m))
            object.__setattr__(self, "n", int(self.n))

    @classmethod
    def zeta_family(cls, b: float, zeta: float = 1.0) -> ModelParams:
        return cls(Family.ZETA, b=b, zeta=zeta)

    @classmethod
    def mn_family(cls, b: float, m: int = 1, n: int = 1) -> ModelParams:
        return cls(Family.MN, b=b, m=m, n=n)

    @property
    def is_zeta(self) -> bool:
        return self.family is Family.ZETA

    @property
    def q(self) -> complex:
        return complex(np.exp(1j * np.pi * self.b**2))

    @property
    def spectral_floor(self) -> float:
        """Operator lower bound known a priori (2 for H(zeta), 0 for H_mn)."""
        return 2.0 if self.is_zeta else 0.0

    @property
    def has_discrete_spectrum(self) -> bool:
        return not (self.is_zeta and self.zeta == 0)

    def as_dict(self) -> dict:
        if self.is_zeta:
            return {"family": self.family.value, "b": self.b, "zeta": self.zeta}
        return {"family": self.family.value, "b": self.b, "m": self.m, "n": self.n}

    def label(self) -> str:
        if self.is_zeta:
            return f"H(zeta={self.zeta:g}), b={self.b:g}"
        return f"H_{{{self.m},{self.n}}}, b={self.b:g}"

    @classmethod
    def from_dict(cls, d: dict) -> ModelParams:
        fam = Family(d["family"])
        if fam is Family.ZETA:
            return cls.zeta_family(float(d["b"]), float(d.get("zeta", 1.0)))
        return cls.mn_family(float(d["b"]), int(d.get("m", 1)), int(d.get("n", 1)))


class ExpTerm(NamedTuple):
    """``coef * exp(s P + t Q)``."""

    s: float
    t: float
    coef: float


def exponential_terms(params: ModelParams) -> list[ExpTerm]:
    """Decompose the operator into Weyl-ordered exponentials.

    The mixed term of the MN family uses ``q^-mn U^-m V^-n = exp(bmP - 2 pi b n Q)``.
    """
    b = params.b
    if params.is_zeta:
        terms = [ExpTerm(-b, 0.0, 1.0), ExpTerm(b, 0.0, 1.0), ExpTerm(0.0, 2 * np.pi * b, 1.0)]
        if params.zeta > 0:
            terms.append(ExpTerm(0.0, -2 * np.pi * b, params.zeta))
        return terms
    return [
        ExpTerm(-b, 0.0, 1.0),
        ExpTerm(0.0, 2 * np.pi * b, 1.0),
        ExpTerm(b * params.m, -2 * np.pi * b * params.n, 1.0),
    ]


class PhasePoint(NamedTuple):
    k: float
    y: float


@dataclass(frozen=True)
class CoherentFrame:
    """Gaussian window ``g(x) = (a/pi)^(1/4) exp(-a x^2 / 2)`` and its constants."""

    a: float
    d1: float
    d2: float
    d3: float | None = None

    def term_weight(self, term: ExpTerm) -> float:
        # Gaussian smoothing of exp(2 pi s k + t y) by the Wigner function of g.
        return math.exp(-(term.s**2) * self.a / 4 - term.t**2 / (4 * self.a))


DEFAULT_A = 2 * np.pi


def coherent_constants(b: float, a: float = DEFAULT_A, m: int | None = None, n: int | None = None) -> CoherentFrame:
    """Build the coherent frame for window exponent ``a``.

    ``d1 = exp(-a b^2 / 4)``, ``d2 = exp(-(pi b)^2 / a)`` and, when ``(m, n)`` is
    given, ``d3 = d1^(m^2) d2^(n^2)``.
    """
    if not (a > 0 and math.isfinite(a)):
        raise ParameterError(f"window exponent a must be positive, got {a!r}")
    if not (b > 0 and math.isfinite(b)):
        raise ParameterError(f"b must be positive, got {b!r}")
    d1 = math.exp(-a * b * b / 4)
    d2 = math.exp(-((math.pi * b) ** 2) / a)
    d3 = None
    if m is not None and n is not None:
        d3 = d1 ** (m * m) * d2 ** (n * n)
    return CoherentFrame(a=a, d1=d1, d2=d2, d3=d3)


def frame_for(params: ModelParams, a: float = DEFAULT_A) -> CoherentFrame:
    if params.is_zeta:
        return coherent_constants(params.b, a)
    return coherent_constants(params.b, a, params.m, params.n)


def _symbol_sum(params: ModelParams, k, y, weights) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(k, y).shape)
    for term, w in zip(exponential_terms(params), weights):
        out = out + term.coef * w * np.exp(2 * np.pi * term.s * k + term.t * y)
    return out


def classical_symbol(params: ModelParams, k, y):
    """Weyl symbol of the operator at phase point(s) ``(k, y)``.

    Zeta family: ``2 cosh(2 pi b k) + exp(2 pi b y) + zeta exp(-2 pi b y)``.
    MN family: ``exp(-2 pi b k) + exp(2 pi b y) + exp(2 pi b (m k - n y))``.
    """
    return _symbol_sum(params, k, y, [1.0] * len(exponential_terms(params)))


def upper_symbol(params: ModelParams, frame: CoherentFrame, k, y):
    """d-weighted symbol whose anti-Wick quantization is the operator."""
    weights = [frame.term_weight(t) for t in exponential_terms(params)]
    return _symbol_sum(params, k, y, weights)


def lower_symbol(params: ModelParams, frame: CoherentFrame, k, y):
    """Coherent-state expectation ``<H e_ky, e_ky>`` (each weight d replaced by 1/d)."""
    weights = [1.0 / frame.term_weight(t) for t in exponential_terms(params)]
    return _symbol_sum(params, k, y, weights)


def symbol_variant(params: ModelParams, frame: CoherentFrame, variant: str, k, y):
    if variant == "upper":
        return upper_symbol(params, frame, k, y)
    if variant == "lower":
        return lower_symbol(params, frame, k, y)
    return classical_symbol(params, k, y)


def mn_center(params: ModelParams) -> float:
    """Minimizer in ``x`` of the MN classical symbol at ``k = 0``."""
    n = params.n
    return math.log(n) / (2 * np.pi * params.b * (n + 1))


def minorant_constants(params: ModelParams, frame: CoherentFrame, beta: float = 0.5) -> tuple[float, float]:
    """Constants ``(c1, c2)`` with ``Psi(k, y) > c1 (e^{-c2 k} + e^{c2 k} + e^{-c2 y} + e^{c2 y})``.

    ``Psi`` is the upper symbol of ``H_mn``.  Quadrant by quadrant, with ``u = 2 pi b``:

    * ``k <= 0 <= y``: drop the mixed term; needs ``c2 <= u`` and ``c1 <= min(d1, d2) / 2``.
    * ``y <= 0 <= k``: ``e^{A+B} >= (e^A + e^B)/2`` on the mixed term; needs
      ``c2 <= u min(m, n)`` and ``c1 <= d3 / 4``.
    * ``k, y >= 0``: split on ``beta m k >= n y``; needs ``c2 <= u m (1 - beta)``,
      ``c2 <= u beta m / n`` and ``c1 <= min(d2, d3) / 4``.
    * ``k, y <= 0``: mirror image with ``m <-> n`` and ``d1 <-> d2``.

    Every case drops a strictly positive term, so the inequality is strict.
    """
    if params.is_zeta:
        raise UnsupportedFamilyError("minorant constants are defined for the MN family only")
    if not 0 < beta < 1:
        raise ParameterError(f"split parameter beta must lie in (0, 1), got {beta}")
    m, n = params.m, params.n
    u = 2 * np.pi * params.b
    d3 = frame.d3 if frame.d3 is not None else frame.d1 ** (m * m) * frame.d2 ** (n * n)
    c2 = u * min(1.0, m, n, m * (1 - beta), n * (1 - beta), beta * m / n, beta * n / m)
    c1 = min(frame.d1, frame.d2, d3) / 4
    return c1, c2


def minorant(c1: float, c2: float, k, y):
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    return c1 * (2 * np.cosh(c2 * k) + 2 * np.cosh(c2 * y))
