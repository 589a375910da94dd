"""Phase-space integrals, sandwich verdicts and Weyl-law fits.

All phase integrals are two dimensional over ``(k, y)`` with measure ``dk dy``.
The inner ``y`` integral of ``(lam - Psi)_+`` is done in closed form (its
integrand is ``mu - beta e^{uy} - gamma e^{-nuy}`` between two roots), leaving
a smooth one-dimensional ``k`` integral for adaptive quadrature.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import FitError, NumericError, ParameterError, RangeError, UnsupportedFamilyError
from .model import CoherentFrame, ModelParams, exponential_terms, frame_for
from .spectrum import (
    SpectrumResult,
    count_bounds_from_riesz,
    counting_function,
    heat_trace,
    riesz_mean,
    trusted_lambda,
    weyl_envelope,
)


class Variant(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    CLASSICAL = "classical"
    VOLUME = "volume"


@dataclass(frozen=True)
class PhaseIntegralReport:
    value: float
    error_estimate: float
    variant: Variant
    lam: float
    params: ModelParams
    frame: CoherentFrame | None = None


def leading_coefficient(params: ModelParams) -> float:
    """Limit of ``N(lam) / log^2 lam``: ``1/(pi b)^2`` or ``c_mn / (2 pi b)^2``."""
    if params.is_zeta:
        return 1.0 / (math.pi * params.b) ** 2
    return float(mn_constant(params.m, params.n)) / (2 * math.pi * params.b) ** 2


def mn_constant(m: int, n: int) -> Fraction:
    """``c_mn = (m + n + 1)^2 / (2 m n)`` as an exact rational."""
    return Fraction((m + n + 1) ** 2, 2 * m * n)


def quadrant_predictions(m: int, n: int) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """Leading coefficients (times ``(2 pi b)^2``) of the four quadrant integrals.

    Order: ``(k<=0, y>=0)``, ``(k>=0, y<=0)``, ``(k>=0, y>=0)``, ``(k<=0, y<=0)``.
    """
    return (Fraction(1), Fraction(1, 2 * m * n), Fraction(n + 2, 2 * m), Fraction(m + 2, 2 * n))


def quadrant_identity(m: int, n: int) -> bool:
    """``1 + 1/(2mn) + (n+2)/(2m) + (m+2)/(2n) == (m+n+1)^2/(2mn)`` in exact arithmetic."""
    return sum(quadrant_predictions(m, n)) == mn_constant(m, n)


def _weights(params: ModelParams, frame: CoherentFrame | None, variant: Variant) -> list[float]:
    terms = exponential_terms(params)
    if variant in (Variant.CLASSICAL, Variant.VOLUME):
        return [t.coef for t in terms]
    if frame is None:
        raise ParameterError(f"variant {variant.value} needs a coherent frame")
    if variant is Variant.UPPER:
        return [t.coef * frame.term_weight(t) for t in terms]
    return [t.coef / frame.term_weight(t) for t in terms]


def _slab(mu: float, beta: float, gamma: float, n: int, u: float, volume: bool) -> float:
    """``int (mu - beta e^{uy} - gamma e^{-nuy})_+ dy`` (or the length of its support)."""
    if mu <= 0:
        return 0.0
    # minimum of beta X + gamma X^{-n} over X = e^{uy}
    xstar = (n * gamma / beta) ** (1.0 / (n + 1))
    fmin = beta * xstar * (1 + 1.0 / n)
    if mu <= fmin:
        return 0.0
    if n == 1:
        disc = math.sqrt(mu * mu - 4 * beta * gamma)
        x2 = (mu + disc) / (2 * beta)
        x1 = 2 * gamma / (mu + disc)  # from x1 x2 = gamma / beta, free of cancellation
    else:
        f = lambda lx: beta * math.exp(lx) + gamma * math.exp(-n * lx) - mu  # noqa: E731
        ls = math.log(xstar)
        lo = ls
        while f(lo) < 0:
            lo -= max(1.0, abs(lo))
        hi = ls
        while f(hi) < 0:
            hi += max(1.0, abs(hi))
        x1 = math.exp(optimize.brentq(f, lo, ls, xtol=1e-15, rtol=1e-15))
        x2 = math.exp(optimize.brentq(f, ls, hi, xtol=1e-15, rtol=1e-15))
    width = (math.log(x2) - math.log(x1)) / u
    if volume:
        return width
    return mu * width - beta * (x2 - x1) / u + gamma * (x2 ** (-n) - x1 ** (-n)) / (n * u)


def phase_integral(
    params: ModelParams, frame: CoherentFrame | None, variant: Variant | str, lam: float, *, epsrel: float = 1e-10
) -> PhaseIntegralReport:
    """``int int (lam - Psi(k, y))_+ dk dy`` for the chosen symbol, or the volume of ``{Psi_cl <= lam}``."""
    variant = Variant(variant)
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam!r}")
    if params.is_zeta and params.zeta == 0:
        raise ParameterError("zeta = 0: the region {symbol < lam} has infinite area")
    u = 2 * math.pi * params.b
    w = _weights(params, frame, variant)
    volume = variant is Variant.VOLUME
    if params.is_zeta:
        a_minus, a_plus, beta, gamma = w
        n = 1
        kin = lambda k: a_minus * math.exp(-u * k) + a_plus * math.exp(u * k)  # noqa: E731
        slab = lambda k: _slab(lam - kin(k), beta, gamma, 1, u, volume)  # noqa: E731
        # support: kinetic part alone must stay below lam - 2 sqrt(beta gamma)
        top = lam - 2 * math.sqrt(beta * gamma)
        if top <= 2 * math.sqrt(a_minus * a_plus):
            return PhaseIntegralReport(0.0, 0.0, variant, lam, params, frame)
        disc = math.sqrt(top * top - 4 * a_minus * a_plus)
        k_lo = math.log(2 * a_minus / (top + disc)) / u
        k_hi = math.log((top + disc) / (2 * a_plus)) / u
    else:
        m, n = params.m, params.n
        alpha, beta, gamma = w

        def slab(k):
            return _slab(lam - alpha * math.exp(-u * k), beta, gamma * math.exp(u * m * k), n, u, volume)

        # lam - alpha e^{-uk} - F e^{rho k} with F e^{rho k} the minimum over y
        rho = u * m / (n + 1)
        F = beta * (1 + 1.0 / n) * (n * gamma / beta) ** (1.0 / (n + 1))
        g = lambda k: lam - alpha * math.exp(-u * k) - F * math.exp(rho * k)  # noqa: E731
        kstar = math.log(alpha * u / (F * rho)) / (u + rho)
        if g(kstar) <= 0:
            return PhaseIntegralReport(0.0, 0.0, variant, lam, params, frame)
        left = min(kstar, -math.log(lam / alpha) / u) - 1.0
        right = max(kstar, math.log(lam / F) / rho) + 1.0
        k_lo = optimize.brentq(g, left, kstar, xtol=1e-15)
        k_hi = optimize.brentq(g, kstar, right, xtol=1e-15)
    # the slab vanishes like (k - k_end)^{3/2} (sqrt for volume); cos-substitution smooths both ends
    c, h = (k_lo + k_hi) / 2, (k_hi - k_lo) / 2
    val, err = integrate.quad(lambda th: slab(c + h * math.cos(th)) * h * math.sin(th), 0.0, math.pi,
                              epsabs=0.0, epsrel=epsrel, limit=400)
    return PhaseIntegralReport(float(val), float(err), variant, lam, params, frame)


def phase_integral_function(params: ModelParams, frame: CoherentFrame | None, variant) -> Callable[[float], float]:
    return lambda lam: phase_integral(params, frame, variant, lam).value


# ---------------------------------------------------------------------------
# sandwich


class SandwichRow(NamedTuple):
    lam: float
    lower: float
    riesz: float
    upper: float
    budget: float
    verdict: bool


@dataclass(frozen=True)
class SandwichReport:
    rows: tuple[SandwichRow, ...]
    params: ModelParams

    @property
    def passed(self) -> bool:
        return all(r.verdict for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["lambda", "lower", "riesz", "upper", "verdict"])
        for r in self.rows:
            w.writerow([repr(r.lam), repr(r.lower), repr(r.riesz), repr(r.upper), "pass" if r.verdict else "fail"])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {"params": self.params.as_dict(), "rows": [r._asdict() for r in self.rows], "pass": self.passed}


def sandwich_check(spec: SpectrumResult, frame: CoherentFrame | None, lambdas: Sequence[float]) -> SandwichReport:
    """``lower <= riesz_mean <= upper`` at each ``lam`` within the numerical budget.

    The budget is the sum of the quadrature error estimates and the
    certificates of all eigenvalues below ``lam``: the Riesz mean moves by at
    most one unit per unit shift of each eigenvalue.
    """
    if spec.params is None:
        raise ParameterError("sandwich_check needs a spectrum tagged with its parameters")
    params = spec.params
    frame = frame or frame_for(params)
    lambdas = list(lambdas)
    if not lambdas:
        raise ParameterError("empty lambda grid")
    top = trusted_lambda(spec)
    for lam in lambdas:
        if lam > top:
            raise RangeError(f"lambda={lam:g} exceeds the trusted range (<= {top:g})")
    rows = []
    for lam in sorted(lambdas):
        lo = phase_integral(params, frame, Variant.LOWER, lam)
        hi = phase_integral(params, frame, Variant.UPPER, lam)
        riesz = riesz_mean(spec, lam)
        below = spec.certified < lam
        cert = float(np.sum(spec.certificates[: spec.certified_count][below]))
        budget = lo.error_estimate + hi.error_estimate + cert
        ok = lo.value - budget <= riesz <= hi.value + budget
        rows.append(SandwichRow(float(lam), lo.value, riesz, hi.value, budget, bool(ok)))
    return SandwichReport(tuple(rows), params)


# ---------------------------------------------------------------------------
# Weyl fits


@dataclass(frozen=True)
class WeylFit:
    """``riesz(lam) ~ A lam log^2 lam + B lam log lam + C lam`` on ``window``."""

    A: float
    B: float
    C: float
    window: tuple[float, float]
    residual: float
    points: int
    predicted: float | None = None

    @property
    def deviation(self) -> float | None:
        if self.predicted is None:
            return None
        return self.A / self.predicted - 1


MIN_FIT_POINTS = 30
#: scaled-design condition number beyond which the fit is refused
MAX_CONDITION = 1e8


def fit_riesz_model(lams: Sequence[float], values: Sequence[float]) -> tuple[np.ndarray, float]:
    """Least squares in the regressors ``lam log^2 lam, lam log lam, lam`` scaled to unit RMS."""
    lams = np.asarray(lams, dtype=float)
    values = np.asarray(values, dtype=float)
    if lams.size < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} sample points, got {lams.size}")
    L = np.log(lams)
    X = np.column_stack([lams * L * L, lams * L, lams])
    scale = np.sqrt(np.mean(X * X, axis=0))
    Xs = X / scale
    cond = np.linalg.cond(Xs)
    if not cond < MAX_CONDITION:
        raise FitError(f"fit design is ill-conditioned (condition number {cond:.2e}); widen the window")
    coef, *_ = np.linalg.lstsq(Xs, values, rcond=None)
    coef = coef / scale
    fitted = X @ coef
    resid = float(np.sqrt(np.mean((fitted - values) ** 2)) / np.sqrt(np.mean(values**2)))
    return coef, resid


def weyl_fit(spec: SpectrumResult, window: tuple[float, float] | None = None, points: int = 60) -> WeylFit:
    """Three-term Weyl fit of the Riesz mean on log-spaced points of ``window``."""
    top = trusted_lambda(spec)
    lo, hi = window if window is not None else (50.0, top)
    if not lo >= math.e:
        raise FitError(f"window must start at or above e, got {lo!r}")
    if hi > top:
        raise RangeError(f"window end {hi:g} exceeds the trusted range (<= {top:g})")
    if not hi > lo:
        raise FitError(f"empty fit window [{lo}, {hi}]")
    lams = np.geomspace(lo, hi, points)
    values = [riesz_mean(spec, lam) for lam in lams]
    (A, B, C), resid = fit_riesz_model(lams, values)
    pred = leading_coefficient(spec.params) if spec.params is not None else None
    return WeylFit(float(A), float(B), float(C), (float(lo), float(hi)), resid, points, pred)


def weyl_fit_function(f: Callable[[float], float], window: tuple[float, float], points: int = 60,
                      predicted: float | None = None) -> WeylFit:
    lo, hi = window
    if not lo >= math.e:
        raise FitError(f"window must start at or above e, got {lo!r}")
    lams = np.geomspace(lo, hi, points)
    (A, B, C), resid = fit_riesz_model(lams, [f(lam) for lam in lams])
    return WeylFit(float(A), float(B), float(C), (float(lo), float(hi)), resid, points, predicted)


# ---------------------------------------------------------------------------
# heat trace


class KaramataRow(NamedTuple):
    t: float
    value: float
    tail: float
    ratio: float
    usable: bool


@dataclass(frozen=True)
class KaramataReport:
    rows: tuple[KaramataRow, ...]
    band: float
    status: str  # "pass", "fail" or "precision"
    smallest_usable_t: float | None
    monotone: bool
    trend_passed: bool

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def karamata_check(spec: SpectrumResult, t_grid: Sequence[float], band: float = 0.25) -> KaramataReport:
    """Table of ``tr e^{-tH} / (C log^2 t)`` with ``C`` the Weyl coefficient.

    A row is usable when its tail bound stays below 10% of the value.  The
    trend passes when, over the last decade of usable ``t``, ``|ratio - 1|``
    is non-increasing as ``t`` decreases and ends within ``band``.  Any
    tail-dominated row turns the status into ``"precision"``, with
    ``smallest_usable_t`` naming how far the table can be trusted.
    """
    ts = sorted((float(t) for t in t_grid), reverse=True)
    if not ts or ts[-1] <= 0:
        raise ParameterError("t grid must be nonempty and positive")
    if any(t >= 1 for t in ts):
        raise ParameterError("t grid must lie in (0, 1) so that log^2 t > 0")
    coef = leading_coefficient(spec.params)
    env = None if spec.complete else weyl_envelope(spec)
    rows = []
    for t in ts:
        ht = heat_trace(spec, t, env)
        ratio = ht.value / (coef * math.log(t) ** 2)
        rows.append(KaramataRow(t, ht.value, ht.tail_bound, ratio, not ht.flagged))
    usable = [r for r in rows if r.usable]
    if not usable:
        return KaramataReport(tuple(rows), band, "precision", None, False, False)
    t_min = usable[-1].t
    final = [r for r in usable if r.t <= 10 * t_min]
    gaps = [abs(r.ratio - 1) for r in final]
    monotone = all(g2 <= g1 + 1e-12 for g1, g2 in zip(gaps, gaps[1:]))
    trend = monotone and gaps[-1] <= band
    if len(usable) < len(rows):
        status = "precision"
    else:
        status = "pass" if trend else "fail"
    return KaramataReport(tuple(rows), band, status, t_min, monotone, trend)


# ---------------------------------------------------------------------------
# quadrants (MN family)


class QuadrantTerm(NamedTuple):
    name: str
    value: float
    predicted: float
    error: float


def _log_quad(f, lo, hi):
    if hi <= lo:
        return 0.0, 0.0
    val, err = integrate.quad(lambda v: f(math.exp(v)) * math.exp(v), math.log(lo), math.log(hi),
                              epsabs=0.0, epsrel=1e-11, limit=400)
    return val, err


def _inner(lam_minus: float, a: float, c: float) -> float:
    # int_a^c (lam_minus - w) / w dw
    if c <= a:
        return 0.0
    return lam_minus * math.log(c / a) - (c - a)


def larger_root(lam: float, d: float, n: int) -> float:
    """Larger root of ``lam = d u^{-n} + u``."""
    f = lambda v: d * v ** (-n) + v - lam  # noqa: E731
    vmin = (n * d) ** (1.0 / (n + 1))
    if f(vmin) >= 0:
        raise NumericError(f"lam = d u^-n + u has no root for lam={lam!r}, d={d!r}")
    return optimize.brentq(f, vmin, lam, xtol=1e-14, rtol=1e-15)


def quadrant_asymptotics(params: ModelParams, frame: CoherentFrame, lam: float) -> tuple[QuadrantTerm, ...]:
    """The four quadrant bounds on the upper phase integral and their leading terms.

    With ``u = 2 pi b``:

    * ``k<=0, y>=0``: drop the mixed term, ``u^-2 int int (lam - u1 - u2)/(u1 u2)`` over ``u1 >= d1, u2 >= d2``;
    * ``k>=0, y<=0``: keep only the mixed term, ``(mn u^2)^-1 int_{d3}^{lam} int_1^{lam/u1} (lam - u1 u2)/(u1 u2)``;
    * ``k>=0, y>=0``: drop ``d1 e^{-uk}``, ``(m u^2)^-1 int_{d2}^{lt} int_{d4/u2^n}^{lam-u2} (lam-u1-u2)/(u1 u2)``
      with ``d4 = d3 d2^n`` and ``lt`` the larger root of ``lam = d4 u2^-n + u2``;
    * ``k<=0, y<=0``: the mirror image with ``d5 = d3 d1^m``.
    """
    if params.is_zeta:
        raise UnsupportedFamilyError("quadrant decomposition is defined for the MN family")
    m, n = params.m, params.n
    u = 2 * math.pi * params.b
    d1, d2 = frame.d1, frame.d2
    d3 = frame.d3 if frame.d3 is not None else d1 ** (m * m) * d2 ** (n * n)
    lead = lam * math.log(lam) ** 2 / u**2
    preds = [float(p) * lead for p in quadrant_predictions(m, n)]

    q2, e2 = _log_quad(lambda v: _inner(lam - v, d2, lam - v) / v, d1, lam - d2)
    q4, e4 = _log_quad(lambda v: lam / v * math.log(lam / v) - (lam / v - 1), d3, lam)
    d4 = d3 * d2**n
    lt = larger_root(lam, d4, n)
    q1, e1 = _log_quad(lambda v: _inner(lam - v, d4 * v ** (-n), lam - v) / v, d2, lt)
    d5 = d3 * d1**m
    lt3 = larger_root(lam, d5, m)
    q3, e3 = _log_quad(lambda v: _inner(lam - v, d5 * v ** (-m), lam - v) / v, d1, lt3)
    vals = [(q2 / u**2, e2 / u**2), (q4 / (m * n * u**2), e4 / (m * n * u**2)),
            (q1 / (m * u**2), e1 / (m * u**2)), (q3 / (n * u**2), e3 / (n * u**2))]
    names = ("k<=0,y>=0", "k>=0,y<=0", "k>=0,y>=0", "k<=0,y<=0")
    return tuple(QuadrantTerm(nm, v, p, e) for nm, (v, e), p in zip(names, vals, preds))


# ---------------------------------------------------------------------------
# count bracket and plot data


class BracketRow(NamedTuple):
    lam: float
    lower: float
    count: int
    upper: float
    verdict: bool


def count_bracket_check(spec: SpectrumResult, lambdas: Sequence[float]) -> tuple[BracketRow, ...]:
    """``count_bounds_from_riesz`` against ``counting_function`` at each ``lam``."""
    rows = []
    for lam in lambdas:
        b = count_bounds_from_riesz(lambda x: riesz_mean(spec, x), lam)
        n = counting_function(spec, lam)
        rows.append(BracketRow(float(lam), float(b.lower), n, float(b.upper), bool(b.lower <= n <= b.upper)))
    return tuple(rows)


def bracket_lambdas(spec: SpectrumResult, count: int = 10, lo: float = 3.0) -> np.ndarray:
    """Log-spaced ``lam`` whose Riesz argument ``(1 + tau0) lam`` is still trusted."""
    from .spectrum import solve_tau0

    top = trusted_lambda(spec)
    hi = top
    # mu = lam (1 + tau0(lam)) must stay trusted
    while hi * (1 + solve_tau0(hi)) > top:
        hi /= 1.05
    if hi <= lo:
        raise RangeError(f"trusted range (<= {top:g}) too short for a count bracket")
    return np.geomspace(lo, hi, count)


def counting_curve(spec: SpectrumResult, lambdas: Sequence[float]) -> list[tuple[float, float]]:
    """Plot-ready ``(lam, N(lam) / log^2 lam)`` pairs."""
    return [(float(lam), counting_function(spec, lam) / math.log(lam) ** 2) for lam in lambdas]
