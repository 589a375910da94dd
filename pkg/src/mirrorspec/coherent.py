"""Coherent-state transform and phase-space verification of the operator identities.

The transform of ``psi`` with window ``g(x) = (a/pi)^(1/4) exp(-a x^2/2)`` is

    psi~(k, y) = int exp(-2 pi i k x) g(x - y) psi(x) dx.

Two evaluation paths exist: adaptive quadrature at a single phase point, and a
trapezoid rule on a rectangular ``(k, y)`` grid for the two-dimensional
integrals.  For these entire, Gaussian-decaying integrands the trapezoid rule
converges geometrically, which is what makes the ``1e-8`` Plancherel and
``1e-6`` quadratic-form contracts cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NumericError, ParameterError
from .model import (
    CoherentFrame,
    ModelParams,
    PhasePoint,
    exponential_terms,
    lower_symbol,
    upper_symbol,
)
from .quantization import OscillatorBasisSpec, build_matrix_oscillator

#: relative size of the phase-space integrand tolerated on the edge of the box
EDGE_TOL = 1e-11


def oscillator_functions(basis: OscillatorBasisSpec, x) -> np.ndarray:
    """Basis functions at (possibly complex) points ``x``, shape ``(size, len(x))``.

    ``psi_j(x) = exp(2 pi i momentum x) exp(i shear (x-c)^2/2) phi_j(x - c)`` with
    ``phi_j`` the normalized Hermite functions of frequency ``omega``.
    """
    x = np.atleast_1d(np.asarray(x))
    w = basis.omega
    u = x - basis.center
    out = np.empty((basis.size, x.size), dtype=complex)
    out[0] = (w / np.pi) ** 0.25 * np.exp(-w * u * u / 2)
    if basis.size > 1:
        out[1] = math.sqrt(2 * w) * u * out[0]
    for j in range(1, basis.size - 1):
        out[j + 1] = math.sqrt(2 * w / (j + 1)) * u * out[j] - math.sqrt(j / (j + 1)) * out[j - 1]
    phase = np.exp(2j * np.pi * basis.momentum * x + 0.5j * basis.shear * u * u)
    return out * phase


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Finite combination ``sum_j c_j psi_j`` of oscillator basis functions."""

    __test__ = False  # not a pytest class

    coefficients: np.ndarray
    basis: OscillatorBasisSpec

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex).ravel()
        if c.size != self.basis.size:
            raise ParameterError(f"{c.size} coefficients for a basis of size {self.basis.size}")
        if not np.all(np.isfinite(c)):
            raise ParameterError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def coherent_state(cls, frame: CoherentFrame, k: float, y: float, size: int = 1) -> TestFunction:
        """``e_{k,y}(x) = exp(2 pi i k x) g(x - y)``, the ground state of a boosted basis."""
        basis = OscillatorBasisSpec(max(size, 2), omega=frame.a, center=y, momentum=k)
        c = np.zeros(basis.size, dtype=complex)
        c[0] = 1.0
        return cls(c, basis)

    @classmethod
    def random(cls, rng: np.random.Generator, size: int = 10, basis: OscillatorBasisSpec | None = None) -> TestFunction:
        """Complex Gaussian coefficients, normalized to unit norm."""
        basis = basis or OscillatorBasisSpec(size)
        c = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
        return cls(c / np.linalg.norm(c), basis)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.coefficients, self.coefficients).real)

    def scaled(self, alpha: complex) -> TestFunction:
        return TestFunction(alpha * self.coefficients, self.basis)

    def __add__(self, other: TestFunction) -> TestFunction:
        if other.basis != self.basis:
            raise ParameterError("test functions live in different bases")
        return TestFunction(self.coefficients + other.coefficients, self.basis)

    def __call__(self, x) -> np.ndarray:
        return self.coefficients @ oscillator_functions(self.basis, x)

    def extent(self) -> float:
        """Half-width beyond which ``|psi|`` is below ``1e-17`` of its scale."""
        return math.sqrt((2 * self.basis.size + 1) / self.basis.omega) + math.sqrt(2 * 40 / self.basis.omega)

    def momentum_extent(self) -> float:
        base = math.sqrt(self.basis.omega * (2 * self.basis.size + 1)) + math.sqrt(2 * 40 * self.basis.omega)
        return (base + abs(self.basis.shear) * self.extent()) / (2 * np.pi)


@dataclass(frozen=True)
class CheckReport:
    check: str
    lhs: float
    rhs: float
    tol: float
    passed: bool

    def as_dict(self) -> dict:
        return {"check": self.check, "lhs": self.lhs, "rhs": self.rhs, "tol": self.tol, "pass": self.passed}


def _relative_check(name: str, lhs: float, rhs: float, tol: float) -> CheckReport:
    scale = max(abs(lhs), abs(rhs))
    return CheckReport(name, float(lhs), float(rhs), tol, bool(abs(lhs - rhs) <= tol * scale))


def _window(frame: CoherentFrame, u):
    return (frame.a / np.pi) ** 0.25 * np.exp(-frame.a * u * u / 2)


def coherent_transform(psi: TestFunction, frame: CoherentFrame, p: PhasePoint | tuple) -> complex:
    """``psi~(k, y)`` at one phase point by adaptive oscillatory quadrature."""
    k, y = p
    half = math.sqrt(2 * 40 / frame.a)
    lo = max(y - half, psi.basis.center - psi.extent())
    hi = min(y + half, psi.basis.center + psi.extent())
    if lo >= hi:
        return 0j
    f = lambda x: complex(_window(frame, x - y) * psi(x)[0])  # noqa: E731
    w = 2 * np.pi * k
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    parts = []
    for part, weight in ((lambda x: f(x).real, "cos"), (lambda x: f(x).imag, "sin"),
                         (lambda x: f(x).imag, "cos"), (lambda x: f(x).real, "sin")):
        if w == 0 and weight == "sin":
            parts.append((0.0, 0.0))
            continue
        val, err, *info = integrate.quad(part, lo, hi, weight=weight, wvar=w, full_output=1, **opts)
        if err > 1e-10:
            raise NumericError(f"coherent transform quadrature did not converge at (k, y)=({k}, {y}): error {err:.1e}")
        parts.append((val, err))
    re = parts[0][0] + parts[1][0]
    im = parts[2][0] - parts[3][0]
    return complex(re, im)


def _x_nodes(psi: TestFunction, ks: np.ndarray, ys: np.ndarray, frame: CoherentFrame) -> np.ndarray:
    half = math.sqrt(2 * 40 / frame.a)
    lo = max(ys.min() - half, psi.basis.center - psi.extent())
    hi = min(ys.max() + half, psi.basis.center + psi.extent())
    band = np.abs(ks).max() + psi.momentum_extent() + math.sqrt(2 * 40 * frame.a) / (2 * np.pi)
    h = 1.0 / (2.5 * band)
    h = min(h, 0.25 / math.sqrt(max(frame.a, psi.basis.omega)))
    n = int(math.ceil((hi - lo) / h)) + 1
    return np.linspace(lo, hi, max(n, 16))


def coherent_transform_grid(psi: TestFunction, frame: CoherentFrame, ks, ys) -> np.ndarray:
    """``psi~`` on the tensor grid ``ks x ys`` (shape ``(len(ks), len(ys))``) by the trapezoid rule."""
    ks = np.asarray(ks, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x = _x_nodes(psi, ks, ys, frame)
    h = x[1] - x[0]
    values = psi(x)
    windowed = _window(frame, x[:, None] - ys[None, :]) * values[:, None]
    phases = np.exp(-2j * np.pi * np.outer(ks, x))
    return h * (phases @ windowed)


@dataclass(frozen=True)
class PhaseBox:
    k_lo: float
    k_hi: float
    y_lo: float
    y_hi: float


#: log of the smallest integrand (relative to its peak) kept inside the box
LOG_DEPTH = 42.0


def _half_width(curv: float, degree: int, slope: float) -> float:
    """Largest ``r`` with ``-curv r^2 + degree log(1 + curv r^2) + slope r`` above ``-LOG_DEPTH``.

    The left side models the log of ``|psi~|^2`` times an exponential weight
    along one axis, measured from the weighted peak ``slope^2 / (4 curv)``.
    """
    gain = slope * slope / (4 * curv)

    def excess(r):
        q = curv * r * r
        return -q + degree * math.log1p(q) + slope * r - gain + LOG_DEPTH

    r = 1.0 / math.sqrt(curv)
    while excess(r) > 0:
        r *= 1.25
    return r


def phase_box(psi: TestFunction, frame: CoherentFrame, exponents=()) -> PhaseBox:
    """Box outside which the (weighted) density is below ``exp(-LOG_DEPTH)`` of its peak.

    ``exponents`` lists the ``(alpha, beta)`` of weights ``exp(alpha k + beta y)``.
    A box cannot be grown after the fact: outside its true support the
    trapezoid transform sits on a rounding floor that an exponential weight in
    ``k`` would amplify without bound.
    """
    a, w = frame.a, psi.basis.omega
    w_k = w + psi.basis.shear**2 / w  # momentum spread of a chirped Gaussian
    curv_k = (2 * np.pi) ** 2 / (a + w_k)
    curv_y = a * w / (a + w)
    degree = psi.basis.size - 1
    k0, y0 = psi.basis.momentum, psi.basis.center
    exps = list(exponents) or [(0.0, 0.0)]
    k_lo = min(k0 - _half_width(curv_k, degree, max(-al, 0.0)) for al, _ in exps)
    k_hi = max(k0 + _half_width(curv_k, degree, max(al, 0.0)) for al, _ in exps)
    y_lo = min(y0 - _half_width(curv_y, degree, max(-be, 0.0)) for _, be in exps)
    y_hi = max(y0 + _half_width(curv_y, degree, max(be, 0.0)) for _, be in exps)
    return PhaseBox(k_lo, k_hi, y_lo, y_hi)


#: trapezoid step in units of the Gaussian width, before the degree correction
STEP = 0.5


def _spacing(psi: TestFunction, frame: CoherentFrame) -> tuple[float, float]:
    # widths of |psi~|^2 for the basis ground state; higher Hermite terms
    # oscillate on a scale shorter by about sqrt(degree)
    a, w = frame.a, psi.basis.omega
    w_k = w + psi.basis.shear**2 / w
    sk = math.sqrt((a + w_k) / 2) / (2 * np.pi)
    sy = math.sqrt((a + w) / (2 * a * w))
    shrink = STEP / math.sqrt(1 + psi.basis.size / 2)
    return shrink * sk, shrink * sy


def phase_space_integral(psi: TestFunction, frame: CoherentFrame, weight=None, exponents=()) -> float:
    """``int int weight(k, y) |psi~(k, y)|^2 dk dy`` by the 2D trapezoid rule on ``phase_box``.

    A weight growing like ``exp(alpha k + beta y)`` must announce its
    exponents so the box can follow the shifted peak.
    """
    if psi.norm_sq == 0:
        return 0.0
    box = phase_box(psi, frame, exponents)
    hk, hy = _spacing(psi, frame)
    ks = np.arange(box.k_lo, box.k_hi + hk / 2, hk)
    ys = np.arange(box.y_lo, box.y_hi + hy / 2, hy)
    dens = np.abs(coherent_transform_grid(psi, frame, ks, ys)) ** 2
    if weight is not None:
        dens = dens * weight(ks[:, None], ys[None, :])
    peak = np.max(np.abs(dens))
    edge = max(np.abs(dens[0]).max(), np.abs(dens[-1]).max(), np.abs(dens[:, 0]).max(), np.abs(dens[:, -1]).max())
    if edge > EDGE_TOL * peak:
        raise NumericError(f"phase-space integrand is {edge / peak:.1e} of its peak on the box edge")
    return float(np.sum(dens) * hk * hy)


def plancherel_check(psi: TestFunction, frame: CoherentFrame, tol: float = 1e-8) -> CheckReport:
    """``int int |psi~|^2`` against ``||psi||^2`` from the coefficients."""
    lhs = phase_space_integral(psi, frame)
    rhs = psi.norm_sq
    if rhs == 0:
        return CheckReport("plancherel", lhs, rhs, tol, lhs == 0)
    return CheckReport("plancherel", lhs, rhs, tol, bool(abs(lhs - rhs) <= tol * rhs))


def quadratic_form_phase_space(psi: TestFunction, params: ModelParams, frame: CoherentFrame) -> float:
    """``<H psi, psi>`` as the anti-Wick integral of the upper symbol against ``|psi~|^2``."""
    exps = [(2 * np.pi * t.s, t.t) for t in exponential_terms(params)]
    return phase_space_integral(psi, frame, lambda k, y: upper_symbol(params, frame, k, y), exps)


def quadratic_form_matrix(psi: TestFunction, params: ModelParams) -> float:
    """``<H psi, psi>`` from exact Galerkin matrix elements in the function's own basis."""
    mat = build_matrix_oscillator(params, psi.basis, with_factor=False)
    return mat.quadratic_form(psi.coefficients)


def anti_wick_check(psi: TestFunction, params: ModelParams, frame: CoherentFrame, tol: float = 1e-6) -> CheckReport:
    lhs = quadratic_form_matrix(psi, params)
    rhs = quadratic_form_phase_space(psi, params, frame)
    if psi.norm_sq == 0:
        return CheckReport("anti_wick", lhs, rhs, tol, abs(lhs) == 0 and abs(rhs) == 0)
    return _relative_check("anti_wick", lhs, rhs, tol)


def lower_symbol_direct(params: ModelParams, frame: CoherentFrame, p: PhasePoint | tuple) -> float:
    """``<H e_{k,y}, e_{k,y}>`` by quadrature of the continued Gaussian integrals.

    Each term uses ``exp(sP + tQ) = exp(tQ/2) exp(sP) exp(tQ/2)`` with
    ``(exp(sP) f)(x) = f(x - i s)``, so its expectation is
    ``int conj(e(x)) exp(t x/2) exp(t (x - is)/2) e(x - is) dx`` over real ``x``.
    """
    k, y = p
    half = math.sqrt(2 * 45 / frame.a)
    total = 0.0
    for term in exponential_terms(params):
        s, t = term.s, term.t

        def integrand(x, s=s, t=t):
            z = x - 1j * s
            e_z = np.exp(2j * np.pi * k * z) * _window(frame, z - y)
            e_x = np.exp(2j * np.pi * k * x) * _window(frame, x - y)
            return np.conj(e_x) * np.exp(t * x / 2 + t * z / 2) * e_z

        # the trailing exp(2 pi s k + t y) is factored out to keep the integrand O(1)
        scale = math.exp(2 * np.pi * s * k + t * y)
        re, err_re = integrate.quad(lambda x: (integrand(x) / scale).real, y - half, y + half,
                                    epsabs=1e-14, epsrel=1e-13, limit=200)
        # the imaginary part only has to be shown negligible, so a loose absolute target suffices
        im, _ = integrate.quad(lambda x: (integrand(x) / scale).imag, y - half, y + half,
                               epsabs=1e-11, epsrel=0.0, limit=200)
        if abs(im) > 1e-9 * max(abs(re), 1.0):
            raise NumericError(f"expectation of a self-adjoint term has imaginary part {im:.2e}")
        total += term.coef * re * scale
    return float(total)


def lower_symbol_check(params: ModelParams, frame: CoherentFrame, p, tol: float = 1e-8) -> CheckReport:
    k, y = p
    closed = float(lower_symbol(params, frame, k, y))
    return _relative_check("lower_symbol", lower_symbol_direct(params, frame, p), closed, tol)


def shifted_window_check(psi: TestFunction, frame: CoherentFrame, b: float, n: int, p, tol: float = 1e-9) -> CheckReport:
    """Transform of ``exp(-pi b n x) psi`` against the completed-square shift of ``psi~``.

    ``(exp(-pi b n .) psi)~(k, y) = exp((pi n b)^2/(2a) - pi b n y) psi~(k, y - pi n b / a)``.
    """
    k, y = p
    c = np.pi * n * b
    tilted = _TiltedFunction(psi, c)
    lhs = coherent_transform(tilted, frame, (k, y))
    rhs = math.exp(c * c / (2 * frame.a) - c * y) * coherent_transform(psi, frame, (k, y - c / frame.a))
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return CheckReport("shifted_window", abs(lhs), abs(rhs), tol, bool(abs(lhs - rhs) <= tol * scale))


class _TiltedFunction:
    """``exp(-c x) psi(x)``; quacks like a TestFunction for the quadrature path."""

    def __init__(self, psi: TestFunction, c: float):
        self._psi = psi
        self._c = c
        self.basis = psi.basis

    def __call__(self, x):
        x = np.atleast_1d(x)
        return np.exp(-self._c * x) * self._psi(x)

    def extent(self) -> float:
        return self._psi.extent() + abs(self._c) / self.basis.omega


def jensen_check(psi: TestFunction, params: ModelParams, frame: CoherentFrame, lam: float) -> CheckReport:
    """``(lam - <H psi, psi>)_+ <= int int (lam - Psi)_+ |psi~|^2`` for normalized ``psi``."""
    if abs(psi.norm_sq - 1) > 1e-12:
        psi = psi.scaled(1 / math.sqrt(psi.norm_sq))
    lhs = max(lam - quadratic_form_matrix(psi, params), 0.0)
    rhs = phase_space_integral(psi, frame, lambda k, y: np.clip(lam - upper_symbol(params, frame, k, y), 0.0, None))
    return CheckReport("jensen", lhs, rhs, 1e-9, bool(lhs <= rhs + 1e-9 * max(1.0, abs(rhs))))
