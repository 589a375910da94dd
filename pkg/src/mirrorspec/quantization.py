"""Finite Hermitian matrices for ``H(zeta)`` and ``H_mn``.

Two independent discretizations:

* oscillator Galerkin: exact matrix elements of ``exp(sP + tQ)`` between
  harmonic-oscillator eigenfunctions (variational, Ritz values are upper bounds);
* Fourier grid: ``U`` and the ``P``-part of the mixed term act as multipliers in
  the discrete momentum representation, ``V`` as a multiplier in position.

Matrix entries of exponentials grow without bound, so eigenvalues computed
from the dense Hermitian matrix lose all accuracy once the entries exceed
``1/eps`` times the eigenvalue.  Every backend therefore also supplies a factor
``B`` with ``B^* B = A`` built from the half exponentials
``exp((sP + tQ)/2)``; the spectrum module takes singular values of ``B``.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .errors import ParameterError, ResolutionError
from .model import ExpTerm, Family, ModelParams, classical_symbol, exponential_terms, mn_center

#: log of the largest entry magnitude we accept before recombining
LOG_OVERFLOW = 690.0
#: admissible relative deficit of the factor's Gram diagonal
FACTOR_TOL = 1e-13
#: largest position (and, for the MN family, momentum) multiplier the grid factor tolerates
GRID_POTENTIAL_CAP = 1e25


class Backend(str, enum.Enum):
    OSCILLATOR = "oscillator"
    GRID = "grid"
    RAW = "raw"


@dataclass(frozen=True)
class OscillatorBasisSpec:
    """Eigenfunctions of ``(P^2 + omega^2 (Q - center)^2) / 2``.

    ``momentum`` additionally boosts every basis function by
    ``exp(2 pi i momentum x)`` and ``shear`` multiplies it by the chirp
    ``exp(i shear (x - center)^2 / 2)``, which maps ``P`` to ``P + shear (Q - center)``.
    """

    size: int
    omega: float = 2 * np.pi
    center: float = 0.0
    momentum: float = 0.0
    shear: float = 0.0

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise ParameterError(f"basis size must be an integer >= 2, got {self.size!r}")
        if not self.omega > 0:
            raise ParameterError(f"omega must be positive, got {self.omega!r}")
        object.__setattr__(self, "size", int(self.size))

    @classmethod
    def default(cls, params: ModelParams, size: int, omega: float | None = None) -> OscillatorBasisSpec:
        """``omega = 2 pi`` for the Zeta family; balanced frequency and shear for MN.

        An explicit ``omega`` disables the shear.
        """
        if params.is_zeta:
            return cls(size=size, omega=2 * np.pi if omega is None else omega)
        if omega is not None:
            return cls(size=size, omega=omega, center=mn_center(params))
        omega, shear = balanced_frequency(params)
        return cls(size=size, omega=omega, center=mn_center(params), shear=shear)

    def with_size(self, size: int) -> OscillatorBasisSpec:
        return OscillatorBasisSpec(size, self.omega, self.center, self.momentum, self.shear)

    def as_dict(self) -> dict:
        return {
            "size": self.size,
            "omega": self.omega,
            "center": self.center,
            "momentum": self.momentum,
            "shear": self.shear,
        }


def balanced_frequency(params: ModelParams) -> tuple[float, float]:
    """``(omega, shear)`` minimizing the largest ladder coefficient ``|z|^2`` over all terms.

    Matrix entries of ``exp(sP + tQ)`` grow like ``exp(2 |z| sqrt(j))``, so the
    term with the largest ``|z|`` sets the dynamic range of the factor.  The
    objective is a maximum of quadratic forms in the basis metric and has a
    unique minimizer.
    """
    terms = [(tm.s, tm.t) for tm in exponential_terms(params)]

    def worst(x):
        w, al = math.exp(x[0]), x[1]
        return max(s * s * w / 2 + (t + al * s) ** 2 / (2 * w) for s, t in terms)

    best = None
    for start in ([math.log(2 * np.pi), 0.0], [math.log(2 * np.pi), 2 * np.pi * params.b], [0.0, -2.0]):
        res = optimize.minimize(worst, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
        if best is None or res.fun < best.fun - 1e-12:
            best = res
    return float(math.exp(best.x[0])), float(best.x[1])


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid of ``points`` nodes on ``[offset - L/2, offset + L/2)``."""

    length: float
    points: int
    offset: float = 0.0

    def __post_init__(self):
        if not self.length > 0:
            raise ParameterError(f"grid length must be positive, got {self.length!r}")
        if int(self.points) != self.points or self.points < 8 or not _is_pow2(int(self.points)):
            raise ParameterError(f"grid points must be a power of two >= 8, got {self.points!r}")
        object.__setattr__(self, "points", int(self.points))

    @property
    def cutoff(self) -> float:
        """Momentum cutoff ``K = N / (2L)``."""
        return self.points / (2 * self.length)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        j = np.arange(self.points) - self.points // 2
        x = self.offset + j * (self.length / self.points)
        k = j / self.length
        return x, k

    def as_dict(self) -> dict:
        return {"length": self.length, "points": self.points, "offset": self.offset}


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense Hermitian truncation of an operator.

    ``factor``, when present, satisfies ``factor^H @ factor == entries`` up to a
    recorded relative deficit and is what the eigensolver uses.
    """

    entries: np.ndarray
    backend: Backend
    resolution: OscillatorBasisSpec | GridSpec | None = None
    params: ModelParams | None = None
    factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ParameterError(f"operator matrix must be square, got shape {a.shape}")
        a = a.astype(complex)
        norm = np.linalg.norm(a)
        if norm > 0:
            dev = np.linalg.norm(a - a.conj().T) / norm
            if dev > 1e-12:
                raise ParameterError(f"matrix is not Hermitian (relative deviation {dev:.2e})")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "backend", Backend(self.backend))
        if self.factor is not None:
            f = np.asarray(self.factor, dtype=complex)
            if f.ndim != 2 or f.shape[1] != a.shape[0]:
                raise ParameterError(f"factor shape {f.shape} does not match matrix size {a.shape[0]}")
            f.setflags(write=False)
            object.__setattr__(self, "factor", f)

    @classmethod
    def from_array(cls, entries, params: ModelParams | None = None) -> OperatorMatrix:
        return cls(np.asarray(entries), Backend.RAW, None, params)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def quadratic_form(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=complex)
        return float(np.real(np.vdot(c, self.entries @ c)))


# ---------------------------------------------------------------------------
# oscillator backend


def _ladder_coefficient(s: float, t: float, omega: float) -> complex:
    # sP + tQ = z a^+ + conj(z) a  with  a = sqrt(omega/2) (Q + iP/omega)
    return t / math.sqrt(2 * omega) + 1j * s * math.sqrt(omega / 2)


def _exp_linear_block(s: float, t: float, basis: OscillatorBasisSpec, rows: int) -> np.ndarray:
    """``<phi_i| exp(sP + tQ) |phi_j>`` for ``i < rows``, ``j < basis.size``.

    With ``E = exp(z a^+ + conj(z) a)`` one has ``a E = E (a + z)``, giving the
    row recurrence ``sqrt(i+1) E[i+1, j] = sqrt(j) E[i, j-1] + z E[i, j]`` from
    ``E[0, j] = exp(|z|^2/2) conj(z)^j / sqrt(j!)``.  All contributions to an
    entry share the phase ``exp(i arg(z) (i - j))``, so the recurrence is run on
    log-magnitudes and the phase attached at the end.
    """
    N = basis.size
    z = _ladder_coefficient(s, t + basis.shear * s, basis.omega)
    r = abs(z)
    theta = np.angle(z) if r > 0 else 0.0
    j = np.arange(N)
    logmag = np.empty((rows, N))
    if r > 0:
        lr = math.log(r)
        logmag[0] = 0.5 * r * r + j * lr - 0.5 * gammaln(j + 1)
    else:
        lr = -np.inf
        logmag[0] = np.where(j == 0, 0.0, -np.inf)
    half_log_j = 0.5 * np.log(np.maximum(j, 1))
    shifted = np.full(N, -np.inf)
    with np.errstate(invalid="ignore"):
        for i in range(rows - 1):
            shifted[1:] = half_log_j[1:] + logmag[i, :-1]
            logmag[i + 1] = np.logaddexp(shifted, lr + logmag[i]) - 0.5 * math.log(i + 1)
    # phase-space translation of the basis multiplies by the symbol at the center
    logmag += 2 * np.pi * s * basis.momentum + t * basis.center
    peak = np.max(logmag)
    if peak > LOG_OVERFLOW:
        raise ResolutionError(
            f"exp({s:g} P + {t:g} Q) entries reach e^{peak:.0f} in a {N}-state basis; "
            "use a larger omega or a smaller basis"
        )
    i = np.arange(rows)[:, None]
    return np.exp(logmag) * np.exp(1j * theta * (i - j[None, :]))


def exp_linear_matrix(s: float, t: float, basis: OscillatorBasisSpec) -> OperatorMatrix:
    """Oscillator-basis matrix of the self-adjoint exponential ``exp(sP + tQ)``."""
    block = _exp_linear_block(s, t, basis, basis.size)
    return OperatorMatrix(block, Backend.OSCILLATOR, basis, None)


def _half_factor(term: ExpTerm, basis: OscillatorBasisSpec, diag: np.ndarray) -> np.ndarray:
    """Rows of ``sqrt(coef) exp((sP+tQ)/2)`` in an enlarged basis.

    The column Gram diagonal must reproduce ``diag`` (the exact full-basis
    diagonal) to ``FACTOR_TOL`` (relaxed by the recurrence's own rounding); by Cauchy-Schwarz this bounds every
    off-diagonal deficit as well.
    """
    N = basis.size
    # the log-magnitude recurrence itself carries ~N ulps of relative error
    tol = max(FACTOR_TOL, 2e-15 * N)
    extra = 32
    while True:
        block = _exp_linear_block(term.s / 2, term.t / 2, basis, N + extra)
        gram = np.sum(np.abs(block) ** 2, axis=0)
        deficit = np.max(np.abs(diag - gram) / diag)
        if deficit <= tol:
            return math.sqrt(term.coef) * block
        if extra > 8 * N + 256:
            raise ResolutionError(
                f"half-exponential factor for term {term} does not close (deficit {deficit:.1e})"
            )
        extra *= 2


def build_matrix_oscillator(
    params: ModelParams, basis: OscillatorBasisSpec | int, *, with_factor: bool = True
) -> OperatorMatrix:
    """Galerkin matrix of the full operator in an oscillator basis."""
    if isinstance(basis, int):
        basis = OscillatorBasisSpec.default(params, basis)
    entries = np.zeros((basis.size, basis.size), dtype=complex)
    blocks = []
    for term in exponential_terms(params):
        full = _exp_linear_block(term.s, term.t, basis, basis.size)
        entries += term.coef * full
        if with_factor:
            blocks.append(_half_factor(term, basis, np.real(np.diag(full))))
    factor = np.vstack(blocks) if with_factor else None
    return OperatorMatrix(entries, Backend.OSCILLATOR, basis, params, factor)


# ---------------------------------------------------------------------------
# grid backend


def boundary_symbol_min(params: ModelParams, grid: GridSpec, samples: int = 2001) -> float:
    """Smallest classical symbol on the boundary of the grid's phase-space box."""
    K = grid.cutoff
    lo, hi = grid.offset - grid.length / 2, grid.offset + grid.length / 2
    ks = np.linspace(-K, K, samples)
    xs = np.linspace(lo, hi, samples)
    edges = [
        classical_symbol(params, ks, np.full_like(ks, lo)),
        classical_symbol(params, ks, np.full_like(ks, hi)),
        classical_symbol(params, np.full_like(xs, -K), xs),
        classical_symbol(params, np.full_like(xs, K), xs),
    ]
    return float(min(e.min() for e in edges))


def _fourier_matrix(grid: GridSpec) -> np.ndarray:
    x, k = grid.nodes()
    return np.exp(-2j * np.pi * np.outer(k, x - grid.offset)) / math.sqrt(grid.points)


def build_matrix_grid(
    params: ModelParams,
    grid: GridSpec,
    *,
    lambda_max: float | None = None,
    potential: bool = True,
) -> OperatorMatrix:
    """Fourier-grid matrix of the operator.

    ``lambda_max`` enables the boundary-dominance precondition: the classical
    symbol must exceed ``10 * lambda_max`` everywhere on the edge of the box
    ``[offset - L/2, offset + L/2] x [-K, K]``.  ``potential=False`` keeps only
    the momentum multiplier ``U + U^-1`` (``U`` for the MN family).
    """
    b = params.b
    x, k = grid.nodes()
    F = _fourier_matrix(grid)
    Fh = F.conj().T
    if lambda_max is not None:
        edge = boundary_symbol_min(params, grid)
        if edge < 10 * lambda_max:
            # the classical region has logarithmic extent; the MN triangle is stretched
            spread = 1.0 if params.is_zeta else max(1.0, (params.m + 1) / params.n, (params.n + 1) / params.m)
            need = spread * math.log(10 * lambda_max) / (2 * np.pi * b)
            L_sug = 2 * (need + 1.0)
            N_sug = 1 << max(3, math.ceil(math.log2(L_sug * L_sug)))
            raise ResolutionError(
                f"boundary symbol {edge:.3g} is below 10*lambda_max={10 * lambda_max:.3g}; "
                f"try length >= {L_sug:.1f} and points >= {N_sug}"
            )
    if params.is_zeta:
        kin = 2 * np.cosh(2 * np.pi * b * k)
        pot = np.exp(2 * np.pi * b * x) + params.zeta * np.exp(-2 * np.pi * b * x)
        entries = Fh @ (kin[:, None] * F)
        rows = [np.sqrt(kin)[:, None] * F]
        if potential:
            _check_potential(pot, grid)
            entries += np.diag(pot)
            rows.append(np.diag(np.sqrt(pot)))
    else:
        m, n = params.m, params.n
        kin = np.exp(-2 * np.pi * b * k)
        entries = Fh @ (kin[:, None] * F)
        rows = [np.sqrt(kin)[:, None] * F]
        if potential:
            pot = np.exp(2 * np.pi * b * x)
            # exp(bmP - 2 pi b n Q) = exp(-pi b n Q) exp(bmP) exp(-pi b n Q)
            side = np.exp(-np.pi * b * n * x)
            _check_potential(np.maximum(pot, side**2), grid)
            mult = np.exp(2 * np.pi * b * m * k)
            _check_momentum(np.maximum(kin, mult), grid)
            mixed = side[:, None] * (Fh @ (mult[:, None] * F)) * side[None, :]
            entries += np.diag(pot) + mixed
            rows.append(np.diag(np.sqrt(pot)))
            rows.append(np.exp(np.pi * b * m * k)[:, None] * F * side[None, :])
    return OperatorMatrix(entries, Backend.GRID, grid, params, np.vstack(rows))


def _check_potential(pot: np.ndarray, grid: GridSpec) -> None:
    peak = float(np.max(pot))
    if peak > GRID_POTENTIAL_CAP:
        raise ResolutionError(
            f"position multiplier reaches {peak:.2e} on a box of length {grid.length:g}; "
            "shrink the box (the extra width is not needed for the low spectrum)"
        )


def _check_momentum(mult: np.ndarray, grid: GridSpec) -> None:
    # the mixed term multiplies a position-graded vector by this, so large values
    # amplify aliasing instead of being absorbed by row scaling
    peak = float(np.max(mult))
    if peak > GRID_POTENTIAL_CAP:
        raise ResolutionError(
            f"momentum multiplier reaches {peak:.2e} at cutoff {grid.cutoff:g}; "
            "use fewer points or a longer box"
        )


# ---------------------------------------------------------------------------
# binary dump

MAGIC = b"MSPC1"
_BACKEND_CODE = {Backend.OSCILLATOR: 0, Backend.GRID: 1, Backend.RAW: 2}
_HEADER = struct.Struct("<5sIBBdd II")


def dump_matrix(matrix: OperatorMatrix, path: str | Path) -> None:
    """Write ``MSPC1`` little-endian dump: header then row-major (re, im) f64 pairs."""
    p = matrix.params
    if p is None:
        fam, b, zeta, m, n = 255, 0.0, 0.0, 0, 0
    else:
        fam = 0 if p.is_zeta else 1
        b, zeta = p.b, (p.zeta if p.is_zeta else 0.0)
        m, n = (0, 0) if p.is_zeta else (p.m, p.n)
    head = _HEADER.pack(MAGIC, matrix.size, _BACKEND_CODE[matrix.backend], fam, b, zeta, m, n)
    body = np.ascontiguousarray(matrix.entries, dtype="<c16").tobytes()
    Path(path).write_bytes(head + body)


def load_matrix(path: str | Path) -> OperatorMatrix:
    data = Path(path).read_bytes()
    magic, N, bcode, fam, b, zeta, m, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParameterError(f"{path}: not an MSPC1 matrix dump")
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size, count=N * N).reshape(N, N)
    backend = {v: k for k, v in _BACKEND_CODE.items()}[bcode]
    params = None
    if fam == 0:
        params = ModelParams(Family.ZETA, b=b, zeta=zeta)
    elif fam == 1:
        params = ModelParams(Family.MN, b=b, m=m, n=n)
    return OperatorMatrix(body.copy(), backend, None, params)
