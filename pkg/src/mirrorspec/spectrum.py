"""Eigensolves, refinement ladders and spectral functionals.

Eigenvalues are taken as squared singular values of the matrix factor ``B``
(``B^H B = A``) whenever one is available.  Rows of ``B`` are sorted by norm and
a column-pivoted QR reduces it to a square triangular ``R`` first; this keeps
small eigenvalues accurate to working precision relative to themselves even
when the largest entries of ``A`` exceed ``1e30``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import integrate, optimize

from .errors import NumericError, ParameterError, RangeError, ResolutionError
from .model import ModelParams
from .quantization import (
    GRID_POTENTIAL_CAP,
    Backend,
    GridSpec,
    OperatorMatrix,
    OscillatorBasisSpec,
    build_matrix_grid,
    build_matrix_oscillator,
)

OSCILLATOR_LADDER = (100, 200, 400, 800, 1600)
GRID_LADDER = (256, 512, 1024, 2048, 4096)
#: a tail bound above this fraction of the summed value flags the result
TAIL_FRACTION = 0.1


class DiscreteSpectrumWarning(UserWarning):
    """The requested operator has no discrete spectrum to converge to."""


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Ascending eigenvalues, the leading ``certified_count`` of which are certified.

    ``certificates[j]`` is an absolute error estimate for ``eigenvalues[j]``.
    ``complete`` marks a list known to be the whole spectrum (synthetic input);
    functionals then accept every ``lambda``.
    """

    eigenvalues: np.ndarray
    certified_count: int = 0
    certificates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    params: ModelParams | None = None
    backend: Backend | None = None
    resolution: object = None
    history: tuple = ()
    converged: bool = False
    complete: bool = False
    vectors: np.ndarray | None = field(default=None, repr=False)
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1:
            raise ParameterError("eigenvalues must be a one-dimensional array")
        if np.any(np.diff(ev) < 0):
            raise ParameterError("eigenvalues must be sorted ascending")
        cert = np.asarray(self.certificates, dtype=float)
        if not 0 <= self.certified_count <= ev.size:
            raise ParameterError(f"certified_count {self.certified_count} outside [0, {ev.size}]")
        if cert.size < self.certified_count:
            raise ParameterError("every certified eigenvalue needs a certificate")
        if np.any(cert < 0):
            raise ParameterError("certificates must be nonnegative")
        ev.setflags(write=False)
        cert.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "certificates", cert)

    @classmethod
    def from_values(
        cls,
        values: Sequence[float],
        certificates: Sequence[float] | None = None,
        *,
        params: ModelParams | None = None,
        complete: bool = True,
    ) -> SpectrumResult:
        """Wrap a known list of eigenvalues, all of them certified."""
        ev = np.sort(np.asarray(values, dtype=float))
        cert = np.zeros(ev.size) if certificates is None else np.asarray(certificates, dtype=float)
        return cls(ev, ev.size, cert, params, Backend.RAW, None, (), True, complete)

    @property
    def certified(self) -> np.ndarray:
        return self.eigenvalues[: self.certified_count]

    def with_eigenvalues(self, values) -> SpectrumResult:
        """Copy with the certified values replaced (used to inject faults in tests)."""
        ev = np.asarray(values, dtype=float)
        return SpectrumResult(
            ev, min(self.certified_count, ev.size), self.certificates, self.params, self.backend,
            self.resolution, self.history, self.converged, self.complete, None, self.notes,
        )


def _row_sorted_r(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B)
    if np.iscomplexobj(B) and not np.any(B.imag):
        B = B.real
    order = np.argsort(-np.linalg.norm(B, axis=1), kind="stable")
    R, piv = sla.qr(B[order], mode="r", pivoting=True)
    return R[: B.shape[1]], piv


def _factor_spectrum(B: np.ndarray, real_gram: bool, vectors: bool):
    if real_gram and np.iscomplexobj(B):
        # Re(B^H B) = [Re B; Im B]^T [Re B; Im B]
        B = np.vstack([B.real, B.imag])
    R, piv = _row_sorted_r(B)
    if not vectors:
        sv = sla.svdvals(R)
        return np.sort(sv**2), None
    _, sv, vh = sla.svd(R)
    order = np.argsort(sv)
    vecs = np.empty_like(vh.conj().T)
    vecs[piv, :] = vh.conj().T
    return sv[order] ** 2, vecs[:, order]


def compute_spectrum(matrix: OperatorMatrix, *, vectors: bool = False) -> SpectrumResult:
    """All eigenvalues of one matrix, ascending, without certificates."""
    A = matrix.entries
    try:
        if matrix.factor is not None:
            real_gram = not np.any(A.imag)
            ev, vecs = _factor_spectrum(matrix.factor, real_gram, vectors)
        elif vectors:
            ev, vecs = np.linalg.eigh(A)
        else:
            ev, vecs = np.linalg.eigvalsh(A), None
    except (np.linalg.LinAlgError, ValueError) as exc:
        finite = bool(np.all(np.isfinite(A)))
        raise NumericError(
            f"eigensolver failed on a {matrix.size}x{matrix.size} {matrix.backend.value} matrix "
            f"(finite entries: {finite}, max |entry| {np.max(np.abs(A)) if finite else float('inf'):.3e}): {exc}"
        ) from exc
    if not np.all(np.isfinite(ev)):
        raise NumericError(f"eigensolver returned non-finite values for a {matrix.size}x{matrix.size} matrix")
    return SpectrumResult(
        ev, 0, np.zeros(0), matrix.params, matrix.backend, matrix.resolution, vectors=vecs
    )


# ---------------------------------------------------------------------------
# ladders


def weyl_estimate(params: ModelParams, index: int) -> float:
    """Eigenvalue with ``index`` states below it according to the leading Weyl law."""
    from .asymptotics import leading_coefficient

    return math.exp(math.sqrt(max(index, 1) / leading_coefficient(params)))


def grid_for(params: ModelParams, lam: float, rung: int) -> GridSpec:
    """Fourier box covering ``{symbol < 10 lam}`` plus a margin growing with ``rung``.

    Half-widths are read off the dominant exponential of each phase-space
    direction and the point count is the next power of two resolving the
    momentum range.  Multipliers must stay below ``GRID_POTENTIAL_CAP``: the box
    is clipped to the admissible position window and, when the momentum cutoff
    would exceed its clip (MN family), the box is stretched or the point count
    halved instead.
    """
    u = 2 * np.pi * params.b
    reach = math.log(10 * max(lam, 3.0)) / u
    margin = (1.0 + rung) * 0.75 * math.sqrt(max(params.b, 1.0 / params.b))
    cap = 0.999 * math.log(GRID_POTENTIAL_CAP) / u
    if params.is_zeta:
        shift = math.log(params.zeta) / u if params.zeta > 0 else 0.0
        # admissible window: exp(u x) <= cap and zeta exp(-u x) <= cap
        win_lo, win_hi = -cap + shift, cap
        lo, hi = -reach + shift - margin, reach + margin
        kreq, kcap = reach + margin, math.inf
    else:
        m, n = params.m, params.n
        win_lo, win_hi = -cap / n, cap
        lo, hi = -(m + 1) / n * reach - margin, reach + margin
        kreq = max(1.0, (n + 1) / m) * reach + margin
        kcap = cap / m
    lo, hi = max(lo, win_lo), min(hi, win_hi)
    kreq = min(kreq, kcap)
    points = 1 << max(3, math.ceil(math.log2(2 * (hi - lo) * kreq)))
    points = max(points, GRID_LADDER[0] >> 2)
    while points / (2 * (hi - lo)) > kcap:
        need = points / (2 * kcap) - (hi - lo)
        room_lo, room_hi = lo - win_lo, win_hi - hi
        if room_lo + room_hi >= need:
            grow_lo = min(room_lo, need / 2)
            lo, hi = lo - grow_lo, hi + (need - grow_lo)
        else:
            points //= 2
    return GridSpec(hi - lo, points, (hi + lo) / 2)


def _rung_matrix(params, backend, rung, sizes, lam, omega):
    if backend is Backend.OSCILLATOR:
        return build_matrix_oscillator(params, OscillatorBasisSpec.default(params, sizes[rung], omega))
    return build_matrix_grid(params, grid_for(params, lam, rung))


def converged_spectrum(
    params: ModelParams,
    backend: Backend | str = Backend.OSCILLATOR,
    want: int = 10,
    tol: float = 1e-8,
    *,
    ladder: Sequence[int] | None = None,
    omega: float | None = None,
    max_rungs: int | None = None,
) -> SpectrumResult:
    """Refine until the lowest ``want`` eigenvalues move by less than ``tol`` (relative).

    The certified prefix is the longest run of leading eigenvalues whose last
    relative change is below ``tol``; it may exceed ``want``.  Certificates are
    the last observed absolute changes.  Exhausting the ladder returns a
    partial result with ``converged=False``.
    """
    backend = Backend(backend)
    if backend is Backend.RAW:
        raise ParameterError("converged_spectrum needs the oscillator or grid backend")
    if int(want) != want or want < 1:
        raise ParameterError(f"want must be a positive integer, got {want!r}")
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol!r}")
    notes = []
    if not params.has_discrete_spectrum:
        msg = (
            "zeta = 0: the operator has purely absolutely continuous spectrum [2, inf); "
            "truncated eigenvalues do not converge and nothing is certified"
        )
        warnings.warn(msg, DiscreteSpectrumWarning, stacklevel=2)
        notes.append(msg)
    sizes = tuple(ladder) if ladder is not None else (OSCILLATOR_LADDER if backend is Backend.OSCILLATOR else GRID_LADDER)
    rungs = len(sizes) if max_rungs is None else min(max_rungs, len(sizes))
    lam = weyl_estimate(params, want + 2)
    history = []
    prev = None
    best = None
    for r in range(rungs):
        try:
            mat = _rung_matrix(params, backend, r, sizes, lam, omega)
        except ResolutionError as exc:
            notes.append(f"rung {r}: {exc}")
            break
        if history and mat.resolution == history[-1][0]:
            # clipped by the multiplier caps: further rungs cannot refine
            notes.append(f"rung {r}: ladder saturated at {mat.resolution}")
            break
        res = compute_spectrum(mat)
        ev = res.eigenvalues
        history.append((mat.resolution, ev.copy()))
        if ev.size > want:
            lam = max(lam, float(ev[want]))
        if prev is not None:
            n = min(prev.size, ev.size)
            change = np.abs(ev[:n] - prev[:n])
            rel = change / np.maximum(np.abs(ev[:n]), np.finfo(float).tiny)
            ok = rel < tol
            count = n if ok.all() else int(np.argmin(ok))
            if not params.has_discrete_spectrum:
                count = 0
            # do not certify the top of a truncated spectrum
            count = min(count, int(0.8 * n))
            best = (ev, count, change, mat.resolution)
            if count >= want:
                break
        prev = ev
    if best is None:
        if prev is None:
            raise NumericError("no ladder rung could be built: " + "; ".join(notes))
        best = (prev, 0, np.zeros(0), history[-1][0])
    ev, count, change, resolution = best
    converged = count >= want
    if not converged and params.has_discrete_spectrum:
        notes.append(f"certified {count} of {want} requested eigenvalues")
    return SpectrumResult(
        ev, count, change[:count].copy() if count else np.zeros(0), params, backend, resolution,
        tuple(history), converged, False, None, tuple(notes),
    )


# ---------------------------------------------------------------------------
# functionals


def trusted_lambda(spec: SpectrumResult) -> float:
    """Largest certified eigenvalue minus its certificate (``inf`` for complete lists)."""
    if spec.complete:
        return math.inf
    if spec.certified_count == 0:
        return -math.inf
    j = spec.certified_count - 1
    return float(spec.eigenvalues[j] - spec.certificates[j])


def _check_range(spec: SpectrumResult, lam: float) -> None:
    top = trusted_lambda(spec)
    if lam > top:
        raise RangeError(f"lambda={lam:g} exceeds the trusted range (<= {top:g})")


def counting_function(spec: SpectrumResult, lam: float) -> int:
    """``#{j : lambda_j < lam}`` over certified eigenvalues."""
    _check_range(spec, lam)
    return int(np.searchsorted(spec.certified, lam, side="left"))


def riesz_mean(spec: SpectrumResult, lam: float) -> float:
    """``sum_j (lam - lambda_j)_+`` over certified eigenvalues."""
    _check_range(spec, lam)
    ev = spec.certified
    return float(np.sum(np.clip(lam - ev, 0.0, None)))


class WeylEnvelope(NamedTuple):
    """Conservative counting envelope ``A log^2 lam + B log lam``."""

    A: float
    B: float

    def __call__(self, lam):
        L = np.log(lam)
        return self.A * L * L + self.B * L


def weyl_envelope(spec: SpectrumResult, inflate: float = 2.0) -> WeylEnvelope:
    """Fit ``N(lam) ~ A log^2 lam + B log lam`` on the certified range, then scale ``A``."""
    ev = spec.certified
    ev = ev[ev > math.e]
    if ev.size < 3:
        raise NumericError("at least three certified eigenvalues above e are needed for a tail envelope")
    L = np.log(ev)
    counts = np.searchsorted(spec.certified, ev, side="right").astype(float)
    design = np.column_stack([L * L, L])
    (A, B), *_ = np.linalg.lstsq(design, counts, rcond=None)
    A = inflate * max(A, 0.0)
    # keep the envelope above the data it was fitted on
    L0 = L[-1]
    if A * L0 * L0 + B * L0 < counts[-1]:
        B = counts[-1] / L0 - A * L0
    return WeylEnvelope(float(A), float(B))


class HeatTrace(NamedTuple):
    value: float
    tail_bound: float
    flagged: bool


def heat_trace(spec: SpectrumResult, t: float, envelope: WeylEnvelope | None = None) -> HeatTrace:
    """``sum_j exp(-t lambda_j)`` over certified eigenvalues plus a Weyl-envelope tail.

    The tail integrates by parts: with ``Lam`` the top of the certified range,
    ``sum_{lambda_j > Lam} e^{-t lambda_j} <= t int_Lam^inf e^{-t lam} (Nbar(lam) - N(Lam)) dlam``.
    """
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    ev = spec.certified
    value = float(np.sum(np.exp(-t * ev)))
    if spec.complete:
        return HeatTrace(value, 0.0, False)
    env = envelope or weyl_envelope(spec)
    lam0 = float(ev[-1])
    n0 = float(ev.size)

    def integrand(s):
        lam = lam0 + s / t
        return math.exp(-s) * max(float(env(lam)) - n0, 0.0)

    tail, err = integrate.quad(integrand, 0.0, np.inf, limit=200)
    tail = math.exp(-t * lam0) * (tail + err)
    return HeatTrace(value, tail, tail > TAIL_FRACTION * value)


class TraceInverse(NamedTuple):
    partial: float
    tail_bound: float


def trace_inverse(spec: SpectrumResult, envelope: WeylEnvelope | None = None) -> TraceInverse:
    """``sum_j 1/lambda_j`` over certified eigenvalues plus ``int_Lam^inf (Nbar - N(Lam))/lam^2``."""
    ev = spec.certified
    if ev.size == 0:
        raise RangeError("no certified eigenvalues")
    if np.any(ev <= 0):
        raise ParameterError("trace of the inverse needs strictly positive eigenvalues")
    partial = float(np.sum(1.0 / ev))
    if spec.complete:
        return TraceInverse(partial, 0.0)
    env = envelope or weyl_envelope(spec)
    lam0 = float(ev[-1])
    L = math.log(lam0)
    # closed forms of int_Lam^inf log^k(lam) / lam^2 for k = 2, 1, 0
    tail = (env.A * (L * L + 2 * L + 2) + env.B * (L + 1) - ev.size) / lam0
    return TraceInverse(partial, max(tail, 0.0))


def trace_inverse_history(spec: SpectrumResult, rungs: int = 2) -> list[tuple[object, TraceInverse]]:
    """``trace_inverse`` recomputed from each of the last ``rungs`` ladder rungs.

    Every rung is cut to the final certified count and gets its own tail
    envelope, so the spread of the totals shows how far the estimate moves
    under refinement.
    """
    c = spec.certified_count
    if len(spec.history) < rungs:
        raise RangeError(f"spectrum has {len(spec.history)} ladder rungs, {rungs} requested")
    out = []
    for resolution, ev in spec.history[-rungs:]:
        if ev.size < c:
            raise RangeError("a ladder rung holds fewer eigenvalues than the certified count")
        sub = SpectrumResult(np.asarray(ev[:c]), c, np.zeros(c), spec.params, spec.backend, resolution)
        out.append((resolution, trace_inverse(sub)))
    return out


def solve_tau0(lam: float) -> float:
    """Unique root of ``2 tau = log(lam + lam tau)``; requires ``lam > 1``."""
    if not lam > 1:
        raise ParameterError(f"the tau equation has no positive root for lambda={lam!r} <= 1")
    f = lambda tau: 2 * tau - math.log(lam * (1 + tau))  # noqa: E731
    hi = 1.0
    while f(hi) < 0:
        hi *= 2
    return optimize.brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-14)


class CountBounds(NamedTuple):
    upper: float
    lower: float
    tau0: float
    mu: float


def count_bounds_from_riesz(riesz_at: Callable[[float], float], lam: float) -> CountBounds:
    """Bracket ``N(lam)`` by Riesz means.

    ``N(lam) <= R(mu) / rho`` with ``rho = tau0 lam`` and ``mu = lam + rho``
    (each eigenvalue below ``lam`` contributes at least ``rho`` to ``R(mu)``), and
    ``N(lam) >= R(lam) / lam`` (each term of ``R(lam)`` is below ``lam``).
    """
    tau0 = solve_tau0(lam)
    rho = tau0 * lam
    mu = lam + rho
    return CountBounds(riesz_at(mu) / rho, riesz_at(lam) / lam, tau0, mu)


# ---------------------------------------------------------------------------
# export


def spectrum_to_csv(spec: SpectrumResult, *, certified_only: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["index", "eigenvalue", "certificate"])
    n = spec.certified_count if certified_only else spec.eigenvalues.size
    for j in range(n):
        cert = spec.certificates[j] if j < spec.certificates.size else ""
        w.writerow([j + 1, repr(float(spec.eigenvalues[j])), repr(float(cert)) if cert != "" else ""])
    return buf.getvalue()


def spectrum_to_dict(spec: SpectrumResult) -> dict:
    return {
        "params": spec.params.as_dict() if spec.params else None,
        "backend": spec.backend.value if spec.backend else None,
        "resolution": spec.resolution.as_dict() if hasattr(spec.resolution, "as_dict") else None,
        "converged": spec.converged,
        "certified_count": spec.certified_count,
        "eigenvalues": [float(v) for v in spec.eigenvalues[: spec.certified_count]],
        "certificates": [float(c) for c in spec.certificates[: spec.certified_count]],
        "notes": list(spec.notes),
    }


def spectrum_from_dict(d: dict) -> SpectrumResult:
    params = ModelParams.from_dict(d["params"]) if d.get("params") else None
    ev = np.asarray(d["eigenvalues"], dtype=float)
    cert = np.asarray(d.get("certificates", np.zeros(ev.size)), dtype=float)
    backend = Backend(d["backend"]) if d.get("backend") else Backend.RAW
    return SpectrumResult(
        ev, int(d.get("certified_count", ev.size)), cert, params, backend, None, (),
        bool(d.get("converged", True)), False, None, tuple(d.get("notes", ())),
    )


def load_spectrum(path: str | Path) -> SpectrumResult:
    """Read a spectrum written as JSON or as ``index,eigenvalue,certificate`` CSV.

    Lines starting with ``#`` are skipped.  A CSV may carry a ``# params: {...}``
    header line.
    """
    text = Path(path).read_text()
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    stripped = "\n".join(body).lstrip()
    if stripped.startswith("{"):
        return spectrum_from_dict(json.loads(stripped))
    params = None
    for ln in text.splitlines():
        if ln.startswith("# params:"):
            params = ModelParams.from_dict(json.loads(ln.split(":", 1)[1]))
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    if not rows or "eigenvalue" not in rows[0]:
        raise ParameterError(f"{path}: expected a header row 'index,eigenvalue,certificate'")
    ev = np.array([float(r["eigenvalue"]) for r in rows])
    cert = np.array([float(r.get("certificate") or 0.0) for r in rows])
    order = np.argsort(ev, kind="stable")
    return SpectrumResult(ev[order], ev.size, cert[order], params, Backend.RAW, None, (), True, False)
