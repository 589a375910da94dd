"""Birman–Schwinger operator ``K_lam = W H0^{-1} W`` for the Zeta family.

``H0 = U + U^{-1}`` has symbol ``2 cosh(2 pi b k)`` and ``L(x) = e^{2 pi b x} + zeta e^{-2 pi b x}``.
The number of eigenvalues of ``H0 + L`` below ``lam`` is at most the number of
eigenvalues of ``K_lam`` above one.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, UnsupportedFamilyError
from .model import ModelParams
from .quantization import Backend, OperatorMatrix
from .spectrum import SpectrumResult, _check_range, counting_function

DEFAULT_NODES = 400
MIN_NODES = 8
#: eigenvalues of K above this fraction of one enter the refinement comparison
STABILITY_FLOOR = 0.1


def _require_zeta(params: ModelParams) -> None:
    if not params.is_zeta:
        raise UnsupportedFamilyError("the Birman-Schwinger check is defined for the Zeta family")
    if params.zeta <= 0:
        raise ParameterError("zeta must be positive: for zeta = 0 the cutoff support is unbounded")


@dataclass(frozen=True)
class CutoffPotential:
    """``W(x) = sqrt((lam - L(x))_+)`` on its support ``[lo, hi]`` (``None`` if empty)."""

    params: ModelParams
    lam: float

    def __post_init__(self):
        _require_zeta(self.params)

    def potential(self, x):
        u = 2 * math.pi * self.params.b
        x = np.asarray(x, dtype=float)
        return np.exp(u * x) + self.params.zeta * np.exp(-u * x)

    @property
    def support(self) -> tuple[float, float] | None:
        z = self.params.zeta
        disc = self.lam * self.lam - 4 * z
        if self.lam <= 0 or disc <= 0:
            return None
        u = 2 * math.pi * self.params.b
        r = math.sqrt(disc)
        # smaller root written without cancellation
        return math.log(2 * z / (self.lam + r)) / u, math.log((self.lam + r) / 2) / u

    def __call__(self, x):
        return np.sqrt(np.clip(self.lam - self.potential(x), 0.0, None))


def h0_inverse_kernel(b: float, x, y):
    """Kernel of ``H0^{-1}``: ``int e^{2 pi i (x-y) k} / (2 cosh(2 pi b k)) dk = sech(pi (x-y) / (2b)) / (4b)``."""
    if not b > 0:
        raise ParameterError(f"b must be positive, got {b!r}")
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    e = np.exp(-math.pi * d / (2 * b))
    return 2 * e / (1 + e * e) / (4 * b)


@dataclass(frozen=True)
class NystromSpec:
    nodes: int
    support: tuple[float, float] | None


def build_bs_matrix(params: ModelParams, lam: float, nodes: int = DEFAULT_NODES) -> OperatorMatrix:
    """Nyström matrix ``sqrt(w_i) W(x_i) G(x_i, x_j) W(x_j) sqrt(w_j)`` on Gauss–Legendre nodes of the support."""
    _require_zeta(params)
    if int(nodes) != nodes or nodes < MIN_NODES:
        raise ParameterError(f"nodes must be an integer >= {MIN_NODES}, got {nodes!r}")
    nodes = int(nodes)
    cut = CutoffPotential(params, lam)
    sup = cut.support
    if sup is None:
        return OperatorMatrix(np.zeros((0, 0)), Backend.RAW, NystromSpec(nodes, None), params)
    lo, hi = sup
    t, w = np.polynomial.legendre.leggauss(nodes)
    x = (lo + hi) / 2 + (hi - lo) / 2 * t
    wx = w * (hi - lo) / 2
    g = np.sqrt(wx) * cut(x)
    k = g[:, None] * h0_inverse_kernel(params.b, x[:, None], x[None, :]) * g[None, :]
    return OperatorMatrix(k, Backend.RAW, NystromSpec(nodes, sup), params)


def bs_eigenvalues(params: ModelParams, lam: float, nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Eigenvalues of the Nyström matrix in descending order."""
    k = build_bs_matrix(params, lam, nodes)
    if k.entries.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.eigvalsh(k.entries.real)[::-1]


class BSRow(NamedTuple):
    lam: float
    n_spec: int
    bs_count: int
    bs_count_refined: int
    drift: float
    verdict: bool


@dataclass(frozen=True)
class BSReport:
    rows: tuple[BSRow, ...]
    params: ModelParams
    nodes: int
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.verdict for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["lambda", "N_spec", "bs_count", "verdict"])
        for r in self.rows:
            w.writerow([repr(r.lam), r.n_spec, r.bs_count, "pass" if r.verdict else "fail"])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {"params": self.params.as_dict(), "nodes": self.nodes, "tol": self.tol,
                "rows": [r._asdict() for r in self.rows], "pass": self.passed}


def bs_counting_check(params: ModelParams, lambdas, spec: SpectrumResult, nodes: int = DEFAULT_NODES,
                      tol: float = 1e-6) -> BSReport:
    """``N(lam) <= #{mu(K_lam) > 1}``, with the count recomputed at doubled nodes.

    ``drift`` is the largest relative change of the eigenvalues above
    ``STABILITY_FLOOR`` under doubling.  A row passes when the inequality holds,
    the two counts agree and ``drift <= tol``.
    """
    _require_zeta(params)
    if spec.params is not None and spec.params != params:
        raise ParameterError("spectrum was computed for different parameters")
    lambdas = [float(lam) for lam in np.atleast_1d(lambdas)]
    for lam in lambdas:
        _check_range(spec, lam)
    rows = []
    for lam in sorted(lambdas):
        mu = bs_eigenvalues(params, lam, nodes)
        mu2 = bs_eigenvalues(params, lam, 2 * nodes)
        keep = int(np.sum(mu > STABILITY_FLOOR))
        drift = 0.0
        if keep:
            drift = float(np.max(np.abs(mu2[:keep] - mu[:keep]) / mu[:keep]))
        count = int(np.sum(mu > 1))
        count2 = int(np.sum(mu2 > 1))
        n_spec = counting_function(spec, lam)
        ok = n_spec <= count and count == count2 and drift <= tol
        rows.append(BSRow(lam, n_spec, count, count2, drift, bool(ok)))
    return BSReport(tuple(rows), params, nodes, tol)
