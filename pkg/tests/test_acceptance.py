"""The twelve acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line that is printed in the terminal summary
(and echoed immediately with ``pytest -s``).
"""

import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mirrorspec.asymptotics import (
    bracket_lambdas,
    count_bracket_check,
    karamata_check,
    leading_coefficient,
    mn_constant,
    quadrant_identity,
    quadrant_predictions,
    sandwich_check,
    weyl_fit,
)
from mirrorspec.birman_schwinger import bs_counting_check
from mirrorspec.coherent import TestFunction, anti_wick_check
from mirrorspec.model import ModelParams, frame_for
from mirrorspec.spectrum import converged_spectrum, trace_inverse_history


def record(num, title, ok, detail):
    ACCEPTANCE_LINES.append((num, title, bool(ok), detail))
    print(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}")
    assert ok, detail


def test_01_cross_backend_oracle():
    p = ModelParams.zeta_family(1.0, 1.0)
    t0 = time.perf_counter()
    osc = converged_spectrum(p, "oscillator", want=10, tol=1e-8)
    grid = converged_spectrum(p, "grid", want=10, tol=1e-8)
    elapsed = time.perf_counter() - t0
    ok = osc.certified_count >= 10 and grid.certified_count >= 10
    rel = float(np.max(np.abs(grid.eigenvalues[:10] / osc.eigenvalues[:10] - 1))) if ok else math.inf
    record(1, "cross-backend oracle", ok and rel <= 1e-6 and elapsed < 120,
           f"max rel diff {rel:.2e} over 10 eigenvalues (<= 1e-6), {elapsed:.1f} s (< 120 s)")


def test_02_spectral_floor():
    worst = math.inf
    checked = 0
    for zeta in (0.5, 1.0, 2.0):
        for b in (0.25, 0.5, 1.0):
            s = converged_spectrum(ModelParams.zeta_family(b, zeta), "oscillator", want=10, tol=1e-8)
            n = s.certified_count
            margin = s.certified - (2 - s.certificates[:n])
            worst = min(worst, float(np.min(margin)))
            checked += n
    record(2, "spectral floor", checked > 0 and worst >= 0,
           f"{checked} certified eigenvalues over 9 parameter sets, min(lambda_j - 2 + cert) = {worst:.4f}")


def test_03_sandwich(zeta_b1, mn11_b1):
    t0 = time.perf_counter()
    reports = [sandwich_check(zeta_b1, None, [10, 30, 100]), sandwich_check(mn11_b1, None, [10, 50])]
    elapsed = time.perf_counter() - t0
    rows = [r for rep in reports for r in rep.rows]
    rel_budget = max(r.budget / r.upper for r in rows)
    ok = all(rep.passed for rep in reports) and rel_budget <= 1e-6 and elapsed < 300
    record(3, "sandwich suite", ok,
           f"{sum(r.verdict for r in rows)}/{len(rows)} verdicts pass, budget <= {rel_budget:.1e} relative, "
           f"{elapsed:.1f} s")


def test_04_weyl_zeta(zeta_quarter):
    fit = weyl_fit(zeta_quarter)
    record(4, "Weyl coefficient, zeta family", abs(fit.deviation) <= 0.10,
           f"A = {fit.A:.6f} vs 1/(pi b)^2 = {fit.predicted:.6f} (deviation {fit.deviation:+.2e}, band 10%) "
           f"on [{fit.window[0]:g}, {fit.window[1]:.3g}]")


def test_05_weyl_mn(mn11_quarter):
    fit = weyl_fit(mn11_quarter)
    ok = abs(fit.deviation) <= 0.15 and fit.predicted == pytest.approx(4.5 / (2 * math.pi * 0.25) ** 2)
    record(5, "Weyl coefficient, MN family", ok,
           f"A = {fit.A:.6f} vs c_11/(2 pi b)^2 = {fit.predicted:.6f} (deviation {fit.deviation:+.2e}, band 15%)")


def test_06_quadrant_identity():
    pairs = [(m, n) for m in range(1, 6) for n in range(1, 6)]
    ok = all(quadrant_identity(m, n) for m, n in pairs)
    ok = ok and all(isinstance(x, Fraction) for m, n in pairs for x in quadrant_predictions(m, n))
    ok = ok and sum(quadrant_predictions(1, 1)) == mn_constant(1, 1) == Fraction(9, 2)
    record(6, "quadrant identity", ok, f"exact rational equality for all {len(pairs)} pairs m, n <= 5")


def test_07_anti_wick():
    worst = 0.0
    count = 0
    for params in (ModelParams.zeta_family(1.0, 1.0), ModelParams.mn_family(1.0, 1, 1)):
        frame = frame_for(params)
        rng = np.random.default_rng(42)
        for _ in range(20):
            rep = anti_wick_check(TestFunction.random(rng, 10), params, frame, tol=1e-6)
            worst = max(worst, abs(rep.lhs - rep.rhs) / abs(rep.lhs))
            count += rep.passed
    record(7, "anti-Wick identity", count == 40 and worst <= 1e-6,
           f"{count}/40 functions pass, worst relative gap {worst:.2e} (<= 1e-6)")


def test_08_karamata(zeta_quarter):
    rep = karamata_check(zeta_quarter, np.geomspace(1e-1, 1e-6, 11), band=0.25)
    last = [r for r in rep.rows if r.usable][-1] if rep.smallest_usable_t else None
    detail = (f"status {rep.status}, monotone {rep.monotone}, ratio {last.ratio:.4f} at t = {last.t:g}"
              if last else f"status {rep.status}, no usable t")
    record(8, "Karamata trend", rep.passed and rep.trend_passed and abs(last.ratio - 1) <= 0.25, detail)


def test_09_birman_schwinger(zeta_b1):
    rep = bs_counting_check(ModelParams.zeta_family(1.0, 1.0), [5, 10, 20], zeta_b1, nodes=400, tol=1e-6)
    counts = ", ".join(f"{r.lam:g}: {r.n_spec} <= {r.bs_count}" for r in rep.rows)
    drift = max(r.drift for r in rep.rows)
    record(9, "Birman-Schwinger", rep.passed, f"{counts}; node doubling drift {drift:.1e} (<= 1e-6)")


def test_10_trace_class(zeta_b1):
    hist = trace_inverse_history(zeta_b1, rungs=2)
    totals = [ti.partial + ti.tail_bound for _, ti in hist]
    spread = abs(totals[1] - totals[0]) / totals[1]
    ok = all(math.isfinite(t) and t > 0 for t in totals) and spread <= 0.01
    record(10, "trace class", ok, f"sum 1/lambda_j + tail = {totals[0]:.10f}, {totals[1]:.10f} "
                                  f"across the final two rungs (spread {spread:.1e}, <= 1%)")


def test_11_count_bracket(zeta_quarter, mn11_quarter):
    total = ok = 0
    for spec in (zeta_quarter, mn11_quarter):
        rows = count_bracket_check(spec, bracket_lambdas(spec, count=10))
        total += len(rows)
        ok += sum(r.verdict for r in rows)
    record(11, "N(lambda) bracket", total == 20 and ok == total,
           f"{ok}/{total} log-spaced trusted lambdas bracketed (10 per family)")


def test_12_mn_positivity():
    parts = []
    ok = True
    for m, n in ((1, 1), (1, 2), (2, 3)):
        for b in (0.5, 1.0):
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                s = converged_spectrum(ModelParams.mn_family(b, m, n), "oscillator", want=1, tol=1e-8)
            good = s.certified_count >= 1 and s.certified[0] - s.certificates[0] > 0
            ok = ok and good
            parts.append(f"({m},{n}) b={b:g}: {s.certified[0]:.4f}" if s.certified_count else f"({m},{n}) b={b:g}: -")
    record(12, "positivity of H_mn", ok, "; ".join(parts))
