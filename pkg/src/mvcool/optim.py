"""Deterministic bounded 1-D minimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class GoldenResult:
    x: float
    fun: float
    iterations: int
    converged: bool


def golden_section(f, lo: float, hi: float, xtol: float = 1e-8, max_iter: int = 200) -> GoldenResult:
    """Golden-section search for a minimum of a unimodal ``f`` on [lo, hi].

    The bracket end points are also compared, so a minimum sitting on a bound
    is reported there.
    """
    a, b = float(lo), float(hi)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > xtol and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
        it += 1
    x, fx = (x1, f1) if f1 <= f2 else (x2, f2)
    for edge in (lo, hi):
        fe = f(edge)
        if fe < fx:
            x, fx = edge, fe
    return GoldenResult(x, fx, it, b - a <= xtol)
