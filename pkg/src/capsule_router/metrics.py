"""Precision / recall / F1 from raw counts.

Arithmetic is exact (rationals) and rounded once to float at the end, so
results do not depend on evaluation order.
"""

from __future__ import annotations

from fractions import Fraction


def _ratio(num: int | Fraction, den: int | Fraction) -> Fraction:
    return Fraction(num) / den if den else Fraction(0)


def prf_exact(tp: int, fp: int, fn: int) -> tuple[Fraction, Fraction, Fraction]:
    """(precision, recall, f1) as rationals.

    Nothing expected and nothing selected counts as a perfect score; every
    other 0/0 is 0.
    """
    if tp == fp == fn == 0:
        return Fraction(1), Fraction(1), Fraction(1)
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = _ratio(2 * p * r, p + r)
    return p, r, f1


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p, r, f1 = prf_exact(tp, fp, fn)
    return float(p), float(r), float(f1)
