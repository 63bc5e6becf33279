"""Truncated complex power-series arithmetic and Pade evaluation.

A series is a plain 1-D complex ndarray of coefficients c_0..c_N, c_k
multiplying s^k.  Vector-valued series (one per bus) are stored as 2-D
arrays of shape (order+1, nbus) and handled column-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePade, PoleAtEvaluationPoint, ZeroLeadingCoefficient

#: condition-number ceiling for the Toeplitz denominator system; above it the
#: Pade order is reduced (the system degenerates near a branch point).
PADE_COND_LIMIT = 1e14


def convolve(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    """Cauchy product of two coefficient arrays, truncated at ``order``."""
    n = min(order, len(a) - 1 + len(b) - 1)
    return np.convolve(a, b)[: n + 1]


def reciprocal(a: np.ndarray, order: int) -> np.ndarray:
    """Series w with a * w = 1 through ``order``, by the standard recursion."""
    if a[0] == 0:
        raise ZeroLeadingCoefficient("series has zero constant term")
    w = np.zeros(order + 1, dtype=complex)
    w[0] = 1.0 / a[0]
    na = len(a)
    for k in range(1, order + 1):
        m = min(k, na - 1)
        w[k] = -np.dot(a[1 : m + 1], w[k - m : k][::-1]) / a[0]
    return w


def conjugate_reflect(a: np.ndarray) -> np.ndarray:
    """Coefficient-wise conjugate: evaluates to conj(a(s)) for real s."""
    return np.conj(a)


def eval_series(a: np.ndarray, s: complex) -> complex | np.ndarray:
    """Horner evaluation of a 1-D series, or column-wise for 2-D input."""
    acc = np.zeros_like(a[-1])
    for c in a[::-1]:
        acc = acc * s + c
    return acc


@dataclass(frozen=True)
class PadeApproximant:
    """Near-diagonal rational approximant with normalized denominator (b_0 = 1)."""

    num: np.ndarray
    den: np.ndarray

    @property
    def order(self) -> tuple[int, int]:
        return len(self.num) - 1, len(self.den) - 1


def _try_denominator(a: np.ndarray, m: int, n: int) -> np.ndarray | None:
    """Solve the Toeplitz block for an [m/n] denominator, or None if degenerate."""
    if n == 0:
        return np.array([1.0 + 0.0j])
    # rows: sum_{j=1..n} b_j a_{m+i-j} = -a_{m+i},  i = 1..n
    C = np.empty((n, n), dtype=complex)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            k = m + i - j
            C[i - 1, j - 1] = a[k] if k >= 0 else 0.0
    rhs = -a[m + 1 : m + n + 1]
    try:
        if np.linalg.cond(C) > PADE_COND_LIMIT:
            return None
        b = np.linalg.solve(C, rhs)
    except np.linalg.LinAlgError:
        return None
    return np.concatenate([[1.0 + 0.0j], b])


def pade_build(a: np.ndarray, m: int) -> PadeApproximant:
    """Diagonal-preference [m/m] Pade approximant of a coefficient array.

    Falls back to [m/m-1] when only 2m coefficients are available and
    reduces the order on degenerate (ill-conditioned) Toeplitz blocks;
    raises DegeneratePade only when no admissible order works.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    for mm in range(m, -1, -1):
        for n in ((mm, mm - 1) if mm > 0 else (0,)):
            if n < 0 or mm + n > len(a) - 1:
                continue
            den = _try_denominator(a, mm, n)
            if den is None:
                continue
            num = convolve(a[: mm + n + 1], den, mm)
            return PadeApproximant(num=num, den=den)
    raise DegeneratePade(f"no solvable Pade block up to [{m}/{m}]")


def pade_from_series(a: np.ndarray) -> PadeApproximant:
    """Highest-order near-diagonal approximant the coefficient count allows."""
    return pade_build(a, (len(a) - 1) // 2)


def pade_eval(p: PadeApproximant, s: complex) -> complex:
    den = eval_series(p.den, s)
    num = eval_series(p.num, s)
    if abs(den) < 1e-300 * max(1.0, abs(num)):
        raise PoleAtEvaluationPoint(f"denominator vanishes at s={s}")
    return num / den
