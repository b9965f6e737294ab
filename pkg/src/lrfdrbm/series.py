"""Convergent tail sums used by the level-decay profiles."""
from __future__ import annotations

import math

import numpy as np

from .errors import DivergenceError

# direct summation covers n <= SWITCH; Euler-Maclaurin handles the rest
SWITCH = 1000


def _em_tail(N: int, s: float) -> float:
    """Euler-Maclaurin estimate of sum_{n>N} n^-s for N >= SWITCH."""
    n = float(N)
    return (n ** (1 - s) / (s - 1) - 0.5 * n ** -s + s * n ** (-s - 1) / 12
            - s * (s + 1) * (s + 2) * n ** (-s - 3) / 720)


def tail_sum_power(a: int, s: float, return_switch: bool = False):
    """sum_{n=a+1}^inf n^-s for s > 1.

    Terms up to ``max(a, SWITCH)`` are summed directly (smallest first);
    the remainder comes from the Euler-Maclaurin expansion, whose leading
    term is N^(1-s)/(s-1). The neglected correction is below 1e-20 relative.
    """
    if s <= 1:
        raise DivergenceError(f"sum of n^-s diverges for s={s}")
    if a < 0:
        raise ValueError("a must be nonnegative")
    a = int(a)
    N = max(a, SWITCH)
    direct = 0.0
    if N > a:
        terms = np.arange(a + 1, N + 1, dtype=float) ** -s
        direct = math.fsum(terms[::-1])
    value = direct + _em_tail(N, s)
    return (value, N) if return_switch else value


def tail_sum_log(m: int) -> float:
    """sum_{k>m} 1 / ((k+1) ln^2(k+1)), used by the logarithmic level kind."""
    N = max(int(m), 10 ** 6)
    direct = 0.0
    if N > m:
        k = np.arange(m + 2, N + 2, dtype=float)
        direct = math.fsum((1.0 / (k * np.log(k) ** 2))[::-1])
    # midpoint-rule remainder: integral of 1/(x ln^2 x) from N+1.5
    return direct + 1.0 / math.log(N + 1.5)
