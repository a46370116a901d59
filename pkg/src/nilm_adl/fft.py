"""Iterative radix-2 Cooley-Tukey FFT."""

from __future__ import annotations

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (int(n) - 1).bit_length()


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def radix2_fft(x) -> np.ndarray:
    """Full complex spectrum of ``x``; ``len(x)`` must be a power of two."""
    a = np.asarray(x, dtype=complex)
    n = a.size
    if not is_power_of_two(n):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    a = a[_bit_reverse(n)]
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / m)
        blocks = a.reshape(-1, m)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * twiddle
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        a = blocks.reshape(n)
        m *= 2
    return a
