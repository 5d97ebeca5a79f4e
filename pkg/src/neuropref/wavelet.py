"""Periodized Daubechies-4 discrete wavelet transform.

Self-contained orthonormal DWT used for despiking and time-frequency
features. Periodization keeps the transform orthonormal (exact Parseval)
on even lengths at every level; odd lengths are handled by repeating the
last sample for that level, which preserves exact reconstruction but
makes energy conservation approximate.
"""

from __future__ import annotations

import numpy as np

from .errors import TooShortError

# Orthonormal db4 scaling filter (8 taps): sum h = sqrt(2), sum h^2 = 1.
DB4_LOWPASS = np.array(
    [
        0.230377813308855,
        0.714846570552542,
        0.630880767929590,
        -0.027983769416984,
        -0.187034811718881,
        0.030841381835987,
        0.032883011666983,
        -0.010597401784997,
    ]
)
# Quadrature mirror: g[n] = (-1)^n h[L-1-n]
DB4_HIGHPASS = DB4_LOWPASS[::-1] * np.array([1.0, -1.0] * 4)

_TAPS = len(DB4_LOWPASS)


def dwt_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """One analysis level: returns (approximation, detail, padded)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    padded = bool(n % 2)
    if padded:
        x = np.concatenate([x, x[-1:]])
        n += 1
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(_TAPS)[None, :]) % n
    windows = x[idx]
    return windows @ DB4_LOWPASS, windows @ DB4_HIGHPASS, padded


def idwt_step(approx: np.ndarray, detail: np.ndarray, padded: bool) -> np.ndarray:
    """Inverse of :func:`dwt_step` (drops the pad sample if one was added)."""
    n = 2 * len(approx)
    up_a = np.zeros(n)
    up_a[0::2] = approx
    up_d = np.zeros(n)
    up_d[0::2] = detail
    x = np.zeros(n)
    for k in range(_TAPS):
        x += DB4_LOWPASS[k] * np.roll(up_a, k) + DB4_HIGHPASS[k] * np.roll(up_d, k)
    return x[:-1] if padded else x


def wavedec(x: np.ndarray, levels: int = 5) -> tuple[list[np.ndarray], list[bool]]:
    """Multi-level decomposition.

    Returns (coeffs, pads) where coeffs = [D1, D2, ..., Dlevels, Alevels]
    (finest detail first) and pads records per-level odd-length padding,
    as needed by :func:`waverec`.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2**levels:
        raise TooShortError(f"signal length {len(x)} < 2^{levels} for {levels}-level DWT")
    details: list[np.ndarray] = []
    pads: list[bool] = []
    approx = x
    for _ in range(levels):
        approx, detail, padded = dwt_step(approx)
        details.append(detail)
        pads.append(padded)
    return details + [approx], pads


def waverec(coeffs: list[np.ndarray], pads: list[bool]) -> np.ndarray:
    """Inverse of :func:`wavedec`."""
    levels = len(coeffs) - 1
    approx = coeffs[-1]
    for lvl in range(levels - 1, -1, -1):
        approx = idwt_step(approx, coeffs[lvl], pads[lvl])
    return approx


def subband_names(levels: int = 5) -> list[str]:
    """Sub-band order used throughout: coarse first (A5, D5, ..., D1)."""
    return [f"a{levels}"] + [f"d{k}" for k in range(levels, 0, -1)]


def subband_coeffs(x: np.ndarray, levels: int = 5) -> dict[str, np.ndarray]:
    """Coefficients keyed by sub-band name, coarse (A) first."""
    coeffs, _ = wavedec(x, levels)
    out = {f"a{levels}": coeffs[-1]}
    for k in range(levels, 0, -1):
        out[f"d{k}"] = coeffs[k - 1]
    return out
