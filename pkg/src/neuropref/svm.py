"""Soft-margin SVM dual solver (sequential minimal optimization).

Polynomial kernel only: K(x, z) = (gamma <x, z> + coef0)^degree. The
solver is Platt-style SMO with an error cache and two-heuristic working
pair selection; scan starting points are drawn from a seeded generator
so training is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConvergedError, SingleClassError


@dataclass(frozen=True)
class KernelParams:
    degree: int = 4
    gamma: float | None = None  # None resolves to 1 / n_features at fit time
    coef0: float = 1.0
    C: float = 1.0

    def resolve_gamma(self, n_features: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / n_features

    def to_dict(self) -> dict:
        return {"degree": self.degree, "gamma": self.gamma, "coef0": self.coef0, "C": self.C}


def polynomial_kernel(
    x: np.ndarray, z: np.ndarray, gamma: float, degree: int, coef0: float
) -> np.ndarray:
    return (gamma * (np.atleast_2d(x) @ np.atleast_2d(z).T) + coef0) ** degree


@dataclass
class SmoSolution:
    alpha: np.ndarray
    bias: float
    n_steps: int

    def dual_coef(self, y: np.ndarray) -> np.ndarray:
        return self.alpha * y


def dual_objective(kernel_matrix: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """W(alpha) = sum alpha - 1/2 alpha^T (yy^T * K) alpha (maximized)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ kernel_matrix @ ay)


def kkt_violation(
    kernel_matrix: np.ndarray,
    y: np.ndarray,
    alpha: np.ndarray,
    bias: float,
    c: float,
) -> float:
    """Largest KKT residual of a candidate dual solution."""
    f = kernel_matrix @ (alpha * y) + bias
    margins = y * f
    resid = np.zeros_like(alpha)
    at_zero = alpha <= 1e-8
    at_c = alpha >= c - 1e-8
    interior = ~(at_zero | at_c)
    resid[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    resid[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    resid[interior] = np.abs(margins[interior] - 1.0)
    return float(resid.max()) if len(resid) else 0.0


class _SmoState:
    def __init__(self, k: np.ndarray, y: np.ndarray, c: float, tol: float, rng: np.random.Generator):
        self.k = k
        self.y = y.astype(np.float64)
        self.c = c
        self.tol = tol
        self.rng = rng
        n = len(y)
        self.alpha = np.zeros(n)
        self.bias = 0.0
        self.errors = -self.y.copy()  # f = 0 initially, E = f - y
        self.n_steps = 0

    def _take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1_old, a2_old = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if y1 != y2:
            lo, hi = max(0.0, a2_old - a1_old), min(self.c, self.c + a2_old - a1_old)
        else:
            lo, hi = max(0.0, a1_old + a2_old - self.c), min(self.c, a1_old + a2_old)
        if lo >= hi:
            return False

        k11, k12, k22 = self.k[i1, i1], self.k[i1, i2], self.k[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # objective at both clip ends (eta <= 0 is possible only for
            # duplicated or degenerate points with this kernel)
            f1 = y1 * (e1 + self.bias) - a1_old * k11 - s * a2_old * k12
            f2 = y2 * (e2 + self.bias) - s * a1_old * k12 - a2_old * k22
            l1 = a1_old + s * (a2_old - lo)
            h1 = a1_old + s * (a2_old - hi)
            lo_obj = (
                l1 * f1 + lo * f2 + 0.5 * l1**2 * k11 + 0.5 * lo**2 * k22 + s * lo * l1 * k12
            )
            hi_obj = (
                h1 * f1 + hi * f2 + 0.5 * h1**2 * k11 + 0.5 * hi**2 * k22 + s * hi * h1 * k12
            )
            if lo_obj < hi_obj - 1e-12:
                a2 = lo
            elif lo_obj > hi_obj + 1e-12:
                a2 = hi
            else:
                a2 = a2_old
        if abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12):
            return False
        a1 = a1_old + s * (a2_old - a2)
        if a1 < 0.0:
            a2 += s * a1
            a1 = 0.0
        elif a1 > self.c:
            a2 += s * (a1 - self.c)
            a1 = self.c

        d1, d2 = y1 * (a1 - a1_old), y2 * (a2 - a2_old)
        b1 = self.bias - e1 - d1 * k11 - d2 * k12
        b2 = self.bias - e2 - d1 * k12 - d2 * k22
        if 0.0 < a1 < self.c:
            new_bias = b1
        elif 0.0 < a2 < self.c:
            new_bias = b2
        else:
            new_bias = 0.5 * (b1 + b2)

        self.errors += d1 * self.k[:, i1] + d2 * self.k[:, i2] + (new_bias - self.bias)
        self.alpha[i1], self.alpha[i2] = a1, a2
        self.bias = new_bias
        self.n_steps += 1
        return True

    def _examine(self, i2: int) -> int:
        y2, a2, e2 = self.y[i2], self.alpha[i2], self.errors[i2]
        r2 = e2 * y2
        if not ((r2 < -self.tol and a2 < self.c) or (r2 > self.tol and a2 > 0.0)):
            return 0
        non_bound = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.c))
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(self.errors[non_bound] - e2))])
            if self._take_step(i1, i2):
                return 1
        if len(non_bound):
            start = int(self.rng.integers(len(non_bound)))
            for off in range(len(non_bound)):
                if self._take_step(int(non_bound[(start + off) % len(non_bound)]), i2):
                    return 1
        n = len(self.alpha)
        start = int(self.rng.integers(n))
        for off in range(n):
            if self._take_step((start + off) % n, i2):
                return 1
        return 0


def smo_solve(
    kernel_matrix: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    tol: float = 1e-4,
    max_steps: int = 100_000,
    seed: int = 0,
) -> SmoSolution:
    """Solve the soft-margin dual for a precomputed kernel matrix.

    Maintains sum(alpha * y) = 0 exactly by construction and terminates
    when every point satisfies the KKT conditions within ``tol``.
    Raises NotConvergedError past ``max_steps`` optimization steps.
    """
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) - {1.0, -1.0}:
        raise ValueError("labels must be +1 / -1")
    if len(np.unique(y)) < 2:
        raise SingleClassError("training labels contain a single class")

    state = _SmoState(np.asarray(kernel_matrix, dtype=np.float64), y, c, tol,
                      np.random.default_rng(seed))
    examine_all = True
    num_changed = 1
    while num_changed > 0 or examine_all:
        num_changed = 0
        if examine_all:
            targets = range(len(y))
        else:
            targets = np.flatnonzero((state.alpha > 0.0) & (state.alpha < c))
        for i in targets:
            num_changed += state._examine(int(i))
            if state.n_steps > max_steps:
                raise NotConvergedError(f"SMO exceeded {max_steps} optimization steps")
        if examine_all:
            examine_all = False
        elif num_changed == 0:
            examine_all = True
    return SmoSolution(state.alpha, state.bias, state.n_steps)
