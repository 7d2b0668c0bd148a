"""Gaussian-process surrogate over a sliding window of observations.

Zero-mean prior with a stationary kernel ``k(||x - x'||)`` normalised so that
``k(0) = 1``. The posterior at a query point only conditions on the last ``W``
samples, and the kernel matrix is factorised with Cholesky (never inverted).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

__all__ = [
    "KernelSpec",
    "SampleWindow",
    "Posterior",
    "SingularKernelError",
    "kernel_eval",
    "pairwise_distances",
    "GramFactor",
    "posterior",
    "acquisition",
    "beta_schedule",
    "log_marginal_likelihood",
    "fit_lengthscale",
    "LENGTHSCALE_GRID",
]

MAX_JITTER = 1e-2
LENGTHSCALE_GRID = np.logspace(np.log10(0.05), np.log10(5.0), 16)


class SingularKernelError(np.linalg.LinAlgError):
    """Kernel matrix could not be factorised even after jitter escalation."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "se"
    h: float = 1.0
    nu: float = 2.5
    jitter: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("se", "matern"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.h > 0:
            raise ValueError(f"length-scale must be > 0, got {self.h}")
        if not self.nu > 0:
            raise ValueError(f"matern smoothness must be > 0, got {self.nu}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")

    def with_h(self, h: float) -> "KernelSpec":
        return replace(self, h=float(h))


def kernel_eval(spec: KernelSpec, a):
    """Kernel value at distance(s) ``a`` (scalar or array)."""
    a = np.asarray(a, dtype=float)
    if spec.kind == "se":
        out = np.exp(-(a**2) / (2 * spec.h**2))
    else:
        z = np.sqrt(2 * spec.nu) * a / spec.h
        with np.errstate(invalid="ignore", over="ignore"):
            out = (2 ** (1 - spec.nu) / gamma_fn(spec.nu)) * z**spec.nu * kv(spec.nu, z)
        # z -> 0 limit is 1; kv overflows to inf/nan for tiny z
        out = np.where(z < 1e-12, 1.0, np.nan_to_num(out, nan=1.0, posinf=1.0))
    return out if out.ndim else float(out)


def pairwise_distances(A, B) -> np.ndarray:
    return cdist(np.atleast_2d(np.asarray(A, dtype=float)),
                 np.atleast_2d(np.asarray(B, dtype=float)))


@dataclass
class Posterior:
    mu: float | np.ndarray
    sigma2: float | np.ndarray

    @property
    def sigma(self):
        return np.sqrt(self.sigma2)


class SampleWindow:
    """The last ``capacity`` (x, y) pairs; the oldest falls out first."""

    def __init__(self, capacity: int, dim: int | None = None):
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.dim = dim
        self._x: deque = deque(maxlen=capacity)
        self._y: deque = deque(maxlen=capacity)

    @classmethod
    def from_arrays(cls, X, y, capacity: int | None = None) -> "SampleWindow":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        win = cls(capacity or len(y), X.shape[1])
        for xi, yi in zip(X, y):
            win.append(xi, yi)
        return win

    def append(self, x, y: float) -> None:
        x = np.asarray(x, dtype=float).ravel()
        if self.dim is None:
            self.dim = x.size
        elif x.size != self.dim:
            raise ValueError(f"window holds {self.dim}-dim points, got {x.size}")
        self._x.append(x.copy())
        self._y.append(float(y))

    def __len__(self) -> int:
        return len(self._y)

    @property
    def X(self) -> np.ndarray:
        return np.array(self._x)

    @property
    def y(self) -> np.ndarray:
        return np.array(self._y)


class GramFactor:
    """Cholesky factor of the window kernel matrix plus ``K^-1 y``.

    ``gram`` may be passed in to replace the default full-distance kernel
    matrix (used for the additive-kernel variant).
    """

    def __init__(self, X, y, spec: KernelSpec, gram: np.ndarray | None = None):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        self.spec = spec
        if gram is None:
            gram = kernel_eval(spec, pairwise_distances(self.X, self.X))
        self.L, self.jitter = _cholesky_escalating(gram, spec.jitter)
        self.alpha = cho_solve((self.L, True), self.y)
        # triangular solve against the identity once; batched queries then reduce to a GEMM
        self._L_inv = solve_triangular(self.L, np.eye(self.L.shape[0]), lower=True,
                                       check_finite=False)

    def predict(self, k_cross: np.ndarray, prior_var: float = 1.0):
        """Mean and variance given cross-covariances ``k_cross`` (n_query x n)."""
        k_cross = np.atleast_2d(k_cross)
        mu = k_cross @ self.alpha
        v = k_cross @ self._L_inv.T
        var = prior_var - np.einsum("ij,ij->i", v, v)
        return mu, np.maximum(var, 0.0)

    def predict_at(self, Xq):
        kq = kernel_eval(self.spec, pairwise_distances(Xq, self.X))
        return self.predict(kq)

    def log_marginal_likelihood(self) -> float:
        n = self.y.size
        return float(-0.5 * self.y @ self.alpha - np.sum(np.log(np.diag(self.L)))
                     - 0.5 * n * np.log(2 * np.pi))


def _cholesky_escalating(gram: np.ndarray, jitter: float):
    eye = np.eye(gram.shape[0])
    j = jitter
    while True:
        try:
            return cholesky(gram + j * eye, lower=True, check_finite=False), j
        except np.linalg.LinAlgError:
            pass
        j = 1e-6 if j < 1e-6 else j * 10
        if j > MAX_JITTER * (1 + 1e-9):
            raise SingularKernelError(
                f"kernel matrix not positive definite with jitter up to {MAX_JITTER}")


def posterior(win: SampleWindow, xq, spec: KernelSpec) -> Posterior:
    """Windowed posterior mean/variance of f at ``xq`` (one point or a batch)."""
    if len(win) == 0:
        raise ValueError("posterior needs a nonempty window")
    xq = np.asarray(xq, dtype=float)
    single = xq.ndim == 1
    if np.atleast_2d(xq).shape[1] != win.dim:
        raise ValueError(f"query has dimension {np.atleast_2d(xq).shape[1]}, window {win.dim}")
    mu, var = GramFactor(win.X, win.y, spec).predict_at(np.atleast_2d(xq))
    if single:
        return Posterior(float(mu[0]), float(var[0]))
    return Posterior(mu, var)


def acquisition(p: Posterior, beta: float):
    """Lower confidence bound ``mu - sqrt(beta) sigma`` (to be minimised)."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return p.mu - np.sqrt(beta) * np.sqrt(p.sigma2)


def beta_schedule(t: int, scale: float = 0.4) -> float:
    """Exploration weight used to pick query ``t + 1``: ``scale * ln(2t + 2)``."""
    return scale * np.log(2 * t + 2)


def log_marginal_likelihood(X, y, spec: KernelSpec) -> float:
    return GramFactor(X, y, spec).log_marginal_likelihood()


def fit_lengthscale(win: SampleWindow, template: KernelSpec,
                    grid=LENGTHSCALE_GRID, y=None, gram_fn=None) -> KernelSpec:
    """Maximum-likelihood length-scale over a fixed candidate grid.

    ``y`` overrides the window's targets (e.g. after standardisation) and
    ``gram_fn(spec)`` overrides how the kernel matrix is built. Ties go to
    the larger length-scale.
    """
    if len(win) < 3:
        raise ValueError("length-scale fitting needs at least 3 samples")
    X = win.X
    y = win.y if y is None else np.asarray(y, dtype=float)
    D = pairwise_distances(X, X)
    best_h, best_ll = None, -np.inf
    for h in grid:
        spec = template.with_h(h)
        try:
            gram = kernel_eval(spec, D) if gram_fn is None else gram_fn(spec)
            ll = GramFactor(X, y, spec, gram=gram).log_marginal_likelihood()
        except SingularKernelError:
            continue
        if ll >= best_ll:
            best_h, best_ll = h, ll
    if best_h is None:
        raise SingularKernelError("every length-scale candidate gave a singular kernel")
    return template.with_h(best_h)
