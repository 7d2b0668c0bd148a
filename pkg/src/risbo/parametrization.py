"""Map the constrained design (W, Phi, C) to a box-bounded real vector and back.

Layout of ``x`` (length ``D = 2(M+1)K + N - 1``)::

    x = [theta (N) | psi (2MK - 1) | gamma (2K)]

* ``theta``  RIS phases, ``phi_n = exp(j theta_n)``;
* ``psi``    spherical angles of the realified, column-major ``vec(W)``,
             which always lands on the sphere ``||W||_F^2 = P``;
* ``gamma``  filter angles, ``[Re c; Im c] = scale * cos(gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system_model import Design, SystemConfig

__all__ = [
    "DomainBox",
    "Layout",
    "spherical_to_weights",
    "weights_to_spherical",
    "domain_box",
    "decode",
    "encode",
    "realify",
    "complexify",
]

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class DomainBox:
    """Per-coordinate bounds with an affine map onto the unit cube."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if not np.all(lo < hi):
            raise ValueError("every coordinate needs lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def from_unit(self, u):
        return self.lower + np.asarray(u, dtype=float) * self.width

    def contains(self, x, atol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        shape = (self.dim,) if n is None else (n, self.dim)
        return self.from_unit(rng.uniform(size=shape))

    def subset(self, idx) -> "DomainBox":
        idx = np.asarray(idx, dtype=int)
        return DomainBox(self.lower[idx], self.upper[idx])


@dataclass(frozen=True)
class Layout:
    """Index slices of the three blocks inside ``x``."""

    N: int
    n_psi: int
    n_gamma: int

    @classmethod
    def of(cls, cfg: SystemConfig) -> "Layout":
        return cls(cfg.N, 2 * cfg.M * cfg.K - 1, 2 * cfg.K)

    @property
    def theta(self) -> slice:
        return slice(0, self.N)

    @property
    def psi(self) -> slice:
        return slice(self.N, self.N + self.n_psi)

    @property
    def gamma(self) -> slice:
        return slice(self.N + self.n_psi, self.dim)

    @property
    def dim(self) -> int:
        return self.N + self.n_psi + self.n_gamma


def spherical_to_weights(psi, P: float) -> np.ndarray:
    """Spherical angles (n - 1 of them) to a length-n vector of norm sqrt(P).

    ``w_m = sqrt(P) cos(psi_m) prod_{i<m} sin(psi_i)`` and the last entry uses
    the sine of the last angle instead.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    sin_prefix = np.concatenate(([1.0], np.cumprod(np.sin(psi))))
    w = np.empty(psi.size + 1)
    w[:-1] = np.cos(psi) * sin_prefix[:-1]
    w[-1] = sin_prefix[-1]
    return np.sqrt(P) * w


def weights_to_spherical(w, P: float, full_sphere: bool = True) -> np.ndarray:
    """Inverse of :func:`spherical_to_weights` after projecting ``w`` onto the sphere.

    Angles left undetermined by a vanishing prefix product are set to pi/2.
    In full-sphere mode the last angle is reflected into (pi, 2pi) whenever the
    last coordinate is negative; otherwise the sign of that coordinate is lost.
    """
    w = np.asarray(w, dtype=float).ravel()
    norm = np.linalg.norm(w)
    if w.size < 2:
        raise ValueError("need at least two weights for a spherical representation")
    if norm == 0:
        raise ValueError("cannot invert the spherical map at w = 0")
    u = w / norm
    n = u.size - 1
    psi = np.full(n, np.pi / 2)
    # tail[m] = ||u[m:]||, the remaining mass the prefix sine product must carry
    tail = np.append(np.sqrt(np.cumsum((u**2)[::-1])[::-1]), 0.0)
    for m in range(n):
        if tail[m] <= 1e-300:
            break
        # arctan2 keeps full precision near 0 and pi, where arccos(u/tail) does not
        psi[m] = np.arctan2(tail[m + 1], u[m])
    if full_sphere and u[-1] < 0:
        psi[-1] = TWO_PI - psi[-1]
    return psi


def realify(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex).ravel()
    return np.concatenate((z.real, z.imag))


def complexify(r) -> np.ndarray:
    r = np.asarray(r, dtype=float).ravel()
    h = r.size // 2
    return r[:h] + 1j * r[h:]


def domain_box(cfg: SystemConfig, full_sphere: bool = True) -> DomainBox:
    lay = Layout.of(cfg)
    lo = np.zeros(lay.dim)
    hi = np.empty(lay.dim)
    hi[lay.theta] = TWO_PI
    hi[lay.psi] = np.pi
    if full_sphere:
        hi[lay.psi.stop - 1] = TWO_PI
    hi[lay.gamma] = np.pi
    return DomainBox(lo, hi)


def decode(x, cfg: SystemConfig, filter_scale: float = 1.0) -> Design:
    """Real vector -> Design. ``W`` always carries the full power ``P``."""
    x = np.asarray(x, dtype=float).ravel()
    lay = Layout.of(cfg)
    if x.size != lay.dim:
        raise ValueError(f"design vector has length {x.size}, expected D = {lay.dim}")
    phi = np.exp(1j * x[lay.theta])
    w = complexify(spherical_to_weights(x[lay.psi], cfg.P))
    W = w.reshape((cfg.M, cfg.K), order="F")
    c = complexify(filter_scale * np.cos(x[lay.gamma]))
    return Design(W, phi, c)


def encode(d: Design, cfg: SystemConfig, full_sphere: bool = True,
           filter_scale: float = 1.0) -> np.ndarray:
    """Design -> real vector; W is rescaled to full power first."""
    lay = Layout.of(cfg)
    if d.W.shape != (cfg.M, cfg.K) or d.phi.size != cfg.N:
        raise ValueError("design does not match the system configuration")
    ct = realify(d.c) / filter_scale
    if np.any(np.abs(ct) > 1 + 1e-12):
        raise ValueError(f"filter entries exceed the representable range +-{filter_scale}")
    x = np.empty(lay.dim)
    x[lay.theta] = np.mod(np.angle(d.phi), TWO_PI)
    x[lay.psi] = weights_to_spherical(realify(d.W.ravel(order="F")), cfg.P, full_sphere)
    x[lay.gamma] = np.arccos(np.clip(ct, -1.0, 1.0))
    return x
