"""Signal model of the RIS-assisted multi-user MISO downlink.

The BS (M antennas) sends ``s`` (K streams) through the precoder W, the RIS
(N elements) reflects with ``Phi = diag(exp(j theta))`` and user k scales its
reception by ``c_k``::

    s_hat = C F Phi H W s + C u,      u ~ CN(0, noise_var I)

There is no direct BS-user link. Channels are i.i.d. Rayleigh, optionally
scaled by a distance-based large-scale gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "Design",
    "LargeScaleModel",
    "complex_normal",
    "sample_channels",
    "drift_channels",
    "effective_channel",
    "exact_sum_mse",
    "estimate_sum_mse",
    "per_user_mse",
    "per_user_mse_all",
    "estimate_per_user_mse",
    "harvested_power",
    "estimate_harvested_power",
    "smooth_extremum",
    "pilot_symbols",
    "snr_to_noise_var",
]

PILOT_ALPHABETS = ("qpsk", "gaussian")


@dataclass(frozen=True)
class SystemConfig:
    """Antenna/element/user counts, power budget and pilot settings.

    ``snr_def`` only documents the convention used by sweeps: SNR = P / noise_var.
    """

    M: int = 2
    N: int = 2
    K: int = 2
    P: float = 1.0
    noise_var: float = 0.01
    snr_def: str = "P/noise_var"
    pilot_count: int = 1
    constellation: str = "qpsk"

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.K < 1:
            raise ValueError(f"M, N, K must be >= 1, got {self.M}, {self.N}, {self.K}")
        if not self.P > 0:
            raise ValueError(f"power budget P must be > 0, got {self.P}")
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")
        if self.pilot_count < 1:
            raise ValueError(f"pilot_count must be >= 1, got {self.pilot_count}")
        if self.constellation not in PILOT_ALPHABETS:
            raise ValueError(f"unknown constellation {self.constellation!r}")

    @property
    def dim(self) -> int:
        """Length of the real design vector, 2(M+1)K + N - 1."""
        return 2 * (self.M + 1) * self.K + self.N - 1

    @property
    def snr_db(self) -> float:
        return 10 * np.log10(self.P / self.noise_var) if self.noise_var > 0 else np.inf


def snr_to_noise_var(snr_db: float, P: float = 1.0) -> float:
    """Noise variance giving ``SNR = P / noise_var`` (in dB)."""
    return P * 10 ** (-snr_db / 10)


@dataclass(frozen=True)
class LargeScaleModel:
    """Path loss ``kappa = ref_loss * d ** -alpha`` per hop.

    ``ref_loss`` is the linear gain at 1 m (1e-3, i.e. -30 dB, by default).
    The default hop lengths put the RIS 10 m from the BS and 40 m from the
    users.
    """

    alpha: float = 2.2
    ref_loss: float = 1e-3
    d_bs_ris: float = 10.0
    d_ris_user: float = 40.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.ref_loss > 0):
            raise ValueError("alpha and ref_loss must be > 0")
        if not (self.d_bs_ris > 0 and self.d_ris_user > 0):
            raise ValueError("link distances must be > 0")

    def gain(self, d: float) -> float:
        return self.ref_loss * d ** (-self.alpha)


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray  # N x M, BS -> RIS
    F: np.ndarray  # K x N, RIS -> users
    large_scale_gain: tuple = field(default=(1.0, 1.0))

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        F = np.asarray(self.F, dtype=complex)
        if H.ndim != 2 or F.ndim != 2 or F.shape[1] != H.shape[0]:
            raise ValueError(f"inconsistent channel shapes H{H.shape}, F{F.shape}")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(F))):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "F", F)

    @property
    def shape(self):
        """(M, N, K)."""
        return self.H.shape[1], self.H.shape[0], self.F.shape[0]


@dataclass(frozen=True)
class Design:
    """Precoder W (M x K), RIS phases phi (N,), receive filters c (K,)."""

    W: np.ndarray
    phi: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", np.atleast_2d(np.asarray(self.W, dtype=complex)))
        object.__setattr__(self, "phi", np.atleast_1d(np.asarray(self.phi, dtype=complex)))
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=complex)))
        if self.W.shape[1] != self.c.shape[0]:
            raise ValueError(f"W has {self.W.shape[1]} streams but c has {self.c.shape[0]} users")

    @property
    def Phi(self) -> np.ndarray:
        return np.diag(self.phi)

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.c)

    @property
    def power(self) -> float:
        return float(np.real(np.vdot(self.W, self.W)))

    def check(self, P: float, atol: float = 1e-9) -> None:
        """Raise if the power budget or unit modulus is violated."""
        if self.power > P + atol:
            raise ValueError(f"tr(W^H W) = {self.power} exceeds P = {P}")
        if np.max(np.abs(np.abs(self.phi) - 1.0), initial=0.0) > 1e-12:
            raise ValueError("RIS coefficients are not unit modulus")


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """CN(0, var) samples: real and imaginary parts each N(0, var/2)."""
    scale = np.sqrt(var / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(cfg: SystemConfig, rng: np.random.Generator,
                    ls: LargeScaleModel | None = None) -> ChannelRealization:
    """Draw Rayleigh channels H (N x M) and F (K x N)."""
    H = complex_normal(rng, (cfg.N, cfg.M))
    F = complex_normal(rng, (cfg.K, cfg.N))
    if ls is None:
        return ChannelRealization(H, F)
    g_h, g_f = ls.gain(ls.d_bs_ris), ls.gain(ls.d_ris_user)
    return ChannelRealization(np.sqrt(g_h) * H, np.sqrt(g_f) * F, (g_h, g_f))


def drift_channels(ch: ChannelRealization, nu: float,
                   rng: np.random.Generator) -> ChannelRealization:
    """Slow-fading step: add CN(0, nu**2) perturbations to every entry."""
    if nu < 0:
        raise ValueError(f"drift nu must be >= 0, got {nu}")
    if nu == 0:
        return ch
    dH = complex_normal(rng, ch.H.shape, nu**2)
    dF = complex_normal(rng, ch.F.shape, nu**2)
    return ChannelRealization(ch.H + dH, ch.F + dF, ch.large_scale_gain)


def _check_shapes(d: Design, ch: ChannelRealization) -> None:
    M, N, K = ch.shape
    if d.W.shape != (M, K) or d.phi.shape != (N,) or d.c.shape != (K,):
        raise ValueError(
            f"design shapes W{d.W.shape}, phi{d.phi.shape}, c{d.c.shape} "
            f"do not match channel (M, N, K) = {(M, N, K)}")


def effective_channel(phi: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """Cascaded channel F Phi H (K x M)."""
    return (ch.F * phi[None, :]) @ ch.H


def _gain_matrix(d: Design, ch: ChannelRealization) -> np.ndarray:
    # G[k, j] = f_k Phi H w_j
    return effective_channel(d.phi, ch) @ d.W


def exact_sum_mse(d: Design, ch: ChannelRealization, noise_var: float) -> float:
    """Closed-form E||s_hat - s||^2 = ||C F Phi H W - I||_F^2 + noise_var ||C||_F^2."""
    _check_shapes(d, ch)
    E = d.c[:, None] * _gain_matrix(d, ch) - np.eye(d.c.size)
    val = np.real(np.vdot(E, E)) + noise_var * np.real(np.vdot(d.c, d.c))
    return float(max(val, 0.0))


def per_user_mse_all(d: Design, ch: ChannelRealization, noise_var: float) -> np.ndarray:
    """Vector of per-user MSEs, interference from every stream included."""
    _check_shapes(d, ch)
    G = _gain_matrix(d, ch)
    c = d.c
    rx_power = np.sum(np.abs(G) ** 2, axis=1)
    cross = np.real(c * np.diag(G))
    return np.abs(c) ** 2 * (rx_power + noise_var) - 2 * cross + 1.0


def per_user_mse(k: int, d: Design, ch: ChannelRealization, noise_var: float) -> float:
    """MSE E|s_hat_k - s_k|^2 of user ``k`` (0-based)."""
    K = d.c.size
    if not 0 <= k < K:
        raise IndexError(f"user index {k} out of range for K = {K}")
    return float(per_user_mse_all(d, ch, noise_var)[k])


def pilot_symbols(rng: np.random.Generator, K: int, count: int,
                  constellation: str = "qpsk") -> np.ndarray:
    """Unit-variance pilot block of shape (K, count)."""
    if constellation == "qpsk":
        bits = rng.integers(0, 2, size=(2, K, count))
        return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2)
    if constellation == "gaussian":
        return complex_normal(rng, (K, count))
    raise ValueError(f"unknown constellation {constellation!r}")


def _pilot_residual(d, ch, noise_var, count, rng, constellation):
    _check_shapes(d, ch)
    if count < 1:
        raise ValueError(f"pilot count must be >= 1, got {count}")
    K = d.c.size
    s = pilot_symbols(rng, K, count, constellation)
    u = complex_normal(rng, (K, count), noise_var)
    r = _gain_matrix(d, ch) @ s + u
    return d.c[:, None] * r - s


def estimate_sum_mse(d: Design, ch: ChannelRealization, noise_var: float, count: int,
                     rng: np.random.Generator, constellation: str = "qpsk") -> float:
    """Pilot-based sum MSE, (1/count) sum_n ||s_hat(n) - s(n)||^2."""
    e = _pilot_residual(d, ch, noise_var, count, rng, constellation)
    return float(np.sum(np.abs(e) ** 2) / count)


def estimate_per_user_mse(d: Design, ch: ChannelRealization, noise_var: float, count: int,
                          rng: np.random.Generator, constellation: str = "qpsk") -> np.ndarray:
    """Pilot-based per-user MSE vector (each user averages its own residuals)."""
    e = _pilot_residual(d, ch, noise_var, count, rng, constellation)
    return np.mean(np.abs(e) ** 2, axis=1)


def harvested_power(d: Design, ch: ChannelRealization, noise_var: float,
                    per_user: bool = False):
    """E{r r^H}: total received power, or the per-user vector. C is ignored."""
    M, N, K = ch.shape
    if d.W.shape != (M, K) or d.phi.shape != (N,):
        raise ValueError(f"design shapes W{d.W.shape}, phi{d.phi.shape} do not match channel")
    p = np.sum(np.abs(_gain_matrix(d, ch)) ** 2, axis=1) + noise_var
    return p if per_user else float(np.sum(p))


def estimate_harvested_power(d: Design, ch: ChannelRealization, noise_var: float, count: int,
                             rng: np.random.Generator, constellation: str = "qpsk") -> np.ndarray:
    """Per-user received energy averaged over ``count`` pilot vectors."""
    K = d.W.shape[1]
    s = pilot_symbols(rng, K, count, constellation)
    u = complex_normal(rng, (K, count), noise_var)
    r = _gain_matrix(d, ch) @ s + u
    return np.mean(np.abs(r) ** 2, axis=1)


def smooth_extremum(values, eta: float, mode: str = "max") -> float:
    """Log-sum-exp surrogate of max (``eta ln sum exp(v/eta)``) or min."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("smooth_extremum of an empty vector")
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    if mode == "max":
        m = v.max()
        return float(m + eta * np.log(np.sum(np.exp((v - m) / eta))))
    if mode == "min":
        m = v.min()
        return float(m - eta * np.log(np.sum(np.exp(-(v - m) / eta))))
    raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
