"""Sum-MSE design with perfect channel knowledge.

Alternating optimisation over three blocks, each of which can only lower the
sum MSE:

* precoder: regularised least squares with the receive gain scaled jointly
  (``W = alpha * Wbar``, ``C = Cbar / alpha``);
* filters: per-user Wiener scalars;
* RIS phases: majorisation-minimisation of a unit-modulus quadratic.

Also holds the brute-force grid baselines used where no closed-form
benchmark exists.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .system_model import (ChannelRealization, Design, effective_channel,
                           exact_sum_mse)

__all__ = [
    "BaselineConfig",
    "MmState",
    "DegenerateInputError",
    "PowerIterationError",
    "update_precoder",
    "update_filter",
    "lagrangian",
    "power_iteration",
    "build_mm_problem",
    "mm_objective",
    "mm_phase",
    "solve_known_csi",
    "KnownCsiResult",
    "closed_form_wc",
    "brute_force_sum_mse",
    "brute_force_power_single_user",
]


class DegenerateInputError(ValueError):
    pass


class PowerIterationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BaselineConfig:
    eps: float = 1e-6
    max_outer: int = 500
    mm_tol: float = 1e-9
    mm_max_iter: int = 1000
    inner_passes: int = 2
    # phase-step stretch factors tried after each MM solve; (1.0,) is the plain alternation
    phase_extrapolation: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.max_outer < 1 or self.mm_max_iter < 1 or self.inner_passes < 1:
            raise ValueError("iteration counts must be >= 1")
        object.__setattr__(self, "phase_extrapolation",
                           tuple(float(w) for w in self.phase_extrapolation))
        if 1.0 not in self.phase_extrapolation:
            raise ValueError("phase_extrapolation must include 1.0 (the plain MM step)")


def update_precoder(c_bar, phi, H, F, P: float, noise_var: float):
    """Closed-form ``(Wbar, alpha)`` for fixed filter direction ``c_bar``.

    ``Wbar = (G^H Cb^H Cb G + (noise_var/P) ||Cb||^2 I)^-1 G^H Cb^H`` with
    ``G = F Phi H``, and ``alpha = sqrt(P) / ||Wbar||_F``.
    """
    c_bar = np.asarray(c_bar, dtype=complex)
    G = effective_channel(np.asarray(phi, dtype=complex), ChannelRealization(H, F))
    CG = c_bar[:, None] * G
    M = G.shape[1]
    reg = noise_var / P * np.real(np.vdot(c_bar, c_bar))
    A = CG.conj().T @ CG + reg * np.eye(M)
    try:
        Wb = np.linalg.solve(A, CG.conj().T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInputError("precoder system is singular (zero filter, zero noise?)") from exc
    nrm = np.linalg.norm(Wb)
    if not np.isfinite(nrm) or nrm == 0:
        raise DegenerateInputError("precoder update produced a zero or non-finite matrix")
    return Wb, np.sqrt(P) / nrm


def lagrangian(Wb, alpha: float, c_bar, phi, H, F, P: float, noise_var: float,
               lam: float | None = None) -> float:
    """Scaled-variable Lagrangian; ``lam`` defaults to its stationary value."""
    c_bar = np.asarray(c_bar, dtype=complex)
    G = effective_channel(np.asarray(phi, dtype=complex), ChannelRealization(H, F))
    E = c_bar[:, None] * (G @ Wb) - np.eye(c_bar.size)
    cc = np.real(np.vdot(c_bar, c_bar))
    if lam is None:
        lam = noise_var * cc / (P * alpha**2)
    ww = np.real(np.vdot(Wb, Wb))
    K = c_bar.size
    # ||E||^2 = tr{...} - tr{...} - tr{...} + K; the constant K is dropped as in the objective
    return float(np.real(np.vdot(E, E)) - K + noise_var * cc / alpha**2
                 + lam * (alpha**2 * ww - P))


def update_filter(W, phi, H, F, noise_var: float) -> np.ndarray:
    """Per-user Wiener filters ``c_k = (g_k w_k)^* / (sum_j |g_k w_j|^2 + noise_var)``."""
    G = effective_channel(np.asarray(phi, dtype=complex), ChannelRealization(H, F))
    GW = G @ np.asarray(W, dtype=complex)
    denom = np.sum(np.abs(GW) ** 2, axis=1) + noise_var
    if np.any(denom <= 0):
        raise DegenerateInputError("filter update undefined: no signal and no noise at a user")
    return np.conj(np.diag(GW)) / denom


def power_iteration(A, tol: float = 1e-10, max_iter: int = 10_000):
    """Largest eigenvalue of a Hermitian PSD matrix, started from all-ones."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    v = np.ones(n, dtype=complex) / np.sqrt(n)
    lam = np.real(np.vdot(v, A @ v))
    for _ in range(max_iter):
        Av = A @ v
        nrm = np.linalg.norm(Av)
        if nrm == 0:
            return 0.0, v
        v = Av / nrm
        new = np.real(np.vdot(v, A @ v))
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return float(new), v
        lam = new
    raise PowerIterationError(f"power iteration did not converge in {max_iter} steps")


@dataclass
class MmState:
    """Phase subproblem ``f(phi) = phi^H Xi phi - 2 Re{phi^H b}``.

    ``d = diag(H W C F)`` and ``b = conj(d)``.
    """

    phi: np.ndarray
    Xi: np.ndarray
    d: np.ndarray
    lambda_max: float

    @property
    def b(self) -> np.ndarray:
        return np.conj(self.d)


def build_mm_problem(W, c, H, F, phi0=None) -> MmState:
    """Assemble ``Xi = A o B^T`` with ``A = F^H C^H C F`` and ``B = H W W^H H^H``.

    Without ``phi0`` the iterations start from ``exp(j arg b)``, the minimiser
    of the linear term. The all-ones start lands in a poor local minimum on
    a few percent of two-element instances.
    """
    W = np.asarray(W, dtype=complex)
    c = np.asarray(c, dtype=complex)
    H = np.asarray(H, dtype=complex)
    F = np.asarray(F, dtype=complex)
    CF = c[:, None] * F
    A = CF.conj().T @ CF
    HW = H @ W
    B = HW @ HW.conj().T
    Xi = A * B.T
    Xi = 0.5 * (Xi + Xi.conj().T)
    d = np.einsum("nk,kn->n", HW, CF)
    lam, _ = power_iteration(Xi)
    phi = np.exp(-1j * np.angle(d)) if phi0 is None else np.asarray(phi0, dtype=complex)
    return MmState(phi, Xi, d, lam)


def mm_objective(state: MmState, phi) -> float:
    phi = np.asarray(phi, dtype=complex)
    return float(np.real(np.vdot(phi, state.Xi @ phi)) - 2 * np.real(np.vdot(phi, state.b)))


@dataclass
class MmResult:
    phi: np.ndarray
    history: list
    converged: bool


def mm_phase(state: MmState, tol: float = 1e-9, max_iter: int = 1000) -> MmResult:
    """Iterate ``phi <- exp(j arg((lambda_max I - Xi) phi + b))``.

    Each step minimises the majoriser built at the current point, so the
    objective never increases.
    """
    phi = state.phi
    f = mm_objective(state, phi)
    history = [f]
    lam = state.lambda_max
    for _ in range(max_iter):
        q = lam * phi - state.Xi @ phi + state.b
        # q = 0 leaves the phase free; keep the incumbent there
        phi_new = np.where(np.abs(q) > 0, np.exp(1j * np.angle(q)), phi)
        f_new = mm_objective(state, phi_new)
        history.append(f_new)
        phi = phi_new
        if abs(f_new - f) < tol:
            return MmResult(phi, history, True)
        f = f_new
    return MmResult(phi, history, False)


def closed_form_wc(phi, H, F, P: float, noise_var: float, c0=None, passes: int = 2):
    """Alternate the precoder and filter updates at fixed phases; returns (W, c)."""
    K = F.shape[0]
    c = np.ones(K, dtype=complex) if c0 is None else np.asarray(c0, dtype=complex)
    for _ in range(passes):
        Wb, alpha = update_precoder(c, phi, H, F, P, noise_var)
        W = alpha * Wb
        c = update_filter(W, phi, H, F, noise_var)
    return W, c


@dataclass
class KnownCsiResult:
    design: Design
    trace: list = field(default_factory=list)
    converged: bool = False


def solve_known_csi(H, F, P: float, noise_var: float, cfg: BaselineConfig | None = None,
                    phi0=None) -> KnownCsiResult:
    """Alternating W/C closed forms and MM phase updates until the sum MSE settles.

    Plain block alternation crawls at high SNR (the phases and the precoder
    are tightly coupled). After each MM solve the phase step is also tried
    stretched by the factors in ``cfg.phase_extrapolation``; every candidate
    gets fresh closed-form W, C and the lowest sum MSE wins. The unstretched
    candidate is always included, so the trace stays monotone.
    """
    cfg = cfg or BaselineConfig()
    ch = ChannelRealization(H, F)
    M, N, K = ch.shape
    phi = np.ones(N, dtype=complex) if phi0 is None else np.asarray(phi0, dtype=complex)
    W, c = closed_form_wc(phi, ch.H, ch.F, P, noise_var, None, cfg.inner_passes)
    trace = []
    prev = np.inf
    converged = False
    for _ in range(cfg.max_outer):
        state = build_mm_problem(W, c, ch.H, ch.F, phi)
        step = np.angle(mm_phase(state, cfg.mm_tol, cfg.mm_max_iter).phi / phi)
        best = None
        for omega in cfg.phase_extrapolation:
            cand = phi * np.exp(1j * omega * step)
            Wc, cc = closed_form_wc(cand, ch.H, ch.F, P, noise_var, c, cfg.inner_passes)
            fc = exact_sum_mse(Design(Wc, cand, cc), ch, noise_var)
            if best is None or fc < best[0]:
                best = (fc, cand, Wc, cc)
        f, phi, W, c = best
        trace.append(f)
        if abs(prev - f) < cfg.eps:
            converged = True
            break
        prev = f
    return KnownCsiResult(Design(W, phi, c), trace, converged)


def _closed_form_wc_batch(G, c, P: float, noise_var: float, passes: int):
    """Vectorised :func:`closed_form_wc` over a stack of cascaded channels ``G`` (B, K, M)."""
    B, K, M = G.shape
    eye = np.eye(M)
    for _ in range(passes):
        CG = c[:, :, None] * G
        CGh = np.conj(np.swapaxes(CG, 1, 2))
        reg = noise_var / P * np.sum(np.abs(c) ** 2, axis=1)
        Wb = np.linalg.solve(CGh @ CG + reg[:, None, None] * eye, CGh)
        alpha = np.sqrt(P) / np.linalg.norm(Wb, axis=(1, 2))
        W = alpha[:, None, None] * Wb
        GW = G @ W
        c = np.conj(np.diagonal(GW, axis1=1, axis2=2)) / (np.sum(np.abs(GW) ** 2, axis=2) + noise_var)
    E = c[:, :, None] * (G @ W) - np.eye(K)
    return np.sum(np.abs(E) ** 2, axis=(1, 2)) + noise_var * np.sum(np.abs(c) ** 2, axis=1)


def brute_force_sum_mse(H, F, P: float, noise_var: float, n_grid: int = 360,
                        restarts: int = 20, rng: np.random.Generator | None = None,
                        passes: int = 20) -> float:
    """Grid search over RIS phases with closed-form W, c at every grid point.

    The first phase is pinned to 0 (a common RIS phase is absorbed by W).
    Each grid point takes the best of ``restarts`` filter initialisations.
    """
    rng = rng or np.random.default_rng(0)
    ch = ChannelRealization(H, F)
    M, N, K = ch.shape
    axis = np.linspace(0, 2 * np.pi, n_grid, endpoint=False)
    starts = np.vstack([np.ones(K, dtype=complex)] + [
        np.exp(2j * np.pi * rng.uniform(size=K)) * rng.uniform(0.2, 2.0, size=K)
        for _ in range(restarts - 1)])
    best = np.inf
    rel = itertools.product(axis, repeat=N - 1)
    while True:
        chunk = list(itertools.islice(rel, 512))
        if not chunk:
            return float(best)
        phis = np.exp(1j * np.hstack([np.zeros((len(chunk), 1)), np.array(chunk)]))
        G = np.einsum("kn,bn,nm->bkm", ch.F, phis, ch.H)
        G = np.repeat(G, restarts, axis=0)
        c0 = np.tile(starts, (len(chunk), 1))
        best = min(best, _closed_form_wc_batch(G, c0, P, noise_var, passes).min())


def brute_force_power_single_user(H, F, P: float, noise_var: float, n_grid: int = 720) -> float:
    """Max received power for K = 1: phase grid plus matched beamforming.

    For fixed phases the best unit-power precoder is the matched filter, so
    the received power is ``P ||f Phi H||^2 + noise_var``.
    """
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    H = np.asarray(H, dtype=complex)
    if F.shape[0] != 1:
        raise ValueError("single-user oracle needs K = 1")
    N = H.shape[0]
    axis = np.linspace(0, 2 * np.pi, n_grid, endpoint=False)
    fH = F[0][:, None] * H  # row n: f_n * H[n, :]
    best = 0.0
    for rel in itertools.product(axis, repeat=N - 1):
        phi = np.exp(1j * np.concatenate(([0.0], rel)))
        g = phi @ fH
        best = max(best, float(np.real(np.vdot(g, g))))
    return P * best + noise_var
