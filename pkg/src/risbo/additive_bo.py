"""Windowed Bayesian optimisation with a random additive decomposition.

The design vector is split into disjoint low-dimensional segments. Each
segment gets its own posterior (cross-covariances measured on the segment
coordinates only) and its own LCB acquisition, which is minimised by a small
grid search. The segment minimisers are stitched back together into the next
query. All GP work happens on coordinates rescaled to the unit cube.
"""

from __future__ import annotations

import functools
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .gp import (LENGTHSCALE_GRID, GramFactor, KernelSpec, Posterior, SampleWindow,
                 SingularKernelError,
                 beta_schedule, fit_lengthscale, kernel_eval)
from .parametrization import DomainBox

__all__ = [
    "BoConfig",
    "Partition",
    "BoTrace",
    "BoAborted",
    "SegmentModel",
    "make_partitions",
    "segment_posterior",
    "optimize_segment",
    "next_query",
    "run_bo",
    "run_random_search",
    "smoothed_window_mean",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoConfig:
    """Budget and search settings. ``Q=None`` means one partition per coordinate."""

    T: int = 350
    W: int = 20
    Q: int | None = None
    beta_scale: float = 0.4
    grid_1d: int = 64
    grid_nd: int = 16
    refine_passes: int = 3
    max_segment_dim: int = 1
    kernel: KernelSpec = field(default_factory=KernelSpec)
    refit_every: int = 25
    lengthscale_grid: tuple = tuple(LENGTHSCALE_GRID)
    normalize_y: bool = True
    segment_gram: str = "full"
    # candidate noise-to-signal ratios for the recommendation smoother; (0.0,) interpolates
    smoothing_noise: tuple = (0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.W < 2:
            raise ValueError(f"window W must be >= 2, got {self.W}")
        if self.Q is not None and self.Q < 1:
            raise ValueError(f"Q must be >= 1, got {self.Q}")
        if min(self.grid_1d, self.grid_nd) < 2:
            raise ValueError("grid resolution must be >= 2")
        if not 1 <= self.max_segment_dim <= 3:
            raise ValueError("max_segment_dim must be 1, 2 or 3")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        if self.segment_gram not in ("full", "additive"):
            raise ValueError(f"segment_gram must be 'full' or 'additive', got {self.segment_gram!r}")
        object.__setattr__(self, "smoothing_noise", tuple(float(v) for v in self.smoothing_noise))
        if not self.smoothing_noise or min(self.smoothing_noise) < 0:
            raise ValueError("smoothing_noise needs at least one value, all >= 0")

    def n_partitions(self, D: int) -> int:
        return D if self.Q is None else self.Q

    def grid_size(self, seg_dim: int) -> int:
        return self.grid_1d if seg_dim == 1 else self.grid_nd


@dataclass(frozen=True)
class Partition:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments",
                           tuple(np.asarray(s, dtype=int) for s in self.segments))

    @property
    def dim(self) -> int:
        return sum(s.size for s in self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def is_valid(self, D: int, max_segment_dim: int | None = None) -> bool:
        if not self.segments:
            return False
        flat = np.concatenate(self.segments)
        ok = flat.size == D and np.array_equal(np.sort(flat), np.arange(D))
        sizes = [s.size for s in self.segments]
        ok = ok and min(sizes) >= 1
        if max_segment_dim is not None:
            ok = ok and max(sizes) <= max_segment_dim
        return bool(ok)


def make_partitions(D: int, cfg: BoConfig, rng: np.random.Generator) -> list[Partition]:
    """``Q`` random partitions: shuffle the coordinates, cut into chunks."""
    if D < 1:
        raise ValueError(f"D must be >= 1, got {D}")
    s = cfg.max_segment_dim
    parts = []
    for _ in range(cfg.n_partitions(D)):
        perm = rng.permutation(D)
        parts.append(Partition([perm[i:i + s] for i in range(0, D, s)]))
    return parts


def additive_gram(X, part: Partition, spec: KernelSpec) -> np.ndarray:
    """Average of the per-segment kernel matrices (unit prior variance)."""
    return additive_gram_cross(X, X, part, spec)


def additive_gram_cross(A, B, part: Partition, spec: KernelSpec) -> np.ndarray:
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    return sum(kernel_eval(spec, cdist(A[:, s], B[:, s])) for s in part.segments) / len(part)


class SegmentModel:
    """Posterior machinery for one frozen window and one partition.

    ``gram="full"`` conditions on the kernel matrix of full-dimensional
    distances; ``"additive"`` replaces it with the sum of per-segment kernel
    matrices.
    """

    def __init__(self, X, y, part: Partition, spec: KernelSpec, gram: str = "full"):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.part = part
        self.spec = spec
        self.prior_var = 1.0
        if gram == "additive":
            self.prior_var = 1.0 / len(part.segments)
            self.factor = GramFactor(self.X, y, spec, gram=additive_gram(self.X, part, spec))
        else:
            self.factor = GramFactor(self.X, y, spec)
        self.gram = gram

    def predict(self, ell: int, xq_seg):
        seg = self.part.segments[ell]
        xq = np.asarray(xq_seg, dtype=float).reshape(-1, seg.size)
        kq = kernel_eval(self.spec, cdist(xq, self.X[:, seg]))
        if self.gram == "additive":
            return self.factor.predict(kq * self.prior_var, self.prior_var)
        return self.factor.predict(kq)

    def cross_full(self, xq) -> np.ndarray:
        """Covariance of the whole objective (all segments) between ``xq`` and the window."""
        xq = np.atleast_2d(np.asarray(xq, dtype=float))
        if self.gram == "additive":
            return additive_gram_cross(xq, self.X, self.part, self.spec)
        return kernel_eval(self.spec, cdist(xq, self.X))

    def mean(self, xq) -> np.ndarray:
        """Posterior mean of the whole objective at full points ``xq``."""
        return self.cross_full(xq) @ self.factor.alpha

    def acquisition(self, ell: int, xq_seg, beta: float) -> np.ndarray:
        mu, var = self.predict(ell, xq_seg)
        return mu - np.sqrt(beta) * np.sqrt(var)

    def acquisition_many(self, ells, xq, beta: float) -> np.ndarray:
        """Acquisition for several same-size segments; ``xq`` is (n_seg, n_query, d)."""
        xq = np.asarray(xq, dtype=float)
        n, m, _ = xq.shape
        kq = np.concatenate([
            kernel_eval(self.spec, cdist(xq[j], self.X[:, self.part.segments[ell]]))
            for j, ell in enumerate(ells)])
        return self._lcb(kq, beta).reshape(n, m)

    def acquisition_grid(self, ells, axis, beta: float) -> np.ndarray:
        """Acquisition on the full product grid ``axis^d`` for same-size segments.

        Row-major over grid points, matching ``itertools.product(axis, repeat=d)``.
        The cross-covariances are assembled from per-axis tables, which is much
        cheaper than forming all point-to-sample distances.
        """
        axis = np.asarray(axis, dtype=float)
        d = self.part.segments[ells[0]].size
        Xs = np.stack([self.X[:, self.part.segments[ell]] for ell in ells])  # (n, W, d)
        n, nw = Xs.shape[:2]
        diff2 = (axis[None, :, None, None] - Xs[:, None, :, :]) ** 2  # (n, G, W, d)
        se = self.spec.kind == "se"
        # SE factorises over coordinates; other kernels need the summed squared distance
        table = np.exp(diff2 * (-0.5 / self.spec.h**2)) if se else diff2
        acc = table[..., 0]
        for a in range(1, d):
            nxt = table[..., a]
            shape = (n,) + (1,) * a + (axis.size, nw)
            acc = acc[..., None, :] * nxt.reshape(shape) if se else acc[..., None, :] + nxt.reshape(shape)
        kq = acc.reshape(-1, nw)
        if not se:
            kq = kernel_eval(self.spec, np.sqrt(kq))
        return self._lcb(kq, beta).reshape(n, -1)

    def _lcb(self, kq, beta):
        if self.gram == "additive":
            mu, var = self.factor.predict(kq * self.prior_var, self.prior_var)
        else:
            mu, var = self.factor.predict(kq)
        return mu - np.sqrt(beta) * np.sqrt(var)


def segment_posterior(win: SampleWindow, part: Partition, ell: int, xq_seg,
                      spec: KernelSpec, gram: str = "full") -> Posterior:
    """Posterior of the ``ell``-th additive component at segment point(s) ``xq_seg``."""
    if len(win) == 0:
        raise ValueError("segment posterior needs a nonempty window")
    model = SegmentModel(win.X, win.y, part, spec, gram)
    mu, var = model.predict(ell, xq_seg)
    if np.ndim(xq_seg) <= 1 and np.size(xq_seg) == part.segments[ell].size:
        return Posterior(float(mu[0]), float(var[0]))
    return Posterior(mu, var)


@functools.lru_cache(maxsize=8)
def _grid(seg_dim: int, G: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, G)
    return np.array(list(itertools.product(axis, repeat=seg_dim)))


def _optimize_batch(model: SegmentModel, ells, beta: float, cfg: BoConfig) -> np.ndarray:
    # all segments in ``ells`` share one dimension d; one posterior solve per pass
    d = model.part.segments[ells[0]].size
    if d > cfg.max_segment_dim:
        raise ValueError(f"segment of dimension {d} exceeds max_segment_dim")
    n = len(ells)
    G = cfg.grid_size(d)
    grid = _grid(d, G)
    acq = model.acquisition_grid(ells, np.linspace(0.0, 1.0, G), beta)
    i = np.argmin(acq, axis=1)
    best = grid[i]
    best_val = acq[np.arange(n), i]
    offsets = np.array(list(itertools.product((0.0, -1.0, 1.0), repeat=d)))
    step = 1.0 / (G - 1)
    for _ in range(cfg.refine_passes):
        step /= 2
        cand = np.clip(best[:, None, :] + step * offsets[None], 0.0, 1.0)
        acq = model.acquisition_many(ells, cand, beta)
        i = np.argmin(acq, axis=1)
        val = acq[np.arange(n), i]
        better = val < best_val
        best = np.where(better[:, None], cand[np.arange(n), i], best)
        best_val = np.where(better, val, best_val)
    return best


def optimize_segment(model: SegmentModel, ell: int, beta: float, cfg: BoConfig) -> np.ndarray:
    """Grid argmin of the segment acquisition on [0, 1]^d, then local refinement.

    Each refinement pass halves the step and tries the incumbent's 3^d
    neighbours (incumbent listed first, so ties keep it). Ties on the coarse
    grid go to the lowest grid index.
    """
    return _optimize_batch(model, [ell], beta, cfg)[0]


def next_query(model: SegmentModel, beta: float, cfg: BoConfig) -> np.ndarray:
    """Concatenate the per-segment minimisers into a full unit-cube point."""
    x = np.empty(model.part.dim)
    by_dim: dict = {}
    for ell, seg in enumerate(model.part.segments):
        by_dim.setdefault(seg.size, []).append(ell)
    for ells in by_dim.values():
        best = _optimize_batch(model, ells, beta, cfg)
        for ell, b in zip(ells, best):
            x[model.part.segments[ell]] = b
    return x


@dataclass
class BoTrace:
    """Every evaluation in order, plus what the optimiser settled on.

    ``phase`` marks each evaluation as ``"init"``, ``"partition"`` or
    ``"update"``. ``x_best`` is the best *observed* design; ``x_last`` the final
    query. ``smoothed[i]`` is the posterior mean at ``X[i]`` under a
    white-noise nugget, from the last model whose window held it (nan if
    none did), and ``x_recommended`` minimises it. Under noisy feedback the
    best observation is mostly a lucky draw, and the smoothed value
    discounts that. ``recommended_path[i]`` is the index the optimiser would
    have reported right after evaluation ``i``.
    """

    X: list = field(default_factory=list)
    y: list = field(default_factory=list)
    phase: list = field(default_factory=list)
    lengthscales: list = field(default_factory=list)
    partitions: list = field(default_factory=list)
    chosen_partition: int | None = None
    smoothed: list = field(default_factory=list)
    recommended_path: list = field(default_factory=list)

    def record(self, x, y: float, phase: str) -> None:
        self.X.append(np.array(x, dtype=float))
        self.y.append(float(y))
        self.phase.append(phase)
        self.smoothed.append(np.nan)
        self.recommended_path.append(self.recommended_index)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.y))

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.y))

    @property
    def x_best(self) -> np.ndarray:
        return self.X[self.best_index]

    @property
    def y_best(self) -> float:
        return self.y[self.best_index]

    @property
    def x_last(self) -> np.ndarray:
        return self.X[-1]

    @property
    def recommended_index(self) -> int:
        """Index of the lowest smoothed value; falls back to the best observation."""
        sm = np.asarray(self.smoothed, dtype=float)
        if sm.size == 0 or np.all(np.isnan(sm)):
            return self.best_index
        return int(np.nanargmin(sm))

    @property
    def x_recommended(self) -> np.ndarray:
        return self.X[self.recommended_index]


class BoAborted(RuntimeError):
    """The objective raised; ``trace`` holds every evaluation made before that."""

    def __init__(self, msg: str, trace: BoTrace):
        super().__init__(msg)
        self.trace = trace


def smoothed_window_mean(model: SegmentModel, y, noise_grid) -> np.ndarray:
    """Posterior mean at the window points under a white-noise nugget.

    The nugget (a ratio of the unit prior variance) is picked from
    ``noise_grid`` by marginal likelihood; ties go to the earlier entry.
    """
    G = model.cross_full(model.X)
    eye = np.eye(G.shape[0])
    best, best_ll = None, -np.inf
    for tau in noise_grid:
        try:
            f = GramFactor(model.X, y, model.spec, gram=G + tau * eye)
        except SingularKernelError:
            continue
        ll = f.log_marginal_likelihood()
        if ll > best_ll:
            best, best_ll = G @ f.alpha, ll
    if best is None:
        raise SingularKernelError("smoother kernel singular for every nugget")
    return best


def _scaling(y: np.ndarray, normalize: bool):
    if not normalize:
        return 0.0, 1.0
    sd = y.std()
    return y.mean(), (sd if sd > 0 else 1.0)


def _targets(y: np.ndarray, normalize: bool) -> np.ndarray:
    m, sd = _scaling(y, normalize)
    return (y - m) / sd


def run_bo(oracle: Callable[[np.ndarray], float], box: DomainBox, cfg: BoConfig,
           rng: np.random.Generator,
           init_sampler: Callable[[np.random.Generator], np.ndarray] | None = None,
           partitions: Sequence[Partition] | None = None) -> BoTrace:
    """Minimise a noisy black-box ``oracle`` over ``box``.

    Evaluation budget is exactly ``W + Q + T``: ``W`` random starts, one
    trial query per candidate partition (the best one is kept) and ``T``
    updates.
    """
    D = box.dim
    trace = BoTrace()
    win = SampleWindow(cfg.W, D)
    spec = cfg.kernel

    def evaluate(u, phase):
        x = box.from_unit(u)
        try:
            y = float(oracle(x))
        except Exception as exc:
            raise BoAborted(f"objective failed at evaluation {len(trace)}: {exc}", trace) from exc
        trace.record(x, y, phase)
        win.append(u, y)
        return y

    def refit(part):
        nonlocal spec
        gram_fn = None
        if cfg.segment_gram == "additive":
            X = win.X
            gram_fn = lambda s: additive_gram(X, part, s)  # noqa: E731
        spec = fit_lengthscale(win, spec, cfg.lengthscale_grid,
                               y=_targets(win.y, cfg.normalize_y), gram_fn=gram_fn)
        trace.lengthscales.append((len(trace), spec.h))

    def smooth(model):
        # refresh the smoothed values of every point currently in the window
        m, sd = _scaling(win.y, cfg.normalize_y)
        first = len(trace) - len(win)
        mu = smoothed_window_mean(model, (win.y - m) / sd, cfg.smoothing_noise)
        trace.smoothed[first:] = list(m + sd * mu)
        trace.recommended_path[-1] = trace.recommended_index

    for _ in range(cfg.W):
        x0 = box.sample(rng) if init_sampler is None else np.asarray(init_sampler(rng), float)
        evaluate(box.to_unit(x0), "init")

    if partitions is None:
        partitions = make_partitions(D, cfg, rng)
    trace.partitions = list(partitions)
    if len(win) >= 3:
        refit(partitions[0])

    X0, y0 = win.X, _targets(win.y, cfg.normalize_y)
    beta = beta_schedule(0, cfg.beta_scale)
    trial = [next_query(SegmentModel(X0, y0, p, spec, cfg.segment_gram), beta, cfg)
             for p in partitions]
    scores = [evaluate(u, "partition") for u in trial]
    trace.chosen_partition = int(np.argmin(scores))
    part = partitions[trace.chosen_partition]
    log.debug("chose partition %d of %d", trace.chosen_partition, len(partitions))

    for t in range(1, cfg.T + 1):
        if t % cfg.refit_every == 0:
            refit(part)
        model = SegmentModel(win.X, _targets(win.y, cfg.normalize_y), part, spec,
                             cfg.segment_gram)
        smooth(model)
        u = next_query(model, beta_schedule(t, cfg.beta_scale), cfg)
        evaluate(u, "update")
    smooth(SegmentModel(win.X, _targets(win.y, cfg.normalize_y), part, spec, cfg.segment_gram))
    return trace


def run_random_search(oracle: Callable[[np.ndarray], float], box: DomainBox, budget: int,
                      rng: np.random.Generator) -> BoTrace:
    """Uniform random sampling of ``box`` with the same trace bookkeeping."""
    trace = BoTrace()
    for _ in range(budget):
        x = box.sample(rng)
        trace.record(x, float(oracle(x)), "random")
    return trace
