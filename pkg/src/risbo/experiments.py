"""Seeded Monte Carlo studies of the CSI-free design.

Each scenario sweeps one x-axis (SNR, transmit power, RIS size or pilot
count), draws ``realizations`` channel instances and records per-realization
metrics that are then averaged into a :class:`ResultTable`.

Randomness is split per realization with ``SeedSequence([seed, r, stream])``
so that adding realizations never changes earlier ones, and the same
realization index sees the same channels (and the same pilot noise stream)
in every scenario and at every x-axis point.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import known_csi
from .additive_bo import BoConfig, BoTrace, run_bo, run_random_search
from .gp import KernelSpec
from .known_csi import BaselineConfig
from .parametrization import decode, domain_box, weights_to_spherical, Layout
from .system_model import (ChannelRealization, LargeScaleModel, SystemConfig, drift_channels,
                           estimate_harvested_power, estimate_per_user_mse, estimate_sum_mse,
                           exact_sum_mse, harvested_power, per_user_mse_all, sample_channels,
                           smooth_extremum, snr_to_noise_var)

__all__ = [
    "SCENARIOS",
    "ExperimentConfig",
    "ConfigError",
    "ResultRow",
    "ResultTable",
    "init_design",
    "run_scenario",
    "emit_results",
    "parse_results",
    "results_to_csv",
    "resolve_filter_scale",
    "load_config",
    "config_from_dict",
    "realization_seeds",
    "EXPERIMENT_BO",
    "dbm_to_watt",
    "watt_to_dbm",
]

log = logging.getLogger(__name__)

SCENARIOS = (
    "sum-mse-bo",
    "sum-mse-known-csi",
    "minmax-mse",
    "power-transfer-total",
    "power-transfer-minmax",
    "slow-fading",
    "pilot-study",
    "element-sweep",
    "convergence-trace",
    "random-search-baseline",
)

POWER_SCENARIOS = ("power-transfer-total", "power-transfer-minmax")
CSV_HEADER = ("scenario", "x_axis", "metric", "mean", "stderr", "n", "seed")

# stream ids for SeedSequence([seed, r, stream])
_CHANNEL, _BO, _PILOT, _DRIFT, _BASELINE = range(5)

# The library default (singleton segments, full-dimension Gram matrix) loses to
# random search at equal budget on the 13-dim problem; studies use the
# additive-kernel variant with segments of up to three coordinates instead.
EXPERIMENT_BO = BoConfig(segment_gram="additive", max_segment_dim=3)


class ConfigError(ValueError):
    pass


def dbm_to_watt(dbm):
    return 10 ** ((np.asarray(dbm, dtype=float) - 30) / 10)


def watt_to_dbm(w):
    return 10 * np.log10(np.asarray(w, dtype=float)) + 30


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a scenario run needs; built from a TOML file or in code.

    Only the sweep relevant to ``scenario`` is used: ``snr_db`` for the MSE
    studies, ``tx_power_dbm`` for power transfer, ``n_elements`` for the
    element sweep and ``pilot_counts`` for the pilot study (the last two at
    ``fixed_snr_db``).
    """

    scenario: str = "sum-mse-bo"
    system: SystemConfig = field(default_factory=SystemConfig)
    bo: BoConfig = EXPERIMENT_BO
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    large_scale: LargeScaleModel | None = None
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    tx_power_dbm: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    n_elements: tuple = (2, 4, 6, 8, 10)
    pilot_counts: tuple = (1, 10, 20)
    fixed_snr_db: float = 20.0
    noise_dbm: float = -110.0
    eta: float = 50.0
    drift_nu: float = 0.001
    full_sphere: bool = True
    filter_scale: float | str = "auto"
    power_oracle: bool = True
    realizations: int = 100
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.realizations < 1:
            raise ConfigError(f"realizations must be >= 1, got {self.realizations}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if len(self.x_values()) == 0:
            raise ConfigError(f"the sweep grid for {self.scenario} is empty")
        if self.scenario in POWER_SCENARIOS and self.large_scale is None:
            raise ConfigError(f"scenario {self.scenario} needs a [large_scale] section")
        if not self.eta > 0:
            raise ConfigError("eta must be > 0")
        if self.drift_nu < 0:
            raise ConfigError("drift_nu must be >= 0")
        if self.filter_scale != "auto" and not (
                isinstance(self.filter_scale, (int, float)) and self.filter_scale > 0):
            raise ConfigError(f"filter_scale must be > 0 or 'auto', got {self.filter_scale!r}")
        return self

    def x_values(self) -> tuple:
        if self.scenario in POWER_SCENARIOS:
            return tuple(self.tx_power_dbm)
        if self.scenario == "element-sweep":
            return tuple(self.n_elements)
        if self.scenario == "pilot-study":
            return tuple(self.pilot_counts)
        return tuple(self.snr_db)


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    x_axis: float
    metric: str
    mean: float
    stderr: float
    n: int
    seed: int
    iteration: int | None = None

    @property
    def metric_label(self) -> str:
        return self.metric if self.iteration is None else f"{self.metric}@{self.iteration}"

    def sort_key(self):
        return (self.scenario, self.x_axis, self.metric,
                -1 if self.iteration is None else self.iteration)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def sorted(self) -> "ResultTable":
        return ResultTable(sorted(self.rows, key=ResultRow.sort_key))

    def get(self, metric: str, x_axis: float | None = None, iteration: int | None = None) -> list:
        return [r for r in self.rows if r.metric == metric and r.iteration == iteration
                and (x_axis is None or r.x_axis == x_axis)]

    def value(self, metric: str, x_axis: float) -> float:
        rows = self.get(metric, x_axis)
        if len(rows) != 1:
            raise KeyError(f"expected one row for {metric} at {x_axis}, found {len(rows)}")
        return rows[0].mean

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        rows = sorted(self.get(metric), key=lambda r: r.x_axis)
        return np.array([r.x_axis for r in rows]), np.array([r.mean for r in rows])


# ---------------------------------------------------------------------------
# seeding and initial designs


def realization_seeds(seed: int, r: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, r, stream]))


def init_design(cfg: SystemConfig, rng: np.random.Generator, full_sphere: bool = True) -> np.ndarray:
    """Random starting point: uniform phases and filter angles, sphere-uniform W."""
    lay = Layout.of(cfg)
    x = np.empty(lay.dim)
    x[lay.theta] = rng.uniform(0, 2 * np.pi, cfg.N)
    w = rng.standard_normal(2 * cfg.M * cfg.K)
    x[lay.psi] = weights_to_spherical(np.sqrt(cfg.P) * w / np.linalg.norm(w), cfg.P, full_sphere)
    x[lay.gamma] = rng.uniform(0, np.pi, 2 * cfg.K)
    return x


# ---------------------------------------------------------------------------
# per-realization studies


@dataclass
class _Env:
    """One realization's channels and the oracle the optimiser talks to."""

    cfg: ExperimentConfig
    system: SystemConfig
    channel: ChannelRealization
    pilot_rng: np.random.Generator
    drift_rng: np.random.Generator | None = None
    drift_nu: float = 0.0

    def current_channel(self) -> ChannelRealization:
        return self.channel

    def feedback(self) -> None:
        """Advance the channel by one feedback interval (slow fading only)."""
        if self.drift_nu > 0:
            self.channel = drift_channels(self.channel, self.drift_nu, self.drift_rng)

    def decode(self, x):
        return decode(x, self.system, resolve_filter_scale(self.cfg.filter_scale, self.system))


def resolve_filter_scale(scale, system: SystemConfig) -> float:
    """Filter range; ``"auto"`` is ``sqrt(K / (N P))``.

    With unit-variance fading a user's effective gain ``|f_k Phi H w_k|^2``
    averages ``N P / K``, and a matched filter scales like its inverse root.
    The rule gives exactly 1 at N = K, P = 1.
    """
    if scale == "auto":
        return float(np.sqrt(system.K / (system.N * system.P)))
    return float(scale)


def _mse_oracle(env: _Env) -> Callable:
    s = env.system

    def f(x):
        y = estimate_sum_mse(env.decode(x), env.channel, s.noise_var, s.pilot_count,
                             env.pilot_rng, s.constellation)
        env.feedback()
        return y
    return f


def _minmax_oracle(env: _Env) -> Callable:
    s = env.system

    def f(x):
        v = estimate_per_user_mse(env.decode(x), env.channel, s.noise_var, s.pilot_count,
                                  env.pilot_rng, s.constellation)
        return smooth_extremum(v, env.cfg.eta, "max")
    return f


def _power_oracle(env: _Env, minmax: bool) -> Callable:
    # powers are measured in units of the noise floor so eta has a sensible scale
    s = env.system

    def f(x):
        p = estimate_harvested_power(env.decode(x), env.channel, s.noise_var, s.pilot_count,
                                     env.pilot_rng, s.constellation) / s.noise_var
        return -(smooth_extremum(p, env.cfg.eta, "min") if minmax else float(np.sum(p)))
    return f


def _run_optimizer(env: _Env, oracle: Callable, r: int, random_search: bool = False) -> BoTrace:
    cfg = env.cfg
    box = domain_box(env.system, cfg.full_sphere)
    rng = realization_seeds(cfg.seed, r, _BO)
    if random_search:
        budget = cfg.bo.W + cfg.bo.n_partitions(box.dim) + cfg.bo.T
        return run_random_search(oracle, box, budget, rng)
    return run_bo(oracle, box, cfg.bo, rng,
                  init_sampler=lambda g: init_design(env.system, g, cfg.full_sphere))


def _system_at(cfg: ExperimentConfig, x: float) -> SystemConfig:
    s = cfg.system
    if cfg.scenario in POWER_SCENARIOS:
        return replace(s, P=float(dbm_to_watt(x)), noise_var=float(dbm_to_watt(cfg.noise_dbm)))
    if cfg.scenario == "element-sweep":
        return replace(s, N=int(x), noise_var=snr_to_noise_var(cfg.fixed_snr_db, s.P))
    if cfg.scenario == "pilot-study":
        return replace(s, pilot_count=int(x), noise_var=snr_to_noise_var(cfg.fixed_snr_db, s.P))
    return replace(s, noise_var=snr_to_noise_var(x, s.P))


def _make_env(cfg: ExperimentConfig, system: SystemConfig, r: int) -> _Env:
    ls = cfg.large_scale if cfg.scenario in POWER_SCENARIOS else None
    ch = sample_channels(system, realization_seeds(cfg.seed, r, _CHANNEL), ls)
    env = _Env(cfg, system, ch, realization_seeds(cfg.seed, r, _PILOT))
    if cfg.scenario == "slow-fading":
        env.drift_rng = realization_seeds(cfg.seed, r, _DRIFT)
        env.drift_nu = cfg.drift_nu
    return env


def _mse_metrics(env: _Env, trace: BoTrace) -> dict:
    """Sum-MSE summary of one optimiser run, measured on the final channel."""
    s, ch = env.system, env.channel
    exact = np.array([exact_sum_mse(env.decode(x), ch, s.noise_var) for x in trace.X])
    n_init = min(env.cfg.bo.W, len(exact))
    y = np.asarray(trace.y)
    observed_idx = np.array([np.argmin(y[:i + 1]) for i in range(y.size)])
    return {
        "sum_mse": exact[trace.recommended_index],
        "best_observed_sum_mse": exact[trace.best_index],
        "sum_mse_last": exact[-1],
        "best_visited_sum_mse": exact.min(),
        "init_sum_mse": exact[:n_init].mean(),
        "observed_best": trace.y_best,
        # exact MSE of the best-observed-so-far design, and of the design the
        # optimiser would report, after each evaluation
        "_trace": {"incumbent_sum_mse": exact[observed_idx],
                   "recommended_sum_mse": exact[np.asarray(trace.recommended_path, dtype=int)],
                   "exact_best_so_far": np.minimum.accumulate(exact),
                   "exact": exact,
                   "observed_best_so_far": trace.best_so_far},
    }


def _study_mse(cfg, system, r, random_search=False):
    env = _make_env(cfg, system, r)
    trace = _run_optimizer(env, _mse_oracle(env), r, random_search)
    return _mse_metrics(env, trace)


def _study_known_csi(cfg, system, r):
    env = _make_env(cfg, system, r)
    res = known_csi.solve_known_csi(env.channel.H, env.channel.F, system.P, system.noise_var,
                                    cfg.baseline)
    return {"sum_mse": res.trace[-1], "outer_iterations": float(len(res.trace))}


def _study_element_sweep(cfg, system, r):
    out = _study_mse(cfg, system, r)
    out.pop("_trace")
    env = _make_env(cfg, system, r)
    res = known_csi.solve_known_csi(env.channel.H, env.channel.F, system.P, system.noise_var,
                                    cfg.baseline)
    out["known_csi_sum_mse"] = res.trace[-1]
    return out


def _study_minmax(cfg, system, r):
    env = _make_env(cfg, system, r)
    trace = _run_optimizer(env, _minmax_oracle(env), r)
    d = env.decode(trace.x_recommended)
    per_user = per_user_mse_all(d, env.channel, system.noise_var)
    return {"max_user_mse": float(per_user.max()),
            "sum_mse": float(per_user.sum()),
            "smooth_max_mse": smooth_extremum(per_user, cfg.eta, "max"),
            "init_max_user_mse": float(np.mean([
                per_user_mse_all(env.decode(x), env.channel, system.noise_var).max()
                for x in trace.X[:cfg.bo.W]]))}


def _study_power(cfg, system, r):
    minmax = cfg.scenario == "power-transfer-minmax"
    env = _make_env(cfg, system, r)
    trace = _run_optimizer(env, _power_oracle(env, minmax), r)
    p = harvested_power(env.decode(trace.x_recommended), env.channel, system.noise_var, per_user=True)
    out = {"received_power_dbm": float(watt_to_dbm(p.sum())),
           "min_user_power_dbm": float(watt_to_dbm(p.min()))}
    if cfg.power_oracle and system.K == 1:
        best = known_csi.brute_force_power_single_user(env.channel.H, env.channel.F, system.P,
                                                       system.noise_var)
        out["oracle_power_dbm"] = float(watt_to_dbm(best))
    return out


def _study(cfg: ExperimentConfig, x: float, r: int) -> dict:
    system = _system_at(cfg, x)
    sc = cfg.scenario
    if sc in ("sum-mse-bo", "slow-fading", "pilot-study", "convergence-trace"):
        return _study_mse(cfg, system, r)
    if sc == "random-search-baseline":
        return _study_mse(cfg, system, r, random_search=True)
    if sc == "sum-mse-known-csi":
        return _study_known_csi(cfg, system, r)
    if sc == "element-sweep":
        return _study_element_sweep(cfg, system, r)
    if sc == "minmax-mse":
        return _study_minmax(cfg, system, r)
    return _study_power(cfg, system, r)


def _study_task(args):
    cfg, x, r = args
    return x, r, _study(cfg, x, r)


# ---------------------------------------------------------------------------
# aggregation


def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return m, se


def _aggregate(cfg: ExperimentConfig, results: dict) -> ResultTable:
    rows = []
    emit_traces = cfg.scenario in ("sum-mse-bo", "convergence-trace", "slow-fading",
                                   "random-search-baseline")
    for x in cfg.x_values():
        per_r = [results[(x, r)] for r in range(cfg.realizations)]
        keys = [k for k in per_r[0] if not k.startswith("_")]
        for k in keys:
            m, se = _mean_stderr([d[k] for d in per_r])
            rows.append(ResultRow(cfg.scenario, float(x), k, m, se, len(per_r), cfg.seed))
        if emit_traces and "_trace" in per_r[0]:
            names = ("incumbent_sum_mse",) if cfg.scenario != "convergence-trace" else \
                tuple(per_r[0]["_trace"])
            for name in names:
                arr = np.array([d["_trace"][name] for d in per_r])
                mean = arr.mean(axis=0)
                se = arr.std(axis=0, ddof=1) / math.sqrt(len(per_r)) if len(per_r) > 1 \
                    else np.zeros_like(mean)
                rows.extend(ResultRow(cfg.scenario, float(x), name, float(mean[i]), float(se[i]),
                                      len(per_r), cfg.seed, i) for i in range(arr.shape[1]))
    return ResultTable(rows).sorted()


def run_scenario(cfg: ExperimentConfig, return_raw: bool = False):
    """Run every (x-axis value, realization) pair and average the metrics.

    With ``return_raw`` the per-realization dictionaries are returned as well,
    keyed by ``(x, r)``, for paired comparisons across scenarios.
    """
    cfg.validate()
    tasks = [(cfg, x, r) for x in cfg.x_values() for r in range(cfg.realizations)]
    log.info("scenario %s: %d runs", cfg.scenario, len(tasks))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            out = list(pool.map(_study_task, tasks, chunksize=1))
    else:
        out = [_study_task(t) for t in tasks]
    results = {(x, r): d for x, r, d in out}
    table = _aggregate(cfg, results)
    return (table, results) if return_raw else table


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def results_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in table.sorted():
        w.writerow((r.scenario, _fmt(r.x_axis), r.metric_label, _fmt(r.mean), _fmt(r.stderr),
                    r.n, r.seed))
    return buf.getvalue()


def emit_results(table: ResultTable, path) -> None:
    """Write ``table`` as CSV with a fixed header and sorted rows."""
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(results_to_csv(table), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def parse_results(path) -> ResultTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for sc, x, metric, mean, se, n, seed in reader:
            name, _, it = metric.partition("@")
            rows.append(ResultRow(sc, float(x), name, float(mean), float(se), int(n), int(seed),
                                  int(it) if it else None))
    return ResultTable(rows)


# ---------------------------------------------------------------------------
# config files


def _build(cls, data: dict, section: str, base=None):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**data) if base is None else replace(base, **data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    sub = {}
    if "system" in data:
        sub["system"] = _build(SystemConfig, data.pop("system"), "system")
    if "bo" in data:
        bo = dict(data.pop("bo"))
        if "kernel" in bo:
            bo["kernel"] = _build(KernelSpec, bo["kernel"], "bo.kernel", EXPERIMENT_BO.kernel)
        if "lengthscale_grid" in bo:
            bo["lengthscale_grid"] = tuple(bo["lengthscale_grid"])
        sub["bo"] = _build(BoConfig, bo, "bo", EXPERIMENT_BO)
    if "baseline" in data:
        sub["baseline"] = _build(BaselineConfig, data.pop("baseline"), "baseline")
    if "large_scale" in data:
        sub["large_scale"] = _build(LargeScaleModel, data.pop("large_scale"), "large_scale")
    for k in ("snr_db", "tx_power_dbm", "n_elements", "pilot_counts"):
        if k in data:
            data[k] = tuple(data[k])
    cfg = _build(ExperimentConfig, {**data, **sub}, "top level")
    return cfg.validate()


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a TOML experiment file; keyword overrides (if not None) win."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def default_workers() -> int:
    return int(os.environ.get("RISBO_WORKERS", "1"))
