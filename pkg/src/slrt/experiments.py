"""Monte Carlo harness: size, size-adjusted power, and penalty calibration.

Replications are embarrassingly parallel.  Every replication owns a child
seed keyed by (master seed, setting, n, d, phase, rep), so results are
bitwise identical no matter how many workers run or in what order they
finish, and the first k replications of a cell are the same datasets whether
the cell was run with k or with more.  The null phase of a size-adjusted
power run reuses the size run's streams (phase 0); the alternative phase
draws from phase 1, so adding cells or phases never perturbs existing ones.

Worker count comes from the SLRT_WORKERS environment variable, defaulting to
the machine's CPU count; one worker means plain in-process loops.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from ._version import __version__
from .datagen import DgpSpec, Setting, child_seed, gen_dataset
from .em import EmConfig
from .errors import FitFailureError, SlrtError, UsageError
from .inference import (
    compute_benchmark_lrt,
    compute_slrt,
    half_chisq_critical,
    tuning_pen,
)

_PHASE_NULL = 0
_PHASE_ALT = 1

_SETTING_ID = {Setting.I: 1, Setting.II: 2, Setting.III: 3, Setting.IV: 4}

METHOD_SLRT = "slrt"
METHOD_BENCHMARK = "benchmark"

# A cell aborts when more than this fraction of its replications fail to fit;
# silently excluding more would bias the reported frequencies.
MAX_FAILURE_FRACTION = 0.01


def worker_count() -> int:
    """Worker pool size: SLRT_WORKERS if set, else available parallelism."""
    env = os.environ.get("SLRT_WORKERS", "").strip()
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise UsageError(f"SLRT_WORKERS must be an integer, got {env!r}") from exc
        if value < 1:
            raise UsageError(f"SLRT_WORKERS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PenRule:
    """How each cell's penalty is chosen: the (n, d) formula, a fixed value,
    or zero (which turns the penalized fit into a plain mixture MLE)."""

    kind: str
    value: float | None = None

    _KINDS = ("formula", "fixed", "benchmark_zero")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"pen rule kind must be one of {self._KINDS}, got {self.kind!r}")
        if self.kind == "fixed":
            if self.value is None or self.value < 0.0:
                raise ValueError("fixed pen rule needs a nonnegative value")
        elif self.value is not None:
            raise ValueError(f"pen rule {self.kind!r} takes no value")

    @classmethod
    def formula(cls) -> "PenRule":
        return cls("formula")

    @classmethod
    def fixed(cls, value: float) -> "PenRule":
        return cls("fixed", value)

    @classmethod
    def benchmark_zero(cls) -> "PenRule":
        return cls("benchmark_zero")

    def resolve(self, n: int, d: int) -> float:
        if self.kind == "formula":
            return tuning_pen(n, d)
        if self.kind == "fixed":
            return float(self.value)
        return 0.0


@dataclass(frozen=True)
class ExperimentSpec:
    """One simulation experiment over a (setting, n, d) grid.

    The same lambda_true / gamma_true template applies to every alternative
    cell.  collect_stats keeps each cell's per-replication statistics on the
    result (in replication order), which is how distributional checks get at
    the raw draws without a second run.
    """

    kind: str
    settings: tuple[Setting, ...]
    ns: tuple[int, ...]
    ds: tuple[int, ...]
    reps: int
    level: float = 0.05
    seed: int = 20
    pen_rule: PenRule = PenRule.formula()
    size_adjust: bool = True
    lambda_true: float = 1.0
    gamma_true: tuple[float, ...] | None = None
    em: EmConfig = EmConfig()
    collect_stats: bool = False

    def __post_init__(self):
        if self.kind not in ("size", "power"):
            raise ValueError(f"kind must be 'size' or 'power', got {self.kind!r}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 < self.level < 0.5:
            raise ValueError(f"level must be in (0, 0.5), got {self.level}")
        if not self.settings or not self.ns or not self.ds:
            raise ValueError("settings, ns, and ds must all be non-empty")


@dataclass(frozen=True, eq=False)
class CellResult:
    """One (setting, n, d, method) cell of an experiment table."""

    setting: str
    n: int
    d: int
    method: str
    level: float
    rejection_frequency: float
    mc_stderr: float
    critical_value: float
    pen: float
    reps: int
    failures: int
    mean_runtime: float
    stats: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """All cells plus the spec that produced them and the code version."""

    cells: tuple[CellResult, ...]
    spec: ExperimentSpec
    version: str = __version__

    def cell(self, setting: Setting | str, n: int, d: int, method: str) -> CellResult:
        name = setting.value if isinstance(setting, Setting) else setting
        for c in self.cells:
            if (c.setting, c.n, c.d, c.method) == (name, n, d, method):
                return c
        raise KeyError(f"no cell ({name}, {n}, {d}, {method})")


def _rep_task(args):
    """One replication: generate the dataset, run both tests, time them.

    Returns (rep, slrt_stat, bench_stat, slrt_time, bench_time, error); a
    failed fit records NaN for its statistic and the error text.  Module
    level so process pools can pickle it.
    """
    (setting_value, n, d, rep, rep_seed, alt, lambda_true, gamma_true, pen, em_cfg) = args
    spec = DgpSpec(
        setting=Setting(setting_value),
        n=n,
        d=d,
        seed=rep_seed,
        alternative=alt,
        lambda_true=lambda_true,
        gamma_true=gamma_true,
    )
    ds = gen_dataset(spec)
    stats = [math.nan, math.nan]
    times = [0.0, 0.0]
    errors = []
    for k, run in enumerate((lambda: compute_slrt(ds, pen=pen, cfg=em_cfg),
                             lambda: compute_benchmark_lrt(ds, cfg=em_cfg))):
        t0 = time.perf_counter()
        try:
            stats[k] = run().slrt
        except (SlrtError, np.linalg.LinAlgError) as exc:
            errors.append(f"rep {rep} {'slrt' if k == 0 else 'benchmark'}: {exc}")
        times[k] = time.perf_counter() - t0
    return rep, stats[0], stats[1], times[0], times[1], "; ".join(errors)


@dataclass(frozen=True, eq=False)
class _PhaseStats:
    """Per-replication statistics of one cell phase, in replication order."""

    slrt: np.ndarray
    benchmark: np.ndarray
    slrt_time: float
    bench_time: float
    errors: tuple[str, ...]

    def stats_for(self, method: str) -> np.ndarray:
        return self.slrt if method == METHOD_SLRT else self.benchmark


def _simulate_phase(
    setting: Setting,
    n: int,
    d: int,
    master_seed: int,
    phase: int,
    reps: int,
    alt: bool,
    lambda_true: float,
    gamma_true: tuple[float, ...] | None,
    pen: float,
    em_cfg: EmConfig,
    workers: int | None = None,
) -> _PhaseStats:
    workers = workers or worker_count()
    sid = _SETTING_ID[setting]
    tasks = [
        (
            setting.value,
            n,
            d,
            rep,
            child_seed(master_seed, sid, n, d, phase, rep),
            alt,
            lambda_true,
            gamma_true,
            pen,
            em_cfg,
        )
        for rep in range(reps)
    ]
    if workers <= 1 or reps == 1:
        results = map(_rep_task, tasks)
    else:
        chunk = max(1, reps // (workers * 8))
        pool = ProcessPoolExecutor(max_workers=workers)
        try:
            results = list(pool.map(_rep_task, tasks, chunksize=chunk))
        finally:
            pool.shutdown()

    slrt = np.full(reps, np.nan)
    bench = np.full(reps, np.nan)
    t_slrt = 0.0
    t_bench = 0.0
    errors = []
    for rep, s, b, ts, tb, err in results:
        slrt[rep] = s
        bench[rep] = b
        t_slrt += ts
        t_bench += tb
        if err:
            errors.append(err)
    return _PhaseStats(
        slrt=slrt,
        benchmark=bench,
        slrt_time=t_slrt / reps,
        bench_time=t_bench / reps,
        errors=tuple(errors),
    )


def _check_failures(stats: np.ndarray, cell_name: str, method: str, errors) -> int:
    failures = int(np.isnan(stats).sum())
    if failures > MAX_FAILURE_FRACTION * stats.size:
        detail = "; ".join(errors[:5])
        raise FitFailureError(
            f"cell {cell_name} method {method}: {failures}/{stats.size} replications "
            f"failed to fit (limit {MAX_FAILURE_FRACTION:.0%}): {detail}"
        )
    return failures


def _frequency(stats: np.ndarray, critical: float) -> tuple[float, float, int]:
    valid = stats[~np.isnan(stats)]
    freq = float(np.mean(valid > critical))
    stderr = math.sqrt(freq * (1.0 - freq) / valid.size)
    return freq, stderr, valid.size


def run_size(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Null rejection frequencies for the shrinkage test and the benchmark.

    Each cell simulates reps null datasets and rejects when the statistic
    exceeds the half-chi-square critical value at spec.level.
    """
    if spec.kind != "size":
        raise ValueError(f"run_size needs kind='size', got {spec.kind!r}")
    critical = half_chisq_critical(spec.level)
    cells = []
    for setting, n, d in product(spec.settings, spec.ns, spec.ds):
        pen = spec.pen_rule.resolve(n, d)
        phase = _simulate_phase(
            setting, n, d, spec.seed, _PHASE_NULL, spec.reps,
            alt=False, lambda_true=0.0, gamma_true=None,
            pen=pen, em_cfg=spec.em, workers=workers,
        )
        name = f"({setting.value}, n={n}, d={d})"
        for method, mean_time in ((METHOD_SLRT, phase.slrt_time),
                                  (METHOD_BENCHMARK, phase.bench_time)):
            stats = phase.stats_for(method)
            failures = _check_failures(stats, name, method, phase.errors)
            freq, stderr, _ = _frequency(stats, critical)
            cells.append(CellResult(
                setting=setting.value, n=n, d=d, method=method, level=spec.level,
                rejection_frequency=freq, mc_stderr=stderr,
                critical_value=critical, pen=pen if method == METHOD_SLRT else 0.0,
                reps=spec.reps, failures=failures,
                mean_runtime=mean_time,
                stats=stats.copy() if spec.collect_stats else None,
            ))
    return ExperimentResult(cells=tuple(cells), spec=spec)


def _empirical_critical(null_stats: np.ndarray, level: float) -> float:
    """Size-adjusted critical value: the empirical (1-level) quantile of the
    null statistics, taken at the next order statistic up so the realized
    null rejection rate does not exceed the level."""
    valid = null_stats[~np.isnan(null_stats)]
    return float(np.quantile(valid, 1.0 - level, method="higher"))


def run_power(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Alternative rejection frequencies, size-adjusted by default.

    With size_adjust, each cell first replays the null simulation on the
    size run's streams, takes each method's empirical (1-level) quantile as
    that method's critical value, then simulates the alternative and compares
    each statistic to its own method's critical value.
    """
    if spec.kind != "power":
        raise ValueError(f"run_power needs kind='power', got {spec.kind!r}")
    cells = []
    for setting, n, d in product(spec.settings, spec.ns, spec.ds):
        pen = spec.pen_rule.resolve(n, d)
        criticals = {}
        if spec.size_adjust:
            null_phase = _simulate_phase(
                setting, n, d, spec.seed, _PHASE_NULL, spec.reps,
                alt=False, lambda_true=0.0, gamma_true=None,
                pen=pen, em_cfg=spec.em, workers=workers,
            )
            name = f"({setting.value}, n={n}, d={d}) null phase"
            for method in (METHOD_SLRT, METHOD_BENCHMARK):
                stats = null_phase.stats_for(method)
                _check_failures(stats, name, method, null_phase.errors)
                criticals[method] = _empirical_critical(stats, spec.level)
        else:
            criticals[METHOD_SLRT] = half_chisq_critical(spec.level)
            criticals[METHOD_BENCHMARK] = criticals[METHOD_SLRT]

        alt_phase = _simulate_phase(
            setting, n, d, spec.seed, _PHASE_ALT, spec.reps,
            alt=True, lambda_true=spec.lambda_true, gamma_true=spec.gamma_true,
            pen=pen, em_cfg=spec.em, workers=workers,
        )
        name = f"({setting.value}, n={n}, d={d})"
        for method, mean_time in ((METHOD_SLRT, alt_phase.slrt_time),
                                  (METHOD_BENCHMARK, alt_phase.bench_time)):
            stats = alt_phase.stats_for(method)
            failures = _check_failures(stats, name, method, alt_phase.errors)
            freq, stderr, _ = _frequency(stats, criticals[method])
            cells.append(CellResult(
                setting=setting.value, n=n, d=d, method=method, level=spec.level,
                rejection_frequency=freq, mc_stderr=stderr,
                critical_value=criticals[method],
                pen=pen if method == METHOD_SLRT else 0.0,
                reps=spec.reps, failures=failures,
                mean_runtime=mean_time,
                stats=stats.copy() if spec.collect_stats else None,
            ))
    return ExperimentResult(cells=tuple(cells), spec=spec)


@dataclass(frozen=True)
class CalibrationCell:
    """Selected penalty for one (n, d), or unresolved if nothing matched."""

    n: int
    d: int
    pen: float | None
    slrt_frequency: float | None
    benchmark_frequency: float


@dataclass(frozen=True)
class CalibrationResult:
    cells: tuple[CalibrationCell, ...]
    intercept: float
    slope: float
    unresolved: tuple[tuple[int, int], ...]


def fit_pen_formula(ns, ds, pens) -> tuple[float, float]:
    """Least squares of selected penalties on (1, n^(7/8) sqrt(log d)).

    Returns (intercept, slope) of the penalty rule fitted to the calibrated
    grid; exact on saturated or perfectly linear fixtures.
    """
    ns = np.asarray(ns, dtype=np.float64)
    ds_arr = np.asarray(ds, dtype=np.float64)
    pens = np.asarray(pens, dtype=np.float64)
    if not (ns.shape == ds_arr.shape == pens.shape) or ns.ndim != 1:
        raise ValueError("ns, ds, pens must be equal-length 1-d sequences")
    if ns.size < 2:
        raise ValueError("need at least two cells to fit the two-parameter rule")
    regressor = ns ** (7.0 / 8.0) * np.sqrt(np.log(ds_arr))
    design = np.column_stack((np.ones(ns.size), regressor))
    coef, *_ = np.linalg.lstsq(design, pens, rcond=None)
    return float(coef[0]), float(coef[1])


def calibrate_formula(
    ns,
    ds,
    candidate_pens,
    reps: int,
    window: float,
    seed: int,
    setting: Setting = Setting.I,
    level: float = 0.05,
    em_cfg: EmConfig | None = None,
    workers: int | None = None,
) -> CalibrationResult:
    """Select per-(n, d) penalties matching the benchmark's null size.

    For each n the benchmark rejection frequency is computed once (it does
    not involve z, so it is common across d).  For each (n, d) the smallest
    candidate penalty whose shrinkage-test frequency lies within window of
    the benchmark frequency is selected; cells with no match are flagged and
    excluded, and the (intercept, slope) of the penalty rule is fitted to
    the rest.
    """
    candidates = [float(p) for p in candidate_pens]
    if not candidates or sorted(candidates) != candidates:
        raise ValueError("candidate_pens must be non-empty and sorted ascending")
    if window <= 0.0:
        raise ValueError(f"window must be positive, got {window}")
    em_cfg = em_cfg or EmConfig()
    critical = half_chisq_critical(level)
    ns = [int(n) for n in ns]
    ds = [int(d) for d in ds]

    bench_freq: dict[int, float] = {}
    phases: dict[tuple[int, int, float], _PhaseStats] = {}

    def phase_for(n: int, d: int, pen: float) -> _PhaseStats:
        key = (n, d, pen)
        if key not in phases:
            phases[key] = _simulate_phase(
                setting, n, d, seed, _PHASE_NULL, reps,
                alt=False, lambda_true=0.0, gamma_true=None,
                pen=pen, em_cfg=em_cfg, workers=workers,
            )
        return phases[key]

    cells = []
    unresolved = []
    for n in ns:
        first = phase_for(n, ds[0], candidates[0])
        _check_failures(first.benchmark, f"(n={n})", METHOD_BENCHMARK, first.errors)
        bench_freq[n], _, _ = _frequency(first.benchmark, critical)
    for n, d in product(ns, ds):
        chosen = None
        chosen_freq = None
        for pen in candidates:
            phase = phase_for(n, d, pen)
            _check_failures(phase.slrt, f"(n={n}, d={d}, pen={pen})",
                            METHOD_SLRT, phase.errors)
            freq, _, _ = _frequency(phase.slrt, critical)
            if abs(freq - bench_freq[n]) <= window:
                chosen, chosen_freq = pen, freq
                break
        if chosen is None:
            warnings.warn(
                f"no candidate penalty within {window} of the benchmark for "
                f"(n={n}, d={d}); cell excluded from the fit",
                stacklevel=2,
            )
            unresolved.append((n, d))
        cells.append(CalibrationCell(
            n=n, d=d, pen=chosen,
            slrt_frequency=chosen_freq, benchmark_frequency=bench_freq[n],
        ))

    resolved = [c for c in cells if c.pen is not None]
    if len(resolved) < 2:
        raise FitFailureError(
            "fewer than two calibration cells resolved; cannot fit the rule"
        )
    intercept, slope = fit_pen_formula(
        [c.n for c in resolved], [c.d for c in resolved], [c.pen for c in resolved]
    )
    return CalibrationResult(
        cells=tuple(cells),
        intercept=intercept,
        slope=slope,
        unresolved=tuple(unresolved),
    )
