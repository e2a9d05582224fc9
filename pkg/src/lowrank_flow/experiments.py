"""Experiment runner: single runs and (method, rank, dt) sweeps with CSV output.

Two CSV files are written into the output directory::

    series.csv   experiment,method,rank,dt,step,time,error_fro,sigma_min_g,sigma_max_g
    summary.csv  experiment,method,rank,dt,max_error,final_error,steps,wall_seconds

Floats are printed with 17 significant digits so they parse back exactly.
Euler cells carry rank 0.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, GridMismatchError, NonFiniteError
from .integrators import IntegratorConfig, TrajectoryRecord, integrate
from .problems import BurgersConfig, ProblemSpec, burgers_problem, matrix_approx_problem

log = logging.getLogger(__name__)

EXPERIMENTS = ("matrix-approx", "burgers-single", "burgers-multi")
RUN_METHODS = ("ksl", "chart", "euler", "both")
FLUX_VARIANTS = ("increment", "derivative")
METHOD_ORDER = {"ksl": 0, "chart": 1, "euler": 2}
SERIES_COLUMNS = ("experiment", "method", "rank", "dt", "step", "time",
                  "error_fro", "sigma_min_g", "sigma_max_g")
SUMMARY_COLUMNS = ("experiment", "method", "rank", "dt", "max_error", "final_error",
                   "steps", "wall_seconds")
TIME_MATCH_TOL = 1e-9
CACHE_MAGIC = b"LRFREF1\x00"
CACHE_HEADER = struct.Struct("<IIIdqI")
DEFAULT_SINGLE_DT_REF = 5e-6


@dataclass
class RunConfig:
    experiment: str = "matrix-approx"
    method: str = "both"
    flux_variant: str = "derivative"
    ranks: tuple = (10,)
    dts: tuple = (5e-3,)
    t_final: float = 1.0
    n: Optional[int] = None
    m: Optional[int] = None
    seed: int = 0
    out: str = "results"
    store_stride: int = 1
    skew_scale: str = "unit"
    # burgers only
    dt_ref: Optional[float] = None
    compare_interval: float = 1e-3
    advection_sign: float = -1.0
    jobs: int = 1
    record_timing: bool = True

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        self.dts = tuple(float(d) for d in self.dts)
        self.validate()

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.method not in RUN_METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.flux_variant not in FLUX_VARIANTS:
            raise ConfigError(f"unknown flux variant {self.flux_variant!r}")
        if not self.ranks or not self.dts:
            raise ConfigError("rank and dt lists must be nonempty")
        if any(r < 1 for r in self.ranks) or any(d <= 0 for d in self.dts):
            raise ConfigError("ranks and dts must be positive")
        if self.t_final <= 0 or self.store_stride < 1 or self.jobs < 1:
            raise ConfigError("t_final, store_stride and jobs must be positive")
        n, m = self.dims
        if self.method != "euler" and max(self.ranks) > min(n, m):
            raise ConfigError(f"rank {max(self.ranks)} exceeds min({n}, {m})")
        for dt in self.dts:
            IntegratorConfig("euler", 1, dt, self.t_final)
        return self

    @property
    def dims(self) -> tuple[int, int]:
        if self.experiment == "matrix-approx":
            n = self.n or 100
            if self.m is not None and self.m != n:
                raise ConfigError("matrix-approx is square; m must equal n")
            return n, n
        return self.n or 100, self.m or 60

    @property
    def methods(self) -> tuple[str, ...]:
        return ("ksl", "chart") if self.method == "both" else (self.method,)

    def cells(self) -> list[tuple[str, int, float]]:
        out = []
        for method in self.methods:
            ranks = (0,) if method == "euler" else self.ranks
            out.extend((method, r, dt) for r in ranks for dt in self.dts)
        return sorted(out, key=_cell_key)

    def reference_dt(self, dt: float) -> float:
        if self.dt_ref is not None:
            return self.dt_ref
        return DEFAULT_SINGLE_DT_REF if self.experiment == "burgers-single" else dt

    def burgers_config(self) -> BurgersConfig:
        n, m = self.dims
        mode = self.experiment.split("-")[1]
        return BurgersConfig(n=n, m=m, mode=mode, seed=self.seed,
                             advection_sign=self.advection_sign, t_final=self.t_final)


def _cell_key(cell):
    method, rank, dt = cell
    return METHOD_ORDER[method], rank, dt


class ErrorSlice(NamedTuple):
    steps: np.ndarray
    times: np.ndarray
    errors: np.ndarray
    final_error: float
    max_error: float


@dataclass
class CellResult:
    experiment: str
    method: str
    rank: int
    dt: float
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_max: np.ndarray = field(default_factory=lambda: np.zeros(0))
    num_steps: int = 0
    wall_seconds: float = 0.0
    aborted: Optional[str] = None

    @property
    def max_error(self) -> float:
        return float(self.errors.max()) if self.errors.size and not self.aborted else np.nan

    @property
    def final_error(self) -> float:
        return float(self.errors[-1]) if self.errors.size and not self.aborted else np.nan


@dataclass
class ErrorReport:
    config: RunConfig
    cells: list

    def cell(self, method: str, rank: int, dt: float) -> CellResult:
        for c in self.cells:
            if c.method == method and c.rank == rank and np.isclose(c.dt, dt, rtol=1e-12):
                return c
        raise KeyError((method, rank, dt))

    @property
    def aborted(self) -> bool:
        return any(c.aborted for c in self.cells)


def error_series(traj: TrajectoryRecord, reference) -> ErrorSlice:
    """Frobenius errors ``||ref(t^k) - Z^k||`` at the stored steps of ``traj``.

    ``reference`` is either a function of time or another trajectory. In the
    latter case every stored time of ``traj`` must also be a stored time of
    the reference (to 1e-9), otherwise GridMismatchError is raised.
    """
    errors = np.empty(len(traj.times))
    if not isinstance(reference, TrajectoryRecord):
        for i, t in enumerate(traj.times):
            errors[i] = np.linalg.norm(reference(float(t)) - traj.dense(i))
    else:
        ref_traj = reference
        ref_times = np.asarray(ref_traj.times)
        idx = np.searchsorted(ref_times, traj.times - TIME_MATCH_TOL)
        for i, (t, j) in enumerate(zip(traj.times, idx)):
            if j >= len(ref_times) or abs(ref_times[j] - t) > TIME_MATCH_TOL:
                raise GridMismatchError(f"reference has no state at t={t:.17g}")
            errors[i] = np.linalg.norm(ref_traj.dense(j) - traj.dense(i))
    final = float(errors[-1]) if errors.size else np.nan
    peak = float(errors.max()) if errors.size else np.nan
    return ErrorSlice(np.asarray(traj.steps), np.asarray(traj.times), errors, final, peak)


# --- reference trajectories -------------------------------------------------

def cache_dir() -> Path:
    env = os.environ.get("LOWRANK_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "lowrank_flow"


def reference_key(bcfg: BurgersConfig, dt_ref: float, stride: int) -> str:
    payload = json.dumps({"burgers": asdict(bcfg), "dt_ref": repr(float(dt_ref)),
                          "stride": int(stride), "format": 1}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


def write_reference_cache(path: Path, traj: TrajectoryRecord, seed: int, stride: int) -> None:
    """Binary layout: 8 magic bytes, header ``<IIIdqI`` (n, m, count, dt_ref,
    seed, stride), then ``count`` row-major little-endian float64 n x m states.
    The i-th state is at time ``i * stride * dt_ref``.
    """
    data = np.ascontiguousarray(np.stack(traj.states), dtype="<f8")
    count, n, m = data.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(CACHE_HEADER.pack(n, m, count, traj.dt, seed, stride))
        fh.write(data.tobytes())
    os.replace(tmp, path)


def read_reference_cache(path: Path) -> TrajectoryRecord:
    with open(path, "rb") as fh:
        if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
            raise ValueError(f"{path} is not a reference cache file")
        n, m, count, dt_ref, seed, stride = CACHE_HEADER.unpack(fh.read(CACHE_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != count * n * m:
        raise ValueError(f"{path} is truncated")
    states = list(data.reshape(count, n, m).astype(np.float64))
    steps = np.arange(count, dtype=np.int64) * stride
    nan = np.full(count, np.nan)
    return TrajectoryRecord(steps=steps, times=steps * dt_ref, states=states,
                            sigma_min=nan, sigma_max=nan.copy(), dt=dt_ref, method="euler",
                            meta={"seed": seed, "stride": stride})


def _stride_for(interval: float, dt: float) -> int:
    s = int(round(interval / dt))
    if s < 1 or abs(s * dt - interval) > TIME_MATCH_TOL * max(interval, 1.0):
        raise ConfigError(f"compare interval {interval} is not a multiple of dt={dt}")
    return s


def euler_reference(bcfg: BurgersConfig, dt_ref: float, interval: float,
                    use_cache: bool = True) -> TrajectoryRecord:
    """Explicit Euler reference for a Burgers problem, stored every ``interval``.

    Results are cached on disk under :func:`cache_dir`, keyed by a hash of
    the problem configuration, ``dt_ref`` and the storage stride.
    """
    stride = _stride_for(interval, dt_ref)
    path = cache_dir() / f"burgers-ref-{reference_key(bcfg, dt_ref, stride)}.bin"
    if use_cache and path.exists():
        log.info("loading Euler reference from %s", path)
        return read_reference_cache(path)
    problem = burgers_problem(bcfg)
    icfg = IntegratorConfig("euler", 1, dt_ref, bcfg.t_final, seed=bcfg.seed, store_stride=stride)
    if icfg.num_steps % stride:
        raise ConfigError("t_final must be a multiple of the compare interval")
    log.info("computing Euler reference: %d steps at dt=%g", icfg.num_steps, dt_ref)
    traj = integrate(problem, icfg)
    if use_cache:
        write_reference_cache(path, traj, bcfg.seed, stride)
    return traj


# --- runs -------------------------------------------------------------------

def build_problem(cfg: RunConfig) -> ProblemSpec:
    if cfg.experiment == "matrix-approx":
        n, _ = cfg.dims
        return matrix_approx_problem(n, cfg.seed, cfg.flux_variant, cfg.t_final, cfg.skew_scale)
    return burgers_problem(cfg.burgers_config())


def _run_cell(cfg: RunConfig, cell, problem=None, reference=None) -> CellResult:
    method, rank, dt = cell
    result = CellResult(cfg.experiment, method, rank, dt)
    problem = problem if problem is not None else build_problem(cfg)
    if cfg.experiment == "matrix-approx":
        stride = cfg.store_stride
        ref = problem.exact
    else:
        stride = _stride_for(cfg.compare_interval, dt)
        ref = reference if reference is not None else euler_reference(
            cfg.burgers_config(), cfg.reference_dt(dt), cfg.compare_interval)
    icfg = IntegratorConfig(method, max(rank, 1), dt, cfg.t_final, cfg.seed, stride)
    result.num_steps = icfg.num_steps
    start = time.perf_counter()
    try:
        traj = integrate(problem, icfg)
    except NonFiniteError as exc:
        log.warning("cell %s aborted: %s", cell, exc)
        result.aborted = str(exc)
        result.wall_seconds = time.perf_counter() - start
        return result
    sl = error_series(traj, ref)
    result.wall_seconds = time.perf_counter() - start
    result.steps, result.times, result.errors = sl.steps, sl.times, sl.errors
    result.sigma_min, result.sigma_max = traj.sigma_min, traj.sigma_max
    return result


def _cell_worker(args):
    cfg, cell = args
    return _run_cell(cfg, cell)


def run(cfg: RunConfig, write: bool = True) -> ErrorReport:
    """Run every (method, rank, dt) cell of ``cfg`` and optionally write the CSVs.

    A cell whose integration blows up is recorded as aborted (NaN errors)
    without stopping the others.
    """
    cfg.validate()
    cells = cfg.cells()
    if cfg.experiment != "matrix-approx":
        # make sure every needed reference is on disk before fanning out
        for dt_ref in sorted({cfg.reference_dt(dt) for _, _, dt in cells}):
            euler_reference(cfg.burgers_config(), dt_ref, cfg.compare_interval)
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_cell_worker, [(cfg, c) for c in cells]))
    else:
        problem = build_problem(cfg)
        results = [_run_cell(cfg, c, problem) for c in cells]
    results.sort(key=lambda r: _cell_key((r.method, r.rank, r.dt)))
    report = ErrorReport(cfg, results)
    if write:
        write_csvs(report, Path(cfg.out))
    return report


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csvs(report: ErrorReport, out: Path) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    series_path, summary_path = out / "series.csv", out / "summary.csv"
    with open(series_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for c in report.cells:
            for k in range(len(c.steps)):
                w.writerow([c.experiment, c.method, fmt(c.rank), fmt(c.dt), fmt(c.steps[k]),
                            fmt(c.times[k]), fmt(c.errors[k]), fmt(c.sigma_min[k]),
                            fmt(c.sigma_max[k])])
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for c in report.cells:
            wall = c.wall_seconds if report.config.record_timing else 0.0
            w.writerow([c.experiment, c.method, fmt(c.rank), fmt(c.dt), fmt(c.max_error),
                        fmt(c.final_error), fmt(c.num_steps), fmt(wall)])
    return series_path, summary_path


# --- config files -----------------------------------------------------------

_KEY_ALIASES = {"flux": "flux_variant", "rank": "ranks", "dt": "dts"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into RunConfig kwargs."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[_KEY_ALIASES.get(key, key)] = value
    return coerce_config(values)


def coerce_config(values: dict) -> dict:
    """Convert string values to the RunConfig field types."""
    out = {}
    try:
        for key, value in values.items():
            if value is None:
                continue
            if key == "ranks":
                out[key] = tuple(int(v) for v in str(value).split(",") if v.strip())
            elif key == "dts":
                out[key] = tuple(float(v) for v in str(value).split(",") if v.strip())
            elif key in ("t_final", "dt_ref", "compare_interval", "advection_sign"):
                out[key] = float(value)
            elif key in ("n", "m", "seed", "store_stride", "jobs"):
                out[key] = int(value)
            elif key == "record_timing":
                out[key] = str(value).strip().lower() in ("1", "true", "yes", "on")
            elif key in ("experiment", "method", "flux_variant", "out", "skew_scale"):
                out[key] = str(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return out


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return RunConfig(**values)

