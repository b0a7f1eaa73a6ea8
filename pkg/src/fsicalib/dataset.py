"""Synthetic observation corpora for the calibration problem.

A sample pairs one parameter triple with the angular velocities read off
a fixed probe grid of (radius, time) points.  Corpora are produced by
running the forward solver per sample, are fully determined by a seed,
and are persisted as JSON-lines plus a JSON metadata sidecar.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .solver import CylinderSolver, Interpolator, PhysicalParams, SolverConfig

#: sampling boxes for (c1, rho_s, mu_f); they bracket every true triple in
#: the recovery examples this package reproduces
DEFAULT_RANGES = {"c1": (0.5, 1.5), "rho_s": (0.9, 1.25), "mu_f": (0.5, 1.5)}
PARAM_NAMES = ("c1", "rho_s", "mu_f")


@dataclass(frozen=True)
class ProbeGrid:
    """The K = n_r * n_t space-time sampling points of one corpus.

    Observation vectors are ordered radius-major: entry ``i * n_t + j``
    holds u(r_i, t_j).
    """

    r_points: np.ndarray
    t_points: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_points, dtype=float)
        t = np.asarray(self.t_points, dtype=float)
        object.__setattr__(self, "r_points", r)
        object.__setattr__(self, "t_points", t)
        if len(r) == 0 or len(t) == 0:
            raise ValueError("probe grid needs at least one r and one t point")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("probe coordinates must be strictly increasing")
        if np.any(t <= 0):
            raise ValueError("probe times must be positive")

    @property
    def k(self) -> int:
        return len(self.r_points) * len(self.t_points)

    def validate_against(self, config: SolverConfig) -> None:
        r = self.r_points
        if r[0] <= config.r0 or r[-1] >= config.r1:
            raise ValueError(
                f"probe radii must lie strictly inside ({config.r0}, {config.r1})"
            )
        if self.t_points[-1] > config.t_final + 0.5 * config.dt:
            raise ValueError(
                f"probe times must not exceed t_final={config.t_final}"
            )


def uniform_probe_grid(n_r: int, n_t: int, config: SolverConfig) -> ProbeGrid:
    """Evenly spaced probes: radii interior to the annulus (the boundary
    values are imposed, hence uninformative) and times in (0, t_final]."""
    if n_r < 1 or n_t < 1:
        raise ValueError("grid sizes must be positive")
    span = config.r1 - config.r0
    r = config.r0 + np.arange(1, n_r + 1) * span / (n_r + 1)
    t = np.arange(1, n_t + 1) * config.t_final / n_t
    return ProbeGrid(r_points=r, t_points=t)


def observe(
    params: PhysicalParams, grid: ProbeGrid, config: SolverConfig
) -> np.ndarray:
    """Forward-solve and sample the solution on the probe grid.

    This is the single code path producing observation vectors, shared by
    corpus generation and by the misfit evaluation, so a misfit at the
    generating truth is exactly zero.
    """
    grid.validate_against(config)
    solver = CylinderSolver(params, config)
    interp = Interpolator(solver.mesh, grid.r_points)
    snaps = solver.run(grid.t_points, t_final=max(config.t_final, grid.t_points[-1]))
    out = np.empty((len(grid.r_points), len(grid.t_points)))
    for j, state in enumerate(snaps):
        out[:, j] = interp.apply(state.u)
    return out.ravel()


def sample_parameters(
    ranges: dict | None, seed: int, m: int
) -> list[PhysicalParams]:
    """Draw ``m`` parameter triples, each coordinate uniform on its interval."""
    if m < 0:
        raise ValueError(f"sample count must be non-negative, got {m}")
    ranges = dict(DEFAULT_RANGES if ranges is None else ranges)
    for name in PARAM_NAMES:
        lo, hi = ranges[name]
        if lo <= 0:
            raise ValueError(f"range for {name} must have positive lower bound")
        if lo > hi:
            raise ValueError(f"range for {name} has min > max: ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    draws = rng.random((m, 3))
    out = []
    for row in draws:
        vals = [
            ranges[name][0] + (ranges[name][1] - ranges[name][0]) * x
            for name, x in zip(PARAM_NAMES, row)
        ]
        out.append(PhysicalParams(*vals))
    return out


@dataclass
class NormalizationStats:
    """Per-feature affine maps onto [-1, 1] for inputs and labels."""

    input_min: np.ndarray
    input_max: np.ndarray
    label_min: np.ndarray
    label_max: np.ndarray

    def to_dict(self) -> dict:
        return {
            "input_min": self.input_min.tolist(),
            "input_max": self.input_max.tolist(),
            "label_min": self.label_min.tolist(),
            "label_max": self.label_max.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "NormalizationStats":
        return NormalizationStats(
            np.asarray(d["input_min"], dtype=float),
            np.asarray(d["input_max"], dtype=float),
            np.asarray(d["label_min"], dtype=float),
            np.asarray(d["label_max"], dtype=float),
        )


def _normalize(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (x - lo) / safe - 1.0
    # a constant feature carries no information; map it to the band centre
    return np.where(span > 0, out, 0.0)


def _denormalize(y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return lo + 0.5 * (y + 1.0) * (hi - lo)


@dataclass
class DatasetMeta:
    """Everything needed to regenerate a corpus bit for bit."""

    grid: ProbeGrid
    config: SolverConfig
    ranges: dict
    seed: int
    n_samples: int
    stats: NormalizationStats | None = None

    def to_dict(self) -> dict:
        d = {
            "r_points": self.grid.r_points.tolist(),
            "t_points": self.grid.t_points.tolist(),
            "config": {
                "r0": self.config.r0,
                "r_interface": self.config.r_interface,
                "r1": self.config.r1,
                "omega_outer": self.config.omega_outer,
                "n_elements": self.config.n_elements,
                "dt": self.config.dt,
                "t_final": self.config.t_final,
            },
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "seed": self.seed,
            "n_samples": self.n_samples,
        }
        if self.stats is not None:
            d["stats"] = self.stats.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "DatasetMeta":
        grid = ProbeGrid(
            r_points=np.asarray(d["r_points"], dtype=float),
            t_points=np.asarray(d["t_points"], dtype=float),
        )
        config = SolverConfig(**d["config"])
        stats = (
            NormalizationStats.from_dict(d["stats"]) if "stats" in d else None
        )
        return DatasetMeta(
            grid=grid,
            config=config,
            ranges={k: tuple(v) for k, v in d["ranges"].items()},
            seed=d["seed"],
            n_samples=d["n_samples"],
            stats=stats,
        )

    def fingerprint(self) -> str:
        """Stable hash of the generation recipe (stats excluded)."""
        import hashlib

        d = self.to_dict()
        d.pop("stats", None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Dataset:
    """Parameter labels and probe observations for M samples."""

    def __init__(self, params: np.ndarray, observations: np.ndarray, meta: DatasetMeta):
        params = np.asarray(params, dtype=float).reshape(-1, 3)
        observations = np.asarray(observations, dtype=float)
        if len(params) == 0:
            observations = observations.reshape(0, meta.grid.k)
        else:
            observations = observations.reshape(len(params), -1)
        if len(params) and observations.shape[1] != meta.grid.k:
            raise ValueError(
                f"observation width {observations.shape[1]} does not match "
                f"grid size {meta.grid.k}"
            )
        self.params = params
        self.observations = observations
        self.meta = meta

    def __len__(self) -> int:
        return len(self.params)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.params[indices], self.observations[indices], self.meta)


def _observe_for_worker(args) -> np.ndarray:
    params, grid, config = args
    return observe(params, grid, config)


def generate_dataset(
    params_list,
    grid: ProbeGrid,
    config: SolverConfig,
    meta: DatasetMeta | None = None,
    n_jobs: int = 1,
) -> Dataset:
    """One forward solve per parameter triple, in input order.

    Generation is embarrassingly parallel; with ``n_jobs > 1`` samples are
    computed in a process pool, which leaves results bit-identical because
    each observation is a pure function of its triple.
    """
    grid.validate_against(config)
    params_list = list(params_list)
    if meta is None:
        meta = DatasetMeta(
            grid=grid, config=config, ranges=dict(DEFAULT_RANGES), seed=-1,
            n_samples=len(params_list),
        )
    if not params_list:
        return Dataset(np.zeros((0, 3)), np.zeros((0, grid.k)), meta)

    jobs = [(p, grid, config) for p in params_list]
    try:
        if n_jobs > 1:
            with multiprocessing.Pool(n_jobs) as pool:
                rows = pool.map(_observe_for_worker, jobs, chunksize=8)
        else:
            rows = [_observe_for_worker(job) for job in jobs]
    except Exception as exc:
        raise RuntimeError(f"forward solve failed during generation: {exc}") from exc

    for i, row in enumerate(rows):
        if not np.all(np.isfinite(row)):
            p = params_list[i]
            raise RuntimeError(
                f"non-finite observation for sample {i} with params "
                f"({p.c1}, {p.rho_s}, {p.mu_f})"
            )
    P = np.array([p.as_array() for p in params_list])
    return Dataset(P, np.array(rows), meta)


def make_dataset(
    m: int,
    seed: int,
    grid: ProbeGrid,
    config: SolverConfig,
    ranges: dict | None = None,
    n_jobs: int = 1,
) -> Dataset:
    """Sample parameters and generate their observations in one call."""
    ranges = dict(DEFAULT_RANGES if ranges is None else ranges)
    params_list = sample_parameters(ranges, seed, m)
    meta = DatasetMeta(
        grid=grid, config=config, ranges=ranges, seed=seed, n_samples=m
    )
    return generate_dataset(params_list, grid, config, meta=meta, n_jobs=n_jobs)


def fit_normalization(dataset: Dataset) -> NormalizationStats:
    """Per-feature min/max over the corpus, for inputs and labels alike."""
    if len(dataset) == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    stats = NormalizationStats(
        input_min=dataset.observations.min(axis=0),
        input_max=dataset.observations.max(axis=0),
        label_min=dataset.params.min(axis=0),
        label_max=dataset.params.max(axis=0),
    )
    dataset.meta.stats = stats
    return stats


def normalize_inputs(w: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return _normalize(np.asarray(w, dtype=float), stats.input_min, stats.input_max)


def normalize_labels(p: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return _normalize(np.asarray(p, dtype=float), stats.label_min, stats.label_max)


def denormalize_labels(y: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return _denormalize(np.asarray(y, dtype=float), stats.label_min, stats.label_max)


def denormalize_inputs(x: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return _denormalize(np.asarray(x, dtype=float), stats.input_min, stats.input_max)


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle into (train, validation); validation gets
    ``round(M * fraction)`` samples."""
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"validation fraction must be in (0, 1), got {fraction}")
    m = len(dataset)
    idx = np.random.default_rng(seed).permutation(m)
    n_val = round(m * fraction)
    return dataset.subset(idx[n_val:]), dataset.subset(idx[:n_val])


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write JSONL records ``{"p": [...], "w": [...]}`` plus a meta sidecar."""
    path = Path(path)
    with path.open("w") as fh:
        for p, w in zip(dataset.params, dataset.observations):
            fh.write(json.dumps({"p": p.tolist(), "w": w.tolist()}) + "\n")
    meta_path = sidecar_path(path)
    with meta_path.open("w") as fh:
        json.dump(dataset.meta.to_dict(), fh, indent=1)
        fh.write("\n")
    return meta_path


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".meta.json") if path.suffix != ".jsonl" \
        else path.with_suffix(".meta.json")


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise ValueError(f"missing dataset meta sidecar {meta_path}")
    with meta_path.open() as fh:
        meta = DatasetMeta.from_dict(json.load(fh))
    params, obs = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                params.append(rec["p"])
                obs.append(rec["w"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
    if len(params) != meta.n_samples:
        raise ValueError(
            f"{path}: {len(params)} records but meta declares {meta.n_samples}"
        )
    k = meta.grid.k
    for i, w in enumerate(obs):
        if len(w) != k:
            raise ValueError(f"{path}: record {i} has {len(w)} values, expected {k}")
    return Dataset(
        np.asarray(params, dtype=float).reshape(-1, 3),
        np.asarray(obs, dtype=float).reshape(-1, k) if obs else np.zeros((0, k)),
        meta,
    )
