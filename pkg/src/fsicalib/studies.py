"""Experiment sweeps over the calibration pipeline.

Four studies: inversion precision versus corpus size, versus probe grid,
versus network architecture, and a CMA-ES-versus-network baseline.  Every
study is a pure function of its spec (seeds included), emits a JSON result
plus whitespace-separated data tables with commented headers, and renders
summary figures next to them.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cmaes import CmaesConfig, MisfitProblem, recovery_report
from .dataset import (
    DEFAULT_RANGES,
    make_dataset,
    observe,
    uniform_probe_grid,
)
from .mlp import TrainConfig, fit_inverter
from .solver import PhysicalParams, SolverConfig

#: disjoint from every cell seed (rep_seed * 10000 + cell index stays far away)
TEST_SEED = 987654

DEFAULT_REP_SEEDS = (101, 202, 303)
DEFAULT_SAMPLE_COUNTS = (250, 500, 1000, 2000)
DEFAULT_PROBE_GRIDS = ((5, 2), (10, 2), (5, 5), (10, 5))
DEFAULT_ARCHITECTURES = (
    (1000,), (100, 100), (100,), (50, 50), (34, 34, 34), (50, 10, 50),
)
#: the recovery target used throughout the worked examples
CANONICAL_TRUTH = (0.611026, 1.10804, 1.46802)


@dataclass
class StudySpec:
    """Everything a study needs; two specs with equal fields give equal results."""

    kind: str                      # samples | probes | architecture | cmaes-baseline
    values: tuple                  # the swept variable's values
    grid_shape: tuple = (10, 5)    # (n_r, n_t) where the sweep does not vary it
    n_samples: int = 1000          # corpus size where the sweep does not vary it
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    config: SolverConfig = field(default_factory=SolverConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(hidden_layers=(100,)))
    seeds: tuple = DEFAULT_REP_SEEDS
    test_size: int = 200
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in ("samples", "probes", "architecture", "cmaes-baseline"):
            raise ValueError(f"unknown study kind {self.kind!r}")
        self.values = tuple(self.values)
        if not self.values:
            raise ValueError("swept value list must be non-empty")
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"repetition seeds must be distinct: {self.seeds}")
        if self.test_size < 1:
            raise ValueError("test_size must be positive")

    def header(self) -> dict:
        """The reproducibility block embedded in every emitted result."""
        return {
            "kind": self.kind,
            "values": [
                list(v) if isinstance(v, (tuple, list)) else v for v in self.values
            ],
            "grid_shape": list(self.grid_shape),
            "n_samples": self.n_samples,
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "config": {
                "n_elements": self.config.n_elements,
                "dt": self.config.dt,
                "t_final": self.config.t_final,
            },
            "train": {
                "hidden_layers": list(self.train.hidden_layers),
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
                "max_epochs": self.train.max_epochs,
                "patience": self.train.patience,
                "val_fraction": self.train.val_fraction,
            },
            "seeds": list(self.seeds),
            "test_size": self.test_size,
            "test_seed": TEST_SEED,
            "error_metric": "mean over test samples of |est-true|/true, percent",
        }


@dataclass
class StudyResult:
    spec_header: dict
    cells: list
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_header,
            "cells": self.cells,
            "failures": self.failures,
        }


def error_stats(predicted: np.ndarray, truth: np.ndarray):
    """(mean absolute error, mean relative error in percent) per parameter."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    abs_err = np.abs(predicted - truth)
    rel_err = abs_err / np.abs(truth) * 100.0
    return abs_err.mean(axis=0), rel_err.mean(axis=0)


def _mean_over_reps(reps, key):
    return np.mean([r[key] for r in reps], axis=0).tolist()


def _run_training_cell(spec, cell_index, m, grid, rep_seed, test_set, hidden=None):
    """One dataset + one training + one test-set evaluation."""
    ds_seed = rep_seed * 10000 + cell_index
    corpus = make_dataset(
        m, ds_seed, grid, spec.config, ranges=spec.ranges, n_jobs=spec.n_jobs
    )
    train_cfg = replace(
        spec.train,
        seed=ds_seed + 1,
        hidden_layers=tuple(hidden) if hidden is not None else spec.train.hidden_layers,
    )
    t0 = time.perf_counter()
    model, report = fit_inverter(corpus, train_cfg)
    train_seconds = time.perf_counter() - t0
    abs_err, rel_err = error_stats(model.predict(test_set.observations), test_set.params)
    return {
        "rep_seed": rep_seed,
        "dataset_seed": ds_seed,
        "train_seed": ds_seed + 1,
        "dataset_fingerprint": corpus.meta.fingerprint(),
        "abs_errors": abs_err.tolist(),
        "rel_errors": rel_err.tolist(),
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "final_train_loss": report.train_losses[-1],
        "best_val_loss": report.best_val_loss,
        "stopped_early": report.stopped_early,
        "train_seconds": round(train_seconds, 3),
    }, model


def _strip_timing(rep: dict) -> dict:
    # wall-clock is the one non-deterministic field; keep results comparable
    out = dict(rep)
    out.pop("train_seconds", None)
    return out


def run_samples_study(spec: StudySpec) -> StudyResult:
    """Precision of the trained inverter versus corpus size M."""
    grid = uniform_probe_grid(*spec.grid_shape, spec.config)
    test_set = make_dataset(
        spec.test_size, TEST_SEED, grid, spec.config,
        ranges=spec.ranges, n_jobs=spec.n_jobs,
    )
    header = spec.header()
    header["test_fingerprint"] = test_set.meta.fingerprint()
    cells, failures = [], []
    for cell_index, m in enumerate(spec.values):
        reps = []
        for rep_seed in spec.seeds:
            try:
                rep, _ = _run_training_cell(
                    spec, cell_index, int(m), grid, rep_seed, test_set
                )
                reps.append(rep)
            except Exception as exc:
                failures.append(
                    {"cell": {"m": int(m)}, "rep_seed": rep_seed, "error": str(exc)}
                )
        if reps:
            cells.append({
                "m": int(m),
                "abs_errors": _mean_over_reps(reps, "abs_errors"),
                "rel_errors": _mean_over_reps(reps, "rel_errors"),
                "reps": reps,
            })
    return StudyResult(header, cells, failures)


def run_probes_study(spec: StudySpec) -> StudyResult:
    """Precision versus the probe grid shape, at fixed corpus size."""
    header = spec.header()
    cells, failures = [], []
    for cell_index, shape in enumerate(spec.values):
        n_r, n_t = (int(x) for x in shape)
        try:
            grid = uniform_probe_grid(n_r, n_t, spec.config)
            # same test triples per grid (same seed); observations depend on K
            test_set = make_dataset(
                spec.test_size, TEST_SEED, grid, spec.config,
                ranges=spec.ranges, n_jobs=spec.n_jobs,
            )
        except Exception as exc:
            failures.append({"cell": {"grid": [n_r, n_t]}, "error": str(exc)})
            continue
        reps = []
        for rep_seed in spec.seeds:
            try:
                rep, _ = _run_training_cell(
                    spec, cell_index, spec.n_samples, grid, rep_seed, test_set
                )
                reps.append(rep)
            except Exception as exc:
                failures.append({
                    "cell": {"grid": [n_r, n_t]},
                    "rep_seed": rep_seed,
                    "error": str(exc),
                })
        if reps:
            cells.append({
                "grid": [n_r, n_t],
                "k": n_r * n_t,
                "test_fingerprint": test_set.meta.fingerprint(),
                "abs_errors": _mean_over_reps(reps, "abs_errors"),
                "rel_errors": _mean_over_reps(reps, "rel_errors"),
                "reps": reps,
            })
    return StudyResult(header, cells, failures)


def run_architecture_study(spec: StudySpec) -> StudyResult:
    """Training behaviour of several layer layouts on a common corpus."""
    grid = uniform_probe_grid(*spec.grid_shape, spec.config)
    test_set = make_dataset(
        spec.test_size, TEST_SEED, grid, spec.config,
        ranges=spec.ranges, n_jobs=spec.n_jobs,
    )
    header = spec.header()
    header["test_fingerprint"] = test_set.meta.fingerprint()
    cells, failures = [], []
    for cell_index, hidden in enumerate(spec.values):
        hidden = tuple(int(h) for h in hidden)
        reps = []
        for rep_seed in spec.seeds:
            try:
                # cell_index 0 for every architecture: all cells of one rep
                # train on the same corpus, so only the layout differs
                rep, _ = _run_training_cell(
                    spec, 0, spec.n_samples, grid, rep_seed, test_set, hidden=hidden
                )
                reps.append(_strip_timing(rep))
            except Exception as exc:
                failures.append({
                    "cell": {"hidden_layers": list(hidden)},
                    "rep_seed": rep_seed,
                    "error": str(exc),
                })
        if reps:
            cells.append({
                "hidden_layers": list(hidden),
                "abs_errors": _mean_over_reps(reps, "abs_errors"),
                "rel_errors": _mean_over_reps(reps, "rel_errors"),
                "mean_epochs": float(np.mean([r["epochs_run"] for r in reps])),
                "mean_best_val_loss": float(
                    np.mean([r["best_val_loss"] for r in reps])
                ),
                "all_stopped_early": all(r["stopped_early"] for r in reps),
                "reps": reps,
            })
    return StudyResult(header, cells, failures)


def run_cmaes_baseline(spec: StudySpec, truths=None) -> StudyResult:
    """CMA-ES inversion versus a trained network on the same targets.

    The swept values are probe grid shapes; for each one both methods
    recover every truth triple, with per-parameter errors, CMA-ES
    evaluation counts, and wall-clock side by side.
    """
    truths = [CANONICAL_TRUTH] if truths is None else list(truths)
    header = spec.header()
    header["truths"] = [list(t) for t in truths]
    cells, failures = [], []
    for cell_index, shape in enumerate(spec.values):
        n_r, n_t = (int(x) for x in shape)
        try:
            grid = uniform_probe_grid(n_r, n_t, spec.config)
            test_set = make_dataset(
                spec.test_size, TEST_SEED, grid, spec.config,
                ranges=spec.ranges, n_jobs=spec.n_jobs,
            )
            rep, model = _run_training_cell(
                spec, cell_index, spec.n_samples, grid, spec.seeds[0], test_set
            )
        except Exception as exc:
            failures.append({"cell": {"grid": [n_r, n_t]}, "error": str(exc)})
            continue
        targets = []
        for truth in truths:
            truth_arr = np.asarray(truth, dtype=float)
            try:
                target = observe(
                    PhysicalParams.from_array(truth_arr), grid, spec.config
                )
                problem = MisfitProblem(target, grid, spec.config, spec.ranges)
                t0 = time.perf_counter()
                # the misfit valley is shallow near the optimum, so the
                # default spread tolerance would stop a factor ~10 too early
                cma = problem.solve(CmaesConfig(seed=spec.seeds[0], tol=1e-9))
                cma_seconds = time.perf_counter() - t0
                t0 = time.perf_counter()
                dnn_pred = model.predict(target)
                dnn_seconds = time.perf_counter() - t0
            except Exception as exc:
                failures.append({
                    "cell": {"grid": [n_r, n_t]},
                    "truth": list(truth),
                    "error": str(exc),
                })
                continue
            targets.append({
                "truth": truth_arr.tolist(),
                "cmaes": {
                    **recovery_report(truth_arr, cma.x),
                    "loss": cma.loss,
                    "evals": cma.evals,
                    "reason": cma.reason,
                    "seconds": round(cma_seconds, 3),
                },
                "dnn": {
                    **recovery_report(truth_arr, dnn_pred),
                    "seconds": round(dnn_seconds, 6),
                },
            })
        cells.append({
            "grid": [n_r, n_t],
            "dnn_training": rep,
            "targets": targets,
        })
    return StudyResult(header, cells, failures)


def run_study(spec: StudySpec, truths=None) -> StudyResult:
    runners = {
        "samples": run_samples_study,
        "probes": run_probes_study,
        "architecture": run_architecture_study,
    }
    if spec.kind == "cmaes-baseline":
        return run_cmaes_baseline(spec, truths)
    return runners[spec.kind](spec)


# ---------------------------------------------------------------------------
# output writers


def _write_table(path: Path, header_lines, columns, rows):
    with path.open("w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(_format_cell(v) for v in row) + "\n")


def _format_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.8g}"


def _common_header(result: StudyResult):
    spec = result.spec_header
    return [
        f"study: {spec['kind']}",
        f"seeds: {spec['seeds']}  test_size: {spec['test_size']}  "
        f"test_seed: {spec['test_seed']}",
        f"metric: {spec['error_metric']}",
    ]


def write_study_outputs(result: StudyResult, out_dir: str | Path) -> list:
    """Write result JSON, data tables, figures, and any failure manifest.

    Returns the list of written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = result.spec_header["kind"].replace("cmaes-", "")
    written = []

    json_path = out_dir / f"{kind}_result.json"
    with json_path.open("w") as fh:
        json.dump(result.to_dict(), fh, indent=1)
        fh.write("\n")
    written.append(json_path)

    from . import plots

    if result.spec_header["kind"] == "samples" and result.cells:
        rows = [
            [c["m"], *c["rel_errors"]] for c in result.cells
        ]
        path = out_dir / "samples_relerr.dat"
        _write_table(
            path, _common_header(result),
            ["M", "relerr_c1_pct", "relerr_rhos_pct", "relerr_muf_pct"], rows,
        )
        written.append(path)
        rows = [[c["m"], *c["abs_errors"]] for c in result.cells]
        path = out_dir / "samples_abserr.dat"
        _write_table(
            path, _common_header(result),
            ["M", "abserr_c1", "abserr_rhos", "abserr_muf"], rows,
        )
        written.append(path)
        written.append(plots.samples_figure(result, out_dir / "samples_relerr.png"))

    elif result.spec_header["kind"] == "probes" and result.cells:
        rows = [
            [c["grid"][0], c["grid"][1], c["k"], *c["rel_errors"]]
            for c in result.cells
        ]
        path = out_dir / "probes_relerr.dat"
        _write_table(
            path, _common_header(result),
            ["n_r", "n_t", "K", "relerr_c1_pct", "relerr_rhos_pct", "relerr_muf_pct"],
            rows,
        )
        written.append(path)
        written.append(plots.probes_figure(result, out_dir / "probes_relerr.png"))

    elif result.spec_header["kind"] == "architecture" and result.cells:
        legend = [
            f"arch {i}: {'x'.join(str(h) for h in c['hidden_layers'])}"
            for i, c in enumerate(result.cells)
        ]
        rows = [
            [
                i, c["mean_epochs"], c["mean_best_val_loss"],
                *c["rel_errors"], int(c["all_stopped_early"]),
            ]
            for i, c in enumerate(result.cells)
        ]
        path = out_dir / "arch_result.dat"
        _write_table(
            path, _common_header(result) + legend,
            [
                "arch_index", "mean_epochs", "mean_best_val_loss",
                "relerr_c1_pct", "relerr_rhos_pct", "relerr_muf_pct",
                "all_stopped_early",
            ],
            rows,
        )
        written.append(path)
        written.append(plots.architecture_figure(result, out_dir / "arch_result.png"))

    elif result.spec_header["kind"] == "cmaes-baseline" and result.cells:
        rows = []
        for c in result.cells:
            for t in c["targets"]:
                rows.append([
                    c["grid"][0], c["grid"][1],
                    *[100 * e for e in t["cmaes"]["rel_errors"]],
                    t["cmaes"]["evals"], t["cmaes"]["seconds"],
                    *[100 * e for e in t["dnn"]["rel_errors"]],
                    t["dnn"]["seconds"],
                ])
        path = out_dir / "baseline.dat"
        _write_table(
            path, _common_header(result),
            [
                "n_r", "n_t",
                "cma_relerr_c1_pct", "cma_relerr_rhos_pct", "cma_relerr_muf_pct",
                "cma_evals", "cma_seconds",
                "dnn_relerr_c1_pct", "dnn_relerr_rhos_pct", "dnn_relerr_muf_pct",
                "dnn_seconds",
            ],
            rows,
        )
        written.append(path)
        written.append(plots.baseline_figure(result, out_dir / "baseline.png"))

    if result.failures:
        manifest = out_dir / f"{kind}_failures.json"
        with manifest.open("w") as fh:
            json.dump(result.failures, fh, indent=1)
            fh.write("\n")
        written.append(manifest)
    return written


def format_baseline_table(result: StudyResult) -> str:
    """Human-readable side-by-side comparison for the terminal."""
    lines = []
    for cell in result.cells:
        n_r, n_t = cell["grid"]
        lines.append(f"grid {n_r}x{n_t}:")
        for t in cell["targets"]:
            truth = ", ".join(f"{v:.6g}" for v in t["truth"])
            lines.append(f"  truth = ({truth})")
            cma, dnn = t["cmaes"], t["dnn"]
            lines.append(
                "    cma-es  rel err % = "
                + "  ".join(f"{100 * e:8.4f}" for e in cma["rel_errors"])
                + f"   evals = {cma['evals']:4d}   time = {cma['seconds']:.2f}s"
            )
            lines.append(
                "    network rel err % = "
                + "  ".join(f"{100 * e:8.4f}" for e in dnn["rel_errors"])
                + f"   time = {dnn['seconds'] * 1e6:.0f}us"
            )
    return "\n".join(lines)
