"""Command-line front end.

Subcommands: simulate (one forward solve), generate (corpus to JSONL),
cmaes (misfit inversion), train / infer (network fit and use), and study
(the experiment sweeps).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cmaes import CmaesConfig, MisfitProblem, recovery_report
from .dataset import (
    DEFAULT_RANGES,
    load_dataset,
    make_dataset,
    observe,
    save_dataset,
    uniform_probe_grid,
)
from .mlp import TrainConfig, fit_inverter, load_model, save_model
from .solver import CylinderSolver, PhysicalParams, SolverConfig
from .studies import (
    DEFAULT_ARCHITECTURES,
    DEFAULT_PROBE_GRIDS,
    DEFAULT_REP_SEEDS,
    DEFAULT_SAMPLE_COUNTS,
    StudySpec,
    format_baseline_table,
    run_study,
    write_study_outputs,
)


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--n-elements", type=int, default=100,
                   help="number of quadratic elements (default 100)")
    p.add_argument("--dt", type=float, default=0.01, help="time step")
    p.add_argument("--t-final", type=float, default=5.0, help="end time")


def _add_range_flags(p: argparse.ArgumentParser):
    for name, flag in (("c1", "--c1-range"), ("rho_s", "--rho-s-range"),
                       ("mu_f", "--mu-f-range")):
        lo, hi = DEFAULT_RANGES[name]
        p.add_argument(flag, type=float, nargs=2, metavar=("LO", "HI"),
                       default=[lo, hi],
                       help=f"sampling interval for {name} (default {lo} {hi})")


def _add_grid_flags(p: argparse.ArgumentParser):
    p.add_argument("--n-r", type=int, default=10,
                   help="probe radii count (default 10)")
    p.add_argument("--n-t", type=int, default=5,
                   help="probe time count (default 5)")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(n_elements=args.n_elements, dt=args.dt,
                        t_final=args.t_final)


def _ranges(args) -> dict:
    return {
        "c1": tuple(args.c1_range),
        "rho_s": tuple(args.rho_s_range),
        "mu_f": tuple(args.mu_f_range),
    }


def _parse_shape(text: str) -> tuple:
    sep = "x" if "x" in text else ","
    parts = text.split(sep)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"grid shape must look like 10x5, got {text!r}"
        )
    return (int(parts[0]), int(parts[1]))


def _parse_arch(text: str) -> tuple:
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"architecture must be comma-separated widths, got {text!r}"
        )


def _read_vector(path: str) -> np.ndarray:
    """Observation vector from a JSON array or a whitespace-separated file."""
    text = Path(path).read_text()
    try:
        return np.asarray(json.loads(text), dtype=float).ravel()
    except (json.JSONDecodeError, ValueError):
        pass
    try:
        return np.asarray(
            [float(tok) for line in text.splitlines()
             for tok in line.split() if not line.lstrip().startswith("#")],
            dtype=float,
        )
    except ValueError as exc:
        raise ValueError(f"{path}: cannot parse observation vector: {exc}")


def cmd_simulate(args) -> int:
    params = PhysicalParams(c1=args.c1, rho_s=args.rho_s, mu_f=args.mu_f)
    config = _solver_config(args)
    times = args.times or [config.t_final * f for f in (0.25, 0.5, 1.0)]
    solver = CylinderSolver(params, config)
    states = solver.run(times, t_final=max(config.t_final, max(times)))

    header = "# r " + " ".join(f"u(t={s.t:g})" for s in states)
    lines = [header]
    for i, r in enumerate(solver.mesh.nodes):
        row = " ".join(f"{s.u[i]:.10g}" for s in states)
        lines.append(f"{r:.10g} {row}")
    text = "\n".join(lines) + "\n"

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"wrote {out}")
        figure = args.figure or out.with_suffix(".png")
    else:
        sys.stdout.write(text)
        figure = args.figure
    if figure:
        from . import plots

        plots.profile_figure(solver.mesh, states, config, figure)
        print(f"wrote {figure}")
    return 0


def cmd_generate(args) -> int:
    config = _solver_config(args)
    grid = uniform_probe_grid(args.n_r, args.n_t, config)
    dataset = make_dataset(args.m, args.seed, grid, config,
                           ranges=_ranges(args), n_jobs=args.jobs)
    save_dataset(dataset, args.out)
    print(json.dumps({
        "out": str(args.out),
        "n_samples": len(dataset),
        "k": grid.k,
        "seed": args.seed,
        "fingerprint": dataset.meta.fingerprint(),
    }))
    return 0


def cmd_cmaes(args) -> int:
    config = _solver_config(args)
    grid = uniform_probe_grid(args.n_r, args.n_t, config)
    truth = None
    if args.truth is not None:
        truth = np.asarray(args.truth, dtype=float)
        target = observe(PhysicalParams.from_array(truth), grid, config)
    elif args.targets is not None:
        target = _read_vector(args.targets)
    else:
        print("error: provide --truth or --targets", file=sys.stderr)
        return 2

    problem = MisfitProblem(target, grid, config, _ranges(args))
    result = problem.solve(CmaesConfig(
        max_evals=args.max_evals, tol=args.tol, seed=args.seed,
    ))

    record = {
        "best": result.x.tolist(),
        "loss": result.loss,
        "evals": result.evals,
        "generations": result.generations,
        "reason": result.reason,
    }
    if truth is not None:
        record["recovery"] = recovery_report(truth, result.x)
    print(json.dumps(record))

    names = ("c1", "rho_s", "mu_f")
    print(f"converged after {result.evals} evaluations ({result.reason}), "
          f"misfit {result.loss:.3e}")
    for i, name in enumerate(names):
        line = f"  {name:6s} = {result.x[i]:.6f}"
        if truth is not None:
            rel = abs(result.x[i] - truth[i]) / abs(truth[i]) * 100
            line += f"   (true {truth[i]:.6f}, rel err {rel:.4f}%)"
        print(line)

    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "cmaes_result.json").open("w") as fh:
            json.dump(record, fh, indent=1)
            fh.write("\n")
        from . import plots

        plots.convergence_figure(result.history,
                                 out_dir / "cmaes_convergence.png")
        print(f"wrote {out_dir}/cmaes_result.json and cmaes_convergence.png")
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    cfg = TrainConfig(
        hidden_layers=args.arch,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        val_fraction=args.val_fraction,
        seed=args.seed,
    )
    model, report = fit_inverter(dataset, cfg)
    save_model(model, args.out)
    print(json.dumps({
        "model": str(args.out),
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "best_val_loss": report.best_val_loss,
        "final_train_loss": report.train_losses[-1],
        "stopped_early": report.stopped_early,
    }))
    if args.figure:
        from . import plots

        plots.training_figure(report, args.figure)
        print(f"wrote {args.figure}")
    return 0


def cmd_infer(args) -> int:
    model = load_model(args.model)
    if args.values is not None:
        w = np.asarray(args.values, dtype=float)
    elif args.file is not None:
        w = _read_vector(args.file)
    else:
        print("error: provide --values or --file", file=sys.stderr)
        return 2
    expected = model.params[0][0].shape[0]
    if len(w) != expected:
        print(f"error: model expects {expected} observations, got {len(w)}",
              file=sys.stderr)
        return 1
    p = model.predict(w)
    print(json.dumps({"params": p.tolist()}))
    print(f"  c1 = {p[0]:.6f}   rho_s = {p[1]:.6f}   mu_f = {p[2]:.6f}")
    return 0


def _study_seeds(args) -> tuple:
    if args.seeds:
        return tuple(args.seeds)
    if args.reps:
        return tuple(101 * (i + 1) for i in range(args.reps))
    return DEFAULT_REP_SEEDS


def cmd_study(args) -> int:
    config = _solver_config(args)
    common = dict(
        ranges=_ranges(args),
        config=config,
        seeds=_study_seeds(args),
        test_size=args.test_size,
        n_jobs=args.jobs,
    )
    truths = None
    if args.study_kind == "samples":
        spec = StudySpec(kind="samples", values=tuple(args.values),
                         grid_shape=tuple(args.grid), **common)
    elif args.study_kind == "probes":
        spec = StudySpec(kind="probes", values=tuple(args.grids),
                         n_samples=args.m, **common)
    elif args.study_kind == "arch":
        spec = StudySpec(kind="architecture", values=tuple(args.archs),
                         grid_shape=tuple(args.grid), n_samples=args.m,
                         **common)
    else:
        spec = StudySpec(kind="cmaes-baseline", values=tuple(args.grids),
                         n_samples=args.m, **common)
        if args.truth:
            truths = [tuple(args.truth)]

    result = run_study(spec, truths) if spec.kind == "cmaes-baseline" \
        else run_study(spec)
    written = write_study_outputs(result, args.out_dir)
    for path in written:
        print(f"wrote {path}")
    if spec.kind == "cmaes-baseline" and result.cells:
        print(format_baseline_table(result))
    if not result.ok:
        print(f"error: {len(result.failures)} study cell(s) failed; "
              f"see failure manifest", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsicalib",
        description="rotating-cylinder fluid-structure calibration toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one forward solve")
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--rho-s", type=float, default=1.0)
    p.add_argument("--mu-f", type=float, default=1.0)
    _add_solver_flags(p)
    p.add_argument("--times", type=float, nargs="+",
                   help="snapshot times (default quarter/half/full span)")
    p.add_argument("--out", help="write the profile table here "
                                 "(default stdout); a .png lands next to it")
    p.add_argument("--figure", help="explicit figure path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--m", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="JSONL output path")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for generation")
    _add_grid_flags(p)
    _add_range_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cmaes", help="invert parameters from observations")
    p.add_argument("--truth", type=float, nargs=3,
                   metavar=("C1", "RHO_S", "MU_F"),
                   help="synthesize targets from this triple")
    p.add_argument("--targets", help="file with K observation values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6,
                   help="generation function-value spread tolerance")
    p.add_argument("--max-evals", type=int, default=2000)
    p.add_argument("--out-dir", help="also write result JSON + convergence plot")
    _add_grid_flags(p)
    _add_range_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_cmaes)

    p = sub.add_parser("train", help="fit the network inverter on a corpus")
    p.add_argument("dataset", help="JSONL corpus path")
    p.add_argument("--arch", type=_parse_arch, default=(100,),
                   help="comma-separated hidden widths (default 100)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--figure", help="write the loss curves here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict a triple from observations")
    p.add_argument("model", help="model file from `train`")
    p.add_argument("--values", type=float, nargs="+",
                   help="inline observation vector")
    p.add_argument("--file", help="file with the observation vector")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("study", help="run one of the experiment sweeps")
    study_sub = p.add_subparsers(dest="study_kind", required=True)

    def study_common(sp):
        sp.add_argument("--out-dir", default="study-out")
        sp.add_argument("--seeds", type=int, nargs="+",
                        help="one seed per repetition")
        sp.add_argument("--reps", type=int,
                        help="repetition count (generates seeds)")
        sp.add_argument("--test-size", type=int, default=200)
        sp.add_argument("--jobs", type=int, default=1)
        _add_range_flags(sp)
        _add_solver_flags(sp)
        sp.set_defaults(func=cmd_study)

    sp = study_sub.add_parser("samples", help="precision versus corpus size")
    sp.add_argument("--values", type=int, nargs="+",
                    default=list(DEFAULT_SAMPLE_COUNTS))
    sp.add_argument("--grid", type=_parse_shape, default=(10, 5),
                    help="probe grid, e.g. 10x5")
    study_common(sp)

    sp = study_sub.add_parser("probes", help="precision versus probe grid")
    sp.add_argument("--grids", type=_parse_shape, nargs="+",
                    default=[tuple(g) for g in DEFAULT_PROBE_GRIDS])
    sp.add_argument("--m", type=int, default=1000)
    study_common(sp)

    sp = study_sub.add_parser("arch", help="training behaviour per layout")
    sp.add_argument("--archs", type=_parse_arch, nargs="+",
                    default=[tuple(a) for a in DEFAULT_ARCHITECTURES])
    sp.add_argument("--grid", type=_parse_shape, default=(10, 5))
    sp.add_argument("--m", type=int, default=1000)
    study_common(sp)

    sp = study_sub.add_parser("baseline", help="cma-es versus the network")
    sp.add_argument("--grids", type=_parse_shape, nargs="+",
                    default=[(10, 5), (5, 5)])
    sp.add_argument("--m", type=int, default=1000)
    sp.add_argument("--truth", type=float, nargs=3,
                    metavar=("C1", "RHO_S", "MU_F"))
    study_common(sp)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
