"""Acceptance suite for the calibration pipeline.

Each test records one PASS/FAIL verdict line (criteria 1-10) through the
``criterion`` fixture; the collected lines are repeated in a terminal
section after the run.  The heavyweight fixtures (full-size studies,
full-grid inversion) are module-scoped and shared between criteria.
"""

import numpy as np
import pytest

from fsicalib.cmaes import CmaesConfig, MisfitProblem, cmaes_minimize
from fsicalib.dataset import (
    denormalize_inputs,
    denormalize_labels,
    fit_normalization,
    make_dataset,
    normalize_inputs,
    normalize_labels,
    observe,
    save_dataset,
    uniform_probe_grid,
)
from fsicalib.mlp import (
    TrainConfig,
    fit_inverter,
    init_params,
    load_model,
    loss_and_gradient,
    save_model,
)
from fsicalib.solver import (
    CylinderSolver,
    PhysicalParams,
    SolverConfig,
    energy,
    simulate,
    steady_state_profile,
)
from fsicalib.studies import (
    StudySpec,
    run_architecture_study,
    run_probes_study,
    run_samples_study,
)

TRUTH = PhysicalParams(c1=0.611026, rho_s=1.10804, mu_f=1.46802)


# ---------------------------------------------------------------------------
# shared heavyweight fixtures


@pytest.fixture(scope="module")
def cma_result():
    """Full 10x5-grid inversion of the reference truth triple."""
    config = SolverConfig()
    grid = uniform_probe_grid(10, 5, config)
    target = observe(TRUTH, grid, config)
    problem = MisfitProblem(target, grid, config)
    # tol=1e-9: the misfit valley is shallow, so the spread must collapse
    # well below the loss scale at 0.5% parameter error before stopping
    return problem.solve(CmaesConfig(seed=0, tol=1e-9, max_evals=2000))


@pytest.fixture(scope="module")
def samples_study():
    """Error-versus-corpus-size sweep at full scale (three seeds)."""
    spec = StudySpec(
        kind="samples",
        values=(250, 1000, 2000),
        grid_shape=(10, 5),
        seeds=(101, 202, 303),
        test_size=200,
    )
    return run_samples_study(spec)


@pytest.fixture(scope="module")
def probes_study():
    """Error-versus-probe-grid sweep at full scale (three seeds)."""
    spec = StudySpec(
        kind="probes",
        values=((5, 2), (10, 5)),
        n_samples=1000,
        seeds=(101, 202, 303),
        test_size=200,
    )
    return run_probes_study(spec)


def _cell_errors(result, key, value):
    for cell in result.cells:
        if cell[key] == value:
            return np.asarray(cell["rel_errors"])
    raise AssertionError(f"no study cell with {key} == {value!r}")


# ---------------------------------------------------------------------------
# criteria


def test_01_steady_state_matches_annular_couette(criterion):
    config = SolverConfig(t_final=50.0)  # defaults: n_elements=100, dt=0.01
    mesh, states = simulate(PhysicalParams(1.0, 1.0, 1.0), config, [50.0])
    u = states[-1].u
    exact = steady_state_profile(mesh.nodes, config)

    fluid = mesh.nodes > config.r_interface
    solid = ~fluid
    fluid_err = float(np.max(np.abs(u[fluid] - exact[fluid])
                             / np.abs(exact[fluid])))
    solid_mag = float(np.max(np.abs(u[solid])))

    ok = fluid_err <= 1e-3 and solid_mag <= 1e-4
    criterion(1, ok,
            f"steady profile: fluid rel err {fluid_err:.2e} (<= 1e-3), "
            f"solid speed {solid_mag:.2e} (<= 1e-4)")
    assert fluid_err <= 1e-3
    assert solid_mag <= 1e-4


def test_02_temporal_order_near_first(criterion):
    steps = (0.04, 0.02, 0.01)
    base = SolverConfig(t_final=1.0)
    mesh, ref_states = simulate(TRUTH, base.with_overrides(dt=1e-4), [1.0])
    fluid = mesh.nodes > base.r_interface
    ref = ref_states[-1].u[fluid]

    errors = []
    for dt in steps:
        _, states = simulate(TRUTH, base.with_overrides(dt=dt), [1.0])
        errors.append(float(np.max(np.abs(states[-1].u[fluid] - ref))))
    order = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])

    ok = 0.8 <= order <= 1.2
    criterion(2, ok,
            f"implicit Euler observed order {order:.3f} in [0.8, 1.2] "
            f"(errors {', '.join(f'{e:.2e}' for e in errors)})")
    assert 0.8 <= order <= 1.2


def test_03_cmaes_sphere_self_test(criterion):
    def sphere(x):
        return float(np.dot(x, x))

    def shifted(x):
        return float(np.dot(x - shift, x - shift))

    cfg = CmaesConfig(max_evals=2000, tol=0.0, mean0=(1.0, 1.0, 1.0),
                      sigma0=0.5, seed=7)
    first = cmaes_minimize(sphere, config=cfg)
    again = cmaes_minimize(sphere, config=cfg)

    reaches = first.loss <= 1e-10 and first.evals <= 2000
    deterministic = (
        np.array_equal(first.x, again.x)
        and first.evals == again.evals
        and np.array_equal(first.history, again.history)
    )
    shift = np.array([2.0, -1.0, 0.5])
    moved = cmaes_minimize(
        shifted,
        config=CmaesConfig(max_evals=2000, tol=0.0,
                           mean0=np.array([1.0, 1.0, 1.0]) + shift,
                           sigma0=0.5, seed=7),
    )
    translated = (
        np.allclose(moved.x - shift, first.x, atol=1e-9)
        and moved.evals == first.evals
        and np.allclose(moved.history, first.history, rtol=1e-6)
    )

    ok = reaches and deterministic and translated
    criterion(3, ok,
            f"sphere best {first.loss:.2e} (<= 1e-10) in {first.evals} evals "
            f"(<= 2000); rerun bit-identical: {deterministic}; "
            f"translation invariant: {translated}")
    assert reaches
    assert deterministic
    assert translated


def test_04_cmaes_inversion_recovers_truth(cma_result, criterion):
    truth = TRUTH.as_array()
    rel = np.abs(cma_result.x - truth) / truth * 100.0
    in_hundreds = 100 <= cma_result.evals <= 1000

    ok = bool(np.all(rel <= 0.5) and in_hundreds)
    criterion(4, ok,
            "inversion rel errors % "
            f"[{rel[0]:.4f}, {rel[1]:.4f}, {rel[2]:.4f}] (each <= 0.5) "
            f"in {cma_result.evals} evals (hundreds)")
    assert np.all(rel <= 0.5)
    assert in_hundreds


def test_05_network_precision_at_m1000(samples_study, criterion):
    rel = _cell_errors(samples_study, "m", 1000)
    bounds = np.array([2.5, 3.0, 1.5])

    ok = bool(np.all(rel <= bounds))
    criterion(5, ok,
            f"M=1000 mean rel errors % [{rel[0]:.2f}, {rel[1]:.2f}, "
            f"{rel[2]:.2f}] <= [2.5, 3.0, 1.5]")
    assert np.all(rel <= bounds)


def test_06_more_samples_give_smaller_errors(samples_study, criterion):
    small = _cell_errors(samples_study, "m", 250)
    large = _cell_errors(samples_study, "m", 2000)

    ok = bool(np.all(large < small))
    criterion(6, ok,
            f"M=2000 rel errors % [{large[0]:.2f}, {large[1]:.2f}, "
            f"{large[2]:.2f}] strictly below M=250 "
            f"[{small[0]:.2f}, {small[1]:.2f}, {small[2]:.2f}]")
    assert np.all(large < small)


def test_07_denser_probe_grid_dominates(probes_study, criterion):
    coarse = _cell_errors(probes_study, "grid", [5, 2])
    dense = _cell_errors(probes_study, "grid", [10, 5])

    ok = bool(np.all(dense <= coarse))
    criterion(7, ok,
            f"10x5 rel errors % [{dense[0]:.2f}, {dense[1]:.2f}, "
            f"{dense[2]:.2f}] <= 5x2 [{coarse[0]:.2f}, {coarse[1]:.2f}, "
            f"{coarse[2]:.2f}]")
    assert np.all(dense <= coarse)


def test_08_analytic_gradients_match_finite_differences(criterion):
    rng = np.random.default_rng(5)
    params = init_params([10, 20, 3], seed=11)
    w1, b1 = params[0]
    h = 1e-5
    worst = 0.0
    accepted = 0
    while accepted < 100:
        x = rng.uniform(-1.0, 1.0, (1, 10))
        y = rng.uniform(-1.0, 1.0, (1, 3))
        if np.min(np.abs(x @ w1 + b1)) < 1e-3:
            continue  # probe sits near a ReLU kink; gradient may jump
        accepted += 1
        _, grads = loss_and_gradient(params, x, y)
        for li, (w, b) in enumerate(params):
            for arr_idx, analytic in ((0, grads[li][0]), (1, grads[li][1])):
                flat = params[li][arr_idx].ravel()
                for k in range(flat.size):
                    orig = flat[k]
                    flat[k] = orig + h
                    up = loss_and_gradient(params, x, y)[0]
                    flat[k] = orig - h
                    down = loss_and_gradient(params, x, y)[0]
                    flat[k] = orig
                    fd = (up - down) / (2 * h)
                    an = analytic.ravel()[k]
                    scale = max(abs(fd), abs(an))
                    if scale < 1e-8:
                        continue
                    worst = max(worst, abs(fd - an) / scale)

    ok = worst <= 1e-5
    criterion(8, ok,
            f"gradient check on 100 probes of a 10-20-3 net: worst rel "
            f"discrepancy {worst:.2e} (<= 1e-5)")
    assert worst <= 1e-5


def test_09_property_bundle(tmp_path, criterion):
    failures = []

    # (a) rest + motionless wall is an exact fixed point
    still = CylinderSolver(
        TRUTH, SolverConfig(omega_outer=0.0, n_elements=20)
    )
    state = still.initial_state()
    for _ in range(50):
        state = still.step(state)
    if not (np.all(state.u == 0.0) and np.all(state.d == 0.0)):
        failures.append("zero fixed point")

    # (b) Dirichlet values exact at every step
    config = SolverConfig(n_elements=20)
    driven = CylinderSolver(TRUTH, config)
    state = driven.initial_state()
    for _ in range(50):
        state = driven.step(state)
        if state.u[0] != 0.0 or state.u[-1] != config.omega_outer:
            failures.append("Dirichlet exactness")
            break

    # (c) energy never increases once the outer wall is frozen
    drive = CylinderSolver(PhysicalParams(1.0, 1.0, 1.0), SolverConfig())
    state = drive.initial_state()
    while state.t < 2.0 - 1e-12:
        state = drive.step(state)
    frozen = CylinderSolver(
        PhysicalParams(1.0, 1.0, 1.0), SolverConfig(omega_outer=0.0)
    )
    energies = [energy(state, frozen.ops)]
    for _ in range(200):
        state = frozen.step(state)
        energies.append(energy(state, frozen.ops))
    if not np.all(np.diff(energies) <= 1e-12):
        failures.append("energy non-increase")

    # (d) normalization round trip
    ds = make_dataset(12, seed=31, grid=uniform_probe_grid(3, 2, config),
                      config=config)
    fit_normalization(ds)
    w = ds.observations
    w_back = denormalize_inputs(normalize_inputs(w, ds.meta.stats),
                                ds.meta.stats)
    p_back = denormalize_labels(normalize_labels(ds.params, ds.meta.stats),
                                ds.meta.stats)
    if (np.max(np.abs(w_back - w)) > 1e-12
            or np.max(np.abs(p_back - ds.params)) > 1e-12):
        failures.append("normalization round trip")

    # (e) dataset files are bit-identical across reruns and worker counts
    grid = uniform_probe_grid(3, 2, config)
    a = make_dataset(6, seed=77, grid=grid, config=config)
    b = make_dataset(6, seed=77, grid=grid, config=config)
    c = make_dataset(6, seed=77, grid=grid, config=config, n_jobs=2)
    save_dataset(a, tmp_path / "a.jsonl")
    save_dataset(b, tmp_path / "b.jsonl")
    save_dataset(c, tmp_path / "c.jsonl")
    blobs = [
        (tmp_path / n).read_bytes() + (tmp_path / f"{n[:-6]}.meta.json").read_bytes()
        for n in ("a.jsonl", "b.jsonl", "c.jsonl")
    ]
    if not (blobs[0] == blobs[1] == blobs[2]):
        failures.append("dataset reproducibility")

    # (f) model save/load keeps predictions bit-identical
    model, _ = fit_inverter(
        ds, TrainConfig(hidden_layers=(6,), max_epochs=20, patience=20, seed=1)
    )
    save_model(model, tmp_path / "model.json")
    reloaded = load_model(tmp_path / "model.json")
    if not np.array_equal(reloaded.predict(w), model.predict(w)):
        failures.append("model round trip")

    ok = not failures
    criterion(9, ok,
            "invariants (fixed point, Dirichlet, energy, normalization, "
            "dataset bytes, model round trip): "
            + ("all hold" if ok else "FAILED " + ", ".join(failures)))
    assert not failures


def test_10_desk_scale_substitutions(cma_result, criterion):
    # Exact published evaluation counts, wall-clock minutes, and per-layout
    # loss values depend on unpublished conventions; the suite pins trends
    # and orders of magnitude instead.  This check records the substitution
    # and verifies the stand-in quantities exist and are sane.
    evals_band_ok = 100 <= cma_result.evals <= 1000

    spec = StudySpec(
        kind="architecture",
        values=((100,), (50, 50)),
        grid_shape=(10, 5),
        n_samples=80,
        seeds=(101,),
        test_size=40,
    )
    arch = run_architecture_study(spec)
    losses_finite = arch.ok and all(
        np.isfinite(c["mean_best_val_loss"]) and c["mean_best_val_loss"] > 0
        for c in arch.cells
    )

    ok = evals_band_ok and losses_finite
    criterion(10, ok,
            "exact timing/eval-count/loss targets replaced by banded "
            f"checks: inversion evals {cma_result.evals} in [100, 1000]; "
            f"architecture sweep losses finite: {losses_finite}")
    assert evals_band_ok
    assert losses_finite
