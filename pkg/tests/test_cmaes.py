"""Tests for the evolution strategy and the misfit it minimizes."""

import numpy as np
import pytest

from fsicalib.cmaes import (
    CmaEs,
    CmaesConfig,
    MisfitProblem,
    cmaes_minimize,
    misfit_loss,
    recovery_report,
)
from fsicalib.dataset import observe, uniform_probe_grid
from fsicalib.solver import PhysicalParams, SolverConfig


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def sphere_config(seed=7, **kw):
    base = dict(max_evals=2000, tol=0.0, target_loss=1e-12,
                mean0=(1.0, 1.0, 1.0), sigma0=0.5, seed=seed)
    base.update(kw)
    return CmaesConfig(**base)


class TestConfig:
    def test_small_population_rejected(self):
        with pytest.raises(ValueError):
            CmaesConfig(popsize=3)

    def test_bad_sigma_rejected(self):
        with pytest.raises(ValueError):
            CmaesConfig(sigma0=0.0)

    def test_weights_validated_and_normalized(self):
        cfg = CmaesConfig(weights=[4.0, 2.0, 1.0])
        np.testing.assert_allclose(cfg.weights.sum(), 1.0)
        with pytest.raises(ValueError):
            CmaesConfig(weights=[1.0, 2.0])
        with pytest.raises(ValueError):
            CmaesConfig(weights=[1.0, -0.5])


class TestOptimizerState:
    def test_default_population_for_three_dims(self):
        es = CmaEs(np.zeros(3), np.ones(3), CmaesConfig())
        assert es.lam == 7
        assert es.mu == 3
        assert np.all(es.weights > 0)
        assert np.all(np.diff(es.weights) < 0)
        assert es.weights.sum() == pytest.approx(1.0)

    def test_candidates_respect_box(self):
        lower = np.array([0.5, 0.9, 0.5])
        upper = np.array([1.5, 1.25, 1.5])
        es = CmaEs(lower, upper, CmaesConfig(seed=3))
        for _ in range(5):
            cands = es.ask()
            assert np.all(cands >= lower) and np.all(cands <= upper)
            es.tell(cands, np.array([sphere(c) for c in cands]))

    def test_evaluation_counter_steps_by_population(self):
        es = CmaEs(None, None, sphere_config())
        for gen in range(1, 4):
            cands = es.ask()
            es.tell(cands, np.array([sphere(c) for c in cands]))
            assert es.count_evals == gen * es.lam

    def test_best_ever_non_increasing(self):
        es = CmaEs(None, None, sphere_config(seed=2))
        best = np.inf
        for _ in range(40):
            cands = es.ask()
            es.tell(cands, np.array([sphere(c) for c in cands]))
            assert es.best_f <= best
            best = es.best_f

    def test_covariance_stays_positive_definite(self):
        es = CmaEs(None, None, sphere_config(seed=4))
        for _ in range(60):
            cands = es.ask()
            es.tell(cands, np.array([sphere(c) for c in cands]))
            assert es.covariance_eigenvalues().min() > 0

    def test_non_finite_losses_rank_worst(self):
        def holed(x):
            if x[1] > 0.8:
                return float("nan")
            return sphere(x)

        res = cmaes_minimize(holed, config=sphere_config(seed=9))
        assert res.loss <= 1e-10

    def test_mismatched_tell_rejected(self):
        es = CmaEs(None, None, sphere_config())
        cands = es.ask()
        with pytest.raises(ValueError):
            es.tell(cands[:-1], np.zeros(es.lam - 1))

    def test_unbounded_needs_start_point(self):
        with pytest.raises(ValueError):
            CmaEs(None, None, CmaesConfig())


class TestMinimize:
    def test_sphere_reaches_target(self):
        res = cmaes_minimize(sphere, config=sphere_config())
        assert res.loss <= 1e-10
        assert res.evals <= 2000
        np.testing.assert_allclose(res.x, 0.0, atol=1e-5)

    def test_seeded_determinism_is_exact(self):
        a = cmaes_minimize(sphere, config=sphere_config(seed=13))
        b = cmaes_minimize(sphere, config=sphere_config(seed=13))
        assert np.array_equal(a.x, b.x)
        assert a.loss == b.loss
        assert a.history == b.history

    def test_translation_invariance(self):
        """Shifting the objective and the start point by the same offset
        reproduces the run up to floating-point roundoff."""
        shift = np.array([2.0, -1.0, 0.5])
        plain = cmaes_minimize(sphere, config=sphere_config(seed=21))
        moved = cmaes_minimize(
            lambda x: sphere(x - shift),
            config=sphere_config(seed=21, mean0=(1.0, 1.0, 1.0) + shift),
        )
        assert plain.generations == moved.generations
        np.testing.assert_allclose(moved.x - shift, plain.x, atol=1e-9)
        a = np.array([h[1] for h in plain.history])
        b = np.array([h[1] for h in moved.history])
        np.testing.assert_allclose(b, a, rtol=1e-6, atol=1e-12)

    def test_sphere_log_progress_roughly_linear(self):
        res = cmaes_minimize(sphere, config=sphere_config(seed=3, target_loss=0.0,
                                                          max_evals=700))
        best = np.array([h[1] for h in res.history])
        # after adaptation the best value falls by orders of magnitude at a
        # roughly steady geometric rate
        assert best[60] < 1e-4 * best[20]
        assert best[-1] < 1e-4 * best[60]

    def test_spread_termination_on_flat_function(self):
        res = cmaes_minimize(lambda x: 5.0, config=sphere_config(
            seed=1, tol=1e-6, target_loss=0.0))
        assert res.reason == "tol"
        assert res.evals < 100

    def test_degenerate_box_returns_point(self):
        point = np.array([0.7, 1.1, 0.8])
        res = cmaes_minimize(sphere, point, point, CmaesConfig())
        assert res.reason == "degenerate"
        assert res.evals == 1
        np.testing.assert_array_equal(res.x, point)

    def test_max_evals_respected(self):
        res = cmaes_minimize(sphere, config=sphere_config(
            max_evals=70, target_loss=0.0))
        assert res.reason == "max_evals"
        assert res.evals >= 70
        assert res.evals < 77 + 7


class TestMisfit:
    CFG = SolverConfig()
    GRID = uniform_probe_grid(3, 2, CFG)
    TRUTH = np.array([0.611026, 1.10804, 1.46802])

    def target(self):
        return observe(PhysicalParams.from_array(self.TRUTH), self.GRID, self.CFG)

    def test_loss_at_truth_is_zero(self):
        problem = MisfitProblem(self.target(), self.GRID, self.CFG)
        assert problem(self.TRUTH) <= 1e-20

    def test_zero_targets_give_mean_square_of_solution(self):
        w = self.target()
        problem = MisfitProblem(np.zeros_like(w), self.GRID, self.CFG)
        assert problem(self.TRUTH) == pytest.approx(np.mean(w**2), rel=1e-12)

    def test_perturbed_viscosity_detectable(self):
        ranges = {"c1": (0.5, 1.5), "rho_s": (0.9, 1.25), "mu_f": (0.5, 2.0)}
        problem = MisfitProblem(self.target(), self.GRID, self.CFG, ranges)
        bumped = self.TRUTH * np.array([1.0, 1.0, 1.1])
        assert problem(bumped) > 1e-8

    def test_out_of_box_parameters_rejected(self):
        problem = MisfitProblem(self.target(), self.GRID, self.CFG)
        with pytest.raises(ValueError):
            problem(np.array([0.1, 1.0, 1.0]))

    def test_target_length_checked(self):
        with pytest.raises(ValueError):
            MisfitProblem(np.zeros(5), self.GRID, self.CFG)

    def test_misfit_loss_helper_matches_problem(self):
        w = self.target()
        direct = misfit_loss(self.TRUTH * 1.01, w, self.GRID, self.CFG)
        problem = MisfitProblem(w, self.GRID, self.CFG)
        assert direct == problem(self.TRUTH * 1.01)

    def test_small_grid_inversion_recovers_truth(self):
        problem = MisfitProblem(self.target(), self.GRID, self.CFG)
        res = problem.solve(CmaesConfig(seed=5, tol=1e-9))
        rel = np.abs(res.x - self.TRUTH) / self.TRUTH
        assert rel.max() < 0.02
        assert res.evals < 2000


class TestRecoveryReport:
    def test_exact_recovery(self):
        truth = np.array([0.7, 1.1, 0.9])
        rep = recovery_report(truth, truth)
        assert rep["rel_errors"] == [0.0, 0.0, 0.0]
        assert rep["max_rel_error"] == 0.0

    def test_one_percent_offset(self):
        truth = np.array([0.7, 1.1, 0.9])
        rep = recovery_report(truth, truth * 1.01)
        np.testing.assert_allclose(rep["rel_errors"], 0.01, rtol=1e-10)
        np.testing.assert_allclose(rep["abs_errors"], truth * 0.01, rtol=1e-10)
