"""Covariance matrix adaptation evolution strategy, and the misfit it drives.

Plain CMA-ES with rank-one and rank-mu covariance updates and cumulative
step-size adaptation, written directly against numpy.  Box constraints are
handled by resampling a few times and clamping as a last resort; the
optimizer also runs unconstrained given an explicit start mean and step
size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import DEFAULT_RANGES, PARAM_NAMES, ProbeGrid, observe
from .solver import PhysicalParams, SolverConfig


@dataclass
class CmaesConfig:
    max_evals: int = 2000
    tol: float = 1e-6              # stop when a generation's f-spread collapses
    target_loss: float = 1e-12    # short-circuit for noiseless synthetic fits
    popsize: int | None = None    # default 4 + floor(3 ln n)
    mu: int | None = None         # parent count, default popsize // 2
    weights: np.ndarray | None = None  # recombination weights, default log rank
    mean0: np.ndarray | None = None    # default: box centre
    sigma0: float | None = None        # default: 0.3 * smallest box width
    resample_tries: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.popsize is not None and self.popsize < 4:
            raise ValueError(f"population size must be >= 4, got {self.popsize}")
        if self.sigma0 is not None and self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0) or np.any(np.diff(w) > 0):
                raise ValueError("weights must be positive and non-increasing")
            object.__setattr__(self, "weights", w / w.sum())
        if self.mean0 is not None:
            object.__setattr__(
                self, "mean0", np.asarray(self.mean0, dtype=float)
            )


class CmaEs:
    """Ask/tell optimizer state for one minimization run.

    Pass ``lower=upper=None`` for an unconstrained run, in which case the
    config must provide the start mean and step size.
    """

    def __init__(self, lower, upper, config: CmaesConfig):
        if (lower is None) != (upper is None):
            raise ValueError("provide both bounds or neither")
        self.bounded = lower is not None
        if self.bounded:
            lower = np.asarray(lower, dtype=float)
            upper = np.asarray(upper, dtype=float)
            if lower.shape != upper.shape or lower.ndim != 1:
                raise ValueError("bounds must be 1-d arrays of equal length")
            if np.any(lower > upper):
                raise ValueError("lower bound exceeds upper bound")
            self.mean = (
                config.mean0.copy() if config.mean0 is not None
                else 0.5 * (lower + upper)
            )
            width = upper - lower
            self.degenerate = bool(np.all(width == 0))
            self.sigma = config.sigma0 or 0.3 * max(width.min(), 1e-30)
        else:
            if config.mean0 is None or config.sigma0 is None:
                raise ValueError(
                    "unconstrained runs need mean0 and sigma0 in the config"
                )
            self.mean = config.mean0.copy()
            self.degenerate = False
            self.sigma = config.sigma0
        self.lower = lower
        self.upper = upper
        self.n = len(self.mean)
        self.config = config
        self.rng = np.random.default_rng(config.seed)

        n = self.n
        self.lam = config.popsize or 4 + int(3 * np.log(n))
        self.mu = config.mu or (
            len(config.weights) if config.weights is not None else self.lam // 2
        )
        if config.weights is not None:
            if len(config.weights) != self.mu:
                raise ValueError("weights length must equal parent count")
            self.weights = config.weights
        else:
            w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
            self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(
            1 - self.c1,
            2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff),
        )
        self.damps = (
            1 + 2 * max(0.0, np.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        )
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_cov = np.zeros(n)
        self.count_evals = 0
        self.generation = 0
        self.best_x = self.mean.copy()
        self.best_f = np.inf
        self.last_spread = np.inf
        self._eig_vals = np.ones(n)
        self._eig_vecs = np.eye(n)
        self._eig_stale = False

    def _update_eigensystem(self):
        if not self._eig_stale:
            return
        self.cov = 0.5 * (self.cov + self.cov.T)
        vals, vecs = np.linalg.eigh(self.cov)
        if vals.min() <= 0:
            raise RuntimeError(
                f"covariance lost positive definiteness "
                f"(min eigenvalue {vals.min():.3e})"
            )
        self._eig_vals = vals
        self._eig_vecs = vecs
        self._eig_stale = False

    def covariance_eigenvalues(self) -> np.ndarray:
        self._update_eigensystem()
        return self._eig_vals.copy()

    def _sample_one(self) -> np.ndarray:
        z = self.rng.standard_normal(self.n)
        step = self._eig_vecs @ (np.sqrt(self._eig_vals) * z)
        return self.mean + self.sigma * step

    def ask(self) -> np.ndarray:
        """Draw a generation of candidates, inside the box when bounded."""
        self._update_eigensystem()
        cands = np.empty((self.lam, self.n))
        for k in range(self.lam):
            x = self._sample_one()
            if self.bounded:
                for _ in range(self.config.resample_tries):
                    if np.all(x >= self.lower) and np.all(x <= self.upper):
                        break
                    x = self._sample_one()
                x = np.clip(x, self.lower, self.upper)
            cands[k] = x
        return cands

    def tell(self, candidates: np.ndarray, losses: np.ndarray) -> None:
        candidates = np.asarray(candidates, dtype=float)
        losses = np.asarray(losses, dtype=float)
        if len(candidates) != self.lam or len(losses) != self.lam:
            raise ValueError(
                f"expected {self.lam} candidates and losses, got "
                f"{len(candidates)} and {len(losses)}"
            )
        # a solver blow-up should lose the ranking, not kill the search
        losses = np.where(np.isfinite(losses), losses, np.inf)
        self.count_evals += self.lam
        self.generation += 1
        order = np.argsort(losses, kind="stable")
        self.last_spread = float(losses[order[-1]] - losses[order[0]])
        if losses[order[0]] < self.best_f:
            self.best_f = float(losses[order[0]])
            self.best_x = candidates[order[0]].copy()

        elite = candidates[order[: self.mu]]
        old_mean = self.mean
        self.mean = self.weights @ elite

        n = self.n
        self._update_eigensystem()
        inv_sqrt = self._eig_vecs @ np.diag(1.0 / np.sqrt(self._eig_vals)) \
            @ self._eig_vecs.T
        y = (self.mean - old_mean) / self.sigma
        self.p_sigma = (1 - self.cs) * self.p_sigma + np.sqrt(
            self.cs * (2 - self.cs) * self.mueff
        ) * (inv_sqrt @ y)
        expected_cap = (1.4 + 2 / (n + 1)) * self.chi_n
        decay = np.sqrt(1 - (1 - self.cs) ** (2 * self.count_evals / self.lam))
        hsig = float(np.linalg.norm(self.p_sigma) / decay < expected_cap)
        self.p_cov = (1 - self.cc) * self.p_cov + hsig * np.sqrt(
            self.cc * (2 - self.cc) * self.mueff
        ) * y

        artifacts = (elite - old_mean) / self.sigma
        rank_mu = artifacts.T @ np.diag(self.weights) @ artifacts
        self.cov = (
            (1 - self.c1 - self.cmu) * self.cov
            + self.c1
            * (
                np.outer(self.p_cov, self.p_cov)
                + (1 - hsig) * self.cc * (2 - self.cc) * self.cov
            )
            + self.cmu * rank_mu
        )
        self._eig_stale = True

        self.sigma *= np.exp(
            (self.cs / self.damps)
            * (np.linalg.norm(self.p_sigma) / self.chi_n - 1)
        )

    def stop(self) -> str | None:
        """Reason to stop, or None to continue."""
        if self.degenerate:
            return "degenerate"
        if self.best_f <= self.config.target_loss:
            return "target"
        if self.count_evals >= self.config.max_evals:
            return "max_evals"
        if self.generation > 0 and self.last_spread < self.config.tol:
            return "tol"
        return None


@dataclass
class CmaesResult:
    x: np.ndarray
    loss: float
    evals: int
    generations: int
    reason: str
    history: list = field(default_factory=list)  # (evals, best loss) per gen


def cmaes_minimize(
    problem, lower=None, upper=None, config: CmaesConfig | None = None
) -> CmaesResult:
    """Minimize a callable, over a box when one is given.

    ``problem`` may be any loss callable; if it carries ``lower``/``upper``
    attributes (as :class:`MisfitProblem` does), those define the box
    unless bounds are passed explicitly.
    """
    config = config or CmaesConfig()
    if lower is None and hasattr(problem, "lower"):
        lower, upper = problem.lower, problem.upper
    es = CmaEs(lower, upper, config)
    if es.degenerate:
        # the box is a single point; nothing to search
        f = float(problem(es.mean))
        return CmaesResult(
            x=es.mean.copy(), loss=f, evals=1, generations=0,
            reason="degenerate", history=[(1, f)],
        )
    history = []
    while es.stop() is None:
        cands = es.ask()
        losses = np.array([float(problem(x)) for x in cands])
        es.tell(cands, losses)
        history.append((es.count_evals, es.best_f))
    return CmaesResult(
        x=es.best_x, loss=es.best_f, evals=es.count_evals,
        generations=es.generation, reason=es.stop() or "unknown",
        history=history,
    )


class MisfitProblem:
    """Mean squared misfit between simulated and target observations."""

    def __init__(
        self,
        target: np.ndarray,
        grid: ProbeGrid,
        config: SolverConfig,
        ranges: dict | None = None,
    ):
        target = np.asarray(target, dtype=float).ravel()
        if len(target) != grid.k:
            raise ValueError(
                f"target has {len(target)} entries, probe grid has {grid.k}"
            )
        self.target = target
        self.grid = grid
        self.config = config
        ranges = dict(DEFAULT_RANGES if ranges is None else ranges)
        self.lower = np.array([ranges[n][0] for n in PARAM_NAMES])
        self.upper = np.array([ranges[n][1] for n in PARAM_NAMES])
        self.ranges = ranges

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise ValueError(
                f"parameters {x.tolist()} fall outside the admissible box"
            )
        w = observe(PhysicalParams.from_array(x), self.grid, self.config)
        return float(np.mean((w - self.target) ** 2))

    def solve(self, config: CmaesConfig | None = None) -> CmaesResult:
        return cmaes_minimize(self, self.lower, self.upper, config)


def misfit_loss(x, target, grid: ProbeGrid, config: SolverConfig) -> float:
    """Convenience wrapper around :class:`MisfitProblem` for one evaluation."""
    return MisfitProblem(target, grid, config)(np.asarray(x, dtype=float))


def recovery_report(truth: np.ndarray, estimate: np.ndarray) -> dict:
    """Per-parameter absolute and relative errors against the truth."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    abs_err = np.abs(estimate - truth)
    rel = abs_err / np.abs(truth)
    return {
        "truth": truth.tolist(),
        "estimate": estimate.tolist(),
        "abs_errors": abs_err.tolist(),
        "rel_errors": rel.tolist(),
        "max_rel_error": float(rel.max()),
    }
