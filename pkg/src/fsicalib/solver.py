"""Forward solver for the rotating-cylinder fluid-structure probe.

An incompressible hyper-elastic coating occupies the annulus
``[r0, r_interface]`` around a fixed rod, viscous fluid fills
``[r_interface, r1]``, and the outer cylinder is spun at a constant
angular velocity.  In the axisymmetric reduction the angular velocity
``u(r, t)`` and solid displacement ``d(r, t)`` satisfy

    rho(r) du/dt - (1/r) d/dr [ xi_f(r) r du/dr + xi_s(r) r dd/dr ] = 0
    dd/dt = u

with ``rho = rho_s`` and ``xi_s = 2 c1`` on the solid, ``rho = rho_f``
and ``xi_f = mu_f`` on the fluid, ``u(r0) = 0`` and ``u(r1)`` equal to
the outer-cylinder speed.  The discretisation is quadratic finite
elements in radius and implicit Euler in time with the displacement
update folded into a single constant system matrix

    A = M + dt*K_f + dt^2*K_s,     A u_new = M u - dt*K_s d,

which is factorised once per simulation and reused at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .banded import BandedMatrix, BandedSPDSolver

#: half-bandwidth of all assembled operators with interleaved node ordering
BANDWIDTH = 2

# 3-point Gauss rule on [0, 1]; exact through degree 5, enough for the
# r-weighted mass integrand (degree 5) and stiffness integrand (degree 3)
_GAUSS_X = 0.5 * (np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)]) + 1.0)
_GAUSS_W = 0.5 * np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@dataclass(frozen=True)
class PhysicalParams:
    """Material and fluid parameters; the triple (c1, rho_s, mu_f) is the
    unknown of the inverse problem, rho_f stays fixed."""

    c1: float
    rho_s: float
    mu_f: float
    rho_f: float = 1.0

    def __post_init__(self):
        for name in ("c1", "rho_s", "mu_f", "rho_f"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v}")

    def as_array(self) -> np.ndarray:
        """The free parameters (c1, rho_s, mu_f) as a vector."""
        return np.array([self.c1, self.rho_s, self.mu_f])

    @staticmethod
    def from_array(p, rho_f: float = 1.0) -> "PhysicalParams":
        c1, rho_s, mu_f = (float(v) for v in p)
        return PhysicalParams(c1, rho_s, mu_f, rho_f)


@dataclass(frozen=True)
class SolverConfig:
    """Geometry, boundary speed and discretisation settings."""

    r0: float = 3.0
    r_interface: float = 4.0
    r1: float = 5.0
    omega_outer: float = 3.0
    n_elements: int = 100
    dt: float = 0.01
    t_final: float = 5.0

    def __post_init__(self):
        if not (self.r0 < self.r_interface < self.r1):
            raise ValueError(
                f"radii must satisfy r0 < r_interface < r1, got "
                f"({self.r0}, {self.r_interface}, {self.r1})"
            )
        if self.n_elements < 2 or self.n_elements % 2 != 0:
            raise ValueError(
                f"n_elements must be even and >= 2 so the interface falls on a "
                f"vertex, got {self.n_elements}"
            )
        # a uniform mesh only has a vertex on the interface if the interface
        # splits [r0, r1] at a multiple of the element width
        k = (self.r_interface - self.r0) / (self.r1 - self.r0) * self.n_elements
        if abs(k - round(k)) > 1e-9:
            raise ValueError(
                f"no vertex of the uniform {self.n_elements}-element mesh falls "
                f"on the interface radius {self.r_interface}"
            )
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ValueError(
                f"t_final ({self.t_final}) must be at least one step ({self.dt})"
            )

    def with_overrides(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Mesh:
    """Quadratic-element mesh on [r0, r1] with a vertex on the interface.

    ``nodes`` interleaves element vertices and midpoints by position, so
    element ``e`` owns nodes ``(2e, 2e+1, 2e+2)`` and every assembled
    operator has half-bandwidth 2.
    """

    vertices: np.ndarray
    nodes: np.ndarray
    r_interface: float
    node_is_solid: np.ndarray = field(repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.vertices) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def interface_node(self) -> int:
        return int(np.argmin(np.abs(self.nodes - self.r_interface)))

    def element_nodes(self, e: int) -> tuple[int, int, int]:
        return 2 * e, 2 * e + 1, 2 * e + 2

    def element_is_solid(self, e: int) -> bool:
        return 0.5 * (self.vertices[e] + self.vertices[e + 1]) < self.r_interface


@dataclass
class SolutionState:
    """Nodal angular velocity and displacement at one time level."""

    u: np.ndarray
    d: np.ndarray
    t: float

    def copy(self) -> "SolutionState":
        return SolutionState(self.u.copy(), self.d.copy(), self.t)


def build_mesh(config: SolverConfig) -> Mesh:
    """Uniform quadratic-element mesh for the configured annulus."""
    verts = np.linspace(config.r0, config.r1, config.n_elements + 1)
    # force the interface vertex to the exact configured value
    k = (config.r_interface - config.r0) / (config.r1 - config.r0)
    verts[round(k * config.n_elements)] = config.r_interface
    nodes = np.empty(2 * config.n_elements + 1)
    nodes[0::2] = verts
    nodes[1::2] = 0.5 * (verts[:-1] + verts[1:])
    return Mesh(
        vertices=verts,
        nodes=nodes,
        r_interface=config.r_interface,
        node_is_solid=nodes <= config.r_interface,
    )


def _shape_values(xi: float) -> np.ndarray:
    # quadratic shapes on [0, 1] with nodes at 0, 1/2, 1
    return np.array([(1 - xi) * (1 - 2 * xi), 4 * xi * (1 - xi), xi * (2 * xi - 1)])


def _shape_derivs(xi: float) -> np.ndarray:
    return np.array([4 * xi - 3, 4 - 8 * xi, 4 * xi - 1])


@dataclass
class AssembledOperators:
    """Weak-form operators and the factorised implicit-Euler step matrix."""

    mass: BandedMatrix  # rho(r) r phi_i phi_j
    stiff_fluid: BandedMatrix  # mu_f r phi_i' phi_j' on fluid elements
    stiff_solid: BandedMatrix  # 2 c1 r phi_i' phi_j' on solid elements
    system: BandedMatrix  # M + dt K_f + dt^2 K_s
    solver: BandedSPDSolver  # factorisation of the interior block of system
    bc_col_outer: np.ndarray  # interior rows of the outer-boundary column
    dt: float


def assemble(mesh: Mesh, params: PhysicalParams, dt: float) -> AssembledOperators:
    """Assemble mass and stiffness operators and factor the step matrix.

    Test functions vanish at both ends, so the factorised system acts on
    interior nodes only; the outer Dirichlet datum enters through the
    stored boundary column.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = mesh.n_nodes
    M = BandedMatrix(n, BANDWIDTH)
    Kf = BandedMatrix(n, BANDWIDTH)
    Ks = BandedMatrix(n, BANDWIDTH)

    for e in range(mesh.n_elements):
        a = mesh.vertices[e]
        b = mesh.vertices[e + 1]
        h = b - a
        solid = mesh.element_is_solid(e)
        rho = params.rho_s if solid else params.rho_f
        xi_f = 0.0 if solid else params.mu_f
        xi_s = 2.0 * params.c1 if solid else 0.0

        mloc = np.zeros((3, 3))
        sloc = np.zeros((3, 3))
        for xi, w in zip(_GAUSS_X, _GAUSS_W):
            r = a + xi * h
            N = _shape_values(xi)
            dN = _shape_derivs(xi) / h
            mloc += (w * h) * r * np.outer(N, N)
            sloc += (w * h) * r * np.outer(dN, dN)

        idx = mesh.element_nodes(e)
        for il, i in enumerate(idx):
            for jl, j in enumerate(idx):
                M.add(i, j, rho * mloc[il, jl])
                if xi_f:
                    Kf.add(i, j, xi_f * sloc[il, jl])
                if xi_s:
                    Ks.add(i, j, xi_s * sloc[il, jl])

    A = BandedMatrix(n, BANDWIDTH)
    A.data[:] = M.data + dt * Kf.data + dt * dt * Ks.data
    interior = A.submatrix(1, n - 1)
    solver = BandedSPDSolver(interior)
    bc_col = A.column(n - 1)[1:-1]
    return AssembledOperators(
        mass=M,
        stiff_fluid=Kf,
        stiff_solid=Ks,
        system=A,
        solver=solver,
        bc_col_outer=bc_col,
        dt=dt,
    )


class CylinderSolver:
    """Time stepper for one parameter set.

    Immutable after construction (assembly + factorisation happen once);
    states are advanced functionally, so independent simulations can share
    a solver or run side by side without interference.
    """

    def __init__(self, params: PhysicalParams, config: SolverConfig):
        self.params = params
        self.config = config
        self.mesh = build_mesh(config)
        self.ops = assemble(self.mesh, params, config.dt)

    def initial_state(self) -> SolutionState:
        n = self.mesh.n_nodes
        return SolutionState(u=np.zeros(n), d=np.zeros(n), t=0.0)

    def step(self, state: SolutionState) -> SolutionState:
        """Advance one implicit-Euler step, enforcing both Dirichlet values."""
        ops = self.ops
        dt = ops.dt
        b = ops.mass.matvec(state.u) - dt * ops.stiff_solid.matvec(state.d)
        b_int = b[1:-1] - self.config.omega_outer * ops.bc_col_outer
        u = np.empty_like(state.u)
        u[0] = 0.0
        u[-1] = self.config.omega_outer
        u[1:-1] = ops.solver.solve(b_int)
        d = state.d + dt * u
        return SolutionState(u=u, d=d, t=state.t + dt)

    def run(
        self,
        snapshot_times,
        t_final: float | None = None,
        initial: SolutionState | None = None,
    ) -> list[SolutionState]:
        """March to ``t_final`` and collect states nearest the requested times.

        Snapshot times are matched to the nearest completed step; ``t = 0``
        yields the initial state.  Returned snapshots are in the order the
        times were given.
        """
        t_end = self.config.t_final if t_final is None else t_final
        n_steps = round(t_end / self.config.dt)
        wanted = np.asarray(list(snapshot_times), dtype=float)
        if np.any(wanted < 0) or np.any(wanted > t_end + 0.5 * self.config.dt):
            raise ValueError(
                f"snapshot times must lie in [0, {t_end}], got {wanted}"
            )
        steps = np.clip(np.rint(wanted / self.config.dt).astype(int), 0, n_steps)
        by_step: dict[int, list[int]] = {}
        for pos, k in enumerate(steps):
            by_step.setdefault(int(k), []).append(pos)

        state = self.initial_state() if initial is None else initial.copy()
        out: list[SolutionState | None] = [None] * len(wanted)
        for pos in by_step.get(0, []):
            out[pos] = state.copy()
        for k in range(1, n_steps + 1):
            state = self.step(state)
            for pos in by_step.get(k, []):
                out[pos] = state.copy()
        return out  # type: ignore[return-value]


def simulate(
    params: PhysicalParams, config: SolverConfig, snapshot_times
) -> tuple[Mesh, list[SolutionState]]:
    """Run a full simulation and return the mesh with requested snapshots."""
    solver = CylinderSolver(params, config)
    return solver.mesh, solver.run(snapshot_times)


class Interpolator:
    """Quadratic interpolation of nodal fields at fixed radial points."""

    def __init__(self, mesh: Mesh, r_points):
        r = np.atleast_1d(np.asarray(r_points, dtype=float))
        r0, r1 = mesh.vertices[0], mesh.vertices[-1]
        if np.any(r < r0 - 1e-12) or np.any(r > r1 + 1e-12):
            raise ValueError(f"radial points must lie in [{r0}, {r1}]")
        h = mesh.vertices[1] - mesh.vertices[0]
        elems = np.clip(((r - r0) / h).astype(int), 0, mesh.n_elements - 1)
        xi = (r - mesh.vertices[elems]) / h
        self.indices = np.stack([2 * elems, 2 * elems + 1, 2 * elems + 2], axis=1)
        self.weights = np.stack(
            [
                (1 - xi) * (1 - 2 * xi),
                4 * xi * (1 - xi),
                xi * (2 * xi - 1),
            ],
            axis=1,
        )

    def apply(self, field_values: np.ndarray) -> np.ndarray:
        return np.sum(self.weights * field_values[self.indices], axis=1)


def evaluate_at(mesh: Mesh, u: np.ndarray, r: float) -> float:
    """Quadratic-element interpolation of a nodal field at radius ``r``."""
    return float(Interpolator(mesh, [r]).apply(u)[0])


def steady_state_profile(r, config: SolverConfig) -> np.ndarray:
    """Long-time angular-velocity profile: zero on the solid, logarithmic
    between the interface and the driven outer wall on the fluid."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    fluid = r >= config.r_interface
    out[fluid] = (
        config.omega_outer
        * np.log(r[fluid] / config.r_interface)
        / np.log(config.r1 / config.r_interface)
    )
    return out


def energy(state: SolutionState, ops: AssembledOperators) -> float:
    """Discrete energy: kinetic part through the mass operator plus elastic
    part through the solid stiffness.  Non-increasing under the implicit
    scheme when the outer wall is held still."""
    kin = 0.5 * float(state.u @ ops.mass.matvec(state.u))
    ela = 0.5 * float(state.d @ ops.stiff_solid.matvec(state.d))
    return kin + ela
