"""
Time stepping of the truncated system: explicit ε-truncated reaction followed
by backward-Euler diffusion on each species' own mesh.

Usage:

1) Configure and run

    config = SolverConfig(dt=1e-3, t_end=2.0, cells_per_axis=(64, 64))
    trajectory = run(model, config, witness=MassWitness((1, 1, 2)))

2) Or drive the steps yourself

    simulation = Simulation(model, config)
    state = simulation.initial_state()
    state = simulation.advance(state)

3) Compare final states across truncation parameters

    study = epsilon_study(model, config, (1e-2, 1e-3, 1e-4))
    study.distances  # one row per consecutive pair, one column per species
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import cg

from habitat_rd.alignment import (
    OverlayGrid,
)
from habitat_rd.energy_diagnostics import (
    DiagnosticsLedger,
    EnergyConfig,
    MassWitness,
    ledger_update,
)
from habitat_rd.enums import (
    LinearSolverKind,
)
from habitat_rd.errors import (
    LinearSolveError,
    NonFiniteStateError,
    SolverConfigError,
)
from habitat_rd.geometry import (
    MeshedDomain,
    build_mesh,
)
from habitat_rd.model import (
    ModelSpec,
    lipschitz_bound,
    truncate,
)

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class State:
    t: float
    fields: Tuple[np.ndarray, ...]
    step: int = 0

    def first_non_finite(self) -> Optional[Tuple[int, tuple]]:
        for k, values in enumerate(self.fields):
            bad = np.argwhere(~np.isfinite(values))
            if bad.size:
                return k, tuple(int(i) for i in bad[0])
        return None

    @property
    def minimum(self) -> float:
        return float(min(np.min(values) for values in self.fields))


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    cells_per_axis: Tuple[int, ...]
    epsilon: Optional[float] = None
    linear_tol: float = 1e-10
    record_every: int = 1
    nonneg_floor: float = 1e-8

    def __post_init__(self):
        object.__setattr__(
            self, 'cells_per_axis', tuple(int(n) for n in self.cells_per_axis)
        )
        if not self.dt > 0.0:
            raise SolverConfigError(f'dt must be positive, got {self.dt}')
        if self.t_end < 0.0:
            raise SolverConfigError(f't_end must be >= 0, got {self.t_end}')
        if not 0.0 < self.linear_tol <= 1e-4:
            raise SolverConfigError(
                f'linear_tol must lie in (0, 1e-4], got {self.linear_tol}'
            )
        if self.record_every < 1:
            raise SolverConfigError(
                f'record_every must be >= 1, got {self.record_every}'
            )
        if self.epsilon is not None and not 0.0 <= self.epsilon < 1.0:
            raise SolverConfigError(
                f'epsilon must lie in [0, 1), got {self.epsilon}'
            )
        if self.nonneg_floor < 0.0:
            raise SolverConfigError('nonneg_floor must be >= 0')

    @property
    def n_steps(self) -> int:
        if self.t_end == 0.0:
            return 0
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))

    def step_time(self, n: int) -> float:
        """t_n, with the last step landing on t_end."""
        if n >= self.n_steps:
            return self.t_end
        return n * self.dt


@dataclass(eq=False)
class Trajectory:
    snapshots: List[State]
    ledger: DiagnosticsLedger
    halted_reason: Optional[str] = None
    floor_breaches: int = 0
    steps: int = 0
    meshes: Tuple[MeshedDomain, ...] = ()

    @property
    def final(self) -> State:
        return self.snapshots[-1]

    @property
    def halted(self) -> bool:
        return self.halted_reason is not None


@dataclass(frozen=True)
class EpsilonStudy:
    eps: Tuple[float, ...]
    distances: Tuple[Tuple[float, ...], ...] = field(default=())

    def decreasing(self) -> List[bool]:
        """Per species: successive distances strictly decrease."""
        table = np.asarray(self.distances)
        return [
            bool(np.all(np.diff(table[:, k]) < 0.0))
            for k in range(table.shape[1])
        ]


class DiffusionOperator:
    """
    Backward-Euler operator I + dt*L_h for one species on one mesh, with
    harmonic-mean face coefficients and zero-flux boundary faces.
    """
    def __init__(self,
                 diffusion: np.ndarray,
                 h: Sequence[float],
                 dt: float,
                 linear_tol: float = 1e-10,
                 species: int = 0):
        diffusion = np.asarray(diffusion, dtype=float)
        if not dt > 0.0:
            raise SolverConfigError(f'dt must be positive, got {dt}')
        if np.min(diffusion) <= 0.0:
            raise SolverConfigError('diffusion values must be positive')

        self._shape = diffusion.shape
        self._dt = dt
        self._linear_tol = linear_tol
        self._species = species
        self._faces = [
            self._face_coefficients(diffusion, axis) / h[axis] ** 2
            for axis in range(diffusion.ndim)
        ]
        if diffusion.ndim == 1:
            self._kind = LinearSolverKind.Tridiagonal
            self._banded = self._build_banded()
        else:
            self._kind = LinearSolverKind.ConjugateGradient
            self._matrix = self._build_sparse()
            self._preconditioner = diags(1.0 / self._matrix.diagonal())

    @staticmethod
    def _face_coefficients(diffusion: np.ndarray, axis: int) -> np.ndarray:
        left = np.take(diffusion, np.arange(diffusion.shape[axis] - 1), axis=axis)
        right = np.take(diffusion, np.arange(1, diffusion.shape[axis]), axis=axis)
        return 2.0 * left * right / (left + right)

    def _build_banded(self) -> np.ndarray:
        n = self._shape[0]
        coupling = self._dt * self._faces[0]
        banded = np.zeros((3, n))
        banded[0, 1:] = -coupling
        banded[2, :-1] = -coupling
        banded[1] = 1.0
        banded[1, :-1] += coupling
        banded[1, 1:] += coupling
        return banded

    def _build_sparse(self):
        n = int(np.prod(self._shape))
        index = np.arange(n).reshape(self._shape)
        rows, cols, values = [], [], []
        diagonal = np.ones(n)
        for axis, faces in enumerate(self._faces):
            count = self._shape[axis]
            lower = np.take(index, np.arange(count - 1), axis=axis).ravel()
            upper = np.take(index, np.arange(1, count), axis=axis).ravel()
            coupling = self._dt * faces.ravel()
            rows.extend([lower, upper])
            cols.extend([upper, lower])
            values.extend([-coupling, -coupling])
            np.add.at(diagonal, lower, coupling)
            np.add.at(diagonal, upper, coupling)
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        values.append(diagonal)
        return coo_matrix(
            (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()

    @property
    def kind(self) -> LinearSolverKind:
        return self._kind

    def solve(self, field_values: np.ndarray) -> np.ndarray:
        field_values = np.asarray(field_values, dtype=float)
        flat = field_values.ravel()
        if np.all(flat == flat[0]):
            return field_values.copy()

        if self._kind == LinearSolverKind.Tridiagonal:
            return solve_banded((1, 1), self._banded, flat).reshape(self._shape)

        n = flat.size
        maxiter = 10 * n
        iterations = [0]

        def _count(_):
            iterations[0] += 1

        solution, info = cg(
            self._matrix,
            flat,
            x0=flat.copy(),
            rtol=self._linear_tol / math.sqrt(n),
            atol=0.0,
            maxiter=maxiter,
            M=self._preconditioner,
            callback=_count,
        )
        if info != 0:
            residual = np.linalg.norm(self._matrix @ solution - flat)
            raise LinearSolveError(
                self._species,
                iterations[0],
                residual / max(np.linalg.norm(flat), 1e-300),
            )
        LOGGER.debug(
            'CG for species %d converged in %d iterations',
            self._species + 1,
            iterations[0],
        )
        return solution.reshape(self._shape)


def diffusion_step(field_values: np.ndarray, diffusion, dt: float,
                   h: Sequence[float], linear_tol: float = 1e-10) -> np.ndarray:
    """One backward-Euler diffusion step; `diffusion` is per cell or scalar."""
    field_values = np.asarray(field_values, dtype=float)
    diffusion = np.broadcast_to(
        np.asarray(diffusion, dtype=float), field_values.shape
    )
    return DiffusionOperator(diffusion, h, dt, linear_tol).solve(field_values)


class Simulation:
    """
    One run of a model under a solver configuration.

    Meshes, the overlay grid used for the reaction and the per-species
    diffusion operators are built on first use and then reused.
    """
    def __init__(self, model: ModelSpec, config: SolverConfig):
        if len(config.cells_per_axis) != model.dim:
            raise SolverConfigError(
                f'cells_per_axis has {len(config.cells_per_axis)} entries for '
                f'a {model.dim}D model'
            )
        self._model = model
        self._config = config
        self._epsilon = (
            config.epsilon if config.epsilon is not None else model.epsilon
        )
        self._meshes: Optional[Tuple[MeshedDomain, ...]] = None
        self._overlay: Optional[OverlayGrid] = None
        self._operators: Dict[Tuple[int, float], DiffusionOperator] = {}

    @property
    def model(self) -> ModelSpec:
        return self._model

    @property
    def config(self) -> SolverConfig:
        return self._config

    @property
    def epsilon(self) -> float:
        return self._epsilon

    @property
    def meshes(self) -> Tuple[MeshedDomain, ...]:
        """Mesh of each habitat, index j-1 for Ω_j."""
        if self._meshes is None:
            self._meshes = tuple(
                build_mesh(domain, self._config.cells_per_axis)
                for domain in self._model.domains
            )
        return self._meshes

    @property
    def species_meshes(self) -> Tuple[MeshedDomain, ...]:
        return tuple(self.meshes[j - 1] for j in self._model.species.sigma)

    @property
    def overlay(self) -> OverlayGrid:
        if self._overlay is None:
            self._overlay = OverlayGrid(self._model.domains, self.meshes)
            if not self._overlay.is_aligned():
                LOGGER.info(
                    'Meshes are not aligned; reaction sources are averaged '
                    'over %d overlay cells',
                    self._overlay.n_cells,
                )
        return self._overlay

    def operator(self, k: int, dt: float) -> DiffusionOperator:
        key = (k, dt)
        if key not in self._operators:
            mesh = self.species_meshes[k]
            values = self._model.diffusion.cell_values(
                k, mesh, self._model.domains
            )
            self._operators[key] = DiffusionOperator(
                values, mesh.h, dt, self._config.linear_tol, species=k,
            )
        return self._operators[key]

    def initial_state(self) -> State:
        fields = tuple(
            init.evaluate(mesh.centers).reshape(mesh.shape)
            for init, mesh in zip(self._model.initial, self.species_meshes)
        )
        return State(0.0, fields, 0)

    def reaction_sources(self, state: State) -> List[np.ndarray]:
        """f^ε(u_+) averaged over every cell of each species' mesh."""
        sigma = self._model.species.sigma
        u = np.maximum(self.overlay.gather(state.fields, sigma), 0.0)
        values = self._model.reaction.evaluate(u, self.overlay.inside, sigma)
        return self.overlay.scatter_all(truncate(values, self._epsilon), sigma)

    def advance(self, state: State, dt: Optional[float] = None) -> State:
        dt = self._config.dt if dt is None else dt
        sources = self.reaction_sources(state)
        fields = tuple(
            self.operator(k, dt).solve(values + dt * source)
            for k, (values, source) in enumerate(zip(state.fields, sources))
        )
        step = state.step + 1
        new_state = State(state.t + dt, fields, step)

        bad = new_state.first_non_finite()
        if bad is not None:
            raise NonFiniteStateError(bad[0], bad[1], new_state.t)
        return new_state

    def check_time_step(self):
        radius = 2.0 * self._model.initial_sup()
        if radius <= 0.0:
            return
        bound = lipschitz_bound(self._model, radius)
        if bound > 0.0 and self._config.dt > 0.5 / bound:
            LOGGER.warning(
                'dt=%g exceeds 0.5/L=%g (L=%g on [0, %g]^m)',
                self._config.dt,
                0.5 / bound,
                bound,
                radius,
            )

    def run(self,
            witness: Optional[MassWitness] = None,
            energy_configs: Sequence[EnergyConfig] = ()) -> Trajectory:
        config = self._config
        if witness is None:
            LOGGER.info('No mass-control witness given, ledger assumes b=1, K1=K2=0')
            witness = MassWitness.conserved(self._model.m)
        self.check_time_step()

        ledger = DiagnosticsLedger(
            self._model.m,
            witness,
            [c.p for c in energy_configs],
            self.overlay.union_measure,
        )
        state = self.initial_state()
        trajectory = Trajectory([state], ledger, meshes=self.species_meshes)
        ledger_update(ledger, state, self._model, self.species_meshes, energy_configs)

        n_steps = config.n_steps
        LOGGER.info(
            'Running %s for %d steps (dt=%g, eps=%g)',
            self._model.name, n_steps, config.dt, self._epsilon,
        )
        for n in range(1, n_steps + 1):
            dt = config.step_time(n) - config.step_time(n - 1)
            try:
                state = self.advance(state, dt)
            except NonFiniteStateError as err:
                LOGGER.error('Run halted: %s', err)
                trajectory.halted_reason = str(err)
                break
            state = State(config.step_time(n), state.fields, n)
            trajectory.steps = n
            ledger_update(ledger, state, self._model, self.species_meshes, energy_configs)

            if state.minimum < -config.nonneg_floor:
                trajectory.floor_breaches += 1
                log = LOGGER.warning if trajectory.floor_breaches == 1 else LOGGER.debug
                log('Minimum %.3e below -%g at t=%g', state.minimum, config.nonneg_floor, state.t)

            if n % config.record_every == 0 or n == n_steps:
                trajectory.snapshots.append(state)

        LOGGER.info(
            'Run finished at t=%g with %d snapshots',
            trajectory.final.t,
            len(trajectory.snapshots),
        )
        return trajectory


def advance(state: State, model: ModelSpec, config: SolverConfig) -> State:
    return Simulation(model, config).advance(state)


def run(model: ModelSpec,
        config: SolverConfig,
        witness: Optional[MassWitness] = None,
        energy_configs: Sequence[EnergyConfig] = ()) -> Trajectory:
    return Simulation(model, config).run(witness, energy_configs)


def l2_distance(first: State, second: State, meshes) -> Tuple[float, ...]:
    return tuple(
        math.sqrt(mesh.cell_volume * float(np.sum((a - b) ** 2)))
        for a, b, mesh in zip(first.fields, second.fields, meshes)
    )


def epsilon_study(model: ModelSpec, config: SolverConfig,
                  eps_list: Sequence[float]) -> EpsilonStudy:
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 2:
        raise SolverConfigError('epsilon_study needs at least two values')
    if min(eps_list) <= 0.0 or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise SolverConfigError(
            f'eps_list must be positive and strictly decreasing, got {eps_list}'
        )

    finals = []
    meshes = None
    for eps in eps_list:
        simulation = Simulation(model, dataclasses.replace(config, epsilon=eps))
        trajectory = simulation.run()
        if trajectory.halted:
            LOGGER.warning('Run with eps=%g halted: %s', eps, trajectory.halted_reason)
        finals.append(trajectory.final)
        meshes = simulation.species_meshes

    distances = tuple(
        l2_distance(first, second, meshes)
        for first, second in zip(finals, finals[1:])
    )
    for eps, row in zip(eps_list, distances):
        LOGGER.info('eps=%g: distances %s', eps, ['%.3e' % d for d in row])
    return EpsilonStudy(eps_list, distances)
