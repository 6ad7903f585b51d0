import logging
import math
from unittest.mock import patch

import numpy as np
import pytest

from habitat_rd.energy_diagnostics import (
    MassWitness,
)
from habitat_rd.enums import (
    LinearSolverKind,
)
from habitat_rd.errors import (
    LinearSolveError,
    SolverConfigError,
)
from habitat_rd.geometry import (
    Domain,
    DomainSet,
)
from habitat_rd.model import (
    DiffusionField,
    InitialCondition,
    ModelSpec,
    ReactionField,
    ReactionTerm,
    SpeciesDiffusion,
    SpeciesMap,
    builtin,
)
from habitat_rd.solver import (
    DiffusionOperator,
    Simulation,
    SolverConfig,
    State,
    advance,
    diffusion_step,
    epsilon_study,
    run,
)


def _constant_init(*values):
    return tuple(InitialCondition.constant(v) for v in values)


@pytest.fixture(name='ex2_1d')
def _ex2_1d():
    return builtin('ex2', {'dim': 1})


@pytest.fixture(name='rng')
def _rng():
    return np.random.default_rng(7)


#
# diffusion_step
#
def test_two_cell_backward_euler():
    result = diffusion_step(np.array([0.0, 2.0]), 1.0, dt=1.0, h=(1.0,))
    assert result == pytest.approx([2.0 / 3.0, 4.0 / 3.0], abs=1e-12)


def test_constant_field_is_a_fixed_point():
    field = np.full((6, 5), 0.37)
    diffusion = np.linspace(0.1, 1.0, 30).reshape(6, 5)
    assert np.array_equal(diffusion_step(field, diffusion, 0.1, (0.2, 0.2)), field)
    assert np.array_equal(diffusion_step(np.full(9, 2.5), 0.3, 1.0, (0.1,)), np.full(9, 2.5))


def test_operator_kind():
    assert DiffusionOperator(np.ones(4), (1.0,), 0.1).kind == LinearSolverKind.Tridiagonal
    assert DiffusionOperator(np.ones((3, 3)), (1.0, 1.0), 0.1).kind == LinearSolverKind.ConjugateGradient


def test_operator_rejects_bad_input():
    with pytest.raises(SolverConfigError):
        DiffusionOperator(np.array([1.0, 0.0]), (1.0,), 0.1)
    with pytest.raises(SolverConfigError):
        DiffusionOperator(np.ones(2), (1.0,), 0.0)


def test_maximum_principle_and_conservation_1d(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        field = rng.uniform(0.0, 5.0, n)
        diffusion = rng.uniform(0.01, 2.0, n)
        dt = rng.uniform(1e-4, 1.0)
        h = rng.uniform(0.01, 1.0)

        result = diffusion_step(field, diffusion, dt, (h,))

        scale = max(1.0, field.max())
        assert result.min() >= field.min() - 1e-12 * scale
        assert result.max() <= field.max() + 1e-12 * scale
        assert result.sum() == pytest.approx(field.sum(), rel=1e-12)


def test_maximum_principle_and_conservation_2d(rng):
    for _ in range(1000):
        shape = tuple(int(s) for s in rng.integers(2, 12, 2))
        field = rng.uniform(0.0, 5.0, shape)
        diffusion = rng.uniform(0.01, 2.0, shape)
        dt = rng.uniform(1e-3, 0.5)

        result = diffusion_step(field, diffusion, dt, (0.1, 0.2))

        assert result.min() >= field.min() - 1e-8
        assert result.max() <= field.max() + 1e-8
        assert result.sum() == pytest.approx(field.sum(), rel=1e-9)


def test_harmonic_mean_faces():
    # a nearly insulating cell in the middle blocks the exchange
    field = np.array([1.0, 0.0, 0.0])
    blocked = diffusion_step(field, np.array([1.0, 1e-9, 1.0]), 1.0, (1.0,))
    open_ = diffusion_step(field, np.ones(3), 1.0, (1.0,))
    assert blocked[2] < 1e-8
    assert open_[2] > 0.1


def test_cg_failure_raises():
    operator = DiffusionOperator(np.ones((4, 4)), (1.0, 1.0), 0.1, species=2)
    field = np.arange(16.0).reshape(4, 4)
    with patch('habitat_rd.solver.cg', return_value=(field.ravel(), 40)):
        with pytest.raises(LinearSolveError) as err:
            operator.solve(field)
    assert err.value.species == 2
    assert 'species 3' in str(err.value)


def test_grid_refinement_slope():
    # pure diffusion of a Gaussian: exact solution stays Gaussian
    center, width, amplitude, d, t_end = 1.0, 0.1, 1.0, 0.1, 0.05
    spread = math.sqrt(width ** 2 + 2.0 * d * t_end)

    errors = []
    for n in (200, 400, 800):
        h = 2.0 / n
        dt = 0.5 * h * h
        x = (np.arange(n) + 0.5) * h
        u = amplitude * np.exp(-(x - center) ** 2 / (2.0 * width ** 2))
        operator = DiffusionOperator(np.full(n, d), (h,), dt)
        for _ in range(int(round(t_end / dt))):
            u = operator.solve(u)
        exact = amplitude * (width / spread) * np.exp(-(x - center) ** 2 / (2.0 * spread ** 2))
        errors.append(math.sqrt(h * np.sum((u - exact) ** 2)))

    slopes = [math.log2(coarse / fine) for coarse, fine in zip(errors, errors[1:])]
    assert min(slopes) >= 1.9


#
# SolverConfig
#
def test_solver_config_validation():
    with pytest.raises(SolverConfigError):
        SolverConfig(dt=0.0, t_end=1.0, cells_per_axis=(4,))
    with pytest.raises(SolverConfigError):
        SolverConfig(dt=0.1, t_end=-1.0, cells_per_axis=(4,))
    with pytest.raises(SolverConfigError):
        SolverConfig(dt=0.1, t_end=1.0, cells_per_axis=(4,), linear_tol=1e-3)
    with pytest.raises(SolverConfigError):
        SolverConfig(dt=0.1, t_end=1.0, cells_per_axis=(4,), record_every=0)


def test_step_times_land_on_t_end():
    config = SolverConfig(dt=0.3, t_end=1.0, cells_per_axis=(4,))
    assert config.n_steps == 4
    assert [config.step_time(n) for n in range(5)] == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert SolverConfig(dt=0.1, t_end=1.0, cells_per_axis=(4,)).n_steps == 10


def test_simulation_checks_dimension(ex2_1d):
    with pytest.raises(SolverConfigError):
        Simulation(ex2_1d, SolverConfig(dt=0.1, t_end=1.0, cells_per_axis=(4, 4)))


#
# advance / run
#
def test_zero_data_stays_zero():
    model = builtin('ex2', {'dim': 1, 'init': _constant_init(0.0, 0.0, 0.0)})
    trajectory = run(model, SolverConfig(dt=0.01, t_end=0.1, cells_per_axis=(16,)))
    for values in trajectory.final.fields:
        assert not np.any(values)


def test_reaction_source_on_overlap():
    model = builtin('ex2', {'dim': 1, 'init': _constant_init(2.0, 3.0, 0.0), 'epsilon': 0.0})
    simulation = Simulation(model, SolverConfig(dt=0.01, t_end=0.01, cells_per_axis=(8,)))
    state = simulation.initial_state()

    sources = simulation.reaction_sources(state)

    mesh = simulation.species_meshes[2]
    overlap = mesh.centers[:, 0] < 2.0
    assert 0.01 * sources[2][overlap] == pytest.approx(0.06)
    assert np.all(sources[2][~overlap] == 0.0)


def test_constant_state_without_reaction_is_unchanged():
    domains = DomainSet([Domain(1, (0.0, 0.0), (1.0, 1.0))])
    model = ModelSpec(
        domains,
        SpeciesMap((1,), 1),
        ReactionField(1, ()),
        DiffusionField((SpeciesDiffusion(0.3),)),
        _constant_init(1.25),
    )
    config = SolverConfig(dt=0.05, t_end=0.05, cells_per_axis=(5, 5))
    state = Simulation(model, config).initial_state()

    after = advance(state, model, config)

    assert after.t == pytest.approx(0.05)
    assert np.array_equal(after.fields[0], state.fields[0])


def test_t_end_zero_gives_initial_snapshot(ex2_1d):
    trajectory = run(ex2_1d, SolverConfig(dt=0.1, t_end=0.0, cells_per_axis=(10,)))

    assert len(trajectory.snapshots) == 1
    assert len(trajectory.ledger) == 1
    initial = Simulation(ex2_1d, SolverConfig(dt=0.1, t_end=0.0, cells_per_axis=(10,))).initial_state()
    for got, expected in zip(trajectory.final.fields, initial.fields):
        assert np.array_equal(got, expected)


def test_snapshot_stride(ex2_1d):
    config = SolverConfig(dt=0.01, t_end=0.1, cells_per_axis=(10,), record_every=4)
    trajectory = run(ex2_1d, config)

    assert [s.step for s in trajectory.snapshots] == [0, 4, 8, 10]
    times = [s.t for s in trajectory.snapshots]
    assert all(a < b for a, b in zip(times, times[1:]))
    assert times[-1] == pytest.approx(0.1)
    assert len(trajectory.ledger) == 11
    assert trajectory.steps == 10


def test_weighted_mass_is_conserved_for_ex2(ex2_1d):
    config = SolverConfig(dt=0.01, t_end=0.5, cells_per_axis=(40,))
    trajectory = run(ex2_1d, config, witness=MassWitness((1.0, 1.0, 2.0)))

    mass = trajectory.ledger.column('weighted_mass')
    assert np.max(np.abs(mass - mass[0])) <= 1e-10 * mass[0]
    assert trajectory.floor_breaches == 0


def test_envelope_dominates_with_small_weights():
    model = ModelSpec(
        DomainSet([Domain(1, (0.0,), (1.0,))]),
        SpeciesMap((1,), 1),
        ReactionField(1, (ReactionTerm(0, 1.0, frozenset({1}), (1,)),)),
        DiffusionField((SpeciesDiffusion(0.1),)),
        _constant_init(1.0),
    )
    # 0.5 f = 0.5 u, so K1 = 0.5 relative to Σu while W itself grows at rate 1
    witness = MassWitness((0.5,), 0.5, 0.0)
    ledger = run(model, SolverConfig(dt=0.01, t_end=1.0, cells_per_axis=(8,)), witness=witness).ledger

    mass = ledger.column('weighted_mass')
    envelope = ledger.column('envelope')
    assert mass[-1] > mass[0] * math.exp(0.5)
    assert np.all(mass <= envelope * (1.0 + 1e-12))


def test_unaligned_meshes_conserve_mass():
    model = builtin('ex2', {'dim': 1, 'init': _constant_init(1.0, 2.0, 0.0)})
    config = SolverConfig(dt=0.01, t_end=0.2, cells_per_axis=(7,))
    domains = model.domains
    # Ω_2 shifted by a third of a cell so the meshes do not line up
    shifted = ModelSpec(
        DomainSet([domains.get(1), Domain(2, (1.1,), (3.1,))]),
        model.species, model.reaction, model.diffusion, model.initial,
    )
    trajectory = run(shifted, config, witness=MassWitness((1.0, 1.0, 2.0)))

    mass = trajectory.ledger.column('weighted_mass')
    assert mass == pytest.approx(np.full(len(mass), mass[0]), rel=1e-10)


def test_run_halts_on_overflow():
    model = ModelSpec(
        DomainSet([Domain(1, (0.0,), (1.0,))]),
        SpeciesMap((1,), 1),
        ReactionField(1, (ReactionTerm(0, 1.0, frozenset({1}), (2,)),)),
        DiffusionField((SpeciesDiffusion(0.1),)),
        _constant_init(1e200),
        epsilon=0.0,
    )
    with np.errstate(over='ignore', invalid='ignore'):
        trajectory = run(model, SolverConfig(dt=0.1, t_end=1.0, cells_per_axis=(4,)))

    assert trajectory.halted
    assert 'non-finite' in trajectory.halted_reason
    assert trajectory.steps == 0
    assert len(trajectory.snapshots) == 1


def test_large_time_step_warns(ex2_1d, caplog):
    config = SolverConfig(dt=0.5, t_end=0.0, cells_per_axis=(8,))
    with caplog.at_level(logging.WARNING, logger='habitat_rd.solver'):
        run(ex2_1d, config)
    assert any('exceeds 0.5/L' in record.getMessage() for record in caplog.records)


def test_operators_are_cached(ex2_1d):
    simulation = Simulation(ex2_1d, SolverConfig(dt=0.01, t_end=0.05, cells_per_axis=(8,)))
    assert simulation.operator(1, 0.01) is simulation.operator(1, 0.01)
    assert simulation.operator(1, 0.01) is not simulation.operator(1, 0.02)


def test_state_reports_non_finite():
    state = State(0.0, (np.zeros(3), np.array([0.0, np.nan, 1.0])))
    assert state.first_non_finite() == (1, (1,))
    assert State(0.0, (np.zeros(3),)).first_non_finite() is None


#
# epsilon_study
#
def test_epsilon_study_validation(ex2_1d):
    config = SolverConfig(dt=0.01, t_end=0.01, cells_per_axis=(8,))
    with pytest.raises(SolverConfigError):
        epsilon_study(ex2_1d, config, [1e-2])
    with pytest.raises(SolverConfigError):
        epsilon_study(ex2_1d, config, [1e-3, 1e-2])
    with pytest.raises(SolverConfigError):
        epsilon_study(ex2_1d, config, [1e-2, 0.0])


def test_epsilon_study_table(ex2_1d):
    config = SolverConfig(dt=0.01, t_end=0.2, cells_per_axis=(16,))
    study = epsilon_study(ex2_1d, config, [1e-1, 1e-2, 1e-3])

    assert study.eps == (1e-1, 1e-2, 1e-3)
    assert len(study.distances) == 2
    assert all(len(row) == 3 for row in study.distances)
    assert all(d >= 0.0 for row in study.distances for d in row)
    assert study.decreasing() == [True, True, True]
