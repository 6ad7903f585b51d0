"""
End-to-end runs on the reference models. Deselect the long ones with
-m "not slow".
"""
import numpy as np
import pytest

from habitat_rd.energy_diagnostics import (
    MassWitness,
    auto_energy_configs,
    energy_bounded,
    multinomial_energy,
    theta_pd_check,
)
from habitat_rd.model import (
    builtin,
)
from habitat_rd.solver import (
    Simulation,
    SolverConfig,
    epsilon_study,
)
from habitat_rd.structure_checker import (
    CheckerConfig,
    build_cloud,
    certify,
    fit_mass_control,
)

LOWER_TRIANGULAR = [[1.0, 0.0], [1.0, 1.0]]


def _integral(t, values):
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(t)))


def _assert_energy_configs(configs, species):
    for config in configs:
        for theta, group in zip(config.theta, species.groups):
            if len(group) > 1:
                assert theta_pd_check(theta, config.p, len(group)).passed


@pytest.mark.integration
def test_certificate_overlap_binding():
    report = certify(builtin('ex2'))

    assert report.hypotheses_met
    assert report.bal.b == [1.0, 1.0, 2.0]
    assert (report.bal.K1, report.bal.K2) == (0.0, 0.0)
    second = report.intermediate[1]
    assert second.r == 1.0
    assert second.A == LOWER_TRIANGULAR
    assert report.holdout.ok


@pytest.mark.integration
def test_certificate_cross_species_epidemic():
    report = certify(builtin('ex1'))

    assert report.hypotheses_met
    assert report.bal.b == [1.0] * 6
    assert (report.bal.K1, report.bal.K2) == (0.0, 0.0)
    assert report.uniform_in_time
    assert report.r == 1.0
    for item in report.intermediate:
        assert item.A == LOWER_TRIANGULAR
    assert [item.permutation for item in report.intermediate] == [[1, 2], [3, 4], [5, 6]]
    assert report.holdout.ok


@pytest.mark.integration
def test_certificate_quadratic_exchange():
    report = certify(builtin('ex3'))

    assert report.hypotheses_met
    assert report.r == 2.0
    assert report.growth_ok
    witnesses = report.intermediate[0].infeasible_r
    assert [witness.r for witness in witnesses] == [1.0]
    assert len(witnesses[0].u) == 2


@pytest.mark.integration
@pytest.mark.slow
def test_overlap_binding_invariants():
    model = builtin('ex2')
    config = SolverConfig(dt=1e-3, t_end=2.0, cells_per_axis=(64, 64), epsilon=1e-3, record_every=500)
    configs = auto_energy_configs(model.species, (2, 4))
    _assert_energy_configs(configs, model.species)

    trajectory = Simulation(model, config).run(MassWitness((1.0, 1.0, 2.0)), configs)

    assert not trajectory.halted
    ledger = trajectory.ledger
    mass = ledger.column('weighted_mass')
    assert len(mass) == 2001
    assert np.max(np.abs(mass - mass[0])) <= 1e-6 * mass[0]
    assert np.min(ledger.column('min')) >= -1e-8
    assert trajectory.floor_breaches == 0
    assert energy_bounded(ledger) == {2: True, 4: True}


@pytest.mark.integration
@pytest.mark.slow
def test_cross_species_epidemic_invariants():
    model = builtin('ex1')
    config = SolverConfig(dt=0.01, t_end=10.0, cells_per_axis=(32, 32), record_every=100)
    configs = auto_energy_configs(model.species, (2, 4))
    _assert_energy_configs(configs, model.species)

    trajectory = Simulation(model, config).run(MassWitness.conserved(6), configs)

    assert not trajectory.halted
    ledger = trajectory.ledger
    mass = ledger.column('weighted_mass')
    assert np.all(np.diff(mass) <= 1e-9 * mass[0])
    assert mass[-1] < mass[0]
    assert np.min(ledger.column('min')) >= -1e-8
    assert energy_bounded(ledger) == {2: True, 4: True}


@pytest.mark.integration
def test_envelope_dominates_with_source():
    model = builtin('ex1', {'source': 0.5})
    fitted = fit_mass_control(model, build_cloud(model, CheckerConfig(samples=12)))
    assert fitted.K2 > 0.0

    config = SolverConfig(dt=0.01, t_end=2.0, cells_per_axis=(16, 16))
    ledger = Simulation(model, config).run(fitted.to_witness()).ledger

    mass = ledger.column('weighted_mass')
    envelope = ledger.column('envelope')
    assert envelope[0] == pytest.approx(mass[0])
    assert np.all(mass <= envelope + 1e-6 * (1.0 + ledger.m0))


def test_multinomial_identities():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        p = int(rng.integers(0, 7))
        v = rng.uniform(0.0, 3.0, n)
        theta = rng.uniform(0.5, 2.0, n)

        assert multinomial_energy(v, np.ones(n), p) == pytest.approx(np.sum(v) ** p, rel=1e-12)
        assert multinomial_energy(v, theta, 0) == 1.0
        assert multinomial_energy(v, theta, 1) == pytest.approx(np.dot(theta, v), rel=1e-14)


@pytest.mark.integration
def test_epsilon_convergence():
    config = SolverConfig(dt=1e-2, t_end=1.0, cells_per_axis=(16, 16))

    study = epsilon_study(builtin('ex2'), config, (1e-2, 1e-3, 1e-4))

    assert len(study.distances) == 2
    assert study.decreasing() == [True, True, True]


@pytest.mark.integration
@pytest.mark.slow
def test_host_decay():
    model = builtin('ex1')
    config = SolverConfig(dt=0.01, t_end=50.0, cells_per_axis=(32, 32), record_every=1000)

    trajectory = Simulation(model, config).run()

    assert not trajectory.halted
    first, last = trajectory.snapshots[0], trajectory.final
    assert last.t == pytest.approx(50.0)
    assert np.max(last.fields[5]) <= 0.5 * np.max(first.fields[5])

    ledger = trajectory.ledger
    t = ledger.times
    w_mass = ledger.column('L1')[:, 5]
    quarters = [np.searchsorted(t, 25.0), np.searchsorted(t, 37.5), len(t) - 1]
    early = _integral(t[quarters[0]:quarters[1] + 1], w_mass[quarters[0]:quarters[1] + 1])
    late = _integral(t[quarters[1]:quarters[2] + 1], w_mass[quarters[1]:quarters[2] + 1])
    assert late < early
