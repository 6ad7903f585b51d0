"""
Command-line entry point.

Usage:

    habitat-rd builtin ex2 | habitat-rd run -
    habitat-rd --outdir out check ex1.rd
    habitat-rd energy ex2.rd --p 2,4
    habitat-rd sweep-epsilon ex2.rd --eps 1e-2,1e-3,1e-4

Exit codes: 0 on success, 1 on a failed verdict or an unwritable output
directory, 2 on usage or parse errors.
"""
import argparse
import dataclasses
import json
import logging
import sys
import time
from typing import Callable, Dict, List, Optional, Sequence

from habitat_rd import __version__
from habitat_rd.config import (
    ConfigDocument,
    builtin_config_text,
    emit_config,
    energy_settings,
    mass_witness,
    parse_config,
    parse_param,
    to_checker_config,
    to_model,
    to_solver_config,
)
from habitat_rd.energy_diagnostics import (
    EnergyConfig,
    MassWitness,
    auto_energy_configs,
    energy_configs_from_weights,
    state_energies,
)
from habitat_rd.enums import (
    BuiltinModel,
    Subcommand,
)
from habitat_rd.errors import (
    ConfigError,
    HabitatError,
    ModelError,
    SolverConfigError,
    exit_code_for,
)
from habitat_rd.model import (
    ModelSpec,
)
from habitat_rd.outputs import (
    OutputPaths,
    RunManifest,
    read_snapshots,
    write_energy,
    write_epsilon_study,
    write_json,
    write_outputs,
)
from habitat_rd.settings import (
    Settings,
    SettingsProvider,
)
from habitat_rd.solver import (
    Simulation,
    epsilon_study,
)
from habitat_rd.structure_checker import (
    build_cloud,
    certify,
    fit_mass_control,
)

LOGGER = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
DEFAULT_EPS_LIST = (1e-2, 1e-3, 1e-4)
DEFAULT_ENERGY_P = (2, 4)


def _csv_floats(text: str) -> List[float]:
    return [float(v) for v in text.split(',') if v]


def _csv_ints(text: str) -> List[int]:
    return [int(v) for v in text.split(',') if v]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--outdir', default=argparse.SUPPRESS,
                        help='output directory (env RD_OUTDIR, default rd_output)')
    common.add_argument('--log-level', default=argparse.SUPPRESS,
                        help='DEBUG, INFO, WARNING or ERROR (env RD_LOG_LEVEL)')

    parser = argparse.ArgumentParser(
        prog='habitat-rd',
        description='Reaction-diffusion systems of species living on overlapping habitats',
        parents=[common],
    )
    parser.add_argument('--version', action='version', version=__version__)
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    run_parser = commands.add_parser(
        Subcommand.Run.value, parents=[common],
        help='simulate and write snapshots, ledger and manifest',
    )
    run_parser.add_argument('config', help="config file, or '-' for stdin")

    check_parser = commands.add_parser(
        Subcommand.Check.value, parents=[common],
        help='certify the structural hypotheses of the reaction',
    )
    check_parser.add_argument('config')
    check_parser.add_argument('--samples', type=int)
    check_parser.add_argument('--seed', type=int)
    check_parser.add_argument('--umax', type=float)

    energy_parser = commands.add_parser(
        Subcommand.Energy.value, parents=[common],
        help='recompute L_p energies from stored snapshots',
    )
    energy_parser.add_argument('config')
    energy_parser.add_argument('--p', type=_csv_ints, help='comma-separated orders')

    sweep_parser = commands.add_parser(
        Subcommand.SweepEpsilon.value, parents=[common],
        help='compare final states over decreasing truncation parameters',
    )
    sweep_parser.add_argument('config')
    sweep_parser.add_argument('--eps', type=_csv_floats,
                              default=list(DEFAULT_EPS_LIST))

    builtin_parser = commands.add_parser(
        Subcommand.Builtin.value, parents=[common],
        help='print the config of a built-in example',
    )
    builtin_parser.add_argument('name', choices=[m.value for m in BuiltinModel])
    builtin_parser.add_argument('--set', dest='params', action='append',
                                default=[], metavar='KEY=VALUE')
    return parser


def _read_config(source: str) -> ConfigDocument:
    if source == '-':
        text = sys.stdin.read()
    else:
        try:
            with open(source, encoding='utf-8') as handle:
                text = handle.read()
        except OSError as err:
            raise ConfigError(f'cannot read {source}: {err.strerror}') from err
    return parse_config(text)


def _energy_configs(model: ModelSpec, ps: Sequence[int],
                    theta: Optional[Sequence[float]]) -> List[EnergyConfig]:
    if not ps:
        return []
    if theta is None:
        return auto_energy_configs(model.species, ps)
    return energy_configs_from_weights(model.species, ps, theta)


def _witness(model: ModelSpec, document: ConfigDocument) -> MassWitness:
    given = mass_witness(document)
    if given is not None:
        return given

    cloud = build_cloud(model, to_checker_config(document))
    report = fit_mass_control(model, cloud)
    if report.feasible:
        LOGGER.info('Fitted mass control b=%s K1=%g K2=%g', report.b, report.K1, report.K2)
        return report.to_witness()
    LOGGER.warning('No mass-control witness found, ledger envelope assumes conservation')
    return MassWitness.conserved(model.m)


def _run(args, settings: Settings) -> int:
    document = _read_config(args.config)
    model = to_model(document)
    solver_config = to_solver_config(document)
    witness = _witness(model, document)
    ps, theta, bound = energy_settings(document)
    energy_configs = _energy_configs(model, ps, theta)

    started = time.perf_counter()
    trajectory = Simulation(model, solver_config).run(witness, energy_configs)
    elapsed = time.perf_counter() - started

    manifest = RunManifest(
        model=model.name,
        config=emit_config(model, solver_config, energy_ps=ps),
        settings={'outdir': settings.outdir, 'sources': settings.sources},
        witness={'b': list(witness.b), 'K1': witness.K1, 'K2': witness.K2},
        wall_clock_seconds=elapsed,
    )
    manifest = write_outputs(trajectory, OutputPaths(settings.outdir), manifest, bound)
    verdict = manifest.verdict
    LOGGER.info(
        'Run %s: t=%g, mass drift %.3e, min %.3e, envelope %s',
        model.name, verdict.final_t, verdict.mass_drift, verdict.min_value,
        'ok' if verdict.envelope_ok else 'VIOLATED',
    )
    return 0 if verdict.ok else 1


def _check(args, settings: Settings) -> int:
    document = _read_config(args.config)
    model = to_model(document)
    config = to_checker_config(document)
    overrides = {
        key: value for key, value in (
            ('samples', args.samples), ('seed', args.seed), ('U_max', args.umax),
        ) if value is not None
    }
    if overrides:
        config = dataclasses.replace(config, **overrides)

    report = certify(model, config)
    document_json = report.to_json()
    document_json['hypotheses_met'] = report.hypotheses_met

    paths = OutputPaths(settings.outdir)
    paths.ensure()
    write_json(paths.report, document_json)
    sys.stdout.write(json.dumps(document_json, indent=2, sort_keys=True) + '\n')
    return 0 if report.hypotheses_met and report.holdout.ok else 1


def _energy(args, settings: Settings) -> int:
    document = _read_config(args.config)
    model = to_model(document)
    simulation = Simulation(model, to_solver_config(document))
    ps, theta, _ = energy_settings(document)
    ps = tuple(args.p or ps or DEFAULT_ENERGY_P)
    configs = _energy_configs(model, ps, theta)

    paths = OutputPaths(settings.outdir)
    meshes = simulation.species_meshes
    rows = [
        (state.step, state.t, state_energies(state, model, meshes, configs))
        for state in read_snapshots(paths, meshes)
    ]
    write_energy(paths.energy, ps, rows)
    LOGGER.info('Wrote energies of %d snapshots to %s', len(rows), paths.energy)
    return 0


def _sweep_epsilon(args, settings: Settings) -> int:
    document = _read_config(args.config)
    model = to_model(document)
    try:
        study = epsilon_study(model, to_solver_config(document), args.eps)
    except SolverConfigError as err:
        raise ConfigError(str(err)) from err

    paths = OutputPaths(settings.outdir)
    paths.ensure()
    write_epsilon_study(paths.epsilon_study, study)
    for k, decreasing in enumerate(study.decreasing(), start=1):
        if not decreasing:
            LOGGER.warning('Distances of species %d do not decrease with eps', k)
    return 0


def _builtin(args, settings: Settings) -> int:
    params = dict(parse_param(item) for item in args.params)
    try:
        text = builtin_config_text(args.name, params)
    except ModelError as err:
        raise ConfigError(str(err)) from err
    sys.stdout.write(text)
    return 0


HANDLERS: Dict[Subcommand, Callable[..., int]] = {
    Subcommand.Run: _run,
    Subcommand.Check: _check,
    Subcommand.Energy: _energy,
    Subcommand.SweepEpsilon: _sweep_epsilon,
    Subcommand.Builtin: _builtin,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)

    settings = SettingsProvider(
        outdir=getattr(args, 'outdir', None),
        log_level=getattr(args, 'log_level', None),
    ).load_settings()
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT, stream=sys.stderr)
    LOGGER.debug('%s', settings)

    try:
        return HANDLERS[Subcommand(args.command)](args, settings)
    except HabitatError as err:
        LOGGER.error('%s', err)
        return exit_code_for(err)


def main():
    sys.exit(dispatch())
