"""
Result files of a run: per-step snapshots, the diagnostics ledger and a
manifest that echoes the resolved configuration.

Usage:

1) Write everything a run produced

    paths = OutputPaths('rd_output')
    manifest = RunManifest(model='ex2', config=config_text)
    write_outputs(trajectory, paths, manifest)

2) Read the snapshots back for post-processing

    states = read_snapshots(paths, simulation.species_meshes)
"""
import csv
import json
import logging
import os
import re
from typing import Dict, List, Sequence, Tuple

import numpy as np
from jsonobject import (
    BooleanProperty,
    DictProperty,
    FloatProperty,
    IntegerProperty,
    JsonObject,
    ListProperty,
    ObjectProperty,
    StringProperty,
)

from habitat_rd import __version__
from habitat_rd.energy_diagnostics import (
    DiagnosticsLedger,
    energy_bounded,
)
from habitat_rd.errors import (
    ConfigSemanticError,
    OutputError,
)
from habitat_rd.geometry import (
    MeshedDomain,
)
from habitat_rd.solver import (
    EpsilonStudy,
    State,
    Trajectory,
)

LOGGER = logging.getLogger(__name__)

NUMBER_FORMAT = '%.17g'
ENVELOPE_SLACK = 1e-6
SNAPSHOT_NAME = re.compile(r'^snap_(\d+)_(\d+)\.csv$')


class SnapshotEntry(JsonObject):
    step = IntegerProperty()
    t = FloatProperty()
    files = ListProperty(str)


class RunVerdict(JsonObject):
    halted = BooleanProperty(default=False)
    halted_reason = StringProperty()
    steps = IntegerProperty()
    final_t = FloatProperty()
    floor_breaches = IntegerProperty(default=0)
    min_value = FloatProperty()
    mass_drift = FloatProperty()
    envelope_ok = BooleanProperty(default=True)
    energy_bounded = DictProperty()

    @property
    def ok(self) -> bool:
        return (
            not self.halted
            and self.floor_breaches == 0
            and self.envelope_ok
            and all(self.energy_bounded.values())
        )


class RunManifest(JsonObject):
    version = StringProperty(default=__version__)
    model = StringProperty()
    config = StringProperty()
    settings = DictProperty()
    witness = DictProperty()
    wall_clock_seconds = FloatProperty()
    files = ListProperty(str)
    snapshots = ListProperty(SnapshotEntry)
    verdict = ObjectProperty(RunVerdict)


class OutputPaths:
    def __init__(self, outdir: str):
        self._outdir = outdir

    @property
    def outdir(self) -> str:
        return self._outdir

    def ensure(self):
        try:
            os.makedirs(self._outdir, exist_ok=True)
        except OSError as err:
            raise OutputError(f'cannot create output directory {self._outdir}: {err.strerror}') from err

    def path(self, name: str) -> str:
        return os.path.join(self._outdir, name)

    def snapshot(self, step: int, species: int) -> str:
        """species is 1-based"""
        return self.path(f'snap_{step}_{species}.csv')

    @property
    def ledger(self) -> str:
        return self.path('ledger.csv')

    @property
    def manifest(self) -> str:
        return self.path('manifest.json')

    @property
    def report(self) -> str:
        return self.path('structure_report.json')

    @property
    def energy(self) -> str:
        return self.path('energy.csv')

    @property
    def epsilon_study(self) -> str:
        return self.path('epsilon_study.csv')


def _fmt(value: float) -> str:
    return NUMBER_FORMAT % value


def _write_rows(path: str, header: Sequence[str], rows):
    try:
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    except OSError as err:
        raise OutputError(f'cannot write {path}: {err.strerror}') from err


def write_snapshot(path: str, values: np.ndarray, mesh: MeshedDomain):
    centers = mesh.centers
    header = ['x', 'y', 'z'][:centers.shape[1]] + ['value']
    rows = (
        [float(c) for c in point] + [float(v)]
        for point, v in zip(centers, np.ravel(values))
    )
    _write_rows(path, header, rows)


def write_ledger(path: str, ledger: DiagnosticsLedger):
    rows = (
        [row.t, *row.l1, *row.sup, *row.min, row.weighted_mass, row.envelope, *row.energies]
        for row in ledger.rows
    )
    _write_rows(path, ledger.header(), rows)


def run_verdict(trajectory: Trajectory, energy_factor: float = 10.0) -> RunVerdict:
    ledger = trajectory.ledger
    mass = ledger.column('weighted_mass')
    envelope = ledger.column('envelope')
    m0 = ledger.m0 or 0.0
    drift = float(abs(mass[-1] - m0) / m0) if m0 > 0.0 else float(abs(mass[-1]))
    slack = ENVELOPE_SLACK * (1.0 + m0)
    return RunVerdict(
        halted=trajectory.halted,
        halted_reason=trajectory.halted_reason,
        steps=int(trajectory.steps),
        final_t=float(trajectory.final.t),
        floor_breaches=int(trajectory.floor_breaches),
        min_value=float(np.min(ledger.column('min'))),
        mass_drift=drift,
        envelope_ok=bool(np.all(mass <= envelope + slack)),
        energy_bounded={str(p): bool(ok) for p, ok in energy_bounded(ledger, energy_factor).items()},
    )


def write_outputs(trajectory: Trajectory, paths: OutputPaths,
                  manifest: RunManifest, energy_factor: float = 10.0) -> RunManifest:
    paths.ensure()
    files = []
    for state in trajectory.snapshots:
        entry = SnapshotEntry(step=int(state.step), t=float(state.t))
        for k, (values, mesh) in enumerate(zip(state.fields, trajectory.meshes), start=1):
            path = paths.snapshot(state.step, k)
            write_snapshot(path, values, mesh)
            entry.files.append(os.path.basename(path))
        manifest.snapshots.append(entry)
        files.extend(entry.files)

    write_ledger(paths.ledger, trajectory.ledger)
    files.append(os.path.basename(paths.ledger))
    files.append(os.path.basename(paths.manifest))
    manifest.files = files
    manifest.verdict = run_verdict(trajectory, energy_factor)
    write_json(paths.manifest, manifest.to_json())
    LOGGER.info('Wrote %d files to %s', len(files), paths.outdir)
    return manifest


def write_json(path: str, document: Dict):
    try:
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(document, handle, indent=2, sort_keys=True)
            handle.write('\n')
    except OSError as err:
        raise OutputError(f'cannot write {path}: {err.strerror}') from err


def _snapshot_times(paths: OutputPaths) -> Dict[int, float]:
    if not os.path.exists(paths.manifest):
        LOGGER.warning('No manifest in %s, snapshot times are unknown', paths.outdir)
        return {}
    with open(paths.manifest, encoding='utf-8') as handle:
        manifest = RunManifest.wrap(json.load(handle))
    return {entry.step: entry.t for entry in manifest.snapshots}


def read_snapshots(paths: OutputPaths,
                   meshes: Sequence[MeshedDomain]) -> List[State]:
    """States rebuilt from snap_<step>_<species>.csv files, ordered by step."""
    if not os.path.isdir(paths.outdir):
        raise ConfigSemanticError(f'output directory {paths.outdir} does not exist')

    found: Dict[int, Dict[int, str]] = {}
    for name in os.listdir(paths.outdir):
        match = SNAPSHOT_NAME.match(name)
        if match:
            step, species = int(match.group(1)), int(match.group(2))
            found.setdefault(step, {})[species] = paths.path(name)
    if not found:
        raise ConfigSemanticError(f'no snapshots found in {paths.outdir}')

    times = _snapshot_times(paths)
    states = []
    for step in sorted(found):
        files = found[step]
        if sorted(files) != list(range(1, len(meshes) + 1)):
            raise ConfigSemanticError(
                f'snapshot {step} has species {sorted(files)}, expected 1..{len(meshes)}'
            )
        fields = tuple(
            _read_field(files[k], mesh) for k, mesh in enumerate(meshes, start=1)
        )
        states.append(State(times.get(step, float('nan')), fields, step))
    return states


def _read_field(path: str, mesh: MeshedDomain) -> np.ndarray:
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        next(reader, None)
        values = [float(row[-1]) for row in reader if row]
    if len(values) != mesh.n_cells:
        raise ConfigSemanticError(
            f'{path} has {len(values)} rows but the mesh has {mesh.n_cells} cells'
        )
    return np.asarray(values).reshape(mesh.shape)


def write_energy(path: str, ps: Sequence[int], rows: Sequence[Tuple[int, float, Sequence[float]]]):
    header = ['step', 't'] + [f'L{p}' for p in ps]
    _write_rows(path, header, ([step, float(t)] + [float(v) for v in values] for step, t, values in rows))


def write_epsilon_study(path: str, study: EpsilonStudy):
    m = len(study.distances[0]) if study.distances else 0
    header = ['eps', 'eps_next'] + [f'd_{k}' for k in range(1, m + 1)]
    _write_rows(path, header, (
        [float(a), float(b)] + [float(d) for d in row]
        for a, b, row in zip(study.eps, study.eps[1:], study.distances)
    ))
