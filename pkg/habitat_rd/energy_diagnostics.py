"""
Quantities monitored along a trajectory: weighted L^1 mass against its
Gronwall envelope, sup norms and minima, and the multinomial L^p energies
together with the positive-definiteness test used to pick their weights θ.

Usage:

1) Pick the energy weights for every habitat group

    configs = auto_energy_configs(model.species, ps=(2, 4))

2) Open a ledger with a mass-control witness and append one row per step

    ledger = DiagnosticsLedger(model.m, MassWitness((1, 1, 2), 0.0, 0.0),
                               ps=(2, 4), union_measure=8.0)
    ledger_update(ledger, state, model, meshes, configs)

3) Ask whether the energies stayed bounded

    energy_bounded(ledger, factor=10.0)
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from habitat_rd.errors import (
    EnergyOverflowError,
    SolverConfigError,
)

LOGGER = logging.getLogger(__name__)

# Above this p the energy is summed in log-space with a max shift.
DIRECT_MAX_P = 8

MAX_THETA_DOUBLINGS = 64


@dataclass(frozen=True)
class MassWitness:
    """Σ b_k f_k <= K1 Σ χ u + K2, as fitted by the checker or given by hand."""
    b: Tuple[float, ...]
    K1: float = 0.0
    K2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'b', tuple(float(v) for v in self.b))
        object.__setattr__(self, 'K1', float(self.K1))
        object.__setattr__(self, 'K2', float(self.K2))
        if not self.b or min(self.b) <= 0.0:
            raise SolverConfigError(f'mass weights must be positive, got {self.b}')
        if self.K2 < 0.0:
            raise SolverConfigError(f'K2 must be non-negative, got {self.K2}')

    @classmethod
    def conserved(cls, m: int) -> 'MassWitness':
        return cls((1.0,) * m, 0.0, 0.0)


@dataclass(frozen=True)
class EnergyConfig:
    """p and one θ vector per habitat group (empty for an empty group)."""
    p: int
    theta: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, 'p', int(self.p))
        object.__setattr__(self, 'theta', tuple(
            tuple(float(t) for t in group) for group in self.theta
        ))
        if self.p < 0:
            raise SolverConfigError(f'energy order p must be >= 0, got {self.p}')
        if any(t <= 0.0 for group in self.theta for t in group):
            raise SolverConfigError('energy weights θ must be positive')


@dataclass(frozen=True, eq=False)
class ThetaCheck:
    p: int
    theta: Tuple[float, ...]
    matrices: Tuple[Tuple[Tuple[int, ...], np.ndarray], ...]
    passed: bool
    failing_beta: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class LedgerRow:
    t: float
    l1: Tuple[float, ...]
    sup: Tuple[float, ...]
    min: Tuple[float, ...]
    weighted_mass: float
    envelope: float
    energies: Tuple[float, ...]


class DiagnosticsLedger:
    """
    Time series of one run. The envelope is anchored at the weighted mass of
    the first row.
    """
    def __init__(self,
                 m: int,
                 witness: MassWitness,
                 ps: Sequence[int] = (),
                 union_measure: float = 1.0):
        if len(witness.b) != m:
            raise SolverConfigError(
                f'mass weights have {len(witness.b)} entries, expected {m}'
            )
        self._m = m
        self._witness = witness
        self._ps = tuple(int(p) for p in ps)
        self._union_measure = float(union_measure)
        self._rows: List[LedgerRow] = []
        self._m0: Optional[float] = None
        self._t0 = 0.0

    @property
    def m(self) -> int:
        return self._m

    @property
    def witness(self) -> MassWitness:
        return self._witness

    @property
    def ps(self) -> Tuple[int, ...]:
        return self._ps

    @property
    def rows(self) -> List[LedgerRow]:
        return list(self._rows)

    @property
    def m0(self) -> Optional[float]:
        return self._m0

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def times(self) -> np.ndarray:
        return np.array([row.t for row in self._rows])

    def column(self, name: str) -> np.ndarray:
        """
        Reads one column: 't', 'weighted_mass', 'envelope', 'L1', 'sup',
        'min' (the last three as (rows, m)), or 'L<p>'.
        """
        if name in ('t', 'weighted_mass', 'envelope'):
            return np.array([getattr(row, name) for row in self._rows])
        if name in ('L1', 'sup', 'min'):
            attr = 'l1' if name == 'L1' else name
            return np.array([getattr(row, attr) for row in self._rows])
        if name.startswith('L') and name[1:].isdigit():
            index = self._ps.index(int(name[1:]))
            return np.array([row.energies[index] for row in self._rows])
        raise KeyError(name)

    def header(self) -> List[str]:
        names = ['t']
        for prefix in ('L1', 'sup', 'min'):
            names.extend(f'{prefix}_{k + 1}' for k in range(self._m))
        names.extend(['weighted_mass', 'envelope'])
        names.extend(f'L{p}' for p in self._ps)
        return names

    def envelope_at(self, t: float) -> float:
        """Gronwall bound on the weighted mass at time t."""
        rate, source = effective_constants(self._witness, self._union_measure)
        return gronwall_envelope(rate, source, self._m0, t - self._t0)

    def append(self, t: float, l1, sup, minimum, mass: float,
               energies: Sequence[float]) -> LedgerRow:
        if self._m0 is None:
            self._m0 = float(mass)
            self._t0 = float(t)
        row = LedgerRow(
            float(t),
            tuple(float(v) for v in l1),
            tuple(float(v) for v in sup),
            tuple(float(v) for v in minimum),
            float(mass),
            self.envelope_at(t),
            tuple(float(v) for v in energies),
        )
        self._rows.append(row)
        return row


def effective_constants(witness: MassWitness,
                        union_measure: float) -> Tuple[float, float]:
    """
    Growth rate and source of dW/dt <= rate*W + source for W = Σ b_k‖u_k‖_1.
    W/max(b) <= Σ‖u_j‖_1 <= W/min(b) for any positive weights, so the rate is
    K1/min(b) when K1 >= 0 and K1/max(b) when K1 < 0.
    """
    if witness.K1 >= 0.0:
        rate = witness.K1 / min(witness.b)
    else:
        rate = witness.K1 / max(witness.b)
    return rate, witness.K2 * union_measure


def weighted_mass(state, b: Sequence[float], meshes) -> float:
    return float(sum(
        weight * mesh.cell_volume * np.sum(field)
        for weight, field, mesh in zip(b, state.fields, meshes)
    ))


def gronwall_envelope(K1: float, K2: float, M0: float, t: float) -> float:
    if t < 0.0:
        raise ValueError(f't must be non-negative, got {t}')
    if K1 == 0.0:
        return M0 + K2 * t
    return (K2 / K1 + M0) * math.exp(K1 * t) - K2 / K1


@lru_cache(maxsize=256)
def compositions(total: int, parts: int) -> Tuple[Tuple[int, ...], ...]:
    """All β in Z_+^parts with |β| = total, in lexicographic order."""
    if parts == 0:
        return ((),) if total == 0 else ()
    if parts == 1:
        return ((total,),)
    return tuple(
        (first,) + rest
        for first in range(total + 1)
        for rest in compositions(total - first, parts - 1)
    )


def _positive(v) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def multinomial_energy(v, theta: Sequence[float], p: int):
    """
    H_p[v] = Σ_{|β|=p} (p choose β) Π θ_i^{β_i²} v_i^{β_i}.

    v has shape (n,) for a scalar result or (n, cells) for one value per
    cell. Negative entries count as 0.
    """
    v = _positive(v)
    theta = np.asarray(theta, dtype=float)
    scalar = v.ndim == 1
    v = v.reshape(len(theta), -1)

    if p > DIRECT_MAX_P:
        result = _energy_log_space(v, theta, p)
    else:
        result = np.zeros(v.shape[1])
        with np.errstate(over='ignore', invalid='ignore'):
            for beta in compositions(p, len(theta)):
                coeff = math.factorial(p)
                weight = 1.0
                term = np.ones(v.shape[1])
                for i, b_i in enumerate(beta):
                    if b_i == 0:
                        continue
                    coeff //= math.factorial(b_i)
                    weight *= theta[i] ** (b_i * b_i)
                    term = term * v[i] ** b_i
                result += coeff * weight * term

    if not np.all(np.isfinite(result)):
        raise EnergyOverflowError(
            f'H_{p} overflows for theta={theta.tolist()}'
        )
    return float(result[0]) if scalar else result


def _energy_log_space(v: np.ndarray, theta: np.ndarray, p: int) -> np.ndarray:
    log_theta = np.log(theta)
    with np.errstate(divide='ignore'):
        log_v = np.log(v)
    logs = []
    for beta in compositions(p, len(theta)):
        log_term = math.lgamma(p + 1) + np.zeros(v.shape[1])
        for i, b_i in enumerate(beta):
            if b_i == 0:
                continue
            log_term = log_term - math.lgamma(b_i + 1) + b_i * b_i * log_theta[i]
            log_term = log_term + b_i * log_v[i]
        logs.append(log_term)
    logs = np.array(logs)
    shift = np.max(logs, axis=0)
    empty = ~np.isfinite(shift)
    shift = np.where(empty, 0.0, shift)
    with np.errstate(over='ignore'):
        total = np.exp(shift) * np.sum(np.exp(logs - shift), axis=0)
    return np.where(empty, 0.0, total)


def multinomial_energy_recursive(v, theta: Sequence[float], p: int) -> float:
    """
    H_p by dynamic programming over the species: with
    G_i(q) = Σ_{|β|=q over species <= i} Π θ^{β²} v^β / β!,
    G_i(q) = Σ_b G_{i-1}(q-b) θ_i^{b²} v_i^b / b! and H_p = p! G_n(p).
    """
    v = _positive(v)
    g = np.zeros(p + 1)
    g[0] = 1.0
    for theta_i, v_i in zip(theta, v):
        factor = np.array([
            theta_i ** (b * b) * v_i ** b / math.factorial(b)
            for b in range(p + 1)
        ])
        g = np.array([
            sum(g[q - b] * factor[b] for b in range(q + 1))
            for q in range(p + 1)
        ])
    return math.factorial(p) * float(g[p])


def group_energy(state, group: Sequence[int], theta: Sequence[float],
                 p: int, mesh) -> float:
    """L_{k,p}: the cell-volume-weighted sum of H_p over the group's mesh."""
    if not group:
        return 0.0
    v = np.vstack([np.ravel(state.fields[k]) for k in group])
    return float(mesh.cell_volume * np.sum(multinomial_energy(v, theta, p)))


def total_energy(state, species, config: EnergyConfig, meshes) -> float:
    return sum(
        group_energy(state, group, theta, config.p, meshes[j])
        for j, (group, theta) in enumerate(zip(species.groups, config.theta))
        if group
    )


def _leading_minors_positive(matrix: np.ndarray) -> bool:
    for size in range(1, matrix.shape[0] + 1):
        minor = np.linalg.det(matrix[:size, :size])
        scale = np.prod(np.diag(matrix)[:size])
        if not minor > 1e-12 * scale:
            return False
    return True


def theta_pd_check(theta: Sequence[float], p: int, n_k: int) -> ThetaCheck:
    if p < 2:
        raise ValueError(f'theta_pd_check needs p >= 2, got {p}')
    theta = tuple(float(t) for t in theta)
    if len(theta) != n_k:
        raise ValueError(f'expected {n_k} weights, got {len(theta)}')

    th = np.asarray(theta)
    matrices = []
    failing = None
    for beta in compositions(p - 2, n_k):
        b = np.asarray(beta)
        half = th ** (2 * b + 1)
        matrix = np.outer(half, half)
        np.fill_diagonal(matrix, th ** (4 * b + 4))
        matrices.append((beta, matrix))
        if failing is None and not _leading_minors_positive(matrix):
            failing = beta

    return ThetaCheck(p, theta, tuple(matrices), failing is None, failing)


def select_theta(n_k: int, p: int) -> Tuple[float, ...]:
    """
    Smallest-effort θ passing theta_pd_check: start from all ones and double
    components cyclically, largest index first.
    """
    theta = [1.0] * n_k
    if n_k <= 1 or p < 2:
        return tuple(theta)

    for step in range(MAX_THETA_DOUBLINGS):
        if theta_pd_check(theta, p, n_k).passed:
            LOGGER.debug('theta %s selected for n=%d p=%d', theta, n_k, p)
            return tuple(theta)
        theta[n_k - 1 - step % n_k] *= 2.0

    raise EnergyOverflowError(
        f'no positive-definite theta found for n={n_k}, p={p} '
        f'after {MAX_THETA_DOUBLINGS} doublings'
    )


def auto_energy_configs(species, ps: Sequence[int]) -> List[EnergyConfig]:
    return [
        EnergyConfig(p, tuple(select_theta(len(group), p) for group in species.groups))
        for p in ps
    ]


def energy_configs_from_weights(species, ps: Sequence[int],
                                weights: Sequence[float]) -> List[EnergyConfig]:
    """Per-species weights (species order) regrouped by habitat."""
    if len(weights) != species.m:
        raise SolverConfigError(
            f'theta needs one weight per species ({species.m}), got {len(weights)}'
        )
    theta = tuple(tuple(weights[k] for k in group) for group in species.groups)
    return [EnergyConfig(p, theta) for p in ps]


def ledger_update(ledger: DiagnosticsLedger, state, model, meshes,
                  energy_configs: Sequence[EnergyConfig]) -> LedgerRow:
    l1, sup, minimum = [], [], []
    for field, mesh in zip(state.fields, meshes):
        l1.append(mesh.cell_volume * np.sum(np.abs(field)))
        sup.append(np.max(field))
        minimum.append(np.min(field))

    mass = weighted_mass(state, ledger.witness.b, meshes)
    energies = state_energies(state, model, meshes, energy_configs)
    return ledger.append(state.t, l1, sup, minimum, mass, energies)


def state_energies(state, model, meshes,
                   energy_configs: Sequence[EnergyConfig]) -> List[float]:
    """L_p of one state for each config; meshes are per species."""
    domain_meshes = _meshes_by_domain(model, meshes)
    return [
        total_energy(state, model.species, config, domain_meshes)
        for config in energy_configs
    ]


def _meshes_by_domain(model, meshes) -> Dict[int, object]:
    # index j-1 -> mesh of Ω_j, for the groups
    by_domain: Dict[int, object] = {}
    for k, domain_id in enumerate(model.species.sigma):
        by_domain.setdefault(domain_id - 1, meshes[k])
    return by_domain


def energy_bounded(ledger: DiagnosticsLedger, factor: float = 10.0) -> Dict[int, bool]:
    """Per p: sup_t L_p(t) <= factor * max(L_p(0), 1)."""
    verdicts = {}
    for p in ledger.ps:
        values = ledger.column(f'L{p}')
        if values.size == 0:
            verdicts[p] = True
            continue
        verdicts[p] = bool(np.max(values) <= factor * max(values[0], 1.0))
        if not verdicts[p]:
            LOGGER.warning(
                'L%d grew to %.6g, above %g x max(L%d(0), 1)',
                p, np.max(values), factor, p,
            )
    return verdicts
