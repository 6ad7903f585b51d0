"""
Problem data of a multi-habitat reaction-diffusion system: which habitat each
species lives on, the gated polynomial reaction field, diffusion coefficients,
initial data and the truncation parameter ε.

Usage:

1) Take a built-in model, or assemble a ModelSpec by hand

    model = builtin('ex2', {'a': 2.0})

2) Evaluate the reaction at a point

    f = eval_reaction(model, 0.0, (1.5, 1.0), np.array([2.0, 3.0, 0.0]))
    f_eps = truncate_reaction(model, 0.0, (1.5, 1.0), np.array([-1.0, 3.0, 0.0]))

3) Bound its Lipschitz constant for time-step control

    lipschitz_bound(model, box_radius=2.0)
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from habitat_rd.enums import (
    BuiltinModel,
    InitialKind,
)
from habitat_rd.errors import (
    ModelError,
)
from habitat_rd.geometry import (
    Domain,
    DomainSet,
    MeshedDomain,
)

LOGGER = logging.getLogger(__name__)

Monomial = Tuple[int, ...]

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class SpeciesMap:
    """
    sigma[k] is the id of the habitat species k lives on. Species indices are
    0-based, habitat ids 1-based.
    """
    sigma: Tuple[int, ...]
    n_domains: int

    def __post_init__(self):
        object.__setattr__(self, 'sigma', tuple(int(s) for s in self.sigma))
        if not self.sigma:
            raise ModelError('no species')
        for k, domain_id in enumerate(self.sigma):
            if not 1 <= domain_id <= self.n_domains:
                raise ModelError(
                    f'species {k + 1} lives on unknown domain {domain_id}'
                )

    @property
    def m(self) -> int:
        return len(self.sigma)

    @property
    def groups(self) -> Tuple[Tuple[int, ...], ...]:
        """O_1..O_N as tuples of species indices."""
        return tuple(
            tuple(k for k, s in enumerate(self.sigma) if s == domain_id)
            for domain_id in range(1, self.n_domains + 1)
        )

    @property
    def n_per_domain(self) -> Tuple[int, ...]:
        return tuple(len(group) for group in self.groups)

    def group(self, domain_id: int) -> Tuple[int, ...]:
        return self.groups[domain_id - 1]


@dataclass(frozen=True)
class ReactionTerm:
    """coeff * prod_j u_j^exponents[j], added to f_target where x ∈ all gates."""
    target: int
    coeff: float
    gate: FrozenSet[int]
    exponents: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'coeff', float(self.coeff))
        object.__setattr__(self, 'gate', frozenset(int(g) for g in self.gate))
        object.__setattr__(
            self, 'exponents', tuple(int(e) for e in self.exponents)
        )
        if any(e < 0 for e in self.exponents):
            raise ModelError(
                f'term for species {self.target + 1} has a negative exponent'
            )

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def readers(self) -> Tuple[int, ...]:
        return tuple(j for j, e in enumerate(self.exponents) if e > 0)


@dataclass(frozen=True)
class ReactionField:
    m: int
    terms: Tuple[ReactionTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'terms', tuple(self.terms))
        for term in self.terms:
            if not 0 <= term.target < self.m:
                raise ModelError(f'term targets unknown species {term.target + 1}')
            if len(term.exponents) != self.m:
                raise ModelError(
                    f'term for species {term.target + 1} has '
                    f'{len(term.exponents)} exponents, expected {self.m}'
                )

    @property
    def max_degree(self) -> int:
        return max((term.degree for term in self.terms), default=0)

    def is_zero(self) -> bool:
        return all(term.coeff == 0.0 for term in self.terms)

    def evaluate(self, u: np.ndarray, inside: np.ndarray,
                 sigma: Sequence[int]) -> np.ndarray:
        """
        Vectorized field: u is (m, P) non-negative, inside is the (N, P)
        habitat membership of the P points. Returns (m, P).
        """
        out = np.zeros((self.m, u.shape[1]))
        for term in self.terms:
            rows = [g - 1 for g in term.gate | {sigma[term.target]}]
            active = np.all(inside[rows], axis=0)
            if not np.any(active):
                continue
            value = np.full(u.shape[1], term.coeff)
            for j in term.readers:
                value = value * u[j] ** term.exponents[j]
            out[term.target] += np.where(active, value, 0.0)
        return out

    def restricted(self, region: FrozenSet[int],
                   sigma: Sequence[int]) -> List[Dict[Monomial, float]]:
        """
        Symbolic form of f on a region signature: for each species, the
        monomial -> coefficient map of the terms active there.
        """
        polys: List[Dict[Monomial, float]] = [{} for _ in range(self.m)]
        for term in self.terms:
            if sigma[term.target] not in region or not term.gate <= region:
                continue
            poly = polys[term.target]
            poly[term.exponents] = poly.get(term.exponents, 0.0) + term.coeff
        return polys

    def lipschitz_box_bound(self, radius: float) -> float:
        """max_k sum_j |df_k/du_j| over u in [0, radius]^m, term by term."""
        per_species = np.zeros(self.m)
        for term in self.terms:
            if term.degree == 0:
                continue
            per_species[term.target] += (
                abs(term.coeff) * term.degree * radius ** (term.degree - 1)
            )
        return float(per_species.max()) if self.m else 0.0


@dataclass(frozen=True)
class SpeciesDiffusion:
    """Constant base value with overrides on region signatures."""
    base: float
    regions: Tuple[Tuple[FrozenSet[int], float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'base', float(self.base))
        object.__setattr__(self, 'regions', tuple(
            (frozenset(ids), float(value)) for ids, value in self.regions
        ))

    @property
    def values(self) -> Tuple[float, ...]:
        return (self.base,) + tuple(value for _, value in self.regions)


@dataclass(frozen=True)
class DiffusionField:
    species: Tuple[SpeciesDiffusion, ...]

    def __post_init__(self):
        object.__setattr__(self, 'species', tuple(self.species))
        for k, entry in enumerate(self.species):
            if min(entry.values) <= 0.0:
                raise ModelError(
                    f'diffusion of species {k + 1} must be positive, got '
                    f'{min(entry.values)}'
                )

    @property
    def alpha(self) -> float:
        return min(min(entry.values) for entry in self.species)

    def cell_values(self, k: int, mesh: MeshedDomain,
                    domains: DomainSet) -> np.ndarray:
        entry = self.species[k]
        values = np.full(mesh.n_cells, entry.base)
        if entry.regions:
            inside = domains.membership(mesh.centers)
            for ids, value in entry.regions:
                wanted = np.array([i in ids for i in domains.ids])
                match = np.all(inside == wanted[:, None], axis=0)
                values[match] = value
        return values.reshape(mesh.shape)


@dataclass(frozen=True)
class InitialCondition:
    kind: InitialKind
    value: float = 0.0
    center: Tuple[float, ...] = ()
    width: float = 0.0
    amplitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'value', float(self.value))
        object.__setattr__(self, 'center', tuple(float(c) for c in self.center))
        object.__setattr__(self, 'width', float(self.width))
        object.__setattr__(self, 'amplitude', float(self.amplitude))
        if self.kind == InitialKind.Constant and self.value < 0.0:
            raise ModelError(f'initial constant {self.value} is negative')
        if self.kind == InitialKind.Gaussian:
            if self.width <= 0.0 or self.amplitude < 0.0:
                raise ModelError(
                    'gaussian initial data needs width > 0 and amplitude >= 0'
                )

    @classmethod
    def constant(cls, value: float) -> 'InitialCondition':
        return cls(InitialKind.Constant, value=value)

    @classmethod
    def gaussian(cls, center: Sequence[float], width: float,
                 amplitude: float) -> 'InitialCondition':
        return cls(
            InitialKind.Gaussian,
            center=tuple(center),
            width=width,
            amplitude=amplitude,
        )

    @property
    def sup(self) -> float:
        if self.kind == InitialKind.Constant:
            return self.value
        return self.amplitude

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == InitialKind.Constant:
            return np.full(points.shape[0], self.value)
        dist2 = np.sum((points - np.asarray(self.center)) ** 2, axis=1)
        return self.amplitude * np.exp(-dist2 / (2.0 * self.width ** 2))


@dataclass(frozen=True)
class ModelSpec:
    domains: DomainSet
    species: SpeciesMap
    reaction: ReactionField
    diffusion: DiffusionField
    initial: Tuple[InitialCondition, ...]
    epsilon: float = DEFAULT_EPSILON
    name: str = 'custom'

    def __post_init__(self):
        object.__setattr__(self, 'initial', tuple(self.initial))
        object.__setattr__(self, 'epsilon', float(self.epsilon))
        m = self.species.m
        if self.species.n_domains != len(self.domains):
            raise ModelError(
                f'species map expects {self.species.n_domains} domains, '
                f'{len(self.domains)} declared'
            )
        if self.reaction.m != m:
            raise ModelError(f'reaction has {self.reaction.m} species, expected {m}')
        if len(self.diffusion.species) != m:
            raise ModelError(f'diffusion given for {len(self.diffusion.species)} of {m} species')
        if len(self.initial) != m:
            raise ModelError(f'initial data given for {len(self.initial)} of {m} species')
        if not 0.0 <= self.epsilon < 1.0:
            raise ModelError(f'epsilon must lie in [0, 1), got {self.epsilon}')
        for k, init in enumerate(self.initial):
            if init.kind == InitialKind.Gaussian and len(init.center) != self.domains.dim:
                raise ModelError(
                    f'gaussian center of species {k + 1} has wrong dimension'
                )
        for term in self.reaction.terms:
            self.check_term(term)

    def check_term(self, term: ReactionTerm):
        sigma = self.species.sigma
        home = sigma[term.target]
        unknown = [g for g in term.gate if g not in self.domains.ids]
        if unknown:
            raise ModelError(
                f'term for species {term.target + 1} gated by unknown '
                f'domains {sorted(unknown)}'
            )
        allowed = term.gate | {home}
        for j in term.readers:
            if sigma[j] not in allowed:
                raise ModelError(
                    f'term for species {term.target + 1} reads species {j + 1} '
                    f'outside its gate {sorted(term.gate)}'
                )
            if not self.domains.intersects(sigma[j], home):
                raise ModelError(
                    f'term for species {term.target + 1} reads species {j + 1} '
                    'whose habitat does not meet its own'
                )

    @property
    def m(self) -> int:
        return self.species.m

    @property
    def dim(self) -> int:
        return self.domains.dim

    def with_epsilon(self, epsilon: float) -> 'ModelSpec':
        return ModelSpec(
            self.domains,
            self.species,
            self.reaction,
            self.diffusion,
            self.initial,
            epsilon,
            self.name,
        )

    def initial_sup(self) -> float:
        return max(init.sup for init in self.initial)


def truncate(values: np.ndarray, epsilon: float) -> np.ndarray:
    """f / (1 + ε Σ_j |f_j|) along the species axis (axis 0)."""
    if epsilon == 0.0:
        return values
    return values / (1.0 + epsilon * np.sum(np.abs(values), axis=0))


def eval_reaction(model: ModelSpec, t: float, x: Sequence[float],
                  u: np.ndarray) -> np.ndarray:
    # pylint: disable=unused-argument
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise ModelError(f'eval_reaction needs u >= 0, got {u.tolist()}')
    inside = model.domains.membership(np.asarray(x, dtype=float))
    return model.reaction.evaluate(
        u.reshape(-1, 1),
        inside,
        model.species.sigma,
    )[:, 0]


def truncate_reaction(model: ModelSpec, t: float, x: Sequence[float],
                      u_raw: np.ndarray) -> np.ndarray:
    """The ε-truncated field, evaluated at the positive part of u_raw."""
    u_plus = np.maximum(np.asarray(u_raw, dtype=float), 0.0)
    return truncate(eval_reaction(model, t, x, u_plus), model.epsilon)


def lipschitz_bound(model: ModelSpec, box_radius: float) -> float:
    if box_radius <= 0.0:
        raise ModelError(f'box_radius must be positive, got {box_radius}')
    return model.reaction.lipschitz_box_bound(box_radius)


#
# Built-in models
#
def _monomial(m: int, powers: Mapping[int, int]) -> Monomial:
    exponents = [0] * m
    for species, power in powers.items():
        exponents[species] = power
    return tuple(exponents)


def _term(m: int, target: int, coeff: float, gate: Sequence[int],
          powers: Mapping[int, int]) -> ReactionTerm:
    return ReactionTerm(target, coeff, frozenset(gate), _monomial(m, powers))


def _boxes(intervals: Sequence[Tuple[float, float]], dim: int) -> DomainSet:
    if dim not in (1, 2):
        raise ModelError(f'dim must be 1 or 2, got {dim}')
    domains = []
    for domain_id, (low, high) in enumerate(intervals, start=1):
        lo = (low,) if dim == 1 else (low, 0.0)
        hi = (high,) if dim == 1 else (high, 2.0)
        domains.append(Domain(domain_id, lo, hi))
    return DomainSet(domains)


def _point(x: float, dim: int) -> Tuple[float, ...]:
    return (x,) if dim == 1 else (x, 1.0)


@dataclass(frozen=True)
class _Defaults:
    values: Dict[str, object] = field(default_factory=dict)

    def merged(self, params: Optional[Mapping[str, object]]) -> Dict[str, object]:
        params = dict(params or {})
        unknown = sorted(set(params) - set(self.values))
        if unknown:
            raise ModelError(f'unknown builtin parameters {unknown}')
        merged = dict(self.values)
        merged.update(params)
        return merged


EX1_DEFAULTS = _Defaults({
    'k1': 1.0, 'k2': 1.0, 'k3': 1.0, 'k4': 1.0,
    'lambda1': 0.5, 'lambda2': 0.5, 'lambda3': 1.0,
    'd': (0.1, 0.1, 0.05, 0.05, 0.1, 0.1),
    'dim': 2,
    'epsilon': DEFAULT_EPSILON,
    'source': 0.0,
    'init': None,
})

EX2_DEFAULTS = _Defaults({
    'a': 1.0, 'b': 1.0, 'k': 1.0,
    'd': (0.1, 0.05, 0.02),
    'dim': 2,
    'epsilon': DEFAULT_EPSILON,
    'init': None,
})

EX3_DEFAULTS = _Defaults({
    'k': 1.0,
    'd': (0.1, 0.1),
    'epsilon': DEFAULT_EPSILON,
    'init': None,
})


def _diffusion(values: Sequence[float], m: int) -> DiffusionField:
    values = tuple(values)
    if len(values) != m:
        raise ModelError(f'expected {m} diffusion values, got {len(values)}')
    if min(values) <= 0.0:
        raise ModelError('diffusion values must be positive')
    return DiffusionField(tuple(SpeciesDiffusion(v) for v in values))


def _cross_species_epidemic(params: Mapping[str, object]) -> ModelSpec:
    # u = (phi, psi, alpha, beta, v, w): host 1 on Ω_1, vector on Ω_2,
    # host 2 on Ω_3.
    p = EX1_DEFAULTS.merged(params)
    dim = int(p['dim'])
    m = 6
    k1, k2, k3, k4 = (float(p[k]) for k in ('k1', 'k2', 'k3', 'k4'))
    lam1, lam2, lam3 = (float(p[k]) for k in ('lambda1', 'lambda2', 'lambda3'))

    terms = [
        _term(m, 0, -k1, (1, 2), {0: 1, 3: 1}),
        _term(m, 0, lam1, (1,), {1: 1}),
        _term(m, 1, k1, (1, 2), {0: 1, 3: 1}),
        _term(m, 1, -lam1, (1,), {1: 1}),
        _term(m, 2, -k2, (1, 2), {2: 1, 1: 1}),
        _term(m, 2, -k3, (2, 3), {2: 1, 4: 1}),
        _term(m, 2, lam2, (2,), {3: 1}),
        _term(m, 3, k2, (1, 2), {2: 1, 1: 1}),
        _term(m, 3, k3, (2, 3), {2: 1, 4: 1}),
        _term(m, 3, -lam2, (2,), {3: 1}),
        _term(m, 4, -k4, (2, 3), {4: 1, 3: 1}),
        _term(m, 5, k4, (2, 3), {4: 1, 3: 1}),
        _term(m, 5, -lam3, (3,), {5: 1}),
    ]
    if float(p['source']) != 0.0:
        terms.append(_term(m, 0, float(p['source']), (1,), {}))

    init = p['init'] or (
        InitialCondition.gaussian(_point(0.5, dim), 0.5, 0.4),
        InitialCondition.constant(1.0),
        InitialCondition.constant(0.2),
        InitialCondition.constant(1.0),
        InitialCondition.gaussian(_point(4.0, dim), 0.5, 0.4),
        InitialCondition.constant(1.0),
    )
    return ModelSpec(
        _boxes([(0.0, 2.0), (1.5, 3.5), (3.0, 5.0)], dim),
        SpeciesMap((1, 1, 2, 2, 3, 3), 3),
        ReactionField(m, tuple(terms)),
        _diffusion(p['d'], m),
        tuple(init),
        float(p['epsilon']),
        BuiltinModel.CrossSpeciesEpidemic.value,
    )


def _overlap_binding(params: Mapping[str, object]) -> ModelSpec:
    # A + B <-> C with A on Ω_1 and B, C on Ω_2, reacting on Ω_1 ∩ Ω_2.
    p = EX2_DEFAULTS.merged(params)
    dim = int(p['dim'])
    m = 3
    a, b, k = float(p['a']), float(p['b']), float(p['k'])
    gate = (1, 2)
    terms = []
    for target, sign in ((0, 1.0), (1, 1.0), (2, -1.0)):
        terms.append(_term(m, target, sign * k * b, gate, {2: 1}))
        terms.append(_term(m, target, -sign * k * a, gate, {0: 1, 1: 1}))

    init = p['init'] or (
        InitialCondition.gaussian(_point(0.8, dim), 0.5, 1.0),
        InitialCondition.constant(0.5),
        InitialCondition.constant(1.0),
    )
    return ModelSpec(
        _boxes([(0.0, 2.0), (1.0, 3.0)], dim),
        SpeciesMap((1, 2, 2), 2),
        ReactionField(m, tuple(terms)),
        _diffusion(p['d'], m),
        tuple(init),
        float(p['epsilon']),
        BuiltinModel.OverlapBinding.value,
    )


def _quadratic_exchange(params: Mapping[str, object]) -> ModelSpec:
    p = EX3_DEFAULTS.merged(params)
    m = 2
    k = float(p['k'])
    gate = (1, 2)
    terms = (
        _term(m, 0, k, gate, {1: 2}),
        _term(m, 0, -k, gate, {0: 1, 1: 1}),
        _term(m, 1, k, gate, {0: 1, 1: 1}),
        _term(m, 1, -k, gate, {1: 2}),
    )
    init = p['init'] or (
        InitialCondition.constant(1.0),
        InitialCondition.gaussian((2.0,), 0.3, 1.0),
    )
    return ModelSpec(
        _boxes([(0.0, 2.0), (1.0, 3.0)], 1),
        SpeciesMap((1, 2), 2),
        ReactionField(m, terms),
        _diffusion(p['d'], m),
        tuple(init),
        float(p['epsilon']),
        BuiltinModel.QuadraticExchange1D.value,
    )


BUILDERS = {
    BuiltinModel.CrossSpeciesEpidemic: _cross_species_epidemic,
    BuiltinModel.OverlapBinding: _overlap_binding,
    BuiltinModel.QuadraticExchange1D: _quadratic_exchange,
}


def builtin(name: str,
            params: Optional[Mapping[str, object]] = None) -> ModelSpec:
    """
    Returns one of the reference models:
        ex1 -- cross-species epidemic on three habitats (m=6, N=3)
        ex2 -- A + B <-> C on two overlapping habitats (m=3, N=2)
        ex3 -- quadratic exchange on Ω_1=(0,2), Ω_2=(1,3) (m=2, N=2, 1D)
    """
    try:
        which = BuiltinModel(name)
    except ValueError:
        raise ModelError(
            f'unknown builtin model {name!r}; choose from '
            f'{[b.value for b in BuiltinModel]}'
        ) from None

    model = BUILDERS[which](params)
    LOGGER.debug('Built-in model %s: m=%d N=%d', name, model.m, len(model.domains))
    return model
