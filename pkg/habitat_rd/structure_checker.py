"""
Numerical certification of the structural hypotheses of a model: quasi-
positivity, mass control, polynomial growth and the lower-triangular
intermediate-sum condition.

Every condition is a pointwise inequality over u in R_+^m and over x. The
field is a finite sum of gated monomials, so on each region signature the
inequality is a polynomial inequality whose coefficients are linear in the
unknown certificate. Two kinds of rows are used:

    degree rows        at every sample u of a SampleCloud, one row per total
                       degree d of the homogeneous part of the combined field;
                       they bound the inequality along the whole ray t*u and
                       are the rows the LPs are solved on
    coefficient rows   term-by-term domination of the monomials; checked after
                       the solve, they make a certificate exact on all of
                       R_+^m and are reported as `symbolic_ok`

Usage:

1) Certify everything at once

    report = certify(model)
    print(json.dumps(report.to_json(), indent=2))

2) Or run single checks on a sample cloud

    cloud = build_cloud(model, CheckerConfig(U_max=10.0))
    fit_mass_control(model, cloud).b
    fit_intermediate_sum(model, 2, cloud).A
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from jsonobject import (
    BooleanProperty,
    FloatProperty,
    IntegerProperty,
    JsonObject,
    ListProperty,
    ObjectProperty,
    StringProperty,
)

from habitat_rd.energy_diagnostics import (
    MassWitness,
)
from habitat_rd.enums import (
    LowerEntrySign,
)
from habitat_rd.errors import (
    CheckerError,
)
from habitat_rd.geometry import (
    omitted_signatures,
    region_partition,
)
from habitat_rd.lp import (
    solve_lp,
)
from habitat_rd.model import (
    ModelSpec,
    Monomial,
)

LOGGER = logging.getLogger(__name__)

QP_TOL = 1e-12
VERIFY_TOL = 1e-9
MAX_GROUP_SIZE = 6
DEFAULT_R_GRID = (1.0, 1.25, 1.5, 1.75, 2.0 - 1e-6)
ZERO_PROBABILITY = 0.25


@dataclass(frozen=True)
class CheckerConfig:
    U_max: float = 10.0
    samples: int = 48
    seed: int = 0
    lower: LowerEntrySign = LowerEntrySign.Any
    r_grid: Optional[Tuple[float, ...]] = None
    grid_budget: int = 4096

    def __post_init__(self):
        if not self.U_max > 0.0:
            raise CheckerError(f'U_max must be positive, got {self.U_max}')
        if self.samples < 1:
            raise CheckerError(f'samples must be positive, got {self.samples}')


#
# Sample cloud
#
@dataclass(frozen=True, eq=False)
class CloudRegion:
    """Samples of one region signature, evaluated at its representative x."""
    active: FrozenSet[int]
    x: Tuple[float, ...]
    present: Tuple[int, ...]
    u: np.ndarray
    f: np.ndarray
    polys: Tuple[Dict[Monomial, float], ...]
    parts: Dict[int, np.ndarray]

    @property
    def s(self) -> np.ndarray:
        """Σ_j χ_{Ω_σ(j)}(x) u_j per sample."""
        return np.sum(self.u[:, list(self.present)], axis=1)


@dataclass(frozen=True, eq=False)
class SampleCloud:
    regions: Tuple[CloudRegion, ...]
    U_max: float
    omitted: Tuple[FrozenSet[int], ...] = ()

    @property
    def size(self) -> int:
        return sum(region.u.shape[0] for region in self.regions)

    @property
    def points(self):
        """(region signature, x, u) triples."""
        return [
            (region.active, region.x, u)
            for region in self.regions
            for u in region.u
        ]


def _evaluate(model: ModelSpec, x: Sequence[float], u: np.ndarray) -> np.ndarray:
    inside = model.domains.membership(np.asarray(x))
    inside = np.repeat(inside, u.shape[0], axis=1)
    return model.reaction.evaluate(u.T, inside, model.species.sigma).T


def _degree_parts(polys: Sequence[Dict[Monomial, float]], u: np.ndarray) -> Dict[int, np.ndarray]:
    """Homogeneous parts of f by total degree, each (samples, m); degrees 0 and 1 always present."""
    parts = {0: np.zeros(u.shape), 1: np.zeros(u.shape)}
    for k, poly in enumerate(polys):
        for monomial, coeff in poly.items():
            value = np.full(u.shape[0], coeff)
            for j, power in enumerate(monomial):
                if power:
                    value = value * u[:, j] ** power
            parts.setdefault(sum(monomial), np.zeros(u.shape))[:, k] += value
    return parts


def _grid(present: Sequence[int], m: int, levels: int, U_max: float,
          budget: int, rng) -> np.ndarray:
    if not present:
        return rng.uniform(0.0, U_max, (1, m))
    while levels > 2 and levels ** len(present) > budget:
        levels -= 1
    values = np.linspace(0.0, U_max, levels)
    combos = np.array(list(itertools.product(values, repeat=len(present))))
    u = rng.uniform(0.0, U_max, (len(combos), m))
    u[:, list(present)] = combos
    return u


def build_cloud(model: ModelSpec, config: CheckerConfig = CheckerConfig(),
                samples: Optional[int] = None,
                seed: Optional[int] = None) -> SampleCloud:
    """
    For every region signature: a stratified grid with max(l, 1) + 1 levels
    per present species and `samples` uniform draws with a random subset of
    coordinates set to 0. Absent species get random values.
    """
    samples = config.samples if samples is None else samples
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    m = model.m
    sigma = model.species.sigma
    levels = max(model.reaction.max_degree, 1) + 1

    signatures = region_partition(model.domains, 1, seed=seed)
    regions = []
    for signature in signatures:
        present = tuple(k for k in range(m) if sigma[k] in signature.active)
        grid = _grid(present, m, levels, config.U_max, config.grid_budget, rng)
        random = rng.uniform(0.0, config.U_max, (samples, m))
        zeroed = rng.random((samples, m)) < ZERO_PROBABILITY
        for k in range(m):
            if k not in present:
                zeroed[:, k] = False
        random[zeroed] = 0.0
        u = np.vstack([grid, random])
        x = signature.representative_points[0]
        polys = tuple(model.reaction.restricted(signature.active, sigma))
        regions.append(CloudRegion(
            signature.active,
            x,
            present,
            u,
            _evaluate(model, x, u),
            polys,
            _degree_parts(polys, u),
        ))

    cloud = SampleCloud(
        tuple(regions),
        float(config.U_max),
        tuple(omitted_signatures(model.domains, signatures)),
    )
    LOGGER.debug(
        'Sample cloud: %d regions, %d samples (seed %d)',
        len(regions), cloud.size, seed,
    )
    return cloud


#
# Report documents
#
class QPViolation(JsonObject):
    species = IntegerProperty()
    x = ListProperty(float)
    u = ListProperty(float)
    value = FloatProperty()


class MassControlReport(JsonObject):
    feasible = BooleanProperty(default=False)
    b = ListProperty(float)
    K1 = FloatProperty()
    K2 = FloatProperty()
    residual = FloatProperty()
    symbolic_ok = BooleanProperty(default=False)
    U_max = FloatProperty()

    def to_witness(self) -> MassWitness:
        return MassWitness(tuple(self.b), self.K1, self.K2)


class PolyReport(JsonObject):
    l = IntegerProperty()  # noqa: E741
    C = FloatProperty()
    residual = FloatProperty()


class IntWitness(JsonObject):
    r = FloatProperty()
    species = IntegerProperty()
    x = ListProperty(float)
    u = ListProperty(float)
    ratio = FloatProperty()
    scaled_ratio = FloatProperty()


class IntReport(JsonObject):
    domain = IntegerProperty()
    feasible = BooleanProperty(default=False)
    permutation = ListProperty(int)
    A = ListProperty()
    r = FloatProperty()
    C = FloatProperty()
    residual = FloatProperty()
    symbolic_ok = BooleanProperty(default=False)
    infeasible_r = ListProperty(IntWitness)


class HoldoutReport(JsonObject):
    samples = IntegerProperty()
    seed = IntegerProperty()
    max_residual = FloatProperty()
    ok = BooleanProperty(default=False)


class StructureReport(JsonObject):
    model = StringProperty()
    dimension = IntegerProperty()
    qp_ok = BooleanProperty(default=False)
    qp_violations = ListProperty(QPViolation)
    bal = ObjectProperty(MassControlReport)
    poly = ObjectProperty(PolyReport)
    intermediate = ListProperty(IntReport, name='int')
    r = FloatProperty()
    growth_ok = BooleanProperty(default=False)
    uniform_in_time = BooleanProperty(default=False)
    corollary_applicable = BooleanProperty(default=False)
    holdout = ObjectProperty(HoldoutReport)
    omitted_regions = ListProperty()

    @property
    def hypotheses_met(self) -> bool:
        return (
            self.qp_ok
            and self.bal.feasible
            and all(item.feasible for item in self.intermediate)
            and self.growth_ok
        )


def _floats(values) -> List[float]:
    return [float(v) for v in np.ravel(values)]


def _snap(values: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    rounded = np.round(values)
    return np.where(np.abs(values - rounded) <= tol * np.maximum(1.0, np.abs(values)), rounded, values)


def _fix_upper(value: float) -> float:
    return value + 1e-9 * max(1.0, abs(value))


#
# Quasi-positivity
#
def check_quasi_positivity(model: ModelSpec, cloud: SampleCloud) -> Tuple[bool, List[QPViolation]]:
    violations = []
    for region in cloud.regions:
        for k in region.present:
            on_face = region.u[:, k] == 0.0
            bad = on_face & (region.f[:, k] < -QP_TOL)
            for row in np.nonzero(bad)[0]:
                violations.append(QPViolation(
                    species=k + 1,
                    x=_floats(region.x),
                    u=_floats(region.u[row]),
                    value=float(region.f[row, k]),
                ))
    if violations:
        LOGGER.warning(
            'Quasi-positivity fails at %d samples, first for species %d',
            len(violations), violations[0].species,
        )
    return not violations, violations


#
# Mass control
#
def _mass_degree_rows(model: ModelSpec, cloud: SampleCloud) -> np.ndarray:
    """
    Rows over x = (b_1..b_m, K1, K2) of the form row @ x <= 0: at each sample
    the degree-d part of Σ b_k f_k is <= 0 for d >= 2, <= K1 s for d = 1 and
    <= K2 for d = 0.
    """
    m = model.m
    K1, K2 = m, m + 1
    blocks = []
    for region in cloud.regions:
        for degree, part in sorted(region.parts.items()):
            block = np.zeros((part.shape[0], m + 2))
            block[:, :m] = part
            if degree == 0:
                block[:, K2] = -1.0
            elif degree == 1:
                block[:, K1] = -region.s
            elif not np.any(part):
                continue
            blocks.append(block)
    return np.vstack(blocks)


def _mass_coefficient_rows(model: ModelSpec, cloud: SampleCloud) -> np.ndarray:
    """Term-by-term domination, same variables and sign convention."""
    m = model.m
    K1, K2 = m, m + 1
    rows = []
    for region in cloud.regions:
        coefficients: Dict[Monomial, np.ndarray] = {}
        for k, poly in enumerate(region.polys):
            for monomial, coeff in poly.items():
                coefficients.setdefault(monomial, np.zeros(m + 2))[k] += coeff
        for j in region.present:
            unit = tuple(1 if i == j else 0 for i in range(m))
            coefficients.setdefault(unit, np.zeros(m + 2))
        for monomial, row in sorted(coefficients.items()):
            degree = sum(monomial)
            if degree == 0:
                row[K2] = -1.0
            elif degree == 1:
                row[K1] = -1.0
            rows.append(row)
    return np.array(rows).reshape(-1, m + 2)


def _mass_residual(cloud: SampleCloud, b, K1: float, K2: float) -> float:
    worst = 0.0
    for region in cloud.regions:
        lhs = region.f @ np.asarray(b)
        rhs = K1 * region.s + K2
        scale = np.maximum(1.0, np.abs(region.f) @ np.asarray(b) + np.abs(rhs))
        worst = max(worst, float(np.max((lhs - rhs) / scale, initial=0.0)))
    return worst


def fit_mass_control(model: ModelSpec, cloud: SampleCloud) -> MassControlReport:
    """
    Lexicographic LP on the degree rows: minimise K1 >= 0, then K2, then Σ b
    (b_k >= 1); with b fixed, K1 is lowered below 0 when the field allows it.
    The coefficient rows are checked afterwards; when they fail the
    certificate rests on the sampled directions and U_max is reported with it.
    """
    m = model.m
    if cloud.size == 0:
        raise CheckerError('empty sample cloud')
    A_ub = _mass_degree_rows(model, cloud)
    b_ub = np.zeros(A_ub.shape[0])
    report = MassControlReport(U_max=float(cloud.U_max))

    def _stage(objective, bounds, previous):
        result = solve_lp(objective, A_ub, b_ub, bounds=bounds)
        if not result.ok:
            LOGGER.debug('Mass control stage stopped: %s', result.status.value)
            return previous
        return result.x

    unit = np.eye(m + 2)
    bounds = [(1.0, None)] * m + [(0.0, None), (0.0, None)]
    first = solve_lp(unit[m], A_ub, b_ub, bounds=bounds)
    if not first.ok:
        LOGGER.warning('Mass control LP is %s', first.status.value)
        return report

    x = first.x
    bounds[m] = (0.0, _fix_upper(x[m]))
    x = _stage(unit[m + 1], bounds, x)
    bounds[m + 1] = (0.0, _fix_upper(x[m + 1]))
    x = _stage(np.concatenate([np.ones(m), [0.0, 0.0]]), bounds, x)
    b = _snap(x[:m])
    K1, K2 = x[m], x[m + 1]

    fixed = [(value, value) for value in b]
    fixed += [(None, _fix_upper(K1)), (0.0, _fix_upper(K2))]
    lowered = _stage(unit[m], fixed, None)
    if lowered is not None and lowered[m] < K1:
        K1 = lowered[m]

    K1, K2 = (float(v) for v in _snap(np.array([K1, K2])))
    report.feasible = True
    report.b = _floats(b)
    report.K1 = K1
    report.K2 = K2
    report.residual = _mass_residual(cloud, b, K1, K2)
    x = np.concatenate([b, [K1, K2]])
    report.symbolic_ok = bool(np.all(
        _mass_coefficient_rows(model, cloud) @ x <= VERIFY_TOL * max(1.0, float(np.max(b)))
    ))
    LOGGER.info('Mass control: b=%s K1=%g K2=%g', report.b, K1, K2)
    if not report.symbolic_ok:
        LOGGER.warning(
            'Mass control is not dominated term by term; it holds on the sampled '
            'directions with U_max=%g', cloud.U_max,
        )
    return report


#
# Polynomial growth
#
def fit_growth_exponent(model: ModelSpec, cloud: Optional[SampleCloud] = None) -> PolyReport:
    """l is the largest total degree; C = max_k Σ |coeff| over the terms of f_k."""
    terms = [term for term in model.reaction.terms if term.coeff != 0.0]
    if not terms:
        return PolyReport(l=0, C=0.0, residual=0.0)

    l = max(term.degree for term in terms)  # noqa: E741
    per_species = np.zeros(model.m)
    for term in terms:
        per_species[term.target] += abs(term.coeff)
    C = float(np.max(per_species))

    residual = 0.0
    if cloud is not None:
        residual = _poly_residual(cloud, l, C)
    return PolyReport(l=l, C=C, residual=residual)


def _poly_residual(cloud: SampleCloud, l: int, C: float) -> float:  # noqa: E741
    worst = 0.0
    for region in cloud.regions:
        bound = C * (region.s + 1.0) ** l
        excess = (region.f - bound[:, None]) / np.maximum(1.0, bound[:, None])
        worst = max(worst, float(np.max(excess, initial=0.0)))
    return worst


#
# Intermediate sums
#
def r_candidates(dim: int, r_grid: Optional[Sequence[float]] = None) -> List[float]:
    """Integers in [1, 1 + 2/dim) first, then the remaining grid values."""
    bound = 1.0 + 2.0 / dim
    grid = DEFAULT_R_GRID if r_grid is None else tuple(r_grid)
    integers = [float(r) for r in range(1, math.ceil(bound)) if r < bound]
    rest = sorted(r for r in grid if 1.0 <= r < bound and r not in integers)
    return integers + rest


class _IntLP:
    """Variables and degree rows of one (permutation, r) intermediate-sum LP."""

    def __init__(self, cloud: SampleCloud, group: Sequence[int], r: float,
                 lower: LowerEntrySign):
        self.group = tuple(group)
        self.n = len(group)
        self.r = r
        self._names: Dict[tuple, int] = {}
        self.bounds: List[tuple] = []

        for i in range(self.n):
            self._add(('d', i), (1.0, None))
            for c in range(i):
                self._add(('a+', i, c), (0.0, None))
                if lower == LowerEntrySign.Any:
                    self._add(('a-', i, c), (0.0, None))
        self._add(('C',), (0.0, None))

        self._rows: List[Dict[int, np.ndarray]] = []
        degrees = sorted({d for region in cloud.regions for d in region.parts})
        for i in range(self.n):
            budget = {self._names[('C',)]: np.array([-1.0])}
            for d in degrees:
                if d <= r + 1e-12:
                    budget[self._add(('Cd', i, d), (0.0, None))] = np.array([1.0])
            self._rows.append(budget)
            for region in cloud.regions:
                for d, part in sorted(region.parts.items()):
                    self._degree_rows(region, part, i, d)

    def _add(self, name: tuple, bound: tuple) -> int:
        self._names[name] = len(self.bounds)
        self.bounds.append(bound)
        return self._names[name]

    def entry(self, i: int, c: int) -> Dict[int, float]:
        """A[i, c] as a linear expression over the variables."""
        if c == i:
            return {self._names[('d', i)]: 1.0}
        expression = {self._names[('a+', i, c)]: 1.0}
        if ('a-', i, c) in self._names:
            expression[self._names[('a-', i, c)]] = -1.0
        return expression

    def _degree_rows(self, region: CloudRegion, part: np.ndarray, i: int, d: int):
        """Σ_c A[i,c] f^(d)_c(u) <= C_{i,d} S(u)^d on every sample; <= 0 when d > r."""
        columns = part[:, [self.group[c] for c in range(i + 1)]]
        if d > 0 and not np.any(columns):
            return
        block: Dict[int, np.ndarray] = {}
        for c in range(i + 1):
            for var, weight in self.entry(i, c).items():
                block[var] = block.get(var, 0.0) + weight * columns[:, c]
        if ('Cd', i, d) in self._names:
            block[self._names[('Cd', i, d)]] = -region.s ** d
        self._rows.append(block)

    @property
    def size(self) -> int:
        return len(self.bounds)

    def matrix(self) -> np.ndarray:
        heights = [max(np.size(column) for column in block.values()) for block in self._rows]
        dense = np.zeros((sum(heights), self.size))
        start = 0
        for block, height in zip(self._rows, heights):
            for var, column in block.items():
                dense[start:start + height, var] = column
            start += height
        return dense

    def objective(self, *names) -> np.ndarray:
        c = np.zeros(self.size)
        for name, var in self._names.items():
            if name[0] in names:
                c[var] = 1.0
        return c

    def index(self, name: tuple) -> int:
        return self._names[name]

    def lower_matrix(self, x: np.ndarray) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i in range(self.n):
            for c in range(i + 1):
                A[i, c] = sum(x[var] * w for var, w in self.entry(i, c).items())
        return _snap(A)


def _int_symbolic_ok(cloud: SampleCloud, group: Sequence[int], A: np.ndarray,
                     r: float, C: float) -> bool:
    """Coefficient test: monomials above degree r cancel to <= 0, positive parts sum to <= C."""
    tol = VERIFY_TOL * max(1.0, C, float(np.max(np.abs(A), initial=0.0)))
    for region in cloud.regions:
        for i in range(len(group)):
            combined: Dict[Monomial, float] = {}
            for c in range(i + 1):
                for monomial, coeff in region.polys[group[c]].items():
                    combined[monomial] = combined.get(monomial, 0.0) + A[i, c] * coeff
            positive = 0.0
            for monomial, coeff in combined.items():
                if sum(monomial) > r + 1e-12:
                    if coeff > tol:
                        return False
                else:
                    positive += max(coeff, 0.0)
            if positive > C + tol:
                return False
    return True


def _int_residual(cloud: SampleCloud, group: Sequence[int], A: np.ndarray,
                  r: float, C: float) -> float:
    worst = 0.0
    for region in cloud.regions:
        combined = region.f[:, list(group)] @ A.T
        bound = C * (region.s + 1.0) ** r
        scale = np.maximum(1.0, np.abs(region.f[:, list(group)]) @ np.abs(A).T + bound[:, None])
        worst = max(worst, float(np.max((combined - bound[:, None]) / scale, initial=0.0)))
    return worst


def _int_witness(model: ModelSpec, cloud: SampleCloud, group: Sequence[int],
                 r: float) -> IntWitness:
    """With A = I: the sample where f_k / (S+1)^r peaks, and the same at 10u."""
    best = None
    for region in cloud.regions:
        ratios = region.f[:, list(group)] / ((region.s + 1.0) ** r)[:, None]
        row, col = np.unravel_index(np.argmax(ratios), ratios.shape)
        if best is None or ratios[row, col] > best[0]:
            best = (ratios[row, col], region, row, col)

    ratio, region, row, col = best
    species = group[col]
    scaled_u = 10.0 * region.u[row:row + 1]
    scaled_f = _evaluate(model, region.x, scaled_u)[0, species]
    scaled_s = float(np.sum(scaled_u[0, list(region.present)]))
    return IntWitness(
        r=float(r),
        species=species + 1,
        x=_floats(region.x),
        u=_floats(region.u[row]),
        ratio=float(ratio),
        scaled_ratio=float(scaled_f / (scaled_s + 1.0) ** r),
    )


def fit_intermediate_sum(model: ModelSpec, domain_id: int, cloud: SampleCloud,
                         r_grid: Optional[Sequence[float]] = None,
                         lower: LowerEntrySign = LowerEntrySign.Any) -> IntReport:
    group = model.species.group(domain_id)
    report = IntReport(domain=domain_id)
    if not group:
        report.feasible = True
        report.r = 1.0
        report.C = 0.0
        report.residual = 0.0
        report.symbolic_ok = True
        return report
    if len(group) > MAX_GROUP_SIZE:
        raise CheckerError(
            f'domain {domain_id} hosts {len(group)} species; the permutation '
            f'search is limited to {MAX_GROUP_SIZE}'
        )

    for r in r_candidates(model.dim, r_grid):
        for permutation in itertools.permutations(group):
            lp = _IntLP(cloud, permutation, r, lower)
            A_ub = lp.matrix()
            b_ub = np.zeros(A_ub.shape[0])
            stage = solve_lp(lp.objective('C'), A_ub, b_ub, bounds=lp.bounds)
            if not stage.ok:
                continue

            C = stage.x[lp.index(('C',))]
            bounds = list(lp.bounds)
            bounds[lp.index(('C',))] = (0.0, _fix_upper(C))
            refined = solve_lp(lp.objective('d', 'a+', 'a-'), A_ub, b_ub, bounds=bounds)
            x = refined.x if refined.ok else stage.x
            A = lp.lower_matrix(x)
            C = float(_snap(np.array([C]))[0])

            report.feasible = True
            report.permutation = [k + 1 for k in permutation]
            report.A = [_floats(row) for row in A]
            report.r = float(r)
            report.C = C
            report.residual = _int_residual(cloud, permutation, A, r, C)
            report.symbolic_ok = _int_symbolic_ok(cloud, permutation, A, r, C)
            LOGGER.info(
                'Domain %d: r=%g with order %s, A=%s',
                domain_id, r, report.permutation, report.A,
            )
            if not report.symbolic_ok:
                LOGGER.warning(
                    'Domain %d: the bound holds on the sampled directions only (U_max=%g)',
                    domain_id, cloud.U_max,
                )
            return report

        witness = _int_witness(model, cloud, group, r)
        report.infeasible_r.append(witness)
        LOGGER.info(
            'Domain %d: r=%g infeasible (species %d ratio %.3g, %.3g at 10u)',
            domain_id, r, witness.species, witness.ratio, witness.scaled_ratio,
        )

    LOGGER.warning('Domain %d: no feasible r', domain_id)
    return report


#
# Everything together
#
def _verify(report: StructureReport, model: ModelSpec, cloud: SampleCloud) -> float:
    worst = 0.0
    if report.bal.feasible:
        worst = max(worst, _mass_residual(cloud, report.bal.b, report.bal.K1, report.bal.K2))
    worst = max(worst, _poly_residual(cloud, report.poly.l, report.poly.C))
    for item in report.intermediate:
        if item.feasible and item.permutation:
            group = [k - 1 for k in item.permutation]
            worst = max(worst, _int_residual(cloud, group, np.array(item.A), item.r, item.C))
    return worst


def certify(model: ModelSpec, config: CheckerConfig = CheckerConfig()) -> StructureReport:
    cloud = build_cloud(model, config)
    LOGGER.info(
        'Certifying %s on %d samples over %d regions (U_max=%g)',
        model.name, cloud.size, len(cloud.regions), config.U_max,
    )
    report = StructureReport(model=model.name, dimension=model.dim)

    report.omitted_regions = [sorted(signature) for signature in cloud.omitted]

    report.qp_ok, report.qp_violations = check_quasi_positivity(model, cloud)
    report.bal = fit_mass_control(model, cloud)
    report.poly = fit_growth_exponent(model, cloud)
    report.intermediate = [
        fit_intermediate_sum(model, domain_id, cloud, config.r_grid, config.lower)
        for domain_id in model.domains.ids
    ]

    feasible = [item for item in report.intermediate if item.feasible]
    report.r = max((item.r for item in feasible), default=1.0)
    bound = 1.0 + 2.0 / model.dim
    report.growth_ok = len(feasible) == len(report.intermediate) and report.r < bound

    bal = report.bal
    report.uniform_in_time = bool(
        bal.feasible and (bal.K1 < 0.0 or (bal.K1 == 0.0 and bal.K2 == 0.0))
    )
    report.corollary_applicable = bool(
        model.dim == 1 and report.qp_ok and bal.feasible and report.poly.l <= 2
    )

    holdout_seed = config.seed + 1
    holdout = build_cloud(model, config, samples=10 * config.samples, seed=holdout_seed)
    worst = max(_verify(report, model, cloud), _verify(report, model, holdout))
    report.holdout = HoldoutReport(
        samples=holdout.size,
        seed=holdout_seed,
        max_residual=worst,
        ok=worst <= VERIFY_TOL,
    )
    if worst > VERIFY_TOL:
        LOGGER.warning('Certificates violated on samples by %.3e (relative)', worst)

    LOGGER.info(
        'Certificate for %s: qp=%s bal=%s r=%g growth=%s',
        model.name, report.qp_ok, bal.feasible, report.r, report.growth_ok,
    )
    return report

