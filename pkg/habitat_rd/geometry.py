"""
Habitats, their Cartesian meshes and the overlap masks that realize the
characteristic-function coupling between species.

Usage:

1) Declare the habitats

    domains = DomainSet([
        Domain(1, (0.0,), (2.0,)),
        Domain(2, (1.0,), (3.0,)),
    ])

2) Mesh one habitat and mask it against another

    mesh = build_mesh(domains.get(1), (4,))
    mask = overlap_mask(mesh, domains.get(2))
    mask.flags  # array([False, False,  True,  True])

3) Enumerate the regions on which every characteristic function is constant

    for region in region_partition(domains, samples_per_region=8):
        print(sorted(region.active), region.representative_points[0])
"""
import itertools
import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from habitat_rd.errors import (
    GeometryError,
)

LOGGER = logging.getLogger(__name__)

Box = Tuple[Tuple[float, ...], Tuple[float, ...]]


@dataclass(frozen=True)
class Domain:
    """An axis-aligned habitat box (interval in 1D, rectangle in 2D)."""
    id: int
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'lo', tuple(float(v) for v in self.lo))
        object.__setattr__(self, 'hi', tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or len(self.lo) not in (1, 2):
            raise GeometryError(
                f'domain {self.id}: lo/hi must both have length 1 or 2'
            )
        for axis, (low, high) in enumerate(zip(self.lo, self.hi)):
            if not low < high:
                raise GeometryError(
                    f'domain {self.id}: lo[{axis}]={low} is not below '
                    f'hi[{axis}]={high}'
                )

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extent(self) -> Tuple[float, ...]:
        return tuple(high - low for low, high in zip(self.lo, self.hi))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extent))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """
        Closed-box membership. `points` has shape (P, dim) or (dim,);
        returns a boolean array of shape (P,) or a scalar bool.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        inside = np.all(
            (pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)),
            axis=1,
        )
        return bool(inside[0]) if single else inside


def box_intersection(domains: Iterable[Domain]) -> Optional[Box]:
    """
    Returns the (lo, hi) box common to every domain, or None when the
    intersection has no interior.
    """
    domains = list(domains)
    lo = tuple(np.max([d.lo for d in domains], axis=0))
    hi = tuple(np.min([d.hi for d in domains], axis=0))
    if any(low >= high for low, high in zip(lo, hi)):
        return None
    return lo, hi


class DomainSet:
    """Habitats Ω_1..Ω_N with contiguous ids and a common dimension."""

    def __init__(self, domains: Sequence[Domain]):
        domains = sorted(domains, key=lambda d: d.id)
        if not domains:
            raise GeometryError('no domains')

        ids = [d.id for d in domains]
        if ids != list(range(1, len(domains) + 1)):
            raise GeometryError(
                f'domain ids must be contiguous 1..N, got {ids}'
            )
        dims = {d.dim for d in domains}
        if len(dims) != 1:
            raise GeometryError('all domains must share one dimension')

        self._domains = tuple(domains)

    def __iter__(self) -> Iterator[Domain]:
        return iter(self._domains)

    def __len__(self) -> int:
        return len(self._domains)

    def __eq__(self, other) -> bool:
        return isinstance(other, DomainSet) and self._domains == other._domains

    def __hash__(self):
        return hash(self._domains)

    def __repr__(self):
        return f'DomainSet({list(self._domains)!r})'

    @property
    def dim(self) -> int:
        return self._domains[0].dim

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(d.id for d in self._domains)

    def get(self, domain_id: int) -> Domain:
        if not 1 <= domain_id <= len(self._domains):
            raise GeometryError(f'unknown domain {domain_id}')
        return self._domains[domain_id - 1]

    @property
    def bounding_box(self) -> Box:
        lo = tuple(np.min([d.lo for d in self._domains], axis=0))
        hi = tuple(np.max([d.hi for d in self._domains], axis=0))
        return lo, hi

    def membership(self, points: np.ndarray) -> np.ndarray:
        """Boolean (N, P) matrix: row j-1 tells which points lie in Ω_j."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.vstack([d.contains(pts) for d in self._domains])

    def active_set(self, point: Sequence[float]) -> FrozenSet[int]:
        return frozenset(d.id for d in self._domains if d.contains(point))

    def intersects(self, first: int, second: int) -> bool:
        return box_intersection([self.get(first), self.get(second)]) is not None


@dataclass(frozen=True, eq=False)
class MeshedDomain:
    """A uniform cell-centered Cartesian mesh of one habitat."""
    domain: Domain
    cells_per_axis: Tuple[int, ...]
    h: Tuple[float, ...]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.cells_per_axis

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> np.ndarray:
        """Per-cell measure, shaped like the mesh."""
        return np.full(self.shape, self.cell_volume)

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.cells_per_axis[axis]
        return self.domain.lo[axis] + (np.arange(n) + 0.5) * self.h[axis]

    def axis_edges(self, axis: int) -> np.ndarray:
        n = self.cells_per_axis[axis]
        edges = self.domain.lo[axis] + np.arange(n + 1) * self.h[axis]
        edges[-1] = self.domain.hi[axis]
        return edges

    @property
    def centers(self) -> np.ndarray:
        """Cell centers as an (n_cells, dim) array in C order."""
        grids = np.meshgrid(
            *[self.axis_centers(a) for a in range(self.domain.dim)],
            indexing='ij',
        )
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True, eq=False)
class OverlapMask:
    source: int
    other: int
    flags: np.ndarray


@dataclass(frozen=True)
class RegionSignature:
    active: FrozenSet[int]
    representative_points: Tuple[Tuple[float, ...], ...]


def build_mesh(domain: Domain, cells_per_axis: Sequence[int]) -> MeshedDomain:
    cells = tuple(int(n) for n in cells_per_axis)
    if len(cells) != domain.dim:
        raise GeometryError(
            f'domain {domain.id} is {domain.dim}D but got {len(cells)} '
            'cell counts'
        )
    if any(n < 1 for n in cells):
        raise GeometryError(f'cell counts must be positive, got {cells}')

    h = tuple(
        (high - low) / n for low, high, n in zip(domain.lo, domain.hi, cells)
    )
    return MeshedDomain(domain, cells, h)


def overlap_mask(mesh_j: MeshedDomain, domain_i: Domain) -> OverlapMask:
    flags = domain_i.contains(mesh_j.centers).reshape(mesh_j.shape)
    return OverlapMask(mesh_j.domain.id, domain_i.id, flags)


def candidate_signatures(domains: DomainSet) -> List[FrozenSet[int]]:
    """Every id subset whose boxes share an interior point."""
    candidates = []
    for size in range(1, len(domains) + 1):
        for subset in itertools.combinations(domains.ids, size):
            boxes = [domains.get(i) for i in subset]
            if box_intersection(boxes) is not None:
                candidates.append(frozenset(subset))
    return candidates


def omitted_signatures(domains: DomainSet,
                       found: Iterable[RegionSignature]) -> List[FrozenSet[int]]:
    found_sets = {region.active for region in found}
    return [
        signature
        for signature in candidate_signatures(domains)
        if signature not in found_sets
    ]


def _signature_order(signature: FrozenSet[int]):
    return len(signature), sorted(signature)


def region_partition(domains: DomainSet,
                     samples_per_region: int,
                     seed: int = 0,
                     max_rounds: int = 64) -> List[RegionSignature]:
    """
    Finds every region signature (the exact set of habitats containing a
    point) by jittered stratified sampling of the union's bounding box.

    Signatures that were never hit within the sampling budget are left out
    and logged; `omitted_signatures` lists them.
    """
    if samples_per_region < 1:
        raise GeometryError('samples_per_region must be positive')

    rng = np.random.default_rng(seed)
    lo, hi = (np.asarray(v) for v in domains.bounding_box)
    strata = 64 if domains.dim == 1 else 16
    grid = np.stack(
        [g.ravel() for g in np.meshgrid(
            *[np.arange(strata)] * domains.dim, indexing='ij'
        )],
        axis=1,
    )
    width = (hi - lo) / strata
    wanted = set(candidate_signatures(domains))

    found = {}
    for _ in range(max_rounds):
        points = lo + (grid + rng.random(grid.shape)) * width
        inside = domains.membership(points)
        for col, point in enumerate(points):
            active = frozenset(
                domain_id
                for domain_id, flag in zip(domains.ids, inside[:, col])
                if flag
            )
            if not active:
                continue
            bucket = found.setdefault(active, [])
            if len(bucket) < samples_per_region:
                bucket.append(tuple(float(v) for v in point))

        complete = all(
            len(found.get(signature, ())) >= samples_per_region
            for signature in wanted
        )
        if complete:
            break

    regions = [
        RegionSignature(active, tuple(points))
        for active, points in sorted(
            found.items(),
            key=lambda item: _signature_order(item[0]),
        )
    ]

    for signature in omitted_signatures(domains, regions):
        LOGGER.info(
            'Region %s not found after %d sampling rounds; omitted',
            sorted(signature),
            max_rounds,
        )

    return regions
